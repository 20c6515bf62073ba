//! Sampling corpora from the generative process: draw an embedding from the
//! Gaussian prior, form `softmax(m + T w)`, then draw word counts from a
//! multinomial. Used for self-consistency tests and benchmarks.

use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::{BowCorpus, BowDocument, Vocabulary};
use crate::model::{log_sum_exp, SmmModel};
use crate::rng::{self, StreamTag};
use crate::Result;

/// Shape of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub v: usize,
    pub k: usize,
    pub n_docs: usize,
    /// Tokens per document, drawn uniformly from this range.
    pub doc_len: RangeInclusive<usize>,
    /// Prior precision of embeddings.
    pub lambda: f64,
    /// Standard deviation of the true subspace entries.
    pub t_scale: f64,
    pub seed: u64,
}

/// A sampled corpus together with the model that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub corpus: BowCorpus,
    pub true_model: SmmModel,
    /// The embedding used for each document.
    pub embeddings: Vec<Array1<f64>>,
}

/// Draws a corpus from the generative process under a random model:
/// `m` is a flat Dirichlet-ish log-unigram, `T` has i.i.d. normal entries.
pub fn generate(spec: &CorpusSpec) -> Result<SyntheticSample> {
    let mut r = rng::stream(spec.seed, 0, 0, StreamTag::ModelInit);
    // log-unigram scores with mild variation, normalized
    let raw = Array1::from_shape_simple_fn(spec.v, || r.random_range(-1.0f64..1.0));
    let lse = log_sum_exp(raw.as_slice().expect("contiguous"));
    let m = raw.mapv(|x| x - lse);
    let t = Array2::from_shape_simple_fn((spec.v, spec.k), || {
        spec.t_scale * r.sample::<f64, _>(StandardNormal)
    });
    let true_model = SmmModel::new(m, t, spec.lambda)?;
    generate_from_model(spec, &true_model)
}

/// Draws a corpus from an explicit model.
pub fn generate_from_model(spec: &CorpusSpec, model: &SmmModel) -> Result<SyntheticSample> {
    if model.v() != spec.v || model.k() != spec.k {
        return Err(crate::Error::Mismatch(format!(
            "model is {}x{} but spec asks for {}x{}",
            model.v(),
            model.k(),
            spec.v,
            spec.k
        )));
    }
    let prior_sd = 1.0 / spec.lambda.sqrt();
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut embeddings = Vec::with_capacity(spec.n_docs);
    for d in 0..spec.n_docs {
        let mut r = rng::stream(spec.seed, d as u64 + 1, 0, StreamTag::ModelInit);
        let w = Array1::from_shape_simple_fn(spec.k, || {
            prior_sd * r.sample::<f64, _>(StandardNormal)
        });
        let logits = &model.m + &model.t.dot(&w);
        let lse = log_sum_exp(logits.as_slice().expect("contiguous"));
        let theta = logits.mapv(|x| (x - lse).exp());

        let n = if spec.doc_len.start() == spec.doc_len.end() {
            *spec.doc_len.start()
        } else {
            r.random_range(spec.doc_len.clone())
        };
        let counts = sample_multinomial(&theta, n, &mut r);
        let entries: Vec<(u32, u32)> = counts
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(i, c)| (i as u32, c))
            .collect();
        docs.push(BowDocument::new((d + 1).to_string(), entries)?);
        embeddings.push(w);
    }
    let corpus = BowCorpus::new(Vocabulary::synthetic(spec.v)?, docs)?;
    Ok(SyntheticSample {
        corpus,
        true_model: model.clone(),
        embeddings,
    })
}

/// `n` categorical draws by inverse CDF with binary search.
fn sample_multinomial<R: Rng>(theta: &Array1<f64>, n: usize, r: &mut R) -> Vec<u32> {
    let mut cdf = Vec::with_capacity(theta.len());
    let mut acc = 0.0;
    for &p in theta.iter() {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let mut counts = vec![0u32; theta.len()];
    for _ in 0..n {
        let u: f64 = r.random_range(0.0..total);
        let idx = cdf.partition_point(|&c| c < u).min(theta.len() - 1);
        counts[idx] += 1;
    }
    counts
}
