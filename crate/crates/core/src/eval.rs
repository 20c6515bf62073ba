//! Perplexity bounds, classification reports and uncertainty summaries.
//!
//! True document log-likelihoods are intractable here, so perplexities are
//! computed from the ELBO and act as upper bounds. The floor reference is
//! the unigram maximum-likelihood fit on the test corpus itself.

use ndarray::Array1;

use crate::corpus::BowCorpus;
use crate::model::{self, Posterior, SmmModel};
use crate::rng::{self, StreamTag};
use crate::{Error, Result};

/// Log-likelihood floor used when a predicted class probability underflows
/// to zero.
pub const CE_FLOOR_LOG_PROB: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// One document's contribution to a perplexity report.
#[derive(Debug, Clone)]
pub struct DocBound {
    pub doc_id: String,
    /// ELBO (or exact log-likelihood for reference models).
    pub bound: f64,
    pub n_words: u64,
}

/// Document- and corpus-level perplexities.
#[derive(Debug, Clone)]
pub struct PplReport {
    /// `exp{-(1/D) sum_d bound_d / N_d}` over non-empty documents.
    pub ppl_doc: f64,
    /// `exp{-(sum_d bound_d) / (sum_d N_d)}` over non-empty documents.
    pub ppl_corpus: f64,
    pub per_doc: Vec<DocBound>,
    /// Empty documents excluded from both averages.
    pub skipped_empty: usize,
}

fn report_from_bounds(per_doc: Vec<DocBound>) -> Result<PplReport> {
    let mut doc_sum = 0.0;
    let mut bound_sum = 0.0;
    let mut word_sum = 0u64;
    let mut used = 0usize;
    for d in &per_doc {
        if d.n_words == 0 {
            continue;
        }
        doc_sum += d.bound / d.n_words as f64;
        bound_sum += d.bound;
        word_sum += d.n_words;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "perplexity undefined: every document is empty".into(),
        ));
    }
    let skipped_empty = per_doc.len() - used;
    Ok(PplReport {
        ppl_doc: (-doc_sum / used as f64).exp(),
        ppl_corpus: (-bound_sum / word_sum as f64).exp(),
        per_doc,
        skipped_empty,
    })
}

/// ELBO-based perplexity of a corpus under a trained model, using `r_eval`
/// fresh samples per document. Posteriors must be index-aligned with the
/// corpus (one per document, typically from `trainer::infer_posteriors`).
pub fn perplexity(
    model: &SmmModel,
    corpus: &BowCorpus,
    posteriors: &[Posterior],
    r_eval: usize,
    seed: u64,
) -> Result<PplReport> {
    if posteriors.len() != corpus.n_docs() {
        return Err(Error::Mismatch(format!(
            "{} posteriors for {} documents",
            posteriors.len(),
            corpus.n_docs()
        )));
    }
    if corpus.v() != model.v() {
        return Err(Error::Mismatch(format!(
            "corpus has V={} but model has V={}",
            corpus.v(),
            model.v()
        )));
    }
    let per_doc: Vec<DocBound> = corpus
        .docs
        .iter()
        .zip(posteriors)
        .enumerate()
        .map(|(d, (x, post))| {
            let eps =
                rng::epsilon_samples(seed, d as u64, 0, StreamTag::Eval, r_eval, model.k());
            DocBound {
                doc_id: x.doc_id.clone(),
                bound: model::elbo_document(model, post, x, &eps),
                n_words: x.total_count(),
            }
        })
        .collect();
    report_from_bounds(per_doc)
}

/// Unigram maximum-likelihood perplexity fit on the corpus itself; the floor
/// reference for any model evaluated on that corpus. Words unseen in the
/// corpus carry no mass, which only ever flatters this reference.
pub fn ml_floor_perplexity(corpus: &BowCorpus) -> Result<PplReport> {
    let counts = corpus.word_counts();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "perplexity undefined: every document is empty".into(),
        ));
    }
    let log_theta: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64 / total as f64).ln()
            }
        })
        .collect();
    let per_doc = exact_unigram_bounds(corpus, &log_theta);
    report_from_bounds(per_doc)
}

/// Perplexity of a fixed unigram distribution given as unnormalized log
/// weights (normalized internally).
pub fn unigram_perplexity(log_weights: &Array1<f64>, corpus: &BowCorpus) -> Result<PplReport> {
    if log_weights.len() != corpus.v() {
        return Err(Error::Mismatch(format!(
            "{} log-weights for V={}",
            log_weights.len(),
            corpus.v()
        )));
    }
    let lse = model::log_sum_exp(log_weights.as_slice().expect("contiguous"));
    let log_theta: Vec<f64> = log_weights.iter().map(|&w| w - lse).collect();
    let per_doc = exact_unigram_bounds(corpus, &log_theta);
    report_from_bounds(per_doc)
}

fn exact_unigram_bounds(corpus: &BowCorpus, log_theta: &[f64]) -> Vec<DocBound> {
    corpus
        .docs
        .iter()
        .map(|x| {
            let ll: f64 = x
                .entries()
                .iter()
                .map(|&(id, cnt)| cnt as f64 * log_theta[id as usize])
                .sum();
            DocBound {
                doc_id: x.doc_id.clone(),
                bound: ll,
                n_words: x.total_count(),
            }
        })
        .collect()
}

/// Accuracy, cross-entropy (nats) and the confusion matrix.
#[derive(Debug, Clone)]
pub struct ClfReport {
    pub accuracy: f64,
    pub cross_entropy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Documents whose true-class probability underflowed to zero.
    pub flagged: usize,
}

/// Scores predicted class posteriors against true labels. Argmax ties
/// resolve to the lowest class id.
pub fn classification_report(
    predictions: &[Vec<f64>],
    labels: &[u32],
    n_classes: usize,
) -> Result<ClfReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let mut correct = 0usize;
    let mut ce_sum = 0.0;
    let mut flagged = 0usize;
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (p, &label) in predictions.iter().zip(labels) {
        if p.len() != n_classes {
            return Err(Error::Mismatch(format!(
                "prediction has {} classes, expected {n_classes}",
                p.len()
            )));
        }
        if label as usize >= n_classes {
            return Err(Error::Mismatch(format!("label {label} >= L={n_classes}")));
        }
        let mut arg = 0usize;
        for (i, &v) in p.iter().enumerate() {
            if v > p[arg] {
                arg = i;
            }
        }
        confusion[label as usize][arg] += 1;
        if arg == label as usize {
            correct += 1;
        }
        let prob = p[label as usize];
        if prob > 0.0 {
            ce_sum -= prob.ln();
        } else {
            ce_sum -= CE_FLOOR_LOG_PROB;
            flagged += 1;
        }
    }
    Ok(ClfReport {
        accuracy: correct as f64 / predictions.len() as f64,
        cross_entropy: ce_sum / predictions.len() as f64,
        confusion,
        flagged,
    })
}

/// Per-document uncertainty: document id, token count and the trace of the
/// posterior covariance.
#[derive(Debug, Clone)]
pub struct UncertaintyRow {
    pub doc_id: String,
    pub n_words: u64,
    pub trace_cov: f64,
}

pub fn uncertainty_summary(posteriors: &[Posterior], corpus: &BowCorpus) -> Result<Vec<UncertaintyRow>> {
    if posteriors.len() != corpus.n_docs() {
        return Err(Error::Mismatch(format!(
            "{} posteriors for {} documents",
            posteriors.len(),
            corpus.n_docs()
        )));
    }
    Ok(corpus
        .docs
        .iter()
        .zip(posteriors)
        .map(|(x, p)| UncertaintyRow {
            doc_id: x.doc_id.clone(),
            n_words: x.total_count(),
            trace_cov: p.trace_cov(),
        })
        .collect())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).expect("no NaN in rank input"));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}
