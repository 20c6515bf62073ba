//! Stochastic variational-Bayes training and posterior inference.
//!
//! Each outer iteration runs two passes over the corpus. The first updates
//! every document posterior `(nu_d, lsd_d)` by one ADAM step; the second,
//! with the freshly updated posteriors and the same per-document noise,
//! evaluates the regularized objective and accumulates the subspace
//! gradient, after which `T` receives one orthant-wise ADAM update.
//!
//! Per-document noise comes from counter-based streams keyed by
//! `(seed, doc, iteration)`, so the document loop parallelizes without any
//! shared RNG and whole runs replay exactly from one seed. The subspace
//! gradient is reduced over fixed-size document chunks in index order, which
//! makes results independent of the worker count in every mode.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::corpus::BowCorpus;
use crate::model::{self, Posterior, SmmModel};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{self, StreamTag};
use crate::{Error, Result};

/// Documents per reduction chunk for the `T` gradient. Fixed so that the
/// summation order never depends on the thread count.
const GRAD_CHUNK: usize = 256;

/// Relative objective change below which training may stop early.
const CONVERGENCE_RTOL: f64 = 1e-5;
/// Consecutive small-change iterations required before stopping.
const CONVERGENCE_WINDOW: usize = 5;

/// Everything that controls a training or inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Embedding dimension.
    pub k: usize,
    /// L1 weight on rows of `T`.
    pub omega: f64,
    /// Prior precision of embeddings.
    pub lambda: f64,
    /// Monte-Carlo samples per document during training.
    pub r_train: usize,
    /// Monte-Carlo samples for ELBO evaluation (perplexity).
    pub r_eval: usize,
    pub max_iters: usize,
    /// ADAM steps when inferring posteriors for unseen documents.
    pub infer_iters: usize,
    pub seed: u64,
    /// Learning rate for posterior parameters.
    pub eta_q: f64,
    /// Learning rate for rows of `T`.
    pub eta_t: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    /// Variance of the random initialization of `T`.
    pub t_init_var: f64,
    /// Freeze the per-document noise to its iteration-0 draw. Runs are
    /// seed-reproducible either way; freezing additionally removes the
    /// sampling noise from the objective trace.
    pub deterministic: bool,
    /// Emit a log line every this many iterations.
    pub trace_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 50,
            omega: 1.0,
            lambda: 1.0,
            r_train: 1,
            r_eval: 32,
            max_iters: 200,
            infer_iters: 200,
            seed: 0,
            eta_q: 0.05,
            eta_t: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            t_init_var: 0.001,
            deterministic: false,
            trace_every: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidInput("K must be >= 1".into()));
        }
        if self.r_train < 1 || self.r_eval < 1 {
            return Err(Error::InvalidInput("R must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidInput("lambda must be > 0".into()));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidInput("omega must be >= 0".into()));
        }
        Ok(())
    }

    fn adam_q(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
            eta: self.eta_q,
        }
    }

    fn adam_t(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
            eta: self.eta_t,
        }
    }

    /// Iteration key for the noise stream; frozen mode always replays draw 0.
    fn noise_iter(&self, iteration: usize) -> u64 {
        if self.deterministic {
            0
        } else {
            iteration as u64
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainedState {
    pub model: SmmModel,
    /// One posterior per training document, index-aligned with the corpus.
    pub posteriors: Vec<Posterior>,
    /// Regularized objective per iteration.
    pub elbo_trace: Vec<f64>,
}

/// Per-iteration numbers for the training log.
#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub iter: usize,
    /// Total regularized objective.
    pub objective: f64,
    /// Sum of per-document KL terms.
    pub kl_sum: f64,
    /// Fraction of nonzero entries in `T`.
    pub nonzero_frac: f64,
    pub wall_secs: f64,
}

/// `m` from smoothed unigram counts, `T` from a seeded zero-mean normal
/// with variance `t_init_var`.
pub fn init_model(corpus: &BowCorpus, cfg: &TrainConfig) -> Result<SmmModel> {
    cfg.validate()?;
    if corpus.v() == 0 {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let counts = corpus.word_counts();
    let total: f64 = counts.iter().map(|&c| c as f64 + 1.0).sum();
    let m = Array1::from_iter(counts.iter().map(|&c| ((c as f64 + 1.0) / total).ln()));
    let sd = cfg.t_init_var.sqrt();
    let mut r = rng::stream(cfg.seed, 0, 0, StreamTag::ModelInit);
    let t = Array2::from_shape_simple_fn((corpus.v(), cfg.k), || {
        sd * r.sample::<f64, _>(StandardNormal)
    });
    SmmModel::new(m, t, cfg.lambda)
}

/// Posteriors at the shared starting point `N(0, diag(0.1))`.
pub fn init_posteriors(n_docs: usize, cfg: &TrainConfig) -> Vec<Posterior> {
    let lsd0 = 0.5 * 0.1f64.ln();
    (0..n_docs)
        .map(|_| {
            Posterior::new(Array1::zeros(cfg.k), Array1::from_elem(cfg.k, lsd0))
                .expect("finite init")
        })
        .collect()
}

/// Full VB training; see the module docs for the iteration structure.
pub fn train(corpus: &BowCorpus, cfg: &TrainConfig) -> Result<TrainedState> {
    train_logged(corpus, cfg, &mut std::io::sink())
}

/// Training with a tab-separated per-iteration log written to `log`.
pub fn train_logged(
    corpus: &BowCorpus,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainedState> {
    cfg.validate()?;
    let mut model = init_model(corpus, cfg)?;
    let n_docs = corpus.n_docs();
    let mut posteriors = init_posteriors(n_docs, cfg);
    let mut adam_nu: Vec<AdamState<ndarray::Ix1>> = (0..n_docs)
        .map(|_| AdamState::new(cfg.k, cfg.adam_q()))
        .collect();
    let mut adam_lsd: Vec<AdamState<ndarray::Ix1>> = (0..n_docs)
        .map(|_| AdamState::new(cfg.k, cfg.adam_q()))
        .collect();
    let mut adam_t: AdamState<ndarray::Ix2> =
        AdamState::new((corpus.v(), cfg.k), cfg.adam_t());

    writeln!(log, "#iter\tobjective\tkl_sum\tnonzero_frac\twall_secs")
        .map_err(|e| Error::io("<train log>", e))?;

    let start = Instant::now();
    let mut trace: Vec<f64> = Vec::with_capacity(cfg.max_iters);
    let mut small_changes = 0usize;

    for iter in 0..cfg.max_iters {
        let noise_iter = cfg.noise_iter(iter);

        // Posterior pass: one ADAM step on (nu, lsd) per document.
        posteriors
            .par_iter_mut()
            .zip(adam_nu.par_iter_mut())
            .zip(adam_lsd.par_iter_mut())
            .enumerate()
            .for_each(|(d, ((post, st_nu), st_lsd))| {
                let eps = rng::epsilon_samples(
                    cfg.seed,
                    d as u64,
                    noise_iter,
                    StreamTag::Train,
                    cfg.r_train,
                    cfg.k,
                );
                let x = &corpus.docs[d];
                let (gn, gl) = model::posterior_grads(&model, post, x, &eps);
                let dn = st_nu.direction(&gn);
                let dl = st_lsd.direction(&gl);
                post.nu += &dn;
                post.lsd += &dl;
            });

        // Objective + subspace gradient with the updated posteriors and the
        // same noise, reduced chunk-by-chunk in document order.
        let chunks: Vec<(f64, f64, Array2<f64>)> = (0..n_docs)
            .collect::<Vec<_>>()
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = Array2::<f64>::zeros((corpus.v(), cfg.k));
                let mut elbo = 0.0;
                let mut kl = 0.0;
                for &d in chunk {
                    let eps = rng::epsilon_samples(
                        cfg.seed,
                        d as u64,
                        noise_iter,
                        StreamTag::Train,
                        cfg.r_train,
                        cfg.k,
                    );
                    let x = &corpus.docs[d];
                    let post = &posteriors[d];
                    let (e, k) = model::elbo_kl_and_grad_t_doc(&model, post, x, &eps, &mut grad);
                    elbo += e;
                    kl += k;
                }
                (elbo, kl, grad)
            })
            .collect();
        let mut grad_t = Array2::<f64>::zeros((corpus.v(), cfg.k));
        let mut elbo_sum = 0.0;
        let mut kl_sum = 0.0;
        for (elbo, kl, grad) in chunks {
            elbo_sum += elbo;
            kl_sum += kl;
            grad_t += &grad;
        }

        let l1: f64 = model.t.iter().map(|x| x.abs()).sum();
        let objective = elbo_sum - cfg.omega * l1;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "objective became non-finite at iteration {iter}"
            )));
        }

        crate::optim::update_t_rows(&mut model.t, &grad_t, &mut adam_t, cfg.omega)
            .map_err(|e| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("{msg} at iteration {iter}"))
                }
                other => other,
            })?;

        if let Some(&prev) = trace.last() {
            let rel = (objective - prev).abs() / prev.abs().max(1e-12);
            small_changes = if rel < CONVERGENCE_RTOL {
                small_changes + 1
            } else {
                0
            };
        }
        trace.push(objective);

        if cfg.trace_every > 0 && iter % cfg.trace_every == 0 {
            let stats = IterStats {
                iter,
                objective,
                kl_sum,
                nonzero_frac: 1.0 - model.zero_fraction(),
                wall_secs: start.elapsed().as_secs_f64(),
            };
            writeln!(
                log,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
                stats.iter, stats.objective, stats.kl_sum, stats.nonzero_frac, stats.wall_secs
            )
            .map_err(|e| Error::io("<train log>", e))?;
        }

        if small_changes >= CONVERGENCE_WINDOW {
            break;
        }
    }

    Ok(TrainedState {
        model,
        posteriors,
        elbo_trace: trace,
    })
}

/// Infers the posterior of one unseen document against a frozen model.
/// `doc_index` keys the noise stream; use the document's position when
/// inferring a whole corpus.
pub fn infer_posterior(
    model: &SmmModel,
    x: &crate::corpus::BowDocument,
    cfg: &TrainConfig,
    doc_index: u64,
) -> Posterior {
    let lsd0 = 0.5 * 0.1f64.ln();
    let k = model.k();
    let mut post =
        Posterior::new(Array1::zeros(k), Array1::from_elem(k, lsd0)).expect("finite init");
    let mut st_nu: AdamState<ndarray::Ix1> = AdamState::new(k, cfg.adam_q());
    let mut st_lsd: AdamState<ndarray::Ix1> = AdamState::new(k, cfg.adam_q());
    for iter in 0..cfg.infer_iters {
        let eps = rng::epsilon_samples(
            cfg.seed,
            doc_index,
            cfg.noise_iter(iter),
            StreamTag::Infer,
            cfg.r_train,
            k,
        );
        let (gn, gl) = model::posterior_grads(model, &post, x, &eps);
        let dn = st_nu.direction(&gn);
        let dl = st_lsd.direction(&gl);
        post.nu += &dn;
        post.lsd += &dl;
    }
    post
}

/// Posterior inference for every document of a corpus, parallel across
/// documents. The model is read-only throughout.
pub fn infer_posteriors(model: &SmmModel, corpus: &BowCorpus, cfg: &TrainConfig) -> Result<Vec<Posterior>> {
    if corpus.v() != model.v() {
        return Err(Error::Mismatch(format!(
            "corpus has V={} but model has V={}",
            corpus.v(),
            model.v()
        )));
    }
    Ok(corpus
        .docs
        .par_iter()
        .enumerate()
        .map(|(d, x)| infer_posterior(model, x, cfg, d as u64))
        .collect())
}
