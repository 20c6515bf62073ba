//! Model and posterior types plus all per-document math: log-likelihoods,
//! the KL term, reparametrized samples, the ELBO and its analytic gradients.
//!
//! Conventions used throughout:
//!
//! - `m` is the length-`V` vector of log-unigram scores, `T` is `V x K` with
//!   one row per word, and word probabilities are `softmax(m + T w)`.
//! - the variational posterior of a document is `N(nu, diag(exp{2 lsd}))`,
//!   i.e. `lsd` stores log standard deviations.
//! - expectations over the posterior are approximated with `R` reparametrized
//!   samples `w_r = nu + exp{lsd} .* eps_r`, `eps_r ~ N(0, I)`.
//!
//! Everything is 64-bit; gradient checks against finite differences are part
//! of the test suite and are not reachable at f32 tolerances.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::corpus::BowDocument;
use crate::{Error, Result};

/// Model parameters: log-unigram scores `m`, subspace matrix `T` and the
/// prior precision of document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SmmModel {
    /// Length-`V` log-unigram scores.
    pub m: Array1<f64>,
    /// `V x K`, row `t_i` per word.
    pub t: Array2<f64>,
    /// Precision of the isotropic Gaussian prior over embeddings.
    pub lambda: f64,
}

impl SmmModel {
    pub fn new(m: Array1<f64>, t: Array2<f64>, lambda: f64) -> Result<Self> {
        if t.nrows() != m.len() {
            return Err(Error::InvalidInput(format!(
                "T has {} rows but m has {} entries",
                t.nrows(),
                m.len()
            )));
        }
        if m.is_empty() || t.ncols() == 0 {
            return Err(Error::InvalidInput("V and K must be >= 1".into()));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidInput(format!("lambda must be > 0, got {lambda}")));
        }
        if m.iter().any(|x| !x.is_finite()) || t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite model parameters".into()));
        }
        Ok(SmmModel { m, t, lambda })
    }

    pub fn v(&self) -> usize {
        self.m.len()
    }

    pub fn k(&self) -> usize {
        self.t.ncols()
    }

    /// Fraction of exactly-zero entries in `T`.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.t.iter().filter(|&&x| x == 0.0).count();
        zeros as f64 / (self.t.len() as f64)
    }
}

/// Diagonal-Gaussian variational posterior of one document embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Mean.
    pub nu: Array1<f64>,
    /// Log standard deviations, so the covariance diagonal is `exp{2 lsd}`.
    pub lsd: Array1<f64>,
}

impl Posterior {
    pub fn new(nu: Array1<f64>, lsd: Array1<f64>) -> Result<Self> {
        if nu.len() != lsd.len() {
            return Err(Error::InvalidInput(format!(
                "nu has {} entries but lsd has {}",
                nu.len(),
                lsd.len()
            )));
        }
        if nu.iter().chain(lsd.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite posterior parameters".into()));
        }
        Ok(Posterior { nu, lsd })
    }

    pub fn k(&self) -> usize {
        self.nu.len()
    }

    /// Covariance diagonal `exp{2 lsd}`.
    pub fn variances(&self) -> Array1<f64> {
        self.lsd.mapv(|s| (2.0 * s).exp())
    }

    /// Trace of the posterior covariance; the scalar uncertainty summary.
    pub fn trace_cov(&self) -> f64 {
        self.lsd.iter().map(|&s| (2.0 * s).exp()).sum()
    }

    /// Diagonal of the posterior precision, `exp{-2 lsd}`.
    pub fn precisions(&self) -> Array1<f64> {
        self.lsd.mapv(|s| (-2.0 * s).exp())
    }
}

/// `R x K` standard-normal draws backing the Monte-Carlo expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSamples(Array2<f64>);

impl EpsilonSamples {
    pub fn new(eps: Array2<f64>) -> Self {
        assert!(eps.nrows() >= 1, "need at least one sample");
        EpsilonSamples(eps)
    }

    pub fn r(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Per-sample word distributions: column `r` is `softmax(m + T w_r)`.
#[derive(Debug, Clone)]
pub struct ThetaMatrix {
    /// `V x R`; every column sums to 1.
    pub theta: Array2<f64>,
    /// Log-normalizer of each column, `logsumexp_j(m_j + t_j w_r)`.
    pub log_norms: Vec<f64>,
}

/// Max-shifted log-sum-exp. Exact for constant vectors.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "log_sum_exp of empty vector");
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// One reparametrized sample `w = nu + exp{lsd} .* eps`.
pub fn reparam_sample(post: &Posterior, eps_row: ArrayView1<f64>) -> Array1<f64> {
    assert_eq!(post.k(), eps_row.len());
    let mut w = post.nu.clone();
    for ((w, &s), &e) in w.iter_mut().zip(post.lsd.iter()).zip(eps_row.iter()) {
        *w += s.exp() * e;
    }
    w
}

/// Multinomial log-likelihood of a document at embedding `w`, without the
/// count-multinomial constant. Empty documents score 0.
pub fn doc_log_likelihood(model: &SmmModel, w: ArrayView1<f64>, x: &BowDocument) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let logits = &model.m + &model.t.dot(&w);
    let lse = log_sum_exp(logits.as_slice().expect("contiguous"));
    x.entries()
        .iter()
        .map(|&(id, cnt)| cnt as f64 * (logits[id as usize] - lse))
        .sum()
}

/// KL divergence from the posterior to the isotropic prior
/// `N(0, (lambda I)^-1)`; closed form for diagonal Gaussians.
pub fn kl_to_prior(post: &Posterior, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    let k = post.k() as f64;
    let mut tr = 0.0; // lambda * tr(Gamma^-1)
    let mut logdet = 0.0; // log |Gamma| = -sum 2 lsd
    for &s in post.lsd.iter() {
        tr += lambda * (2.0 * s).exp();
        logdet -= 2.0 * s;
    }
    let sq = post.nu.iter().map(|&n| n * n).sum::<f64>();
    0.5 * (tr + logdet - k * lambda.ln() + lambda * sq - k)
}

/// The reparametrized samples as rows of an `R x K` matrix.
fn sample_matrix(post: &Posterior, eps: &EpsilonSamples) -> Array2<f64> {
    assert_eq!(post.k(), eps.k());
    let mut g = eps.as_array().clone();
    for mut row in g.rows_mut() {
        for ((v, &s), &n) in row.iter_mut().zip(post.lsd.iter()).zip(post.nu.iter()) {
            *v = n + s.exp() * *v;
        }
    }
    g
}

/// Shared per-document quantities: samples, per-sample softmax and its
/// log-normalizers. Both the ELBO and every gradient are cheap given these.
pub(crate) struct SampleStats {
    /// `R x K`, row r = `g(eps_r)`.
    pub g: Array2<f64>,
    /// `V x R` column-softmax of the logits.
    pub theta: Array2<f64>,
    /// Per-sample log-normalizer.
    pub log_norms: Vec<f64>,
}

pub(crate) fn sample_stats(model: &SmmModel, post: &Posterior, eps: &EpsilonSamples) -> SampleStats {
    let g = sample_matrix(post, eps);
    // logits[:, r] = m + T g_r
    let mut logits = model.t.dot(&g.t());
    for mut col in logits.columns_mut() {
        col += &model.m;
    }
    let r = logits.ncols();
    let mut log_norms = Vec::with_capacity(r);
    for mut col in logits.columns_mut() {
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        col.mapv_inplace(|v| v / sum);
        log_norms.push(max + sum.ln());
    }
    SampleStats {
        g,
        theta: logits,
        log_norms,
    }
}

/// Per-sample word distributions `softmax(m + T g(eps_r))`.
pub fn theta_matrix(model: &SmmModel, post: &Posterior, eps: &EpsilonSamples) -> ThetaMatrix {
    let stats = sample_stats(model, post, eps);
    ThetaMatrix {
        theta: stats.theta,
        log_norms: stats.log_norms,
    }
}

/// `sum_i x_i t_i` as a length-`K` vector; the sparse data projection.
fn t_dot_x(model: &SmmModel, x: &BowDocument) -> Array1<f64> {
    let mut acc = Array1::zeros(model.k());
    for &(id, cnt) in x.entries() {
        acc.scaled_add(cnt as f64, &model.t.row(id as usize));
    }
    acc
}

/// Monte-Carlo estimate of the per-document ELBO:
/// `-KL(q||p) + sum_i x_i [(m_i + t_i nu) - (1/R) sum_r lse_r]`.
pub fn elbo_document(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
) -> f64 {
    let kl = kl_to_prior(post, model.lambda);
    if x.is_empty() {
        return -kl;
    }
    let stats = sample_stats(model, post, eps);
    -kl + data_term(model, post, x, &stats)
}

/// The data part of the ELBO given precomputed sample stats.
fn data_term(model: &SmmModel, post: &Posterior, x: &BowDocument, stats: &SampleStats) -> f64 {
    let n_d = x.total_count() as f64;
    let mean_lse = stats.log_norms.iter().sum::<f64>() / stats.log_norms.len() as f64;
    let tx = t_dot_x(model, x);
    let m_part: f64 = x
        .entries()
        .iter()
        .map(|&(id, cnt)| cnt as f64 * model.m[id as usize])
        .sum();
    m_part + tx.dot(&post.nu) - n_d * mean_lse
}

/// Gradient of the per-document ELBO w.r.t. the posterior mean:
/// `sum_i t_i^T (x_i - mean_r theta_ir N_d) - lambda nu`.
pub fn grad_nu(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
) -> Array1<f64> {
    if x.is_empty() {
        let mut grad = t_dot_x(model, x);
        grad.scaled_add(-model.lambda, &post.nu);
        return grad;
    }
    let stats = sample_stats(model, post, eps);
    posterior_grads_with(model, post, x, eps, &stats).0
}

/// Gradient of the per-document ELBO w.r.t. log standard deviations:
/// `1 - lambda exp{2 lsd} - N_d mean_r [(T^T theta_r) .* exp{lsd} .* eps_r]`.
pub fn grad_lsd(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
) -> Array1<f64> {
    if x.is_empty() {
        return post.lsd.mapv(|s| 1.0 - model.lambda * (2.0 * s).exp());
    }
    let stats = sample_stats(model, post, eps);
    posterior_grads_with(model, post, x, eps, &stats).1
}

/// Both posterior gradients from one stats computation; the training loop's
/// inner step.
pub(crate) fn posterior_grads(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
) -> (Array1<f64>, Array1<f64>) {
    if x.is_empty() {
        let mut gn = t_dot_x(model, x);
        gn.scaled_add(-model.lambda, &post.nu);
        let gl = post.lsd.mapv(|s| 1.0 - model.lambda * (2.0 * s).exp());
        return (gn, gl);
    }
    let stats = sample_stats(model, post, eps);
    posterior_grads_with(model, post, x, eps, &stats)
}

fn posterior_grads_with(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
    stats: &SampleStats,
) -> (Array1<f64>, Array1<f64>) {
    let n_d = x.total_count() as f64;
    let r = eps.r() as f64;
    let proj = model.t.t().dot(&stats.theta); // K x R: T^T theta_r

    let mut gn = t_dot_x(model, x);
    let mean = proj.mean_axis(Axis(1)).expect("R >= 1");
    gn.scaled_add(-n_d, &mean);
    gn.scaled_add(-model.lambda, &post.nu);

    let mut gl = post.lsd.mapv(|s| 1.0 - model.lambda * (2.0 * s).exp());
    let sd = post.lsd.mapv(f64::exp);
    for (rr, eps_row) in eps.as_array().rows().into_iter().enumerate() {
        for k in 0..post.k() {
            gl[k] -= n_d / r * proj[[k, rr]] * sd[k] * eps_row[k];
        }
    }
    (gn, gl)
}

/// Accumulates one document's contribution to the `T` gradient:
/// `x_dk nu_d^T - N_d (1/R) sum_r theta_dkr g(eps_dr)^T` added row-wise.
pub(crate) fn accumulate_grad_t_doc(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
    acc: &mut Array2<f64>,
) {
    accumulate_grad_t_doc_with(post, x, &sample_stats(model, post, eps), acc);
}

/// One stats computation for the whole outer-loop tail: the document ELBO,
/// its KL term, and the document's `T`-gradient contribution.
pub(crate) fn elbo_kl_and_grad_t_doc(
    model: &SmmModel,
    post: &Posterior,
    x: &BowDocument,
    eps: &EpsilonSamples,
    acc: &mut Array2<f64>,
) -> (f64, f64) {
    let kl = kl_to_prior(post, model.lambda);
    if x.is_empty() {
        return (-kl, kl);
    }
    let stats = sample_stats(model, post, eps);
    let elbo = -kl + data_term(model, post, x, &stats);
    accumulate_grad_t_doc_with(post, x, &stats, acc);
    (elbo, kl)
}

/// Same as [`accumulate_grad_t_doc`] but reusing precomputed stats.
pub(crate) fn accumulate_grad_t_doc_with(
    post: &Posterior,
    x: &BowDocument,
    stats: &SampleStats,
    acc: &mut Array2<f64>,
) {
    if x.is_empty() {
        return;
    }
    let n_d = x.total_count() as f64;
    for &(id, cnt) in x.entries() {
        acc.row_mut(id as usize).scaled_add(cnt as f64, &post.nu);
    }
    // acc -= N_d/R * theta (V x R) . g (R x K)
    let scale = -n_d / stats.g.nrows() as f64;
    ndarray::linalg::general_mat_mul(scale, &stats.theta, &stats.g, 1.0, acc);
}

/// Full-corpus gradient of the regularized objective w.r.t. `T`, including
/// the `-omega sign(T)` penalty term with `sign(0) = 0`.
pub fn grad_t(
    model: &SmmModel,
    posteriors: &[Posterior],
    docs: &[BowDocument],
    eps_per_doc: &[EpsilonSamples],
    omega: f64,
) -> Array2<f64> {
    assert_eq!(posteriors.len(), docs.len());
    assert_eq!(eps_per_doc.len(), docs.len());
    let mut grad = Array2::zeros((model.v(), model.k()));
    for ((post, x), eps) in posteriors.iter().zip(docs).zip(eps_per_doc) {
        accumulate_grad_t_doc(model, post, x, eps, &mut grad);
    }
    if omega != 0.0 {
        grad.zip_mut_with(&model.t, |g, &t| *g -= omega * sign(t));
    }
    grad
}

/// `sign` with `sign(0) = 0`; the L1 sub-gradient convention.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
