//! Generative Gaussian classifiers over document embeddings.
//!
//! GLC models each class as a Gaussian with its own mean and a shared
//! within-class precision `D`, fit by maximum likelihood on posterior means.
//! GLCU additionally treats each embedding's posterior covariance as a
//! per-document latent noise term `y_d ~ N(0, Gamma_d^-1)` on top of the
//! class model, so noisy (short-document) embeddings pull less on the class
//! parameters. GLCU is trained by EM; its class-conditional likelihood of an
//! observed mean is the Gaussian convolution `N(nu | mu, Gamma^-1 + D^-1)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array1;

use crate::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Class means (one column per class), shared precision and log priors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassifier {
    /// `K x L`.
    pub means: DMatrix<f64>,
    /// Shared within-class precision, `K x K` symmetric positive definite.
    pub prec: DMatrix<f64>,
    /// Length `L`; sums to 1 in probability domain.
    pub log_priors: DVector<f64>,
}

impl GaussianClassifier {
    pub fn k(&self) -> usize {
        self.means.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.means.ncols()
    }
}

/// Posterior of the latent noise term of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub u: DVector<f64>,
    /// Precision `V_d = D + Gamma_d`.
    pub v_prec: DMatrix<f64>,
}

/// How class priors are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    #[default]
    Empirical,
    Uniform,
}

/// Training options shared by GLC and GLCU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOpts {
    pub prior_mode: PriorMode,
    /// Ridge added to the within-class covariance before inversion; 0 keeps
    /// the plain ML estimate.
    pub reg_gamma: f64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            prior_mode: PriorMode::Empirical,
            reg_gamma: 0.0,
        }
    }
}

/// A trained GLCU together with its per-iteration marginal log-likelihood.
#[derive(Debug, Clone)]
pub struct GlcuFit {
    pub classifier: GaussianClassifier,
    /// Class-conditional log-likelihood before each EM step and after the
    /// last one; non-decreasing by construction.
    pub ll_trace: Vec<f64>,
}

/// Class id plus the posterior over all classes.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub class: usize,
    pub posterior: Vec<f64>,
}

fn to_dvec(a: &Array1<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice().expect("contiguous"))
}

fn check_labels(n_docs: usize, labels: &[u32], n_classes: usize) -> Result<Vec<usize>> {
    if labels.len() != n_docs {
        return Err(Error::Mismatch(format!(
            "{} labels for {} embeddings",
            labels.len(),
            n_docs
        )));
    }
    if n_classes == 0 {
        return Err(Error::InvalidInput("need at least one class".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l as usize >= n_classes {
            return Err(Error::Mismatch(format!("label {l} >= L={n_classes}")));
        }
        counts[l as usize] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("class {empty} has no examples")));
    }
    Ok(counts)
}

fn log_priors_from(counts: &[usize], mode: PriorMode) -> DVector<f64> {
    let l = counts.len();
    match mode {
        PriorMode::Uniform => DVector::from_element(l, -(l as f64).ln()),
        PriorMode::Empirical => {
            let total: usize = counts.iter().sum();
            DVector::from_iterator(l, counts.iter().map(|&c| (c as f64 / total as f64).ln()))
        }
    }
}

fn class_means(nus: &[DVector<f64>], labels: &[u32], counts: &[usize]) -> DMatrix<f64> {
    let k = nus[0].len();
    let l = counts.len();
    let mut means = DMatrix::zeros(k, l);
    for (nu, &lab) in nus.iter().zip(labels) {
        means.column_mut(lab as usize).axpy(1.0, nu, 1.0);
    }
    for (li, &c) in counts.iter().enumerate() {
        means.column_mut(li).scale_mut(1.0 / c as f64);
    }
    means
}

fn invert_spd(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(cov.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| {
            Error::Singular(format!(
                "{what} is singular or not positive definite; consider a covariance ridge (reg_gamma > 0)"
            ))
        })
}

/// Fits a GLC: class means, pooled within-class covariance (ML, divided by
/// the total document count) and priors.
pub fn glc_train(
    embeddings: &[Array1<f64>],
    labels: &[u32],
    n_classes: usize,
    opts: &TrainOpts,
) -> Result<GaussianClassifier> {
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("no training embeddings".into()));
    }
    let counts = check_labels(embeddings.len(), labels, n_classes)?;
    let nus: Vec<DVector<f64>> = embeddings.iter().map(to_dvec).collect();
    let k = nus[0].len();
    let means = class_means(&nus, labels, &counts);

    let mut cov = DMatrix::<f64>::zeros(k, k);
    for (nu, &lab) in nus.iter().zip(labels) {
        let r = nu - means.column(lab as usize);
        cov.syger(1.0, &r, &r, 1.0); // rank-1 update of the lower triangle
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov.unscale_mut(nus.len() as f64);
    for i in 0..k {
        cov[(i, i)] += opts.reg_gamma;
    }
    let prec = invert_spd(&cov, "pooled within-class covariance")?;
    Ok(GaussianClassifier {
        means,
        prec,
        log_priors: log_priors_from(&counts, opts.prior_mode),
    })
}

/// E-step for one document: posterior of the latent noise term.
/// `gamma_diag` is the diagonal of the embedding-posterior precision.
pub fn glcu_e_step(
    model: &GaussianClassifier,
    nu: &Array1<f64>,
    gamma_diag: &Array1<f64>,
    mu: &DVector<f64>,
) -> Result<LatentPosterior> {
    if gamma_diag.iter().any(|&g| !g.is_finite() || g <= 0.0) {
        return Err(Error::Singular(
            "embedding precision must be positive and finite".into(),
        ));
    }
    let k = model.k();
    let mut v_prec = model.prec.clone();
    for i in 0..k {
        v_prec[(i, i)] += gamma_diag[i];
    }
    let chol = Cholesky::new(v_prec.clone())
        .ok_or_else(|| Error::Singular("V_d = D + Gamma_d is not positive definite".into()))?;
    // u = [I + D^-1 Gamma]^-1 (nu - mu) = V^-1 D (nu - mu)
    let resid = to_dvec(nu) - mu;
    let u = chol.solve(&(&model.prec * resid));
    Ok(LatentPosterior { u, v_prec })
}

/// Per-document quantities carried from the E-step into the M-step.
#[derive(Debug, Clone)]
pub struct EStepStats {
    pub u: DVector<f64>,
    /// `V_d^-1`, the posterior covariance of the latent noise.
    pub v_inv: DMatrix<f64>,
}

/// M-step: new class means from de-noised embeddings `nu_d - u_d`, then the
/// shared covariance from residuals around the fresh means plus the latent
/// posterior covariances. The covariance stays positive definite without any
/// ridge: every `V_d^-1` term is.
pub fn glcu_m_step(
    nus: &[DVector<f64>],
    stats: &[EStepStats],
    labels: &[u32],
    counts: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = nus[0].len();
    let l = counts.len();
    let mut means = DMatrix::zeros(k, l);
    for ((nu, st), &lab) in nus.iter().zip(stats).zip(labels) {
        let denoised = nu - &st.u;
        means.column_mut(lab as usize).axpy(1.0, &denoised, 1.0);
    }
    for (li, &c) in counts.iter().enumerate() {
        means.column_mut(li).scale_mut(1.0 / c as f64);
    }

    let mut d_inv = DMatrix::<f64>::zeros(k, k);
    for ((nu, st), &lab) in nus.iter().zip(stats).zip(labels) {
        let a = &st.u - (nu - means.column(lab as usize));
        d_inv.syger(1.0, &a, &a, 1.0);
        d_inv += &st.v_inv;
    }
    d_inv.fill_upper_triangle_with_lower_triangle();
    d_inv.unscale_mut(nus.len() as f64);
    let prec = invert_spd(&d_inv, "GLCU within-class covariance")?;
    Ok((means, prec))
}

/// Total class-conditional log-likelihood `sum_d log N(nu_d | mu_d, Gamma_d^-1 + D^-1)`.
pub fn glcu_marginal_ll(
    model: &GaussianClassifier,
    nus: &[DVector<f64>],
    gamma_diags: &[Array1<f64>],
    labels: &[u32],
) -> Result<f64> {
    let k = model.k();
    let d_cov = invert_spd(&model.prec, "shared precision")?;
    let mut total = 0.0;
    for ((nu, gamma), &lab) in nus.iter().zip(gamma_diags).zip(labels) {
        let mut cov = d_cov.clone();
        for i in 0..k {
            cov[(i, i)] += 1.0 / gamma[i];
        }
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::Singular("marginal covariance not positive definite".into()))?;
        let resid = nu - model.means.column(lab as usize);
        let maha = resid.dot(&chol.solve(&resid));
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        total += -0.5 * (maha + logdet + k as f64 * LN_2PI);
    }
    Ok(total)
}

/// Trains a GLCU by EM from the GLC solution. `gamma_diags` holds each
/// embedding posterior's precision diagonal. Any covariance ridge in `opts`
/// affects only the GLC initialization; the EM steps themselves are exact,
/// so the recorded likelihood must be non-decreasing and a decrease beyond
/// 1e-9 aborts.
pub fn glcu_train(
    embeddings: &[Array1<f64>],
    gamma_diags: &[Array1<f64>],
    labels: &[u32],
    n_classes: usize,
    em_iters: usize,
    opts: &TrainOpts,
) -> Result<GlcuFit> {
    if em_iters == 0 {
        return Err(Error::InvalidInput("em_iters must be >= 1".into()));
    }
    if gamma_diags.len() != embeddings.len() {
        return Err(Error::Mismatch(format!(
            "{} precision diagonals for {} embeddings",
            gamma_diags.len(),
            embeddings.len()
        )));
    }
    let counts = check_labels(embeddings.len(), labels, n_classes)?;
    let mut clf = glc_train(embeddings, labels, n_classes, opts)?;
    let nus: Vec<DVector<f64>> = embeddings.iter().map(to_dvec).collect();

    let mut trace = Vec::with_capacity(em_iters + 1);
    trace.push(glcu_marginal_ll(&clf, &nus, gamma_diags, labels)?);
    for iter in 0..em_iters {
        let stats: Vec<EStepStats> = nus
            .iter()
            .zip(gamma_diags)
            .zip(labels)
            .map(|((nu_vec, gamma), &lab)| {
                let nu_arr = Array1::from_iter(nu_vec.iter().cloned());
                let mu = clf.means.column(lab as usize).into_owned();
                let lp = glcu_e_step(&clf, &nu_arr, gamma, &mu)?;
                let v_inv = invert_spd(&lp.v_prec, "V_d")?;
                Ok(EStepStats { u: lp.u, v_inv })
            })
            .collect::<Result<_>>()?;
        let (means, prec) = glcu_m_step(&nus, &stats, labels, &counts)?;
        clf.means = means;
        clf.prec = prec;
        let ll = glcu_marginal_ll(&clf, &nus, gamma_diags, labels)?;
        let prev = *trace.last().expect("non-empty");
        if ll < prev - 1e-9 {
            return Err(Error::Numerical(format!(
                "EM likelihood decreased at iteration {iter}: {prev} -> {ll}"
            )));
        }
        trace.push(ll);
    }
    Ok(GlcuFit {
        classifier: clf,
        ll_trace: trace,
    })
}

/// Normalizes class log-scores into a posterior; shift-invariant by
/// construction and summing to 1.
pub fn normalize_log_posterior(scores: &[f64]) -> Vec<f64> {
    let lse = crate::model::log_sum_exp(scores);
    scores.iter().map(|&s| (s - lse).exp()).collect()
}

/// Classifies one embedding. With `gamma_diag` the likelihood marginalizes
/// the embedding uncertainty (GLCU); without it the point-estimate Gaussian
/// is used (GLC). Ties resolve to the lowest class id.
pub fn predict(
    model: &GaussianClassifier,
    nu: &Array1<f64>,
    gamma_diag: Option<&Array1<f64>>,
) -> Result<Prediction> {
    let k = model.k();
    let l = model.n_classes();
    let nu = to_dvec(nu);
    let mut scores = Vec::with_capacity(l);
    match gamma_diag {
        None => {
            // log N(nu | mu_l, D^-1) up to the class-independent normalizer
            for li in 0..l {
                let r = &nu - model.means.column(li);
                let maha = r.dot(&(&model.prec * &r));
                scores.push(-0.5 * maha + model.log_priors[li]);
            }
        }
        Some(gamma) => {
            let mut cov = invert_spd(&model.prec, "shared precision")?;
            for i in 0..k {
                let g = gamma[i];
                if !g.is_finite() || g <= 0.0 {
                    return Err(Error::Singular(format!(
                        "non-positive embedding precision {g}"
                    )));
                }
                cov[(i, i)] += 1.0 / g;
            }
            let chol = Cholesky::new(cov).ok_or_else(|| {
                Error::Singular("predictive covariance not positive definite".into())
            })?;
            for li in 0..l {
                let r = &nu - model.means.column(li);
                let maha = r.dot(&chol.solve(&r));
                scores.push(-0.5 * maha + model.log_priors[li]);
            }
        }
    }
    let posterior = normalize_log_posterior(&scores);
    let class = posterior
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("at least one class");
    Ok(Prediction { class, posterior })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn arr(v: &[f64]) -> Array1<f64> {
        Array1::from_vec(v.to_vec())
    }

    #[test]
    fn glc_singletons_with_ridge() {
        let embs = vec![arr(&[0.0, 0.0]), arr(&[2.0, 0.0])];
        let labels = vec![0, 1];
        let opts = TrainOpts {
            reg_gamma: 1.0,
            ..TrainOpts::default()
        };
        let clf = glc_train(&embs, &labels, 2, &opts).unwrap();
        assert_abs_diff_eq!(clf.means[(0, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(clf.means[(0, 1)], 2.0, epsilon = 1e-14);
        // zero scatter + ridge 1.0 -> covariance I -> precision I
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(clf.prec[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn glc_zero_scatter_is_singular_without_ridge() {
        let embs = vec![arr(&[1.0, 2.0]), arr(&[1.0, 2.0]), arr(&[3.0, 1.0])];
        let labels = vec![0, 0, 1];
        let err = glc_train(&embs, &labels, 2, &TrainOpts::default()).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn glc_invariant_to_duplication() {
        let embs = vec![
            arr(&[0.1, 1.0]),
            arr(&[-0.2, 0.8]),
            arr(&[2.0, -1.0]),
            arr(&[2.5, -0.5]),
        ];
        let labels = vec![0, 0, 1, 1];
        let mut embs2 = embs.clone();
        embs2.extend(embs.iter().cloned());
        let mut labels2 = labels.clone();
        labels2.extend(labels.iter().copied());
        let a = glc_train(&embs, &labels, 2, &TrainOpts::default()).unwrap();
        let b = glc_train(&embs2, &labels2, 2, &TrainOpts::default()).unwrap();
        assert!((&a.means - &b.means).abs().max() < 1e-12);
        assert!((&a.prec - &b.prec).abs().max() < 1e-10);
        assert!((&a.log_priors - &b.log_priors).abs().max() < 1e-12);
    }

    #[test]
    fn glc_missing_class_is_error() {
        let embs = vec![arr(&[0.0]), arr(&[1.0])];
        let labels = vec![0, 0];
        assert!(glc_train(&embs, &labels, 2, &TrainOpts::default()).is_err());
    }

    #[test]
    fn e_step_examples() {
        // D = I, Gamma = I, nu - mu = [2] -> u = [1], V = 2
        let clf = GaussianClassifier {
            means: DMatrix::from_element(1, 1, 0.0),
            prec: DMatrix::identity(1, 1),
            log_priors: DVector::from_element(1, 0.0),
        };
        let lp = glcu_e_step(&clf, &arr(&[2.0]), &arr(&[1.0]), &DVector::zeros(1)).unwrap();
        assert_abs_diff_eq!(lp.u[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lp.v_prec[(0, 0)], 2.0, epsilon = 1e-14);

        // huge precision: latent noise explains nothing
        let lp = glcu_e_step(&clf, &arr(&[2.0]), &arr(&[1e8]), &DVector::zeros(1)).unwrap();
        assert!(lp.u[0].abs() <= 1e-6 * 2.0);

        // nu = mu -> u = 0
        let lp = glcu_e_step(&clf, &arr(&[0.0]), &arr(&[1.0]), &DVector::zeros(1)).unwrap();
        assert_eq!(lp.u[0], 0.0);
    }

    #[test]
    fn m_step_degenerate_latent_reduces_to_glc() {
        let embs = vec![
            arr(&[0.1, 1.0]),
            arr(&[-0.2, 0.8]),
            arr(&[2.0, -1.0]),
            arr(&[2.5, -0.5]),
        ];
        let labels = vec![0u32, 0, 1, 1];
        let glc = glc_train(&embs, &labels, 2, &TrainOpts::default()).unwrap();
        let nus: Vec<DVector<f64>> = embs.iter().map(to_dvec).collect();
        let stats: Vec<EStepStats> = (0..4)
            .map(|_| EStepStats {
                u: DVector::zeros(2),
                v_inv: DMatrix::zeros(2, 2),
            })
            .collect();
        let (means, prec) = glcu_m_step(&nus, &stats, &labels, &[2, 2]).unwrap();
        assert!((&means - &glc.means).abs().max() < 1e-12);
        assert!((&prec - &glc.prec).abs().max() < 1e-9);
    }

    #[test]
    fn m_step_two_doc_hand_sum() {
        // one class, two docs; d_inv = mean of a a^T + V^-1
        let nus = vec![to_dvec(&arr(&[1.0])), to_dvec(&arr(&[3.0]))];
        let labels = vec![0u32, 0];
        let stats = vec![
            EStepStats {
                u: DVector::from_element(1, 0.5),
                v_inv: DMatrix::from_element(1, 1, 0.25),
            },
            EStepStats {
                u: DVector::from_element(1, -0.5),
                v_inv: DMatrix::from_element(1, 1, 0.5),
            },
        ];
        // denoised: 0.5 and 3.5 -> mu = 2; a_1 = 0.5 - (1-2) = 1.5; a_2 = -0.5 - (3-2) = -1.5
        let (means, prec) = glcu_m_step(&nus, &stats, &labels, &[2]).unwrap();
        assert_abs_diff_eq!(means[(0, 0)], 2.0, epsilon = 1e-14);
        let d_inv = (1.5f64 * 1.5 + 0.25 + 1.5 * 1.5 + 0.5) / 2.0;
        assert_abs_diff_eq!(prec[(0, 0)], 1.0 / d_inv, epsilon = 1e-12);
    }

    /// Heteroscedastic synthetic data from the GLCU generative model.
    fn synth_glcu(
        n_docs: usize,
        k: usize,
        n_classes: usize,
        sep: f64,
        seed: u64,
    ) -> (Vec<Array1<f64>>, Vec<Array1<f64>>, Vec<u32>) {
        let mut r = crate::rng::stream(seed, 0, 0, crate::rng::StreamTag::Train);
        let mus: Vec<Array1<f64>> = (0..n_classes)
            .map(|_| Array1::from_shape_simple_fn(k, || sep * r.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut nus = Vec::new();
        let mut gammas = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_docs {
            let c = r.random_range(0..n_classes);
            let gamma = Array1::from_shape_simple_fn(k, || {
                (r.sample::<f64, _>(StandardNormal)).exp()
            });
            let mut nu = mus[c].clone();
            for i in 0..k {
                // latent noise with precision gamma_i plus unit within-class noise
                nu[i] += r.sample::<f64, _>(StandardNormal) / gamma[i].sqrt();
                nu[i] += r.sample::<f64, _>(StandardNormal);
            }
            nus.push(nu);
            gammas.push(gamma);
            labels.push(c as u32);
        }
        (nus, gammas, labels)
    }

    #[test]
    fn glcu_em_is_monotone() {
        let (nus, gammas, labels) = synth_glcu(300, 5, 3, 2.0, 17);
        let fit = glcu_train(&nus, &gammas, &labels, 3, 30, &TrainOpts::default()).unwrap();
        for w in fit.ll_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(fit.ll_trace.last().unwrap() > fit.ll_trace.first().unwrap());
    }

    #[test]
    fn glcu_with_sharp_posteriors_matches_glc() {
        let (nus, _, labels) = synth_glcu(200, 4, 3, 2.0, 23);
        let sharp: Vec<Array1<f64>> = (0..200).map(|_| Array1::from_elem(4, 1e8)).collect();
        let glc = glc_train(&nus, &labels, 3, &TrainOpts::default()).unwrap();
        let fit = glcu_train(&nus, &sharp, &labels, 3, 20, &TrainOpts::default()).unwrap();
        let diff = (&fit.classifier.means - &glc.means).abs().max();
        assert!(diff < 1e-4, "mean diff {diff}");
    }

    #[test]
    fn glcu_zero_iters_is_error() {
        let (nus, gammas, labels) = synth_glcu(30, 2, 2, 2.0, 3);
        assert!(glcu_train(&nus, &gammas, &labels, 2, 0, &TrainOpts::default()).is_err());
    }

    #[test]
    fn predict_symmetric_and_own_mean() {
        let clf = GaussianClassifier {
            means: DMatrix::from_columns(&[
                DVector::from_column_slice(&[-1.0, 0.0]),
                DVector::from_column_slice(&[1.0, 0.0]),
            ]),
            prec: DMatrix::identity(2, 2),
            log_priors: DVector::from_element(2, 0.5f64.ln()),
        };
        let p = predict(&clf, &arr(&[0.0, 3.0]), None).unwrap();
        assert_abs_diff_eq!(p.posterior[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.posterior[1], 0.5, epsilon = 1e-12);
        assert_eq!(p.class, 0); // tie -> lowest id

        let p = predict(&clf, &arr(&[1.0, 0.0]), None).unwrap();
        assert_eq!(p.class, 1);
    }

    #[test]
    fn uncertainty_pulls_posterior_toward_priors() {
        let clf = GaussianClassifier {
            means: DMatrix::from_columns(&[
                DVector::from_column_slice(&[-1.0]),
                DVector::from_column_slice(&[1.0]),
            ]),
            prec: DMatrix::identity(1, 1),
            log_priors: DVector::from_element(2, 0.5f64.ln()),
        };
        let nu = arr(&[0.4]);
        let crisp = predict(&clf, &nu, None).unwrap();
        let fuzzy = predict(&clf, &nu, Some(&arr(&[0.05]))).unwrap();
        assert!(
            (fuzzy.posterior[1] - 0.5).abs() < (crisp.posterior[1] - 0.5).abs(),
            "fuzzy {:?} crisp {:?}",
            fuzzy.posterior,
            crisp.posterior
        );
    }

    #[test]
    fn posterior_normalization_properties() {
        let scores = [-3.0, -1.0, -2.5];
        let p = normalize_log_posterior(&scores);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let shifted: Vec<f64> = scores.iter().map(|s| s + 123.4).collect();
        let q = normalize_log_posterior(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn glc_recovers_means_from_its_own_model() {
        let k = 3;
        let n = 10_000;
        let mut r = crate::rng::stream(31, 0, 0, crate::rng::StreamTag::Train);
        let true_means = [arr(&[1.0, -2.0, 0.5]), arr(&[-1.0, 0.0, 2.0])];
        let mut embs = Vec::new();
        let mut labels = Vec::new();
        for (c, mean) in true_means.iter().enumerate() {
            for _ in 0..n {
                let noise = Array1::from_shape_simple_fn(k, || r.sample::<f64, _>(StandardNormal));
                embs.push(mean + &noise);
                labels.push(c as u32);
            }
        }
        let clf = glc_train(&embs, &labels, 2, &TrainOpts::default()).unwrap();
        // unit within-class variance: 3 sigma of the mean estimator
        let tol = 3.0 / (n as f64).sqrt();
        for (c, mean) in true_means.iter().enumerate() {
            for (i, want) in mean.iter().enumerate() {
                assert!((clf.means[(i, c)] - want).abs() < tol, "mean[{i},{c}]");
            }
        }
    }
}
