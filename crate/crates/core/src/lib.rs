//! Bayesian subspace multinomial model (Bayesian SMM).
//!
//! A log-linear generative model for bag-of-words documents. Each document is
//! represented by a low-dimensional latent vector `w` with a Gaussian prior;
//! word probabilities are `softmax(m + T w)` where `m` holds corpus-level
//! log-unigram scores and `T` is a sparse subspace matrix. Variational Bayes
//! training infers a diagonal-Gaussian posterior `q(w) = N(nu, diag(exp{2 lsd}))`
//! per document, so every embedding carries its own uncertainty.
//!
//! The crate is organised along the pipeline:
//!
//! - [`corpus`]: vocabularies, sparse bag-of-words corpora, label files
//! - [`model`]: model/posterior types, ELBO and analytic gradients
//! - [`optim`]: ADAM plus orthant-wise handling of the L1 penalty on `T`
//! - [`trainer`]: stochastic VB training and posterior inference
//! - [`classify`]: Gaussian linear classifiers (GLC, and GLCU which exploits
//!   posterior uncertainty via an EM-trained latent-noise model)
//! - [`eval`]: perplexity bounds, classification reports, uncertainty summaries
//! - [`persist`]: bit-exact archives for models, posteriors and classifiers
//! - [`synthetic`]: sampling corpora from the generative process (test data,
//!   benchmarks)

pub mod classify;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod optim;
pub mod persist;
pub mod rng;
pub mod synthetic;
pub mod trainer;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Invalid argument or input (empty vocabulary, bad dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Archive layout or metadata problems.
    #[error("archive format: {0}")]
    Format(String),

    /// Inconsistency between two otherwise valid inputs (vocabulary sizes,
    /// document ids, unknown class labels).
    #[error("data mismatch: {0}")]
    Mismatch(String),

    /// NaN/Inf in an objective or gradient, or an EM likelihood decrease.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Singular or non-positive-definite covariance.
    #[error("singular covariance: {0}")]
    Singular(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
