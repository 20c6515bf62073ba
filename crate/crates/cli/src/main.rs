//! `bsmm`: train and evaluate Bayesian subspace multinomial models from the
//! command line.
//!
//! Exit codes: 0 success, 2 usage or input errors, 3 numerical failures,
//! 4 data mismatches (vocabulary sizes, document ids, unknown labels).
//! A command exits 0 only after all of its outputs are fully written;
//! failures clean up partial outputs.

mod commands;
mod docs;
mod stage;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(bsmm::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<bsmm::Error> for CliError {
    fn from(e: bsmm::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                bsmm::Error::Numerical(_) | bsmm::Error::Singular(_) => 3,
                bsmm::Error::Mismatch(_) => 4,
                _ => 2,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "bsmm", version, about = "Bayesian subspace multinomial models for bag-of-words corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary from raw text files or directories.
    BuildVocab(BuildVocabArgs),
    /// Turn raw text into a sparse bag-of-words file using a vocabulary.
    Vectorize(VectorizeArgs),
    /// Train a model on a bag-of-words corpus.
    Train(TrainArgs),
    /// Infer embedding posteriors for a corpus under a trained model.
    Infer(InferArgs),
    /// Train a Gaussian classifier (GLC or GLCU) on embedding posteriors.
    ClassifyTrain(ClassifyTrainArgs),
    /// Predict class posteriors for embedding posteriors.
    Classify(ClassifyArgs),
    /// Perplexity of a corpus under a model, with the unigram ML floor.
    Ppl(PplArgs),
    /// Score predictions against true labels.
    Eval(EvalArgs),
    /// Per-document posterior uncertainty against document length.
    Uncertainty(UncertaintyArgs),
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Text files or directories (each file is one document).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Treat every line of the inputs as one document.
    #[arg(long)]
    lines: bool,
    /// Keep tokens occurring in at least this many distinct documents.
    #[arg(long, default_value_t = 2)]
    min_doc_freq: usize,
    /// After frequency pruning, keep only the N most frequent tokens.
    #[arg(long)]
    top_k: Option<usize>,
    /// Output vocabulary file (one token per line).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VectorizeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    lines: bool,
    /// Vocabulary file from `build-vocab`.
    #[arg(long)]
    vocab: PathBuf,
    /// Output bag-of-words file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the document ids, one per line.
    #[arg(long)]
    docs: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus in bag-of-words format.
    #[arg(long)]
    bow: PathBuf,
    /// Vocabulary to embed in the model archive; synthetic names otherwise.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Document ids for the corpus (from `vectorize --docs`).
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Output directory: model archive plus `train_posteriors/` and `train.log`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1)]
    r_train: usize,
    #[arg(long = "iters", default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    eta_q: f64,
    #[arg(long, default_value_t = 0.1)]
    eta_t: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_hat: f64,
    #[arg(long, default_value_t = 0.001)]
    t_init_var: f64,
    /// Freeze per-document noise across iterations.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Worker threads for the document loop (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Echo the training log to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct InferArgs {
    /// Model archive directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bow: PathBuf,
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Output posterior archive directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    infer_iters: usize,
    #[arg(long, default_value_t = 1)]
    r_train: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    eta_q: f64,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierChoice {
    Glc,
    Glcu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriorChoice {
    Empirical,
    Uniform,
}

#[derive(Args)]
struct ClassifyTrainArgs {
    /// Posterior archive with training embeddings.
    #[arg(long)]
    posteriors: PathBuf,
    /// Labels file: `docID<TAB>class_name` per line.
    #[arg(long)]
    labels: PathBuf,
    /// Output classifier archive directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassifierChoice::Glc)]
    classifier: ClassifierChoice,
    #[arg(long, value_enum, default_value_t = PriorChoice::Empirical)]
    priors: PriorChoice,
    /// EM iterations for GLCU.
    #[arg(long, default_value_t = 20)]
    em_iters: usize,
    /// Ridge added to the within-class covariance.
    #[arg(long, default_value_t = 0.0)]
    reg_gamma: f64,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Classifier archive from `classify-train`.
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    posteriors: PathBuf,
    /// Predictions TSV: doc id, predicted class, per-class posterior.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PplArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bow: PathBuf,
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Posteriors for the corpus (from `infer`).
    #[arg(long)]
    posteriors: PathBuf,
    /// Summary output (key=value lines).
    #[arg(long)]
    out: PathBuf,
    /// Optional per-document TSV: doc id, word count, bound.
    #[arg(long)]
    per_doc: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    r_eval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions TSV from `classify`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Summary output (key=value lines).
    #[arg(long)]
    out: PathBuf,
    /// Optional confusion-matrix TSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct UncertaintyArgs {
    #[arg(long)]
    posteriors: PathBuf,
    #[arg(long)]
    bow: PathBuf,
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Output TSV: doc id, word count, trace of posterior covariance.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildVocab(args) => commands::build_vocab(args),
        Command::Vectorize(args) => commands::vectorize(args),
        Command::Train(args) => commands::train(args),
        Command::Infer(args) => commands::infer(args),
        Command::ClassifyTrain(args) => commands::classify_train(args),
        Command::Classify(args) => commands::classify(args),
        Command::Ppl(args) => commands::ppl(args),
        Command::Eval(args) => commands::eval(args),
        Command::Uncertainty(args) => commands::uncertainty(args),
    }
}
