//! Implementation of every subcommand.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bsmm::classify::{self, PriorMode, TrainOpts};
use bsmm::corpus::{self, BowCorpus, Vocabulary};
use bsmm::eval as ev;
use bsmm::persist::{self, ClassifierKind, ModelArchive, PosteriorArchive};
use bsmm::trainer::{self, TrainConfig};
use bsmm::Error;
use ndarray::Array1;

use crate::docs;
use crate::stage::Staged;
use crate::{
    BuildVocabArgs, ClassifierChoice, ClassifyArgs, ClassifyTrainArgs, CliError, EvalArgs,
    InferArgs, PplArgs, PriorChoice, TrainArgs, UncertaintyArgs, VectorizeArgs,
};

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // only fails if a global pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Reads a BoW corpus, optionally attaching a vocabulary and document ids.
fn load_corpus(
    bow: &Path,
    vocab: Option<&Path>,
    doc_ids: Option<&Path>,
) -> Result<BowCorpus, CliError> {
    let mut corpus = match vocab {
        Some(vpath) => {
            let vocab = Vocabulary::read(vpath)?;
            BowCorpus::read_bow_with_vocab(bow, vocab)?
        }
        None => BowCorpus::read_bow(bow)?,
    };
    if let Some(dpath) = doc_ids {
        let ids = read_id_file(dpath)?;
        if ids.len() != corpus.n_docs() {
            return Err(Error::Mismatch(format!(
                "{} document ids for {} documents",
                ids.len(),
                corpus.n_docs()
            ))
            .into());
        }
        for (doc, id) in corpus.docs.iter_mut().zip(ids) {
            doc.doc_id = id;
        }
    }
    Ok(corpus)
}

fn read_id_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn check_alignment(archive: &PosteriorArchive, corpus: &BowCorpus) -> Result<(), CliError> {
    if archive.doc_ids.len() != corpus.n_docs() {
        return Err(Error::Mismatch(format!(
            "posterior archive has {} documents, corpus has {}",
            archive.doc_ids.len(),
            corpus.n_docs()
        ))
        .into());
    }
    for (i, (a, d)) in archive.doc_ids.iter().zip(&corpus.docs).enumerate() {
        if *a != d.doc_id {
            return Err(Error::Mismatch(format!(
                "document id mismatch at position {i}: posterior {a:?} vs corpus {:?}",
                d.doc_id
            ))
            .into());
        }
    }
    Ok(())
}

pub fn build_vocab(args: BuildVocabArgs) -> Result<(), CliError> {
    if args.min_doc_freq < 1 {
        return Err(CliError::Usage("--min-doc-freq must be >= 1".into()));
    }
    let raw = docs::collect(&args.inputs, args.lines)?;
    let token_lists: Vec<&[String]> = raw.iter().map(|d| d.tokens.as_slice()).collect();
    let mut vocab = corpus::build_vocab(&token_lists, args.min_doc_freq)?;
    if let Some(k) = args.top_k {
        // rank the survivors by total count, ties lexicographic
        let mut counts: std::collections::HashMap<&str, u64> = vocab
            .tokens()
            .iter()
            .map(|t| (t.as_str(), 0u64))
            .collect();
        for doc in &raw {
            for tok in &doc.tokens {
                if let Some(c) = counts.get_mut(tok.as_str()) {
                    *c += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        let mut tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
        tokens.sort_unstable();
        vocab = Vocabulary::from_tokens(tokens)?;
    }
    let staged = Staged::file(&args.out).map_err(|e| io_err(&args.out, e))?;
    vocab.write(staged.path())?;
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!("{}", vocab.len());
    Ok(())
}

pub fn vectorize(args: VectorizeArgs) -> Result<(), CliError> {
    let vocab = Vocabulary::read(&args.vocab)?;
    let raw = docs::collect(&args.inputs, args.lines)?;
    let docs: Vec<_> = raw
        .iter()
        .map(|d| corpus::vectorize(&d.tokens, &vocab, d.doc_id.clone()))
        .collect();
    let corpus = BowCorpus::new(vocab, docs)?;

    let staged_bow = Staged::file(&args.out).map_err(|e| io_err(&args.out, e))?;
    corpus.write_bow(staged_bow.path())?;
    let staged_docs = match &args.docs {
        Some(path) => {
            let staged = Staged::file(path).map_err(|e| io_err(path, e))?;
            let mut out =
                BufWriter::new(File::create(staged.path()).map_err(|e| io_err(path, e))?);
            for doc in &corpus.docs {
                writeln!(out, "{}", doc.doc_id).map_err(|e| io_err(path, e))?;
            }
            out.flush().map_err(|e| io_err(path, e))?;
            Some(staged)
        }
        None => None,
    };
    staged_bow.commit().map_err(|e| io_err(&args.out, e))?;
    if let Some(staged) = staged_docs {
        staged.commit().map_err(|e| io_err(args.docs.as_ref().unwrap(), e))?;
    }
    println!("{} documents, {} entries", corpus.n_docs(), corpus.nnz());
    Ok(())
}

/// Writes the training log to a file and optionally to stderr.
struct LogSink {
    file: BufWriter<File>,
    echo: bool,
}

impl Write for LogSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if self.echo {
            let _ = std::io::stderr().write_all(buf);
        }
        self.file.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.file.flush()
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    init_threads(args.threads);
    let corpus = load_corpus(&args.bow, args.vocab.as_deref(), args.docs.as_deref())?;
    if corpus.n_docs() == 0 {
        return Err(CliError::Usage("training corpus has no documents".into()));
    }
    let cfg = TrainConfig {
        k: args.k,
        omega: args.omega,
        lambda: args.lambda,
        r_train: args.r_train,
        max_iters: args.max_iters,
        seed: args.seed,
        eta_q: args.eta_q,
        eta_t: args.eta_t,
        beta1: args.beta1,
        beta2: args.beta2,
        eps_hat: args.eps_hat,
        t_init_var: args.t_init_var,
        deterministic: args.deterministic,
        trace_every: args.trace_every,
        ..TrainConfig::default()
    };

    let staged = Staged::dir(&args.out).map_err(|e| io_err(&args.out, e))?;
    let log_path = staged.path().join("train.log");
    let mut log = LogSink {
        file: BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?),
        echo: args.verbose,
    };
    let state = trainer::train_logged(&corpus, &cfg, &mut log)?;
    log.flush().map_err(|e| io_err(&log_path, e))?;
    drop(log);

    persist::save_model(
        staged.path(),
        &ModelArchive {
            model: state.model,
            vocab: corpus.vocab.clone(),
            omega: cfg.omega,
            seed: cfg.seed,
            iteration: state.elbo_trace.len() as u64,
        },
    )?;
    persist::save_posteriors(
        &staged.path().join("train_posteriors"),
        &PosteriorArchive {
            doc_ids: corpus.docs.iter().map(|d| d.doc_id.clone()).collect(),
            posteriors: state.posteriors,
        },
    )?;
    let iters = state.elbo_trace.len();
    let last = state.elbo_trace.last().copied().unwrap_or(f64::NAN);
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!("trained {iters} iterations, objective {last:.4}");
    Ok(())
}

pub fn infer(args: InferArgs) -> Result<(), CliError> {
    init_threads(args.threads);
    let archive = persist::load_model(&args.model)?;
    let corpus = load_corpus(&args.bow, None, args.docs.as_deref())?;
    if corpus.v() != archive.model.v() {
        return Err(Error::Mismatch(format!(
            "corpus has V={} but model has V={}",
            corpus.v(),
            archive.model.v()
        ))
        .into());
    }
    let cfg = TrainConfig {
        k: archive.model.k(),
        lambda: archive.model.lambda,
        infer_iters: args.infer_iters,
        r_train: args.r_train,
        seed: args.seed,
        eta_q: args.eta_q,
        deterministic: args.deterministic,
        ..TrainConfig::default()
    };
    let posteriors = trainer::infer_posteriors(&archive.model, &corpus, &cfg)?;
    let staged = Staged::dir(&args.out).map_err(|e| io_err(&args.out, e))?;
    persist::save_posteriors(
        staged.path(),
        &PosteriorArchive {
            doc_ids: corpus.docs.iter().map(|d| d.doc_id.clone()).collect(),
            posteriors,
        },
    )?;
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!("inferred {} posteriors", corpus.n_docs());
    Ok(())
}

/// A posterior archive joined with a labels file.
struct LabeledEmbeddings {
    nus: Vec<Array1<f64>>,
    /// Per-document posterior precision diagonals.
    gammas: Vec<Array1<f64>>,
    labels: Vec<u32>,
    class_names: Vec<String>,
}

fn labeled_embeddings(
    archive: &PosteriorArchive,
    labels_path: &Path,
) -> Result<LabeledEmbeddings, CliError> {
    let pairs = corpus::read_labels(labels_path)?;
    let (labels, class_names) =
        corpus::align_labels(archive.doc_ids.iter().map(String::as_str), &pairs)?;
    Ok(LabeledEmbeddings {
        nus: archive.posteriors.iter().map(|p| p.nu.clone()).collect(),
        gammas: archive.posteriors.iter().map(|p| p.precisions()).collect(),
        labels,
        class_names,
    })
}

pub fn classify_train(args: ClassifyTrainArgs) -> Result<(), CliError> {
    let archive = persist::load_posteriors(&args.posteriors)?;
    if archive.posteriors.is_empty() {
        return Err(CliError::Usage("posterior archive is empty".into()));
    }
    let emb = labeled_embeddings(&archive, &args.labels)?;
    let opts = TrainOpts {
        prior_mode: match args.priors {
            PriorChoice::Empirical => PriorMode::Empirical,
            PriorChoice::Uniform => PriorMode::Uniform,
        },
        reg_gamma: args.reg_gamma,
    };
    let n_classes = emb.class_names.len();
    let (kind, classifier) = match args.classifier {
        ClassifierChoice::Glc => (
            ClassifierKind::Glc,
            classify::glc_train(&emb.nus, &emb.labels, n_classes, &opts)?,
        ),
        ClassifierChoice::Glcu => {
            let fit = classify::glcu_train(
                &emb.nus,
                &emb.gammas,
                &emb.labels,
                n_classes,
                args.em_iters,
                &opts,
            )?;
            eprintln!(
                "GLCU EM: log-likelihood {:.4} -> {:.4} over {} iterations",
                fit.ll_trace.first().unwrap(),
                fit.ll_trace.last().unwrap(),
                fit.ll_trace.len() - 1
            );
            (ClassifierKind::Glcu, fit.classifier)
        }
    };
    let staged = Staged::dir(&args.out).map_err(|e| io_err(&args.out, e))?;
    persist::save_classifier(
        staged.path(),
        &persist::ClassifierArchive {
            kind,
            classifier,
            class_names: emb.class_names.clone(),
        },
    )?;
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!(
        "trained {} on {} documents, {} classes",
        kind.as_str(),
        emb.nus.len(),
        n_classes
    );
    Ok(())
}

pub fn classify(args: ClassifyArgs) -> Result<(), CliError> {
    let clf = persist::load_classifier(&args.classifier)?;
    let archive = persist::load_posteriors(&args.posteriors)?;
    if let Some(p) = archive.posteriors.first() {
        if p.k() != clf.classifier.k() {
            return Err(Error::Mismatch(format!(
                "posteriors have K={} but classifier has K={}",
                p.k(),
                clf.classifier.k()
            ))
            .into());
        }
    }
    let staged = Staged::file(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut out =
        BufWriter::new(File::create(staged.path()).map_err(|e| io_err(&args.out, e))?);
    write!(out, "#doc_id\tpredicted").map_err(|e| io_err(&args.out, e))?;
    for name in &clf.class_names {
        write!(out, "\t{name}").map_err(|e| io_err(&args.out, e))?;
    }
    writeln!(out).map_err(|e| io_err(&args.out, e))?;
    for (doc_id, post) in archive.doc_ids.iter().zip(&archive.posteriors) {
        let gammas;
        let gamma_arg = match clf.kind {
            ClassifierKind::Glc => None,
            ClassifierKind::Glcu => {
                gammas = post.precisions();
                Some(&gammas)
            }
        };
        let pred = classify::predict(&clf.classifier, &post.nu, gamma_arg)?;
        write!(out, "{doc_id}\t{}", clf.class_names[pred.class])
            .map_err(|e| io_err(&args.out, e))?;
        for p in &pred.posterior {
            write!(out, "\t{p}").map_err(|e| io_err(&args.out, e))?;
        }
        writeln!(out).map_err(|e| io_err(&args.out, e))?;
    }
    out.flush().map_err(|e| io_err(&args.out, e))?;
    drop(out);
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!("classified {} documents", archive.doc_ids.len());
    Ok(())
}

fn write_kv(path: &Path, pairs: &[(&str, String)]) -> Result<(), CliError> {
    let staged = Staged::file(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(File::create(staged.path()).map_err(|e| io_err(path, e))?);
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))?;
    drop(out);
    staged.commit().map_err(|e| io_err(path, e))
}

pub fn ppl(args: PplArgs) -> Result<(), CliError> {
    let archive = persist::load_model(&args.model)?;
    let corpus = load_corpus(&args.bow, None, args.docs.as_deref())?;
    if corpus.v() != archive.model.v() {
        return Err(Error::Mismatch(format!(
            "corpus has V={} but model has V={}",
            corpus.v(),
            archive.model.v()
        ))
        .into());
    }
    let posts = persist::load_posteriors(&args.posteriors)?;
    check_alignment(&posts, &corpus)?;
    let report = ev::perplexity(
        &archive.model,
        &corpus,
        &posts.posteriors,
        args.r_eval,
        args.seed,
    )?;
    let floor = ev::ml_floor_perplexity(&corpus)?;
    if report.skipped_empty > 0 {
        eprintln!(
            "warning: {} empty documents excluded from perplexity",
            report.skipped_empty
        );
    }
    if let Some(per_doc) = &args.per_doc {
        let staged = Staged::file(per_doc).map_err(|e| io_err(per_doc, e))?;
        let mut out =
            BufWriter::new(File::create(staged.path()).map_err(|e| io_err(per_doc, e))?);
        writeln!(out, "#doc_id\tn_words\tbound").map_err(|e| io_err(per_doc, e))?;
        for row in &report.per_doc {
            writeln!(out, "{}\t{}\t{}", row.doc_id, row.n_words, row.bound)
                .map_err(|e| io_err(per_doc, e))?;
        }
        out.flush().map_err(|e| io_err(per_doc, e))?;
        drop(out);
        staged.commit().map_err(|e| io_err(per_doc, e))?;
    }
    let total_words: u64 = report.per_doc.iter().map(|d| d.n_words).sum();
    write_kv(
        &args.out,
        &[
            ("ppl_doc", report.ppl_doc.to_string()),
            ("ppl_corpus", report.ppl_corpus.to_string()),
            ("ml_floor_ppl_doc", floor.ppl_doc.to_string()),
            ("ml_floor_ppl_corpus", floor.ppl_corpus.to_string()),
            ("docs", corpus.n_docs().to_string()),
            ("words", total_words.to_string()),
            ("skipped_empty", report.skipped_empty.to_string()),
            ("r_eval", args.r_eval.to_string()),
            ("seed", args.seed.to_string()),
        ],
    )?;
    println!(
        "ppl_doc={:.3} ppl_corpus={:.3} (ml floor {:.3})",
        report.ppl_doc, report.ppl_corpus, floor.ppl_corpus
    );
    Ok(())
}

/// Parsed predictions TSV from `classify`.
struct Predictions {
    doc_ids: Vec<String>,
    class_names: Vec<String>,
    posteriors: Vec<Vec<f64>>,
}

fn read_predictions(path: &Path) -> Result<Predictions, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Usage(format!("{}: empty predictions file", path.display())))?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() < 3 || fields[0] != "#doc_id" || fields[1] != "predicted" {
        return Err(CliError::Usage(format!(
            "{}: malformed predictions header",
            path.display()
        )));
    }
    let class_names: Vec<String> = fields[2..].iter().map(|s| s.to_string()).collect();
    let mut doc_ids = Vec::new();
    let mut posteriors = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 + class_names.len() {
            return Err(CliError::Usage(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                i + 2,
                2 + class_names.len(),
                cols.len()
            )));
        }
        let probs: Vec<f64> = cols[2..]
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!(
                        "{}:{}: bad probability {s:?}",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        doc_ids.push(cols[0].to_string());
        posteriors.push(probs);
    }
    Ok(Predictions {
        doc_ids,
        class_names,
        posteriors,
    })
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let Predictions {
        doc_ids,
        class_names,
        posteriors,
    } = read_predictions(&args.predictions)?;
    let pairs = corpus::read_labels(&args.labels)?;
    let by_doc: std::collections::HashMap<&str, &str> = pairs
        .iter()
        .map(|(d, c)| (d.as_str(), c.as_str()))
        .collect();
    let class_index: std::collections::HashMap<&str, u32> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let mut labels = Vec::with_capacity(doc_ids.len());
    for doc_id in &doc_ids {
        let class = by_doc.get(doc_id.as_str()).ok_or_else(|| {
            Error::Mismatch(format!("no label for doc {doc_id:?}"))
        })?;
        let id = class_index.get(class).ok_or_else(|| {
            Error::Mismatch(format!(
                "label {class:?} is not a class of the classifier"
            ))
        })?;
        labels.push(*id);
    }
    let report = ev::classification_report(&posteriors, &labels, class_names.len())?;
    if let Some(confusion) = &args.confusion {
        let staged = Staged::file(confusion).map_err(|e| io_err(confusion, e))?;
        let mut out =
            BufWriter::new(File::create(staged.path()).map_err(|e| io_err(confusion, e))?);
        writeln!(out, "#true\\predicted\t{}", class_names.join("\t"))
            .map_err(|e| io_err(confusion, e))?;
        for (name, row) in class_names.iter().zip(&report.confusion) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{name}\t{}", cells.join("\t")).map_err(|e| io_err(confusion, e))?;
        }
        out.flush().map_err(|e| io_err(confusion, e))?;
        drop(out);
        staged.commit().map_err(|e| io_err(confusion, e))?;
    }
    write_kv(
        &args.out,
        &[
            ("accuracy", report.accuracy.to_string()),
            ("cross_entropy", report.cross_entropy.to_string()),
            ("docs", doc_ids.len().to_string()),
            ("flagged", report.flagged.to_string()),
        ],
    )?;
    println!(
        "accuracy={:.4} cross_entropy={:.4}",
        report.accuracy, report.cross_entropy
    );
    Ok(())
}

pub fn uncertainty(args: UncertaintyArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.bow, None, args.docs.as_deref())?;
    let posts = persist::load_posteriors(&args.posteriors)?;
    check_alignment(&posts, &corpus)?;
    let rows = ev::uncertainty_summary(&posts.posteriors, &corpus)?;
    let staged = Staged::file(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut out = BufWriter::new(File::create(staged.path()).map_err(|e| io_err(&args.out, e))?);
    writeln!(out, "#doc_id\tn_words\ttrace_cov").map_err(|e| io_err(&args.out, e))?;
    for row in &rows {
        writeln!(out, "{}\t{}\t{}", row.doc_id, row.n_words, row.trace_cov)
            .map_err(|e| io_err(&args.out, e))?;
    }
    out.flush().map_err(|e| io_err(&args.out, e))?;
    drop(out);
    staged.commit().map_err(|e| io_err(&args.out, e))?;
    println!("wrote {} rows", rows.len());
    Ok(())
}
