//! End-to-end tests of the `bsmm` binary: exit codes, output staging and
//! the full pipeline on a small synthetic corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsmm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bsmm"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn bsmm")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_raw_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("raw.txt");
    let lines = [
        "apples and oranges and pears grow on trees",
        "the market sells apples oranges pears and plums",
        "stocks and bonds trade on the market every day",
        "bond yields fell while stocks rose on the day",
        "pears and plums make a fine pie for the market",
        "traders watch yields and the stocks board all day",
    ];
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

/// Builds vocab + bow + docs + labels under `dir`, returns their paths.
fn prepare_corpus(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let raw = write_raw_corpus(dir);
    let vocab = dir.join("vocab.txt");
    let bow = dir.join("data.bow");
    let docs = dir.join("docs.txt");
    let labels = dir.join("labels.tsv");
    assert_code(
        &run(bsmm()
            .args(["build-vocab"])
            .arg(&raw)
            .args(["--lines", "--min-doc-freq", "1", "--out"])
            .arg(&vocab)),
        0,
    );
    assert_code(
        &run(bsmm()
            .args(["vectorize"])
            .arg(&raw)
            .args(["--lines", "--vocab"])
            .arg(&vocab)
            .arg("--out")
            .arg(&bow)
            .arg("--docs")
            .arg(&docs)),
        0,
    );
    let label_lines: Vec<String> = (1..=6)
        .map(|i| format!("{i}\t{}", if i <= 2 || i == 5 { "fruit" } else { "finance" }))
        .collect();
    fs::write(&labels, label_lines.join("\n") + "\n").unwrap();
    (vocab, bow, docs, labels)
}

#[test]
fn build_vocab_empty_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("empty.txt");
    fs::write(&raw, "").unwrap();
    let out = run(bsmm()
        .arg("build-vocab")
        .arg(&raw)
        .args(["--lines", "--out"])
        .arg(dir.path().join("v.txt")));
    assert_code(&out, 2);
    assert!(!dir.path().join("v.txt").exists());
}

#[test]
fn build_vocab_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let v1 = dir.path().join("v1.txt");
    let v2 = dir.path().join("v2.txt");
    for v in [&v1, &v2] {
        assert_code(
            &run(bsmm()
                .arg("build-vocab")
                .arg(&raw)
                .args(["--lines", "--min-doc-freq", "2", "--out"])
                .arg(v)),
            0,
        );
    }
    assert_eq!(fs::read(&v1).unwrap(), fs::read(&v2).unwrap());
}

#[test]
fn train_missing_bow_flag_exits_2() {
    let out = run(bsmm().args(["train", "--out", "/tmp/nowhere"]));
    assert_code(&out, 2);
}

#[test]
fn train_unreadable_bow_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bsmm()
        .args(["train", "--bow"])
        .arg(dir.path().join("missing.bow"))
        .arg("--out")
        .arg(dir.path().join("model")));
    assert_code(&out, 2);
    assert!(!dir.path().join("model").exists());
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, bow, docs, labels) = prepare_corpus(dir.path());

    let train_args = |out: &Path| {
        let mut cmd = bsmm();
        cmd.args(["train", "--bow"])
            .arg(&bow)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--docs")
            .arg(&docs)
            .args(["--k", "3", "--omega", "0.05", "--iters", "40", "--seed", "11"])
            .arg("--deterministic")
            .arg("--out")
            .arg(out);
        cmd
    };
    let m1 = dir.path().join("model1");
    let m2 = dir.path().join("model2");
    assert_code(&run(&mut train_args(&m1)), 0);
    assert_code(&run(&mut train_args(&m2)), 0);

    // byte-identical archives for identical seeds in deterministic mode
    for file in ["m.f64", "T.f64", "meta.txt", "vocab.txt"] {
        assert_eq!(
            fs::read(m1.join(file)).unwrap(),
            fs::read(m2.join(file)).unwrap(),
            "{file} differs"
        );
    }
    for file in ["docs.txt", "nu.f64", "lsd.f64"] {
        assert_eq!(
            fs::read(m1.join("train_posteriors").join(file)).unwrap(),
            fs::read(m2.join("train_posteriors").join(file)).unwrap(),
            "train_posteriors/{file} differs"
        );
    }

    // infer on the training corpus
    let post = dir.path().join("post");
    assert_code(
        &run(bsmm()
            .args(["infer", "--model"])
            .arg(&m1)
            .arg("--bow")
            .arg(&bow)
            .arg("--docs")
            .arg(&docs)
            .args(["--infer-iters", "150", "--seed", "3"])
            .arg("--out")
            .arg(&post)),
        0,
    );

    // perplexity report
    let ppl_out = dir.path().join("ppl.txt");
    assert_code(
        &run(bsmm()
            .args(["ppl", "--model"])
            .arg(&m1)
            .arg("--bow")
            .arg(&bow)
            .arg("--docs")
            .arg(&docs)
            .arg("--posteriors")
            .arg(&post)
            .args(["--r-eval", "8", "--seed", "1"])
            .arg("--out")
            .arg(&ppl_out)),
        0,
    );
    let report = fs::read_to_string(&ppl_out).unwrap();
    assert!(report.contains("ppl_corpus="), "{report}");

    // classifier training and prediction, GLC and GLCU
    for kind in ["glc", "glcu"] {
        let clf = dir.path().join(format!("clf_{kind}"));
        assert_code(
            &run(bsmm()
                .args(["classify-train", "--posteriors"])
                .arg(&post)
                .arg("--labels")
                .arg(&labels)
                .args(["--classifier", kind, "--em-iters", "10", "--reg-gamma", "0.05"])
                .arg("--out")
                .arg(&clf)),
            0,
        );
        let preds = dir.path().join(format!("preds_{kind}.tsv"));
        assert_code(
            &run(bsmm()
                .args(["classify", "--classifier"])
                .arg(&clf)
                .arg("--posteriors")
                .arg(&post)
                .arg("--out")
                .arg(&preds)),
            0,
        );
        let eval_out = dir.path().join(format!("eval_{kind}.txt"));
        assert_code(
            &run(bsmm()
                .args(["eval", "--predictions"])
                .arg(&preds)
                .arg("--labels")
                .arg(&labels)
                .arg("--out")
                .arg(&eval_out)),
            0,
        );
        let summary = fs::read_to_string(&eval_out).unwrap();
        assert!(summary.contains("accuracy="), "{summary}");
    }

    // uncertainty summary
    let unc = dir.path().join("unc.tsv");
    assert_code(
        &run(bsmm()
            .args(["uncertainty", "--posteriors"])
            .arg(&post)
            .arg("--bow")
            .arg(&bow)
            .arg("--docs")
            .arg(&docs)
            .arg("--out")
            .arg(&unc)),
        0,
    );
    assert_eq!(fs::read_to_string(&unc).unwrap().lines().count(), 7);
}

#[test]
fn infer_vocab_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, bow, docs, _) = prepare_corpus(dir.path());
    let model = dir.path().join("model");
    assert_code(
        &run(bsmm()
            .args(["train", "--bow"])
            .arg(&bow)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--docs")
            .arg(&docs)
            .args(["--k", "2", "--iters", "5"])
            .arg("--out")
            .arg(&model)),
        0,
    );
    // corpus with a different V
    let other = dir.path().join("other.bow");
    fs::write(&other, "1\n3\n1\n1 1 2\n").unwrap();
    let out = run(bsmm()
        .args(["infer", "--model"])
        .arg(&model)
        .arg("--bow")
        .arg(&other)
        .arg("--out")
        .arg(dir.path().join("p")));
    assert_code(&out, 4);
    assert!(!dir.path().join("p").exists());
}

#[test]
fn infer_empty_corpus_writes_empty_archive() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, bow, docs, _) = prepare_corpus(dir.path());
    let model = dir.path().join("model");
    assert_code(
        &run(bsmm()
            .args(["train", "--bow"])
            .arg(&bow)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--docs")
            .arg(&docs)
            .args(["--k", "2", "--iters", "5"])
            .arg("--out")
            .arg(&model)),
        0,
    );
    let v = fs::read_to_string(&vocab).unwrap().lines().count();
    let empty = dir.path().join("empty.bow");
    fs::write(&empty, format!("0\n{v}\n0\n")).unwrap();
    let post = dir.path().join("post_empty");
    assert_code(
        &run(bsmm()
            .args(["infer", "--model"])
            .arg(&model)
            .arg("--bow")
            .arg(&empty)
            .arg("--out")
            .arg(&post)),
        0,
    );
    assert_eq!(fs::read_to_string(post.join("docs.txt")).unwrap(), "");
}

#[test]
fn divergent_training_exits_3_and_cleans_up() {
    let dir = tempfile::tempdir().unwrap();
    let bow = dir.path().join("data.bow");
    fs::write(&bow, "1\n4\n2\n1 1 1000000\n1 4 1\n").unwrap();
    let model = dir.path().join("model");
    let out = run(bsmm()
        .args(["train", "--bow"])
        .arg(&bow)
        .args(["--k", "2", "--omega", "0", "--iters", "200"])
        .args(["--eta-q", "1e308", "--eta-t", "1e308"])
        .arg("--out")
        .arg(&model));
    assert_code(&out, 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration"), "{stderr}");
    assert!(!model.exists(), "partial model directory left behind");
}

#[test]
fn classify_train_missing_labels_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bsmm()
        .args(["classify-train", "--posteriors"])
        .arg(dir.path().join("nope"))
        .arg("--labels")
        .arg(dir.path().join("labels.tsv"))
        .arg("--out")
        .arg(dir.path().join("clf")));
    assert_code(&out, 2);
}

#[test]
fn eval_unseen_label_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.tsv");
    fs::write(&preds, "#doc_id\tpredicted\ta\tb\n1\ta\t0.9\t0.1\n").unwrap();
    let labels = dir.path().join("labels.tsv");
    fs::write(&labels, "1\tunheard_of\n").unwrap();
    let out = run(bsmm()
        .args(["eval", "--predictions"])
        .arg(&preds)
        .arg("--labels")
        .arg(&labels)
        .arg("--out")
        .arg(dir.path().join("e.txt")));
    assert_code(&out, 4);
    assert!(!dir.path().join("e.txt").exists());
}

#[test]
fn ppl_misaligned_doc_ids_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, bow, docs, _) = prepare_corpus(dir.path());
    let model = dir.path().join("model");
    assert_code(
        &run(bsmm()
            .args(["train", "--bow"])
            .arg(&bow)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--docs")
            .arg(&docs)
            .args(["--k", "2", "--iters", "5"])
            .arg("--out")
            .arg(&model)),
        0,
    );
    // posteriors aligned to shuffled ids
    let post = model.join("train_posteriors");
    let shuffled = dir.path().join("shuffled_docs.txt");
    let mut ids: Vec<String> = fs::read_to_string(&docs)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    ids.rotate_left(1);
    fs::write(&shuffled, ids.join("\n") + "\n").unwrap();
    let out = run(bsmm()
        .args(["ppl", "--model"])
        .arg(&model)
        .arg("--bow")
        .arg(&bow)
        .arg("--docs")
        .arg(&shuffled)
        .arg("--posteriors")
        .arg(&post)
        .arg("--out")
        .arg(dir.path().join("ppl.txt")));
    assert_code(&out, 4);
}

#[test]
fn uniform_priors_flag_yields_uniform_posterior_for_symmetric_input() {
    let dir = tempfile::tempdir().unwrap();
    // hand-built posterior archive: two mirrored docs per class, plus a
    // perfectly symmetric query point
    let post_dir = dir.path().join("post");
    fs::create_dir_all(&post_dir).unwrap();
    let k = 1usize;
    let nus: Vec<f64> = vec![-1.0, -1.2, 1.0, 1.2, 0.1];
    let lsds = vec![0.0f64; 5 * k];
    fs::write(
        post_dir.join("docs.txt"),
        "a1\na2\nb1\nb2\nq\n",
    )
    .unwrap();
    let to_bytes = |v: &[f64]| -> Vec<u8> { v.iter().flat_map(|x| x.to_le_bytes()).collect() };
    fs::write(post_dir.join("nu.f64"), to_bytes(&nus)).unwrap();
    fs::write(post_dir.join("lsd.f64"), to_bytes(&lsds)).unwrap();
    // imbalanced labels: 2 in class a, 3 in class b
    let labels = dir.path().join("labels.tsv");
    fs::write(&labels, "a1\tneg\na2\tneg\nb1\tpos\nb2\tpos\nq\tpos\n").unwrap();

    let clf = dir.path().join("clf");
    assert_code(
        &run(bsmm()
            .args(["classify-train", "--posteriors"])
            .arg(&post_dir)
            .arg("--labels")
            .arg(&labels)
            .args(["--classifier", "glc", "--priors", "uniform"])
            .arg("--out")
            .arg(&clf)),
        0,
    );
    let priors = fs::read(clf.join("priors.f64")).unwrap();
    let vals: Vec<f64> = priors
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(vals.len(), 2);
    for v in vals {
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }
}
