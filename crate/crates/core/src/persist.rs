//! Bit-exact directory archives.
//!
//! Tensors are raw row-major 64-bit little-endian files next to a small
//! `key=value` text header, so every archive is portable and inspectable
//! with a hex dump. Loading a saved archive reproduces every payload bit.
//!
//! Layouts:
//!
//! - model: `meta.txt`, `m.f64`, `T.f64`, `vocab.txt`
//! - posteriors: `docs.txt`, `nu.f64`, `lsd.f64`
//! - classifier: `meta.txt`, `classes.txt`, `means.f64`, `prec.f64`, `priors.f64`

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::classify::GaussianClassifier;
use crate::corpus::Vocabulary;
use crate::model::{Posterior, SmmModel};
use crate::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

/// A model plus everything needed to reuse it: its vocabulary and the
/// training provenance (regularization, seed, iterations run).
#[derive(Debug, Clone)]
pub struct ModelArchive {
    pub model: SmmModel,
    pub vocab: Vocabulary,
    pub omega: f64,
    pub seed: u64,
    pub iteration: u64,
}

/// Document-aligned posteriors.
#[derive(Debug, Clone)]
pub struct PosteriorArchive {
    pub doc_ids: Vec<String>,
    pub posteriors: Vec<Posterior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Glc,
    Glcu,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Glc => "glc",
            ClassifierKind::Glcu => "glcu",
        }
    }
}

/// A trained classifier with its class-name table.
#[derive(Debug, Clone)]
pub struct ClassifierArchive {
    pub kind: ClassifierKind,
    pub classifier: GaussianClassifier,
    pub class_names: Vec<String>,
}

fn write_f64s<'a>(path: &Path, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for v in values {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path, expected: Option<usize>) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / 8;
    if let Some(want) = expected {
        if n != want {
            return Err(Error::Format(format!(
                "{}: expected {} values, found {} (truncated or inconsistent tensor)",
                path.display(),
                want,
                n
            )));
        }
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn write_meta(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_meta(path: &Path) -> Result<HashMap<String, String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn meta_field<'a>(meta: &'a HashMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    meta.get(key).map(String::as_str).ok_or_else(|| {
        Error::Format(format!("{}: missing field {key}", path.display()))
    })
}

fn parse_field<T: std::str::FromStr>(
    meta: &HashMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<T> {
    let raw = meta_field(meta, key, path)?;
    raw.parse::<T>().map_err(|_| {
        Error::Format(format!(
            "{}: field {key} has invalid value {raw:?}",
            path.display()
        ))
    })
}

fn check_version(meta: &HashMap<String, String>, path: &Path) -> Result<()> {
    let version: u64 = parse_field(meta, "format_version", path)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: format_version {version} not supported (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

pub fn save_model(dir: &Path, archive: &ModelArchive) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let model = &archive.model;
    write_meta(
        &dir.join("meta.txt"),
        &[
            ("format_version", FORMAT_VERSION.to_string()),
            ("V", model.v().to_string()),
            ("K", model.k().to_string()),
            ("lambda", model.lambda.to_string()),
            ("omega", archive.omega.to_string()),
            ("seed", archive.seed.to_string()),
            ("iteration", archive.iteration.to_string()),
        ],
    )?;
    write_f64s(&dir.join("m.f64"), model.m.iter())?;
    write_f64s(&dir.join("T.f64"), model.t.iter())?;
    archive.vocab.write(&dir.join("vocab.txt"))
}

pub fn load_model(dir: &Path) -> Result<ModelArchive> {
    let meta_path = dir.join("meta.txt");
    let meta = read_meta(&meta_path)?;
    check_version(&meta, &meta_path)?;
    let v: usize = parse_field(&meta, "V", &meta_path)?;
    let k: usize = parse_field(&meta, "K", &meta_path)?;
    if v == 0 || k == 0 {
        return Err(Error::Format(format!(
            "{}: V and K must be >= 1 (got V={v}, K={k})",
            meta_path.display()
        )));
    }
    let lambda: f64 = parse_field(&meta, "lambda", &meta_path)?;
    let omega: f64 = parse_field(&meta, "omega", &meta_path)?;
    let seed: u64 = parse_field(&meta, "seed", &meta_path)?;
    let iteration: u64 = parse_field(&meta, "iteration", &meta_path)?;

    let m = Array1::from_vec(read_f64s(&dir.join("m.f64"), Some(v))?);
    let t_raw = read_f64s(&dir.join("T.f64"), Some(v * k))?;
    let t = Array2::from_shape_vec((v, k), t_raw).expect("length checked");
    let vocab = Vocabulary::read(&dir.join("vocab.txt"))?;
    if vocab.len() != v {
        return Err(Error::Format(format!(
            "{}: vocab.txt has {} tokens but V={v}",
            dir.display(),
            vocab.len()
        )));
    }
    Ok(ModelArchive {
        model: SmmModel::new(m, t, lambda)?,
        vocab,
        omega,
        seed,
        iteration,
    })
}

pub fn save_posteriors(dir: &Path, archive: &PosteriorArchive) -> Result<()> {
    if archive.doc_ids.len() != archive.posteriors.len() {
        return Err(Error::Mismatch(format!(
            "{} doc ids for {} posteriors",
            archive.doc_ids.len(),
            archive.posteriors.len()
        )));
    }
    if let Some(first) = archive.posteriors.first() {
        if archive.posteriors.iter().any(|p| p.k() != first.k()) {
            return Err(Error::Mismatch("posteriors differ in K".into()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let docs_path = dir.join("docs.txt");
    let mut out = BufWriter::new(File::create(&docs_path).map_err(|e| Error::io(&docs_path, e))?);
    for id in &archive.doc_ids {
        writeln!(out, "{id}").map_err(|e| Error::io(&docs_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&docs_path, e))?;
    write_f64s(
        &dir.join("nu.f64"),
        archive.posteriors.iter().flat_map(|p| p.nu.iter()),
    )?;
    write_f64s(
        &dir.join("lsd.f64"),
        archive.posteriors.iter().flat_map(|p| p.lsd.iter()),
    )
}

pub fn load_posteriors(dir: &Path) -> Result<PosteriorArchive> {
    let docs_path = dir.join("docs.txt");
    let f = File::open(&docs_path).map_err(|e| Error::io(&docs_path, e))?;
    let doc_ids: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(&docs_path, e))?;
    let nu = read_f64s(&dir.join("nu.f64"), None)?;
    let lsd = read_f64s(&dir.join("lsd.f64"), None)?;
    if nu.len() != lsd.len() {
        return Err(Error::Format(format!(
            "{}: nu.f64 has {} values but lsd.f64 has {}",
            dir.display(),
            nu.len(),
            lsd.len()
        )));
    }
    let n = doc_ids.len();
    if n == 0 {
        if !nu.is_empty() {
            return Err(Error::Format(format!(
                "{}: empty docs.txt but {} tensor values",
                dir.display(),
                nu.len()
            )));
        }
        return Ok(PosteriorArchive {
            doc_ids,
            posteriors: Vec::new(),
        });
    }
    if nu.len() % n != 0 {
        return Err(Error::Format(format!(
            "{}: {} tensor values do not divide into {} rows",
            dir.display(),
            nu.len(),
            n
        )));
    }
    let k = nu.len() / n;
    if k == 0 {
        return Err(Error::Format(format!("{}: K=0 in posteriors", dir.display())));
    }
    let posteriors = (0..n)
        .map(|i| {
            Posterior::new(
                Array1::from_vec(nu[i * k..(i + 1) * k].to_vec()),
                Array1::from_vec(lsd[i * k..(i + 1) * k].to_vec()),
            )
        })
        .collect::<Result<_>>()?;
    Ok(PosteriorArchive {
        doc_ids,
        posteriors,
    })
}

pub fn save_classifier(dir: &Path, archive: &ClassifierArchive) -> Result<()> {
    let clf = &archive.classifier;
    if archive.class_names.len() != clf.n_classes() {
        return Err(Error::Mismatch(format!(
            "{} class names for {} classes",
            archive.class_names.len(),
            clf.n_classes()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_meta(
        &dir.join("meta.txt"),
        &[
            ("format_version", FORMAT_VERSION.to_string()),
            ("kind", archive.kind.as_str().to_string()),
            ("K", clf.k().to_string()),
            ("L", clf.n_classes().to_string()),
        ],
    )?;
    let classes_path = dir.join("classes.txt");
    let mut out =
        BufWriter::new(File::create(&classes_path).map_err(|e| Error::io(&classes_path, e))?);
    for name in &archive.class_names {
        writeln!(out, "{name}").map_err(|e| Error::io(&classes_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&classes_path, e))?;
    // row-major on disk; nalgebra stores column-major
    let means_rm: Vec<f64> = (0..clf.k())
        .flat_map(|i| (0..clf.n_classes()).map(move |j| clf.means[(i, j)]))
        .collect();
    write_f64s(&dir.join("means.f64"), means_rm.iter())?;
    let prec_rm: Vec<f64> = (0..clf.k())
        .flat_map(|i| (0..clf.k()).map(move |j| clf.prec[(i, j)]))
        .collect();
    write_f64s(&dir.join("prec.f64"), prec_rm.iter())?;
    write_f64s(&dir.join("priors.f64"), clf.log_priors.iter())
}

pub fn load_classifier(dir: &Path) -> Result<ClassifierArchive> {
    let meta_path = dir.join("meta.txt");
    let meta = read_meta(&meta_path)?;
    check_version(&meta, &meta_path)?;
    let kind = match meta_field(&meta, "kind", &meta_path)? {
        "glc" => ClassifierKind::Glc,
        "glcu" => ClassifierKind::Glcu,
        other => {
            return Err(Error::Format(format!(
                "{}: unknown classifier kind {other:?}",
                meta_path.display()
            )))
        }
    };
    let k: usize = parse_field(&meta, "K", &meta_path)?;
    let l: usize = parse_field(&meta, "L", &meta_path)?;
    if k == 0 || l == 0 {
        return Err(Error::Format(format!(
            "{}: K and L must be >= 1 (got K={k}, L={l})",
            meta_path.display()
        )));
    }
    let classes_path = dir.join("classes.txt");
    let f = File::open(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
    let class_names: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(&classes_path, e))?;
    if class_names.len() != l {
        return Err(Error::Format(format!(
            "{}: classes.txt has {} names but L={l}",
            dir.display(),
            class_names.len()
        )));
    }
    let means = DMatrix::from_row_slice(k, l, &read_f64s(&dir.join("means.f64"), Some(k * l))?);
    let prec = DMatrix::from_row_slice(k, k, &read_f64s(&dir.join("prec.f64"), Some(k * k))?);
    let log_priors = DVector::from_vec(read_f64s(&dir.join("priors.f64"), Some(l))?);
    Ok(ClassifierArchive {
        kind,
        classifier: GaussianClassifier {
            means,
            prec,
            log_priors,
        },
        class_names,
    })
}
