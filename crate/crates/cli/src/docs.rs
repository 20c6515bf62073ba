//! Raw-document enumeration for `build-vocab` and `vectorize`.
//!
//! Inputs are files or directories. A directory contributes every regular
//! file under it (walked in sorted order), each file being one document
//! whose id is its path relative to that directory. With `--lines`, every
//! line of every input file is one document and ids are 1-based positions.

use std::fs;
use std::path::Path;

use walkdir::WalkDir;

use crate::CliError;

pub struct RawDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

pub fn collect(inputs: &[std::path::PathBuf], lines: bool) -> Result<Vec<RawDoc>, CliError> {
    let mut docs = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(CliError::Usage(format!(
                "input {} does not exist",
                input.display()
            )));
        }
        if input.is_dir() {
            if lines {
                return Err(CliError::Usage(
                    "--lines expects file inputs, not directories".into(),
                ));
            }
            for entry in WalkDir::new(input).sort_by_file_name() {
                let entry = entry.map_err(|e| {
                    CliError::Usage(format!("cannot walk {}: {e}", input.display()))
                })?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let rel = entry
                    .path()
                    .strip_prefix(input)
                    .expect("walked under input")
                    .to_string_lossy()
                    .replace(std::path::MAIN_SEPARATOR, "/");
                docs.push(RawDoc {
                    doc_id: rel,
                    tokens: tokenize_file(entry.path())?,
                });
            }
        } else if lines {
            let text = read_lossy(input)?;
            for line in text.lines() {
                docs.push(RawDoc {
                    doc_id: (docs.len() + 1).to_string(),
                    tokens: bsmm::corpus::tokenize(line),
                });
            }
        } else {
            let id = input
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| input.display().to_string());
            docs.push(RawDoc {
                doc_id: id,
                tokens: tokenize_file(input)?,
            });
        }
    }
    Ok(docs)
}

fn tokenize_file(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(bsmm::corpus::tokenize(&read_lossy(path)?))
}

fn read_lossy(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}
