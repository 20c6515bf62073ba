//! Staged outputs: every command writes into a temporary sibling of its
//! final path and renames on success, so a failing run never leaves a
//! partial file or directory behind.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub struct Staged {
    final_path: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

impl Staged {
    fn tmp_sibling(path: &Path) -> PathBuf {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        path.with_file_name(format!(".{name}.partial.{}", std::process::id()))
    }

    /// Stages a directory output; the temporary directory exists afterwards.
    pub fn dir(path: &Path) -> io::Result<Self> {
        let tmp = Self::tmp_sibling(path);
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        Ok(Staged {
            final_path: path.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    /// Stages a file output; only the parent directory is created.
    pub fn file(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let tmp = Self::tmp_sibling(path);
        let _ = fs::remove_file(&tmp);
        Ok(Staged {
            final_path: path.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    /// Path to write into.
    pub fn path(&self) -> &Path {
        &self.tmp
    }

    /// Replaces the final path with the staged content.
    pub fn commit(mut self) -> io::Result<()> {
        if self.final_path.exists() {
            if self.final_path.is_dir() {
                fs::remove_dir_all(&self.final_path)?;
            } else {
                fs::remove_file(&self.final_path)?;
            }
        }
        fs::rename(&self.tmp, &self.final_path)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            if self.tmp.is_dir() {
                let _ = fs::remove_dir_all(&self.tmp);
            } else {
                let _ = fs::remove_file(&self.tmp);
            }
        }
    }
}
