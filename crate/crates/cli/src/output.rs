//! Output-directory writes. Every file lands via a temp-and-rename in its
//! final directory, and multi-file commands stage all temps before renaming
//! any, so a failed run never leaves a partial file behind.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    path.with_file_name(format!(".{name}.tmp"))
}

fn stage(path: &Path, content: &[u8]) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let tmp = temp_path(path);
    fs::write(&tmp, content)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(tmp)
}

fn commit(tmp: &Path, path: &Path) -> Result<(), CliError> {
    fs::rename(tmp, path)
        .map_err(|e| CliError::data(format!("cannot finish writing {}: {e}", path.display())))
}

pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), CliError> {
    let tmp = stage(path, content)?;
    commit(&tmp, path)
}

/// Writes a batch of files under `dir` atomically as a group: all contents
/// are staged first, then renamed into place. On any error the staged temps
/// are removed and nothing is published.
pub fn write_many(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        match stage(&path, content) {
            Ok(tmp) => staged.push((tmp, path)),
            Err(e) => {
                for (tmp, _) in &staged {
                    let _ = fs::remove_file(tmp);
                }
                return Err(e);
            }
        }
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, path) in &staged {
        commit(tmp, path)?;
        written.push(path.clone());
    }
    Ok(written)
}
