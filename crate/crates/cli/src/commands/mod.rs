//! Command implementations. Each command resolves its inputs from flags and
//! the merged config, calls into the library, and publishes outputs into the
//! run's output directory.

mod baseline;
mod cluster;
mod eval;
mod interpret;
mod report;
mod synth;
mod train;

pub use self::baseline::baseline;
pub use self::cluster::cluster;
pub use self::eval::eval;
pub use self::interpret::interpret;
pub use self::report::report;
pub use self::synth::synth;
pub use self::train::train;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;
use twinlab_core::Matrix;

fn embeddings_path(run: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(|| run.data.embeddings.clone()).ok_or_else(|| {
        CliError::usage("no embeddings file given; pass --data or set [data].embeddings")
    })
}

fn patterns_path(run: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(|| run.data.patterns.clone()).ok_or_else(|| {
        CliError::usage("no response patterns file given; pass --patterns or set [data].patterns")
    })
}

fn checkpoint_path(run: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| run.out.join("model.ckpt"))
}

fn load_checkpoint(path: &Path) -> Result<twinlab_core::vae::ModelParams, CliError> {
    twinlab_core::vae::load(path)
        .map_err(|e| CliError::data(format!("cannot load {}: {e}", path.display())))
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

/// Per-user index of the posterior-mean dimension with the largest absolute
/// value; ties go to the lower dimension.
fn dominant_dims(means: &Matrix) -> Vec<usize> {
    (0..means.rows())
        .map(|r| {
            let row = means.row(r);
            let mut best = 0;
            let mut best_abs = row[0].abs();
            for (j, v) in row.iter().enumerate().skip(1) {
                if v.abs() > best_abs {
                    best_abs = v.abs();
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Loads a raw (unstandardized) dataset from an embeddings CSV, optionally
/// joined with patterns.
fn load_inputs(
    embeddings: &Path,
    patterns: Option<&Path>,
) -> Result<twinlab_core::data::UserDataset, CliError> {
    Ok(twinlab_core::data::load_dataset(
        embeddings, patterns, None,
    )?)
}
