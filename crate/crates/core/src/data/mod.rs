//! Dataset handling: a synthetic planted-trait generator, file ingestion
//! with positioned errors, and preprocessing (standardization, splits,
//! distributional diagnostics).

mod ingest;
mod preprocess;
mod synth;

pub use ingest::{
    assemble_dataset, embeddings_to_csv, ingest_embeddings, ingest_patterns, ingest_traits,
    load_dataset, parse_embeddings_csv, parse_patterns_json, parse_traits_csv, patterns_to_json,
    traits_to_csv,
};
pub use preprocess::{
    aggregate_user_embedding, embedding_diagnostics, standardize, train_val_split, DimDiagnostics,
    Standardizer, HISTOGRAM_BINS,
};
pub use synth::{synth_generate, SynthConfig};

use crate::analysis::ResponsePattern;
use crate::matrix::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("input is empty")]
    EmptyInput,
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {found} fields, expected {expected}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: `{value}` is not a finite number")]
    Float {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("duplicate user id \"{id}\" at line/record {position}")]
    DuplicateId { id: String, position: usize },
    #[error("invalid JSON: {detail}")]
    Json { detail: String },
    #[error("record {record}: unknown category \"{category}\"")]
    UnknownCategory { record: usize, category: String },
    #[error(
        "record {record}: count for \"{category}\" is not a non-negative integer (got {value})"
    )]
    BadCount {
        record: usize,
        category: String,
        value: String,
    },
    #[error("{what} file references unknown user \"{id}\"")]
    UnknownUser { what: &'static str, id: String },
    #[error("user \"{0}\" has no response pattern")]
    MissingPattern(String),
    #[error("user \"{0}\" has no ground-truth trait row")]
    MissingTraits(String),
    #[error("user id \"{0}\" contains a comma, control character, or is empty")]
    BadId(String),
    #[error("dataset has no users")]
    EmptyDataset,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("pattern at index {index} is for \"{found}\" but user {index} is \"{expected}\"")]
    Misaligned {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("need at least {need} users, got {have}")]
    TooFewUsers { need: usize, have: usize },
    #[error("standardizer covers {expected} dimensions, data has {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("validation fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("split leaves the {0} side empty")]
    EmptySplit(&'static str),
    #[error("cannot aggregate zero response embeddings")]
    EmptyAggregate,
    #[error("invalid generator config: {0}")]
    BadSynthConfig(String),
}

/// A cohort of users with one aggregate embedding each, plus optional
/// response patterns and (for synthetic data) the planted traits.
///
/// All per-user fields are index-aligned with `user_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDataset {
    pub user_ids: Vec<String>,
    pub embeddings: Matrix,
    pub patterns: Option<Vec<ResponsePattern>>,
    pub ground_truth_traits: Option<Matrix>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c == ',' || c.is_control())
}

impl UserDataset {
    pub fn new(user_ids: Vec<String>, embeddings: Matrix) -> Result<Self, DataError> {
        let ds = UserDataset {
            user_ids,
            embeddings,
            patterns: None,
            ground_truth_traits: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    /// Checks every invariant: unique well-formed ids, finite embeddings,
    /// and index alignment of the optional per-user fields.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.user_ids.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, id) in self.user_ids.iter().enumerate() {
            if !valid_id(id) {
                return Err(DataError::BadId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(DataError::DuplicateId {
                    id: id.clone(),
                    position: i + 1,
                });
            }
        }
        if self.embeddings.rows() != self.user_ids.len() {
            return Err(DataError::TooFewUsers {
                need: self.user_ids.len(),
                have: self.embeddings.rows(),
            });
        }
        if let Some((row, col)) = self.embeddings.first_non_finite() {
            return Err(DataError::NonFinite { row, col });
        }
        if let Some(patterns) = &self.patterns {
            if patterns.len() != self.user_ids.len() {
                return Err(DataError::MissingPattern(
                    self.user_ids
                        .get(patterns.len())
                        .cloned()
                        .unwrap_or_default(),
                ));
            }
            for (i, (p, id)) in patterns.iter().zip(&self.user_ids).enumerate() {
                if &p.user_id != id {
                    return Err(DataError::Misaligned {
                        index: i,
                        expected: id.clone(),
                        found: p.user_id.clone(),
                    });
                }
            }
        }
        if let Some(traits) = &self.ground_truth_traits {
            if traits.rows() != self.user_ids.len() {
                return Err(DataError::MissingTraits(
                    self.user_ids
                        .get(traits.rows())
                        .cloned()
                        .unwrap_or_default(),
                ));
            }
            if let Some((row, col)) = traits.first_non_finite() {
                return Err(DataError::NonFinite { row, col });
            }
        }
        Ok(())
    }

    /// New dataset containing the rows at `indices` (in the given order),
    /// carrying the optional fields along.
    pub fn subset(&self, indices: &[usize]) -> UserDataset {
        let user_ids: Vec<String> = indices.iter().map(|&i| self.user_ids[i].clone()).collect();
        let mut embeddings = Matrix::zeros(indices.len(), self.embeddings.cols());
        for (r, &i) in indices.iter().enumerate() {
            embeddings
                .row_mut(r)
                .copy_from_slice(self.embeddings.row(i));
        }
        let patterns = self
            .patterns
            .as_ref()
            .map(|ps| indices.iter().map(|&i| ps[i].clone()).collect());
        let ground_truth_traits = self.ground_truth_traits.as_ref().map(|t| {
            let mut out = Matrix::zeros(indices.len(), t.cols());
            for (r, &i) in indices.iter().enumerate() {
                out.row_mut(r).copy_from_slice(t.row(i));
            }
            out
        });
        UserDataset {
            user_ids,
            embeddings,
            patterns,
            ground_truth_traits,
        }
    }
}
