//! Column standardization, seeded train/validation splits, response
//! aggregation, and per-dimension distributional diagnostics.

use serde::{Deserialize, Serialize};

use super::{DataError, UserDataset};
use crate::matrix::Matrix;
use crate::rng::substream;
use rand::seq::SliceRandom;

/// Below this sample SD a column is treated as constant.
const DEGENERATE_SD: f64 = 1e-12;

/// Number of equal-width bins in [`embedding_diagnostics`] histograms.
pub const HISTOGRAM_BINS: usize = 30;

/// Per-column affine transform fitted on training data.
///
/// `sds` holds the division factors actually used: constant columns are
/// listed in `degenerate` and get factor 1.0 so the transform stays
/// invertible in the non-degenerate coordinates. [`Standardizer::reported_sds`]
/// gives the conventional view with 0 for constant columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl Standardizer {
    /// Fits per-column mean and sample SD. Needs at least two rows.
    pub fn fit(x: &Matrix) -> Result<Standardizer, DataError> {
        let u = x.rows();
        if u < 2 {
            return Err(DataError::TooFewUsers { need: 2, have: u });
        }
        if let Some((row, col)) = x.first_non_finite() {
            return Err(DataError::NonFinite { row, col });
        }
        let d = x.cols();
        let mut means = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= u as f64;
        }
        let mut ss = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in ss.iter_mut().zip(row).zip(&means) {
                let dev = v - m;
                *s += dev * dev;
            }
        }
        let mut sds = vec![0.0; d];
        let mut degenerate = Vec::new();
        for j in 0..d {
            let sd = (ss[j] / (u - 1) as f64).sqrt();
            if sd < DEGENERATE_SD {
                degenerate.push(j);
                sds[j] = 1.0;
            } else {
                sds[j] = sd;
            }
        }
        Ok(Standardizer {
            means,
            sds,
            degenerate,
        })
    }

    fn check_dim(&self, x: &Matrix) -> Result<(), DataError> {
        if x.cols() != self.means.len() {
            return Err(DataError::DimMismatch {
                expected: self.means.len(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    fn degenerate_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.means.len()];
        for &j in &self.degenerate {
            mask[j] = true;
        }
        mask
    }

    /// Centers and scales columns; degenerate columns are forced to 0.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix, DataError> {
        self.check_dim(x)?;
        let mask = self.degenerate_mask();
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if mask[j] {
                    0.0
                } else {
                    (*v - self.means[j]) / self.sds[j]
                };
            }
        }
        Ok(out)
    }

    /// Inverse of [`Standardizer::apply`]. Degenerate columns come back as
    /// the stored mean, since their standardized value carries no scale.
    pub fn invert(&self, x: &Matrix) -> Result<Matrix, DataError> {
        self.check_dim(x)?;
        let mask = self.degenerate_mask();
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if mask[j] {
                    self.means[j]
                } else {
                    *v * self.sds[j] + self.means[j]
                };
            }
        }
        Ok(out)
    }

    /// Sample SDs with degenerate columns reported as 0.
    pub fn reported_sds(&self) -> Vec<f64> {
        let mask = self.degenerate_mask();
        self.sds
            .iter()
            .enumerate()
            .map(|(j, &s)| if mask[j] { 0.0 } else { s })
            .collect()
    }
}

/// Fits a standardizer on `x` and applies it, returning both.
pub fn standardize(x: &Matrix) -> Result<(Matrix, Standardizer), DataError> {
    let s = Standardizer::fit(x)?;
    let out = s.apply(x)?;
    Ok((out, s))
}

/// Splits users into disjoint train/validation sets by a seeded shuffle.
///
/// The validation side gets `floor(U * val_fraction)` users; both sides keep
/// their users in original dataset order. Identical seed and input reproduce
/// the split exactly.
pub fn train_val_split(
    dataset: &UserDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(UserDataset, UserDataset), DataError> {
    if !(val_fraction.is_finite() && val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DataError::BadFraction(val_fraction));
    }
    let u = dataset.n_users();
    let val_n = (u as f64 * val_fraction).floor() as usize;
    if val_n == 0 {
        return Err(DataError::EmptySplit("validation"));
    }
    if val_n >= u {
        return Err(DataError::EmptySplit("training"));
    }
    let mut order: Vec<usize> = (0..u).collect();
    order.shuffle(&mut substream(seed, "split"));
    let mut val_idx: Vec<usize> = order[..val_n].to_vec();
    let mut train_idx: Vec<usize> = order[val_n..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((dataset.subset(&train_idx), dataset.subset(&val_idx)))
}

/// Pools one user's per-response embeddings into a single vector by the
/// arithmetic mean over rows.
pub fn aggregate_user_embedding(per_response: &Matrix) -> Result<Vec<f64>, DataError> {
    let r = per_response.rows();
    if r == 0 {
        return Err(DataError::EmptyAggregate);
    }
    if let Some((row, col)) = per_response.first_non_finite() {
        return Err(DataError::NonFinite { row, col });
    }
    let mut mean = vec![0.0; per_response.cols()];
    for row in per_response.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= r as f64;
    }
    Ok(mean)
}

/// Distributional summary of one embedding dimension.
#[derive(Debug, Clone, Serialize)]
pub struct DimDiagnostics {
    pub dim: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub skewness: f64,
    /// Counts over `HISTOGRAM_BINS` equal-width bins spanning [min, max].
    pub histogram: Vec<u64>,
}

/// Per-dimension summary statistics and histograms. Needs at least two rows.
///
/// Skewness is the moment coefficient m3 / m2^(3/2) with population moments;
/// a zero-variance column reports skewness 0 and a histogram concentrated in
/// the first bin.
pub fn embedding_diagnostics(x: &Matrix) -> Result<Vec<DimDiagnostics>, DataError> {
    let u = x.rows();
    if u < 2 {
        return Err(DataError::TooFewUsers { need: 2, have: u });
    }
    if let Some((row, col)) = x.first_non_finite() {
        return Err(DataError::NonFinite { row, col });
    }
    let n = u as f64;
    let mut out = Vec::with_capacity(x.cols());
    for dim in 0..x.cols() {
        let col = x.column(dim);
        let mean: f64 = col.iter().sum::<f64>() / n;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        let mut ss = 0.0;
        for &v in &col {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            ss += d2;
        }
        m2 /= n;
        m3 /= n;
        let sd = (ss / (n - 1.0)).sqrt();
        let skewness = if m2 > 0.0 { m3 / (m2 * m2.sqrt()) } else { 0.0 };
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &col {
            min = min.min(v);
            max = max.max(v);
        }
        let mut histogram = vec![0u64; HISTOGRAM_BINS];
        let width = (max - min) / HISTOGRAM_BINS as f64;
        for &v in &col {
            let bin = if width > 0.0 {
                (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1)
            } else {
                0
            };
            histogram[bin] += 1;
        }
        out.push(DimDiagnostics {
            dim,
            mean,
            sd,
            min,
            max,
            skewness,
            histogram,
        });
    }
    Ok(out)
}
