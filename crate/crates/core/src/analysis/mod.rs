//! Statistical interpretation of latent dimensions.
//!
//! A latent dimension is "interpreted" by contrasting the response patterns
//! of users who score at its extremes: pick the top and bottom quantile of
//! posterior means, then compare the two groups' category counts and derived
//! shares with rank tests ([`mann_whitney_u`]) and effect sizes
//! ([`cohens_d`]), Bonferroni-corrected over every test performed. The same
//! machinery backs the k-means view of the latent space ([`kmeans_fit`],
//! [`cluster_response_profiles`]).

mod kmeans;
mod report;
mod stats;

pub use kmeans::{cluster_response_profiles, kmeans_fit, ClusterSummary, KmeansResult};
pub use report::{
    build_dimension_report, compare_response_patterns, ContrastKind, DimensionFindings, TestResult,
};
pub use stats::{
    bonferroni, cohens_d, mann_whitney_exact_p, mann_whitney_normal_p, mann_whitney_u,
    MannWhitneyResult, PValueMethod,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("group '{0}' is empty")]
    EmptySample(&'static str),
    #[error("sample contains a non-finite value")]
    NonFiniteValue,
    #[error("need at least two observations per group for Cohen's d")]
    TooFewForEffectSize,
    #[error("pooled variance is zero; Cohen's d is undefined")]
    ZeroPooledVariance,
    #[error("quantile must lie in (0, 0.5], got {0}")]
    BadQuantile(f64),
    #[error("extreme groups of {need} users each would overlap with only {have} users")]
    OverlappingGroups { need: usize, have: usize },
    #[error("dimension {dim} out of range for {k} latent dimensions")]
    BadDimension { dim: usize, k: usize },
    #[error("user '{0}' has no response pattern")]
    MissingPattern(String),
    #[error("need at least two users, got {0}")]
    TooFewUsers(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("cluster count must satisfy 1 <= k <= {max}, got {k}")]
    BadClusterCount { k: usize, max: usize },
    #[error("iteration budget must be positive")]
    BadIterationBudget,
    #[error("assignments length {assignments} does not match {items} items")]
    MisalignedAssignments { assignments: usize, items: usize },
}

/// The five agreement categories, in fixed presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    StronglyAgree,
    Agree,
    Neither,
    Disagree,
    StronglyDisagree,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::StronglyAgree,
        Category::Agree,
        Category::Neither,
        Category::Disagree,
        Category::StronglyDisagree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::StronglyAgree => "strongly_agree",
            Category::Agree => "agree",
            Category::Neither => "neither",
            Category::Disagree => "disagree",
            Category::StronglyDisagree => "strongly_disagree",
        }
    }
}

/// Response counts per category; all five fields are always present.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryCounts {
    pub strongly_agree: u64,
    pub agree: u64,
    pub neither: u64,
    pub disagree: u64,
    pub strongly_disagree: u64,
}

impl CategoryCounts {
    pub fn get(&self, c: Category) -> u64 {
        match c {
            Category::StronglyAgree => self.strongly_agree,
            Category::Agree => self.agree,
            Category::Neither => self.neither,
            Category::Disagree => self.disagree,
            Category::StronglyDisagree => self.strongly_disagree,
        }
    }

    pub fn add(&mut self, c: Category) {
        match c {
            Category::StronglyAgree => self.strongly_agree += 1,
            Category::Agree => self.agree += 1,
            Category::Neither => self.neither += 1,
            Category::Disagree => self.disagree += 1,
            Category::StronglyDisagree => self.strongly_disagree += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.strongly_agree + self.agree + self.neither + self.disagree + self.strongly_disagree
    }

    /// Share of responses in the two extreme categories; 0 for an empty
    /// pattern.
    pub fn extremity(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        (self.strongly_agree + self.strongly_disagree) as f64 / t as f64
    }

    /// Share of responses in the neutral category; 0 for an empty pattern.
    pub fn neutrality(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        self.neither as f64 / t as f64
    }
}

/// One user's aggregate answer distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsePattern {
    pub user_id: String,
    pub counts: CategoryCounts,
}

/// Variance and range of each posterior-mean dimension, with ranks (1 =
/// largest) for quick triage of which dimensions carry signal.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionImportance {
    pub dim: usize,
    pub variance: f64,
    pub range: f64,
    pub variance_rank: usize,
    pub range_rank: usize,
}

/// Scores every bottom-code dimension of a posterior set. Output is in
/// dimension order.
pub fn dimension_importance(
    posteriors: &crate::vae::PosteriorSet,
) -> Result<Vec<DimensionImportance>, AnalysisError> {
    let u = posteriors.means.rows();
    let k = posteriors.means.cols();
    if u < 2 {
        return Err(AnalysisError::TooFewUsers(u));
    }
    let mut variance = vec![0.0; k];
    let mut range = vec![0.0; k];
    for dim in 0..k {
        let col = posteriors.means.column(dim);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFiniteValue);
        }
        let mean: f64 = col.iter().sum::<f64>() / u as f64;
        let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (u - 1) as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &col {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        variance[dim] = var;
        range[dim] = hi - lo;
    }
    let rank_of = |scores: &[f64]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut ranks = vec![0; scores.len()];
        for (pos, &dim) in idx.iter().enumerate() {
            ranks[dim] = pos + 1;
        }
        ranks
    };
    let vr = rank_of(&variance);
    let rr = rank_of(&range);
    Ok((0..k)
        .map(|dim| DimensionImportance {
            dim,
            variance: variance[dim],
            range: range[dim],
            variance_rank: vr[dim],
            range_rank: rr[dim],
        })
        .collect())
}

/// Indices of the users in the top and bottom `quantile` of posterior means
/// along `dim`: `(high, low)`, each sorted by user index.
///
/// Group size is `ceil(U * quantile)`; the two groups must not overlap, so
/// `2 * ceil(U * quantile) <= U` is required. Ties in the posterior mean are
/// broken by user index, which keeps selection deterministic.
pub fn select_extremes(
    posteriors: &crate::vae::PosteriorSet,
    dim: usize,
    quantile: f64,
) -> Result<(Vec<usize>, Vec<usize>), AnalysisError> {
    let u = posteriors.means.rows();
    let k = posteriors.means.cols();
    if dim >= k {
        return Err(AnalysisError::BadDimension { dim, k });
    }
    if !(quantile > 0.0 && quantile <= 0.5) {
        return Err(AnalysisError::BadQuantile(quantile));
    }
    let n_group = (u as f64 * quantile).ceil() as usize;
    if 2 * n_group > u {
        return Err(AnalysisError::OverlappingGroups {
            need: n_group,
            have: u,
        });
    }
    let col = posteriors.means.column(dim);
    if col.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteValue);
    }
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap().then(a.cmp(&b)));
    let mut low: Vec<usize> = order[..n_group].to_vec();
    let mut high: Vec<usize> = order[u - n_group..].to_vec();
    low.sort_unstable();
    high.sort_unstable();
    Ok((high, low))
}
