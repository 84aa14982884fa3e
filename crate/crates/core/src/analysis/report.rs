//! Latent-dimension interpretation: contrast the response patterns of users
//! at the two extremes of a dimension, test each behavioral summary, and
//! correct for the full family of comparisons.

use std::collections::BTreeMap;

use serde::ser::Serializer;
use serde::Serialize;

use super::{
    bonferroni, cohens_d, mann_whitney_u, select_extremes, AnalysisError, Category, CategoryCounts,
    ResponsePattern,
};
use crate::vae::PosteriorSet;

/// One behavioral summary to contrast between extreme groups: a raw category
/// count, or a derived share of total responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastKind {
    Category(Category),
    Extremity,
    Neutrality,
}

impl ContrastKind {
    pub const ALL: [ContrastKind; 7] = [
        ContrastKind::Category(Category::StronglyAgree),
        ContrastKind::Category(Category::Agree),
        ContrastKind::Category(Category::Neither),
        ContrastKind::Category(Category::Disagree),
        ContrastKind::Category(Category::StronglyDisagree),
        ContrastKind::Extremity,
        ContrastKind::Neutrality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContrastKind::Category(c) => c.as_str(),
            ContrastKind::Extremity => "extremity",
            ContrastKind::Neutrality => "neutrality",
        }
    }

    fn value(self, counts: &CategoryCounts) -> f64 {
        match self {
            ContrastKind::Category(c) => counts.get(c) as f64,
            ContrastKind::Extremity => counts.extremity(),
            ContrastKind::Neutrality => counts.neutrality(),
        }
    }
}

impl Serialize for ContrastKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// Result of one high-vs-low comparison on one dimension.
///
/// `d` is absent when the effect size is undefined (a group smaller than two
/// or zero pooled variance). `significant` is derived from `p_corrected` and
/// the report's alpha; it is for callers and never serialized.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub dim: usize,
    pub category: ContrastKind,
    pub mean_diff: f64,
    pub u: f64,
    pub p: f64,
    pub p_corrected: f64,
    pub d: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
    #[serde(skip)]
    pub significant: bool,
}

/// All tests for one latent dimension, plus the largest absolute effect size
/// observed across them (0 when every effect size is undefined).
#[derive(Debug, Clone)]
pub struct DimensionFindings {
    pub dim: usize,
    pub max_abs_d: f64,
    pub tests: Vec<TestResult>,
}

struct Contrast {
    kind: ContrastKind,
    mean_diff: f64,
    u: f64,
    p: f64,
    d: Option<f64>,
    n_high: usize,
    n_low: usize,
}

/// Runs the seven contrasts between two groups of users identified by id.
fn contrasts_for_groups(
    patterns: &[ResponsePattern],
    high_ids: &[&str],
    low_ids: &[&str],
) -> Result<Vec<Contrast>, AnalysisError> {
    let by_id: BTreeMap<&str, &CategoryCounts> = patterns
        .iter()
        .map(|p| (p.user_id.as_str(), &p.counts))
        .collect();
    let lookup = |ids: &[&str]| -> Result<Vec<&CategoryCounts>, AnalysisError> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| AnalysisError::MissingPattern(id.to_string()))
            })
            .collect()
    };
    let high = lookup(high_ids)?;
    let low = lookup(low_ids)?;
    if high.is_empty() {
        return Err(AnalysisError::EmptySample("high group"));
    }
    if low.is_empty() {
        return Err(AnalysisError::EmptySample("low group"));
    }

    let mut out = Vec::with_capacity(ContrastKind::ALL.len());
    for kind in ContrastKind::ALL {
        let hv: Vec<f64> = high.iter().map(|c| kind.value(c)).collect();
        let lv: Vec<f64> = low.iter().map(|c| kind.value(c)).collect();
        let mw = mann_whitney_u(&hv, &lv)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let d = match cohens_d(&hv, &lv) {
            Ok(d) => Some(d),
            Err(AnalysisError::TooFewForEffectSize | AnalysisError::ZeroPooledVariance) => None,
            Err(e) => return Err(e),
        };
        out.push(Contrast {
            kind,
            mean_diff: mean(&hv) - mean(&lv),
            u: mw.u,
            p: mw.p,
            d,
            n_high: hv.len(),
            n_low: lv.len(),
        });
    }
    Ok(out)
}

/// Public entry point for contrasting two explicit user groups. Returns
/// uncorrected results; correction scope depends on how many comparisons the
/// caller is making in total.
pub fn compare_response_patterns(
    patterns: &[ResponsePattern],
    high_ids: &[String],
    low_ids: &[String],
) -> Result<Vec<TestResult>, AnalysisError> {
    let high: Vec<&str> = high_ids.iter().map(String::as_str).collect();
    let low: Vec<&str> = low_ids.iter().map(String::as_str).collect();
    let contrasts = contrasts_for_groups(patterns, &high, &low)?;
    Ok(contrasts
        .into_iter()
        .map(|c| TestResult {
            dim: 0,
            category: c.kind,
            mean_diff: c.mean_diff,
            u: c.u,
            p: c.p,
            p_corrected: c.p,
            d: c.d,
            n_high: c.n_high,
            n_low: c.n_low,
            significant: false,
        })
        .collect())
}

/// Builds the per-dimension interpretation report.
///
/// For every requested dimension the users are split into top and bottom
/// `quantile` groups by posterior mean, the seven contrasts are tested, and
/// p-values are Bonferroni-corrected across the whole family
/// (`dims.len() * 7` comparisons). Dimensions are returned ordered by their
/// largest absolute effect size, descending, ties broken by dimension index.
pub fn build_dimension_report(
    posteriors: &PosteriorSet,
    patterns: &[ResponsePattern],
    dims: &[usize],
    quantile: f64,
    alpha: f64,
) -> Result<Vec<DimensionFindings>, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::BadAlpha(alpha));
    }
    let mut unique_dims: Vec<usize> = Vec::with_capacity(dims.len());
    for &d in dims {
        if !unique_dims.contains(&d) {
            unique_dims.push(d);
        }
    }
    if unique_dims.is_empty() {
        return Ok(Vec::new());
    }
    let m = unique_dims.len() * ContrastKind::ALL.len();

    let mut findings = Vec::with_capacity(unique_dims.len());
    for &dim in &unique_dims {
        let (high_idx, low_idx) = select_extremes(posteriors, dim, quantile)?;
        let high: Vec<&str> = high_idx
            .iter()
            .map(|&i| posteriors.user_ids[i].as_str())
            .collect();
        let low: Vec<&str> = low_idx
            .iter()
            .map(|&i| posteriors.user_ids[i].as_str())
            .collect();
        let contrasts = contrasts_for_groups(patterns, &high, &low)?;
        let mut max_abs_d = 0.0f64;
        let tests: Vec<TestResult> = contrasts
            .into_iter()
            .map(|c| {
                if let Some(d) = c.d {
                    if d.abs() > max_abs_d {
                        max_abs_d = d.abs();
                    }
                }
                let p_corrected = bonferroni(c.p, m);
                TestResult {
                    dim,
                    category: c.kind,
                    mean_diff: c.mean_diff,
                    u: c.u,
                    p: c.p,
                    p_corrected,
                    d: c.d,
                    n_high: c.n_high,
                    n_low: c.n_low,
                    significant: p_corrected < alpha,
                }
            })
            .collect();
        findings.push(DimensionFindings {
            dim,
            max_abs_d,
            tests,
        });
    }
    findings.sort_by(|a, b| {
        b.max_abs_d
            .partial_cmp(&a.max_abs_d)
            .expect("effect sizes are finite")
            .then(a.dim.cmp(&b.dim))
    });
    Ok(findings)
}
