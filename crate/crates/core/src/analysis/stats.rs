//! Rank tests and effect sizes.

use super::AnalysisError;
use statrs::distribution::{ContinuousCDF, Normal};

/// Combined sample size at or below which the exact Mann-Whitney null
/// distribution is enumerated (ties always fall back to the normal
/// approximation, which is what the tie correction is for).
const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

/// Two-sided Mann-Whitney U result. `u` is `min(U_a, U_b)`.
#[derive(Debug, Clone)]
pub struct MannWhitneyResult {
    pub u: f64,
    pub p: f64,
    pub method: PValueMethod,
}

/// Two-sided Mann-Whitney U test with midrank tie handling.
///
/// Small untied samples (combined n <= 16) get an exact p-value from the
/// enumerated null distribution; otherwise a normal approximation with tie
/// correction and continuity correction is used. Identical constant samples
/// have zero rank variance and yield `p = 1`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, AnalysisError> {
    if a.is_empty() {
        return Err(AnalysisError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(AnalysisError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteValue);
    }
    let n1 = a.len();
    let n2 = b.len();
    let n = n1 + n2;
    let mut values: Vec<f64> = Vec::with_capacity(n);
    values.extend_from_slice(a);
    values.extend_from_slice(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap().then(i.cmp(&j)));

    // Midranks and tie group sizes.
    let mut ranks = vec![0.0; n];
    let mut tie_sizes: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = midrank;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    let has_ties = tie_sizes.iter().any(|&t| t > 1);

    let mut rank_sum_a = 0.0;
    for r in ranks.iter().take(n1) {
        rank_sum_a += r;
    }
    let u_a = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;
    let u_b = (n1 * n2) as f64 - u_a;
    let u_min = u_a.min(u_b);

    if !has_ties && n <= EXACT_LIMIT {
        // Untied ranks make U an integer.
        let p = mann_whitney_exact_p(n1, n2, u_min.round() as u64);
        return Ok(MannWhitneyResult {
            u: u_min,
            p,
            method: PValueMethod::Exact,
        });
    }
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let p = mann_whitney_normal_p(n1, n2, u_min, tie_term);
    Ok(MannWhitneyResult {
        u: u_min,
        p,
        method: PValueMethod::NormalApprox,
    })
}

/// Exact two-sided p-value `2 P(U <= u_min)` for untied samples, from the
/// combinatorial null distribution (all rank assignments equally likely).
pub fn mann_whitney_exact_p(n1: usize, n2: usize, u_min: u64) -> f64 {
    // count[j][u] = number of ways to place j of the `a` ranks among the
    // first (i) ranks considered so far with U statistic u. Classic
    // recurrence: appending a new largest rank either gives it to `a`
    // (adding j2 = current count of b values below it later... handled by
    // the standard f(n1,n2,u) = f(n1-1,n2,u-n2) + f(n1,n2-1,u) form) or to
    // `b`.
    fn count(n1: usize, n2: usize, u: i64, memo: &mut Vec<Vec<Vec<Option<u64>>>>) -> u64 {
        if u < 0 {
            return 0;
        }
        if n1 == 0 || n2 == 0 {
            return if u == 0 { 1 } else { 0 };
        }
        if let Some(v) = memo[n1][n2][u as usize] {
            return v;
        }
        let v = count(n1 - 1, n2, u - n2 as i64, memo) + count(n1, n2 - 1, u, memo);
        memo[n1][n2][u as usize] = Some(v);
        v
    }
    let max_u = n1 * n2;
    let u_min = u_min.min(max_u as u64);
    let mut memo = vec![vec![vec![None; max_u + 1]; n2 + 1]; n1 + 1];
    let mut cumulative: u64 = 0;
    for u in 0..=u_min {
        cumulative += count(n1, n2, u as i64, &mut memo);
    }
    let total: f64 = binomial(n1 + n2, n1);
    (2.0 * cumulative as f64 / total).min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Two-sided normal-approximation p-value with tie and continuity
/// corrections. `tie_term` is `sum(t^3 - t)` over tie group sizes.
pub fn mann_whitney_normal_p(n1: usize, n2: usize, u_min: f64, tie_term: f64) -> f64 {
    let n = (n1 + n2) as f64;
    let n1f = n1 as f64;
    let n2f = n2 as f64;
    let mean_u = n1f * n2f / 2.0;
    let var_u = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var_u <= 0.0 {
        // All observations identical: no evidence either way.
        return 1.0;
    }
    // u_min <= mean_u by construction; the continuity correction pulls the
    // statistic half a step toward the mean.
    let z = (u_min - mean_u + 0.5) / var_u.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * normal.cdf(z)).clamp(0.0, 1.0)
}

/// Pooled-standard-deviation Cohen's d, `(mean(a) - mean(b)) / s_pooled`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::TooFewForEffectSize);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteValue);
    }
    // Within-group constancy means the pooled variance is exactly zero; the
    // summed-squares route below would report rounding noise (~1e-33)
    // instead and turn an undefined d into an arbitrary finite one.
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    if constant(a) && constant(b) {
        return Err(AnalysisError::ZeroPooledVariance);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let ma = mean(a);
    let mb = mean(b);
    let ss = |s: &[f64], m: f64| s.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let pooled_var = (ss(a, ma) + ss(b, mb)) / (a.len() + b.len() - 2) as f64;
    if pooled_var <= 0.0 {
        return Err(AnalysisError::ZeroPooledVariance);
    }
    Ok((ma - mb) / pooled_var.sqrt())
}

/// Bonferroni-corrected p-value for `m` comparisons, capped at 1.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    debug_assert!(m >= 1);
    (p * m as f64).min(1.0)
}
