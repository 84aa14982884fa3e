//! Lloyd's k-means with kmeans++ seeding, fully deterministic under a seed.

use super::{AnalysisError, ResponsePattern};
use crate::matrix::Matrix;
use crate::rng::substream;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

/// Per-cluster response-pattern summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub mean_extremity: f64,
    pub mean_neutrality: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn assign(x: &Matrix, centroids: &Matrix) -> Vec<usize> {
    (0..x.rows())
        .map(|r| {
            let row = x.row(r);
            let mut best = 0;
            let mut best_d = dist2(row, centroids.row(0));
            for c in 1..centroids.rows() {
                let d = dist2(row, centroids.row(c));
                // Strict comparison: ties stay with the lowest cluster index.
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// k-means on the rows of `x`.
///
/// Seeding is kmeans++ driven by the "kmeans" substream of `seed`; identical
/// inputs and seed reproduce the exact assignment, centroid, and inertia
/// values. Clusters that empty out during an update are reseeded to the
/// point farthest from its current centroid.
pub fn kmeans_fit(
    x: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KmeansResult, AnalysisError> {
    let u = x.rows();
    if k == 0 || k > u {
        return Err(AnalysisError::BadClusterCount { k, max: u });
    }
    if max_iter == 0 {
        return Err(AnalysisError::BadIterationBudget);
    }
    if x.first_non_finite().is_some() {
        return Err(AnalysisError::NonFiniteValue);
    }
    let d = x.cols();
    let mut rng = substream(seed, "kmeans");

    // kmeans++ seeding: first centroid uniform, the rest weighted by squared
    // distance to the nearest chosen centroid.
    let mut chosen: Vec<usize> = vec![rng.random_range(0..u)];
    let mut min_d2: Vec<f64> = (0..u).map(|r| dist2(x.row(r), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = u - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                cum += w;
                if cum > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points): take the lowest
            // index not yet chosen.
            (0..u).find(|i| !chosen.contains(i)).expect("k <= u")
        };
        chosen.push(next);
        for (r, md) in min_d2.iter_mut().enumerate() {
            let dn = dist2(x.row(r), x.row(next));
            if dn < *md {
                *md = dn;
            }
        }
    }
    let mut centroids = Matrix::zeros(k, d);
    for (c, &idx) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(x.row(idx));
    }

    let mut assignments = assign(x, &centroids);
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // Update step.
        let mut counts = vec![0usize; k];
        let mut sums = Matrix::zeros(k, d);
        for (r, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(r)) {
                *s += v;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // Farthest point from its own centroid takes over the empty
                // cluster; skip points already used for another reseed.
                let mut far = None;
                let mut far_d = -1.0;
                for (r, &a) in assignments.iter().enumerate() {
                    if reseeded.contains(&r) {
                        continue;
                    }
                    let dd = dist2(x.row(r), centroids.row(a));
                    if dd > far_d {
                        far_d = dd;
                        far = Some(r);
                    }
                }
                let r = far.expect("at least one point exists");
                centroids.row_mut(c).copy_from_slice(x.row(r));
                reseeded.push(r);
            }
        }
        // Assign step.
        let new_assignments = assign(x, &centroids);
        let converged = new_assignments == assignments;
        assignments = new_assignments;
        if converged {
            break;
        }
    }
    let mut inertia = 0.0;
    for (r, &a) in assignments.iter().enumerate() {
        inertia += dist2(x.row(r), centroids.row(a));
    }
    Ok(KmeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

/// Mean extremity and neutrality of each cluster's response patterns.
/// `assignments[i]` must correspond to `patterns[i]`.
pub fn cluster_response_profiles(
    assignments: &[usize],
    k: usize,
    patterns: &[ResponsePattern],
) -> Result<Vec<ClusterSummary>, AnalysisError> {
    if assignments.len() != patterns.len() {
        return Err(AnalysisError::MisalignedAssignments {
            assignments: assignments.len(),
            items: patterns.len(),
        });
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(AnalysisError::BadClusterCount { k: bad, max: k });
    }
    let mut out: Vec<ClusterSummary> = (0..k)
        .map(|id| ClusterSummary {
            id,
            size: 0,
            mean_extremity: 0.0,
            mean_neutrality: 0.0,
        })
        .collect();
    for (&a, p) in assignments.iter().zip(patterns) {
        out[a].size += 1;
        out[a].mean_extremity += p.counts.extremity();
        out[a].mean_neutrality += p.counts.neutrality();
    }
    for s in &mut out {
        if s.size > 0 {
            s.mean_extremity /= s.size as f64;
            s.mean_neutrality /= s.size as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::CategoryCounts;
    use crate::rng::normal_matrix;

    /// Adjusted Rand index between two labelings (test oracle).
    fn ari(a: &[usize], b: &[usize]) -> f64 {
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0.0f64; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1.0;
        }
        let comb2 = |n: f64| n * (n - 1.0) / 2.0;
        let sum_ij: f64 = table.iter().flatten().map(|&n| comb2(n)).sum();
        let sum_a: f64 = table.iter().map(|row| comb2(row.iter().sum())).sum();
        let sum_b: f64 = (0..kb)
            .map(|j| comb2(table.iter().map(|row| row[j]).sum()))
            .sum();
        let n = a.len() as f64;
        let expected = sum_a * sum_b / comb2(n);
        let max = 0.5 * (sum_a + sum_b);
        (sum_ij - expected) / (max - expected)
    }

    fn two_blobs(seed: u64) -> (Matrix, Vec<usize>) {
        // Separation ~10 sigma: unit-ish noise around means 0 and 10.
        let mut x = normal_matrix(60, 3, &mut substream(seed, "blobs"));
        let mut truth = vec![0; 60];
        for (r, t) in truth.iter_mut().enumerate().skip(30) {
            for v in x.row_mut(r) {
                *v += 10.0;
            }
            *t = 1;
        }
        (x, truth)
    }

    #[test]
    fn separated_blobs_are_recovered_for_many_seeds() {
        let (x, truth) = two_blobs(1);
        for seed in [1, 2, 3, 4, 5] {
            let r = kmeans_fit(&x, 2, seed, 100).unwrap();
            assert_eq!(ari(&r.assignments, &truth), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, _) = two_blobs(2);
        let r1 = kmeans_fit(&x, 4, 9, 100).unwrap();
        let r2 = kmeans_fit(&x, 4, 9, 100).unwrap();
        assert_eq!(r1.assignments, r2.assignments);
        assert_eq!(r1.centroids, r2.centroids);
        assert_eq!(r1.inertia, r2.inertia);
    }

    #[test]
    fn inertia_zero_when_k_equals_points() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]]);
        let r = kmeans_fit(&x, 3, 1, 50).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut sorted = r.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_points_are_handled() {
        let x = Matrix::from_vec(6, 2, vec![1.0; 12]);
        let r = kmeans_fit(&x, 3, 1, 50).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.assignments.len(), 6);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            kmeans_fit(&x, 0, 1, 10),
            Err(AnalysisError::BadClusterCount { .. })
        ));
        assert!(matches!(
            kmeans_fit(&x, 4, 1, 10),
            Err(AnalysisError::BadClusterCount { .. })
        ));
        assert!(matches!(
            kmeans_fit(&x, 2, 1, 0),
            Err(AnalysisError::BadIterationBudget)
        ));
    }

    #[test]
    fn cluster_profiles_aggregate_shares() {
        let mk = |sa: u64, n: u64| ResponsePattern {
            user_id: format!("u{sa}"),
            counts: CategoryCounts {
                strongly_agree: sa,
                agree: 0,
                neither: n,
                disagree: 0,
                strongly_disagree: 0,
            },
        };
        let patterns = vec![mk(10, 0), mk(0, 10), mk(5, 5)];
        let summaries = cluster_response_profiles(&[0, 1, 1], 3, &patterns).unwrap();
        assert_eq!(summaries[0].size, 1);
        assert_eq!(summaries[0].mean_extremity, 1.0);
        assert_eq!(summaries[1].size, 2);
        assert!((summaries[1].mean_extremity - 0.25).abs() < 1e-15);
        assert!((summaries[1].mean_neutrality - 0.75).abs() < 1e-15);
        assert_eq!(summaries[2].size, 0);
        assert!(matches!(
            cluster_response_profiles(&[0, 1], 2, &patterns),
            Err(AnalysisError::MisalignedAssignments { .. })
        ));
    }
}
