//! Synthetic cohort generator with one planted behavioral trait.
//!
//! Each user gets latent traits t ~ N(0, I). One designated trait shifts
//! the log-odds of answering at the scale's extremes: per response the
//! category weights are `[e^s, 1, e^(-s), 1, e^s]` over (strongly agree,
//! agree, neither, disagree, strongly disagree) with
//! s = trait_effect * t[extremity_trait_index], so a positive trait moves
//! mass from "neither" to both "strongly" categories symmetrically. The
//! user's embedding is a fixed random linear mix of their traits and
//! category frequencies plus Gaussian noise, which keeps the planted trait
//! linearly decodable from the embedding.

use serde::{Deserialize, Serialize};

use super::{DataError, UserDataset};
use crate::analysis::{Category, CategoryCounts, ResponsePattern};
use crate::matrix::Matrix;
use crate::rng::{normal_matrix, substream};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_questions: usize,
    pub embed_dim: usize,
    pub n_traits: usize,
    pub extremity_trait_index: usize,
    pub trait_effect: f64,
    pub noise_sd: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            n_questions: 100,
            embed_dim: 64,
            n_traits: 5,
            extremity_trait_index: 0,
            trait_effect: 2.0,
            noise_sd: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |detail: &str| Err(DataError::BadSynthConfig(detail.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if self.n_questions == 0 {
            return bad("n_questions must be positive");
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive");
        }
        if self.n_traits == 0 {
            return bad("n_traits must be positive");
        }
        if self.extremity_trait_index >= self.n_traits {
            return bad("extremity_trait_index must be < n_traits");
        }
        if !self.trait_effect.is_finite() {
            return bad("trait_effect must be finite");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be finite and >= 0");
        }
        Ok(())
    }
}

/// Draws one category from the extremity-shifted 5-point distribution.
fn draw_category<R: Rng>(weights: &[f64; 5], total: f64, rng: &mut R) -> Category {
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if cum > target {
            return Category::ALL[i];
        }
    }
    Category::ALL[4]
}

/// Generates a full synthetic dataset. Identical config and seed give a
/// byte-identical dataset; all randomness comes from "synth/*" substreams of
/// `seed`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<UserDataset, DataError> {
    config.validate()?;
    let u = config.n_users;
    let t = config.n_traits;
    let d = config.embed_dim;

    let traits = normal_matrix(u, t, &mut substream(seed, "synth/traits"));

    let mut response_rng = substream(seed, "synth/responses");
    let mut patterns = Vec::with_capacity(u);
    let mut user_ids = Vec::with_capacity(u);
    for i in 0..u {
        let s = config.trait_effect * traits[(i, config.extremity_trait_index)];
        let es = s.exp();
        let weights = [es, 1.0, (-s).exp(), 1.0, es];
        let total: f64 = weights.iter().sum();
        let mut counts = CategoryCounts::default();
        for _ in 0..config.n_questions {
            counts.add(draw_category(&weights, total, &mut response_rng));
        }
        let user_id = format!("user_{i:05}");
        patterns.push(ResponsePattern {
            user_id: user_id.clone(),
            counts,
        });
        user_ids.push(user_id);
    }

    // Mixing matrix rows are unit-normalized so noise_sd is directly
    // comparable to the signal scale.
    let h_dim = t + 5;
    let mut mixing = normal_matrix(d, h_dim, &mut substream(seed, "synth/mixing"));
    for r in 0..d {
        let norm = mixing.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in mixing.row_mut(r) {
                *v /= norm;
            }
        }
    }
    let eta = normal_matrix(u, d, &mut substream(seed, "synth/noise"));

    let nq = config.n_questions as f64;
    let mut embeddings = Matrix::zeros(u, d);
    for i in 0..u {
        let mut h = Vec::with_capacity(h_dim);
        h.extend_from_slice(traits.row(i));
        for c in Category::ALL {
            h.push(patterns[i].counts.get(c) as f64 / nq);
        }
        for j in 0..d {
            let mut acc = 0.0;
            for (a, hv) in mixing.row(j).iter().zip(&h) {
                acc += a * hv;
            }
            embeddings[(i, j)] = acc + config.noise_sd * eta[(i, j)];
        }
    }

    let ds = UserDataset {
        user_ids,
        embeddings,
        patterns: Some(patterns),
        ground_truth_traits: Some(traits),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::jacobi_eigen;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma: f64 = a.iter().sum::<f64>() / n;
        let mb: f64 = b.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        num / (va.sqrt() * vb.sqrt())
    }

    fn extremity_scores(ds: &UserDataset) -> Vec<f64> {
        ds.patterns
            .as_ref()
            .unwrap()
            .iter()
            .map(|p| p.counts.extremity())
            .collect()
    }

    #[test]
    fn counts_sum_to_n_questions() {
        let config = SynthConfig {
            n_users: 40,
            n_questions: 23,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&config, 1).unwrap();
        for p in ds.patterns.as_ref().unwrap() {
            assert_eq!(p.counts.total(), 23);
        }
        assert_eq!(ds.n_users(), 40);
        assert_eq!(ds.embed_dim(), 64);
        assert_eq!(ds.ground_truth_traits.as_ref().unwrap().cols(), 5);
    }

    #[test]
    fn generator_is_deterministic() {
        let config = SynthConfig {
            n_users: 30,
            ..SynthConfig::default()
        };
        let a = synth_generate(&config, 7).unwrap();
        let b = synth_generate(&config, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&config, 8).unwrap();
        assert_ne!(a.embeddings, c.embeddings);
    }

    #[test]
    fn zero_effect_decouples_trait_from_extremity() {
        let config = SynthConfig {
            trait_effect: 0.0,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&config, 2).unwrap();
        let trait0 = ds.ground_truth_traits.as_ref().unwrap().column(0);
        let r = pearson(&trait0, &extremity_scores(&ds));
        assert!(r.abs() < 0.1, "r = {r}");
    }

    #[test]
    fn default_effect_couples_trait_to_extremity() {
        let ds = synth_generate(&SynthConfig::default(), 3).unwrap();
        let trait0 = ds.ground_truth_traits.as_ref().unwrap().column(0);
        let r = pearson(&trait0, &extremity_scores(&ds));
        assert!(r > 0.5, "r = {r}");
    }

    /// The planted trait must be linearly decodable from the embeddings,
    /// otherwise downstream recovery failures would be the generator's
    /// fault. Least squares via eigendecomposition of the Gram matrix.
    #[test]
    fn planted_trait_is_linearly_decodable() {
        let ds = synth_generate(&SynthConfig::default(), 4).unwrap();
        let x = &ds.embeddings;
        let y = ds.ground_truth_traits.as_ref().unwrap().column(0);
        let (n, d) = (x.rows(), x.cols());
        let ym: f64 = y.iter().sum::<f64>() / n as f64;
        let xm: Vec<f64> = (0..d)
            .map(|j| x.column(j).iter().sum::<f64>() / n as f64)
            .collect();

        let mut gram = Matrix::zeros(d, d);
        let mut xty = vec![0.0; d];
        for (i, &yi) in y.iter().enumerate() {
            let row = x.row(i);
            for a in 0..d {
                let da = row[a] - xm[a];
                xty[a] += da * (yi - ym);
                for b in a..d {
                    gram[(a, b)] += da * (row[b] - xm[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let eig = jacobi_eigen(&gram).unwrap();
        let mut beta = vec![0.0; d];
        for (k, &lambda) in eig.values.iter().enumerate() {
            if lambda <= 1e-10 * eig.values[0] {
                continue;
            }
            let v = eig.vectors.row(k);
            let proj: f64 = v.iter().zip(&xty).map(|(a, b)| a * b).sum();
            let scale = proj / lambda;
            for (bi, vi) in beta.iter_mut().zip(v) {
                *bi += scale * vi;
            }
        }
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let row = x.row(i);
            let mut pred = 0.0;
            for a in 0..d {
                pred += beta[a] * (row[a] - xm[a]);
            }
            let resid = (yi - ym) - pred;
            ss_res += resid * resid;
            ss_tot += (yi - ym) * (yi - ym);
        }
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 > 0.3, "R^2 = {r2}");
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = SynthConfig {
            extremity_trait_index: 5,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_generate(&bad, 1),
            Err(DataError::BadSynthConfig(_))
        ));
        let bad = SynthConfig {
            noise_sd: -1.0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&bad, 1).is_err());
        let bad = SynthConfig {
            n_users: 0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&bad, 1).is_err());
    }
}
