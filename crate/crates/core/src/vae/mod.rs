//! Gaussian latent-variable model trained by amortized variational inference.
//!
//! The generative model places a standard normal prior on a latent code `z`
//! and decodes it through an MLP `f` to the mean of a Gaussian likelihood
//! `N(f(z), sigma^2 I)` over the observed embedding. An encoder MLP amortizes
//! inference, producing a diagonal Gaussian posterior `q(z|x) =
//! N(mu(x), diag(exp(logvar(x))))`. Training minimizes the negative evidence
//! lower bound
//!
//! ```text
//! loss = mean(-log p(x|z)) + beta * mean(KL(q(z|x) || prior))
//! ```
//!
//! with the expectation estimated by a single reparameterized sample
//! `z = mu + exp(logvar/2) * eps`, `eps ~ N(0, I)`. Posterior log-variances
//! are clamped to a configured interval, which keeps the encoder variance
//! bounded and the KL finite.
//!
//! The hierarchical variant adds a top-level code `z2` with its own amortized
//! posterior and a learned conditional prior `p(z1|z2) = N(g(z2),
//! diag(s(z2)))` over the bottom code; see [`HierParams`]. Both variants share
//! the decoder shape, the same clamping rule, and the same flat parameter
//! layout used by the optimizer and by checkpoints.
//!
//! Gradients are computed by hand in reverse mode (see `elbo_impl`); the
//! acceptance suite checks them against central finite differences.

mod checkpoint;
mod train;

pub use checkpoint::{from_bytes, load, save, to_bytes, CheckpointError, FORMAT_VERSION};
pub use train::{train, TraceRow, TrainingTrace};

use crate::data::{DataError, Standardizer, UserDataset};
use crate::matrix::Matrix;
use crate::nn::{
    self, accumulate_gradients, network_backward, network_forward, Activation, DenseLayer, NnError,
    Tape,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-dimension mean KL at or above this many nats counts as an active
/// latent dimension.
pub const ACTIVE_DIM_KL_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("input length {actual} does not match model input dim {expected}")]
    InputDim { expected: usize, actual: usize },
    #[error("non-finite input value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("latent vector length {actual} does not match latent dim {expected}")]
    LatentDim { expected: usize, actual: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("noise matrix is {actual_rows}x{actual_cols}, expected {rows}x{cols}")]
    NoiseShape {
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("training set is empty")]
    EmptyTrain,
    #[error("validation set is empty")]
    EmptyVal,
    #[error("numeric failure at epoch {epoch}, batch {batch}: {detail}")]
    Numeric {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("dataset embedding dim {actual} does not match model input dim {expected}")]
    DatasetDim { expected: usize, actual: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which generative structure to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Hierarchical,
}

/// Model and optimization hyperparameters.
///
/// `obs_noise` is the decoder likelihood variance `sigma^2`; when
/// `learn_obs_noise` is set it becomes a trained parameter (stored as
/// `ln sigma^2`) initialized from this value. `logvar_bounds` clamp every
/// posterior (and learned-prior) log-variance head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub input_dim: usize,
    pub beta: f64,
    pub obs_noise: f64,
    pub learn_obs_noise: bool,
    pub logvar_bounds: (f64, f64),
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Top-level latent width of the hierarchical variant.
    pub hier_top_dim: usize,
    /// Hidden sizes of the top-level encoder and the conditional prior net.
    pub hier_hidden: Vec<usize>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 64,
            input_dim: 384,
            beta: 1.0,
            obs_noise: 1.0,
            learn_obs_noise: false,
            logvar_bounds: (-6.0, 2.0),
            encoder_hidden: vec![256, 128],
            decoder_hidden: vec![256, 128],
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            hier_top_dim: 8,
            hier_hidden: vec![64],
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let fail = |msg: String| Err(VaeError::InvalidConfig(msg));
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1".into());
        }
        if self.input_dim == 0 {
            return fail("input_dim must be at least 1".into());
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return fail(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            ));
        }
        if !(self.obs_noise.is_finite() && self.obs_noise > 0.0) {
            return fail(format!(
                "obs_noise must be finite and positive, got {}",
                self.obs_noise
            ));
        }
        let (lo, hi) = self.logvar_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return fail(format!(
                "logvar_bounds must be a finite interval, got ({lo}, {hi})"
            ));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return fail("hidden layer sizes must be positive".into());
        }
        if self.hier_hidden.contains(&0) {
            return fail("hier_hidden sizes must be positive".into());
        }
        if self.hier_top_dim == 0 {
            return fail("hier_top_dim must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

/// Parameters of the top-level code in the hierarchical variant.
///
/// `top_encoder` amortizes `q(z2|x)`; `prior_net` maps a sampled `z2` to the
/// mean and log-variance of the conditional prior over the bottom code.
#[derive(Debug, Clone, PartialEq)]
pub struct HierParams {
    pub top_encoder: Vec<DenseLayer>,
    pub prior_net: Vec<DenseLayer>,
}

/// A trained (or freshly initialized) model.
///
/// The encoder's final layer emits `[mu | logvar]` of the bottom posterior;
/// the decoder maps a latent sample back to embedding space. When the model
/// was trained on standardized data, the fitted [`Standardizer`] rides along
/// so that inference can be run directly on raw embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: VaeConfig,
    pub variant: Variant,
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
    pub hier: Option<HierParams>,
    /// `ln sigma^2` when the observation noise is learned.
    pub log_obs_noise: Option<f64>,
    pub standardizer: Option<Standardizer>,
}

fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        dims.push((prev, h));
        prev = h;
    }
    dims.push((prev, output));
    dims
}

fn glorot_mlp<R: Rng>(
    input: usize,
    hidden: &[usize],
    output: usize,
    rng: &mut R,
) -> Vec<DenseLayer> {
    let dims = mlp_dims(input, hidden, output);
    let last = dims.len() - 1;
    dims.iter()
        .enumerate()
        .map(|(i, &(inp, out))| {
            let act = if i == last {
                Activation::Linear
            } else {
                Activation::Tanh
            };
            DenseLayer::glorot(inp, out, act, rng)
        })
        .collect()
}

impl ModelParams {
    /// Fresh Glorot-initialized model. Hidden layers use tanh, output heads
    /// are linear. Draw order: encoder, decoder, then (hierarchical only)
    /// top encoder and prior net.
    pub fn new<R: Rng>(config: VaeConfig, variant: Variant, rng: &mut R) -> Result<Self, VaeError> {
        config.validate()?;
        let k = config.latent_dim;
        let d = config.input_dim;
        let encoder = glorot_mlp(d, &config.encoder_hidden, 2 * k, rng);
        let decoder = glorot_mlp(k, &config.decoder_hidden, d, rng);
        let hier = match variant {
            Variant::Standard => None,
            Variant::Hierarchical => Some(HierParams {
                top_encoder: glorot_mlp(d, &config.hier_hidden, 2 * config.hier_top_dim, rng),
                prior_net: glorot_mlp(config.hier_top_dim, &config.hier_hidden, 2 * k, rng),
            }),
        };
        let log_obs_noise = config.learn_obs_noise.then(|| config.obs_noise.ln());
        Ok(ModelParams {
            config,
            variant,
            encoder,
            decoder,
            hier,
            log_obs_noise,
            standardizer: None,
        })
    }

    /// Current decoder likelihood variance `sigma^2`.
    pub fn sigma2(&self) -> f64 {
        self.log_obs_noise.map_or(self.config.obs_noise, f64::exp)
    }

    /// Number of latent noise columns a batch needs: bottom dims plus top
    /// dims for the hierarchical variant.
    pub fn noise_dim(&self) -> usize {
        match self.variant {
            Variant::Standard => self.config.latent_dim,
            Variant::Hierarchical => self.config.latent_dim + self.config.hier_top_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = nn::layers_param_count(&self.encoder) + nn::layers_param_count(&self.decoder);
        if let Some(h) = &self.hier {
            n += nn::layers_param_count(&h.top_encoder) + nn::layers_param_count(&h.prior_net);
        }
        if self.log_obs_noise.is_some() {
            n += 1;
        }
        n
    }

    /// Flat parameter vector: encoder, decoder, hierarchical nets, then the
    /// learned observation noise. This layout is shared by the optimizer,
    /// gradient buffers, and the checkpoint payload.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        nn::flatten_layers(&self.encoder, &mut flat);
        nn::flatten_layers(&self.decoder, &mut flat);
        if let Some(h) = &self.hier {
            nn::flatten_layers(&h.top_encoder, &mut flat);
            nn::flatten_layers(&h.prior_net, &mut flat);
        }
        if let Some(s) = self.log_obs_noise {
            flat.push(s);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), VaeError> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(NnError::FlatLength {
                expected,
                actual: flat.len(),
            }
            .into());
        }
        let mut off = 0;
        nn::unflatten_layers(&mut self.encoder, flat, &mut off)?;
        nn::unflatten_layers(&mut self.decoder, flat, &mut off)?;
        if let Some(h) = &mut self.hier {
            nn::unflatten_layers(&mut h.top_encoder, flat, &mut off)?;
            nn::unflatten_layers(&mut h.prior_net, flat, &mut off)?;
        }
        if self.log_obs_noise.is_some() {
            self.log_obs_noise = Some(flat[off]);
        }
        Ok(())
    }

    /// Posterior mean and clamped log-variance of the bottom code for one
    /// (already standardized) embedding.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
        check_input(x, self.config.input_dim)?;
        let (mu, lv, _, _) = encode_traced(
            &self.encoder,
            x,
            self.config.latent_dim,
            self.config.logvar_bounds,
        )?;
        Ok((mu, lv))
    }

    /// Decoder mean for a latent code.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, VaeError> {
        if z.len() != self.config.latent_dim {
            return Err(VaeError::LatentDim {
                expected: self.config.latent_dim,
                actual: z.len(),
            });
        }
        let (out, _) = network_forward(&self.decoder, z)?;
        Ok(out)
    }
}

fn check_input(x: &[f64], dim: usize) -> Result<(), VaeError> {
    if x.len() != dim {
        return Err(VaeError::InputDim {
            expected: dim,
            actual: x.len(),
        });
    }
    if let Some(col) = x.iter().position(|v| !v.is_finite()) {
        return Err(VaeError::NonFiniteInput { row: 0, col });
    }
    Ok(())
}

/// `z = mu + exp(logvar/2) * eps`, elementwise.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    debug_assert!(mu.len() == logvar.len() && mu.len() == eps.len());
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Per-dimension `KL(N(mu, e^lv) || N(0, 1)) = 0.5 (mu^2 + e^lv - 1 - lv)`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> Vec<f64> {
    debug_assert_eq!(mu.len(), logvar.len());
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .collect()
}

/// Per-dimension KL between diagonal Gaussians `q = N(mu_q, e^lv_q)` and
/// `p = N(mu_p, e^lv_p)`:
/// `0.5 (lv_p - lv_q) + (e^lv_q + (mu_q - mu_p)^2) / (2 e^lv_p) - 0.5`.
pub fn kl_diag_gaussians(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64]) -> Vec<f64> {
    debug_assert!(mu_q.len() == lv_q.len() && mu_q.len() == mu_p.len() && mu_q.len() == lv_p.len());
    let mut out = Vec::with_capacity(mu_q.len());
    for i in 0..mu_q.len() {
        let dm = mu_q[i] - mu_p[i];
        out.push(
            0.5 * (lv_p[i] - lv_q[i]) + (lv_q[i].exp() + dm * dm) / (2.0 * lv_p[i].exp()) - 0.5,
        );
    }
    out
}

/// `log N(x | xhat, sigma2 I)`, summed over dimensions in index order.
pub fn gaussian_log_likelihood(x: &[f64], xhat: &[f64], sigma2: f64) -> f64 {
    debug_assert_eq!(x.len(), xhat.len());
    debug_assert!(sigma2 > 0.0);
    let mut sq = 0.0;
    for (a, b) in x.iter().zip(xhat) {
        let d = a - b;
        sq += d * d;
    }
    let d = x.len() as f64;
    -0.5 * d * (2.0 * std::f64::consts::PI * sigma2).ln() - sq / (2.0 * sigma2)
}

/// Clamps log-variances into `bounds`; `mask[i]` is true where the raw value
/// fell outside and gradients must not flow.
fn clamp_logvar(lv: &mut [f64], bounds: (f64, f64)) -> Vec<bool> {
    let (lo, hi) = bounds;
    lv.iter_mut()
        .map(|v| {
            if *v < lo {
                *v = lo;
                true
            } else if *v > hi {
                *v = hi;
                true
            } else {
                false
            }
        })
        .collect()
}

type Traced = (Vec<f64>, Vec<f64>, Vec<bool>, Tape);

/// Forward through a `[mu | logvar]`-headed network with logvar clamping.
fn encode_traced(
    layers: &[DenseLayer],
    x: &[f64],
    k: usize,
    bounds: (f64, f64),
) -> Result<Traced, VaeError> {
    let (out, tape) = network_forward(layers, x)?;
    debug_assert_eq!(out.len(), 2 * k);
    let mu = out[..k].to_vec();
    let mut lv = out[k..].to_vec();
    let mask = clamp_logvar(&mut lv, bounds);
    Ok((mu, lv, mask, tape))
}

/// Loss components of one batch, each averaged over the batch.
///
/// `loss = recon + beta * kl` holds exactly; `kl` is the total KL (bottom
/// plus top level), `per_dim_kl` covers the bottom code only, and `kl_top`
/// is zero for the standard variant.
#[derive(Debug, Clone)]
pub struct ElboTerms {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub kl_top: f64,
    pub per_dim_kl: Vec<f64>,
}

fn check_batch(params: &ModelParams, batch: &Matrix, eps: &Matrix) -> Result<(), VaeError> {
    if batch.rows() == 0 {
        return Err(VaeError::EmptyBatch);
    }
    if batch.cols() != params.config.input_dim {
        return Err(VaeError::InputDim {
            expected: params.config.input_dim,
            actual: batch.cols(),
        });
    }
    if let Some((row, col)) = batch.first_non_finite() {
        return Err(VaeError::NonFiniteInput { row, col });
    }
    let want = params.noise_dim();
    if eps.rows() != batch.rows() || eps.cols() != want {
        return Err(VaeError::NoiseShape {
            rows: batch.rows(),
            cols: want,
            actual_rows: eps.rows(),
            actual_cols: eps.cols(),
        });
    }
    Ok(())
}

/// Batch loss terms with a single reparameterized sample per row.
///
/// `eps` must be `batch.rows() x noise_dim()`: the bottom-code noise, then
/// (hierarchical only) the top-code noise.
pub fn elbo_batch(
    params: &ModelParams,
    batch: &Matrix,
    eps: &Matrix,
    beta: f64,
) -> Result<ElboTerms, VaeError> {
    elbo_impl(params, batch, eps, beta, None)
}

/// Like [`elbo_batch`] but also returns the loss gradient over the flat
/// parameter vector (layout of [`ModelParams::to_flat`]).
pub fn elbo_with_gradients(
    params: &ModelParams,
    batch: &Matrix,
    eps: &Matrix,
    beta: f64,
) -> Result<(ElboTerms, Vec<f64>), VaeError> {
    let mut grads = vec![0.0; params.param_count()];
    let terms = elbo_impl(params, batch, eps, beta, Some(&mut grads))?;
    Ok((terms, grads))
}

/// Shared forward (and optional backward) pass so that reported losses and
/// gradients can never disagree.
///
/// Backward chain per sample: the reconstruction term feeds the decoder with
/// `d xhat = (xhat - x) / sigma^2`; the decoder's input gradient flows into
/// the posterior mean directly and into the log-variance through
/// `dz/dlv = 0.5 exp(lv/2) eps`; KL partials are added analytically; clamped
/// log-variance coordinates pass no gradient. Everything is accumulated
/// sample by sample in row order, then scaled by `1/n`.
fn elbo_impl(
    params: &ModelParams,
    batch: &Matrix,
    eps: &Matrix,
    beta: f64,
    mut grads: Option<&mut [f64]>,
) -> Result<ElboTerms, VaeError> {
    check_batch(params, batch, eps)?;
    let k = params.config.latent_dim;
    let bounds = params.config.logvar_bounds;
    let sigma2 = params.sigma2();
    let n = batch.rows();
    let nf = n as f64;

    let enc_len = nn::layers_param_count(&params.encoder);
    let dec_len = nn::layers_param_count(&params.decoder);
    let (top_len, prior_len) = params
        .hier
        .as_ref()
        .map(|h| {
            (
                nn::layers_param_count(&h.top_encoder),
                nn::layers_param_count(&h.prior_net),
            )
        })
        .unwrap_or((0, 0));

    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut kl_top_sum = 0.0;
    let mut per_dim = vec![0.0; k];

    for r in 0..n {
        let x = batch.row(r);
        let eps_row = eps.row(r);
        let (eps1, eps2) = eps_row.split_at(k);

        let (mu1, lv1, mask1, enc_tape) = encode_traced(&params.encoder, x, k, bounds)?;

        // Bottom-code prior: standard normal, or the learned conditional
        // prior evaluated at a sampled top code.
        let hier_pass = match (&params.hier, params.variant) {
            (Some(h), Variant::Hierarchical) => {
                let (mu2, lv2, mask2, top_tape) =
                    encode_traced(&h.top_encoder, x, params.config.hier_top_dim, bounds)?;
                let z2 = reparameterize(&mu2, &lv2, eps2);
                let (mu_p, lv_p, mask_p, prior_tape) = encode_traced(&h.prior_net, &z2, k, bounds)?;
                Some((
                    mu2, lv2, mask2, top_tape, z2, mu_p, lv_p, mask_p, prior_tape,
                ))
            }
            _ => None,
        };

        let z1 = reparameterize(&mu1, &lv1, eps1);
        let (xhat, dec_tape) = network_forward(&params.decoder, &z1)?;
        let ll = gaussian_log_likelihood(x, &xhat, sigma2);
        recon_sum += -ll;

        let (kl_bottom, kl_top) = match &hier_pass {
            Some((mu2, lv2, _, _, _, mu_p, lv_p, _, _)) => (
                kl_diag_gaussians(&mu1, &lv1, mu_p, lv_p),
                kl_standard_normal(mu2, lv2),
            ),
            None => (kl_standard_normal(&mu1, &lv1), Vec::new()),
        };
        let bottom_total: f64 = kl_bottom.iter().sum();
        let top_total: f64 = kl_top.iter().sum();
        kl_sum += bottom_total + top_total;
        kl_top_sum += top_total;
        for (acc, v) in per_dim.iter_mut().zip(&kl_bottom) {
            *acc += v;
        }

        let Some(g) = grads.as_mut() else { continue };

        let d_xhat: Vec<f64> = xhat
            .iter()
            .zip(x)
            .map(|(&h, &xv)| (h - xv) / sigma2)
            .collect();
        let dec_grads = network_backward(&params.decoder, &dec_tape, &d_xhat)?;
        accumulate_gradients(&mut g[enc_len..enc_len + dec_len], &dec_grads);
        let dz1 = dec_grads.input;

        let mut d_head = vec![0.0; 2 * k];
        match &hier_pass {
            None => {
                for i in 0..k {
                    d_head[i] = dz1[i] + beta * mu1[i];
                    if !mask1[i] {
                        d_head[k + i] = dz1[i] * 0.5 * (0.5 * lv1[i]).exp() * eps1[i]
                            + beta * 0.5 * (lv1[i].exp() - 1.0);
                    }
                }
            }
            Some((mu2, lv2, mask2, top_tape, _z2, mu_p, lv_p, mask_p, prior_tape)) => {
                // Bottom posterior head against the conditional prior.
                for i in 0..k {
                    let inv_vp = (-lv_p[i]).exp();
                    d_head[i] = dz1[i] + beta * (mu1[i] - mu_p[i]) * inv_vp;
                    if !mask1[i] {
                        d_head[k + i] = dz1[i] * 0.5 * (0.5 * lv1[i]).exp() * eps1[i]
                            + beta * 0.5 * (lv1[i].exp() * inv_vp - 1.0);
                    }
                }
                // Prior-net head; its input gradient flows back into z2.
                let k2 = params.config.hier_top_dim;
                let mut d_prior = vec![0.0; 2 * k];
                for i in 0..k {
                    let inv_vp = (-lv_p[i]).exp();
                    let dm = mu1[i] - mu_p[i];
                    d_prior[i] = beta * (mu_p[i] - mu1[i]) * inv_vp;
                    if !mask_p[i] {
                        d_prior[k + i] = beta * (0.5 - (lv1[i].exp() + dm * dm) * inv_vp * 0.5);
                    }
                }
                let hier = params.hier.as_ref().unwrap();
                let prior_grads = network_backward(&hier.prior_net, prior_tape, &d_prior)?;
                let prior_off = enc_len + dec_len + top_len;
                accumulate_gradients(&mut g[prior_off..prior_off + prior_len], &prior_grads);
                let dz2 = prior_grads.input;

                let mut d_top = vec![0.0; 2 * k2];
                for i in 0..k2 {
                    d_top[i] = dz2[i] + beta * mu2[i];
                    if !mask2[i] {
                        d_top[k2 + i] = dz2[i] * 0.5 * (0.5 * lv2[i]).exp() * eps2[i]
                            + beta * 0.5 * (lv2[i].exp() - 1.0);
                    }
                }
                let top_grads = network_backward(&hier.top_encoder, top_tape, &d_top)?;
                let top_off = enc_len + dec_len;
                accumulate_gradients(&mut g[top_off..top_off + top_len], &top_grads);
            }
        }
        let enc_grads = network_backward(&params.encoder, &enc_tape, &d_head)?;
        accumulate_gradients(&mut g[..enc_len], &enc_grads);

        if params.log_obs_noise.is_some() {
            // d(-ll)/d(ln sigma^2) = D/2 - r / (2 sigma^2), r = sum residual^2.
            let mut r_sq = 0.0;
            for (a, b) in x.iter().zip(&xhat) {
                let d = a - b;
                r_sq += d * d;
            }
            let d = params.config.input_dim as f64;
            let last = g.len() - 1;
            g[last] += 0.5 * d - r_sq / (2.0 * sigma2);
        }
    }

    if let Some(g) = grads {
        for v in g.iter_mut() {
            *v /= nf;
        }
    }
    let recon = recon_sum / nf;
    let kl = kl_sum / nf;
    for v in per_dim.iter_mut() {
        *v /= nf;
    }
    Ok(ElboTerms {
        loss: recon + beta * kl,
        recon,
        kl,
        kl_top: kl_top_sum / nf,
        per_dim_kl: per_dim,
    })
}

/// Bottom-code posteriors of a whole dataset.
///
/// Deterministic: no latent sampling is involved, so repeated calls agree
/// bit for bit.
#[derive(Debug, Clone)]
pub struct PosteriorSet {
    pub user_ids: Vec<String>,
    /// `U x K` posterior means.
    pub means: Matrix,
    /// `U x K` posterior standard deviations, `exp(logvar / 2)`.
    pub stddevs: Matrix,
}

/// Encodes every user. If the model carries a [`Standardizer`], raw
/// embeddings are standardized with the stored training statistics first.
pub fn infer_posteriors(
    params: &ModelParams,
    dataset: &UserDataset,
) -> Result<PosteriorSet, VaeError> {
    let x = prepared_embeddings(params, dataset)?;
    let k = params.config.latent_dim;
    let mut means = Matrix::zeros(x.rows(), k);
    let mut stds = Matrix::zeros(x.rows(), k);
    for r in 0..x.rows() {
        let (mu, lv) = params.encode(x.row(r))?;
        means.row_mut(r).copy_from_slice(&mu);
        for (dst, l) in stds.row_mut(r).iter_mut().zip(&lv) {
            *dst = (0.5 * l).exp();
        }
    }
    Ok(PosteriorSet {
        user_ids: dataset.user_ids.clone(),
        means,
        stddevs: stds,
    })
}

fn prepared_embeddings(params: &ModelParams, dataset: &UserDataset) -> Result<Matrix, VaeError> {
    if dataset.embeddings.cols() != params.config.input_dim {
        return Err(VaeError::DatasetDim {
            expected: params.config.input_dim,
            actual: dataset.embeddings.cols(),
        });
    }
    match &params.standardizer {
        Some(s) => Ok(s.apply(&dataset.embeddings)?),
        None => Ok(dataset.embeddings.clone()),
    }
}

/// Deterministic goodness-of-fit metrics over a dataset.
///
/// Reconstruction uses the posterior mean as the latent code (no sampling);
/// KL terms are closed form. `loss` is therefore a deterministic analogue of
/// the training objective, not a stochastic ELBO estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    pub n_users: usize,
    pub recon_mse: f64,
    pub neg_log_lik: f64,
    pub kl: f64,
    pub kl_top: f64,
    pub loss: f64,
    pub per_dim_kl: Vec<f64>,
    pub active_dims: usize,
    pub sigma2: f64,
}

pub fn evaluate(params: &ModelParams, dataset: &UserDataset) -> Result<EvalMetrics, VaeError> {
    let x = prepared_embeddings(params, dataset)?;
    if x.rows() == 0 {
        return Err(VaeError::EmptyBatch);
    }
    let k = params.config.latent_dim;
    let sigma2 = params.sigma2();
    let bounds = params.config.logvar_bounds;
    let mut mse_sum = 0.0;
    let mut nll_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut kl_top_sum = 0.0;
    let mut per_dim = vec![0.0; k];
    for r in 0..x.rows() {
        let row = x.row(r);
        let (mu1, lv1) = params.encode(row)?;
        let xhat = params.decode(&mu1)?;
        let mut sq = 0.0;
        for (a, b) in row.iter().zip(&xhat) {
            let d = a - b;
            sq += d * d;
        }
        mse_sum += sq / row.len() as f64;
        nll_sum += -gaussian_log_likelihood(row, &xhat, sigma2);
        let (kl_bottom, kl_top) = match (&params.hier, params.variant) {
            (Some(h), Variant::Hierarchical) => {
                let (mu2, lv2, _, _) =
                    encode_traced(&h.top_encoder, row, params.config.hier_top_dim, bounds)?;
                // Mean top code stands in for a sample; keeps eval deterministic.
                let (mu_p, lv_p, _, _) = encode_traced(&h.prior_net, &mu2, k, bounds)?;
                (
                    kl_diag_gaussians(&mu1, &lv1, &mu_p, &lv_p),
                    kl_standard_normal(&mu2, &lv2),
                )
            }
            _ => (kl_standard_normal(&mu1, &lv1), Vec::new()),
        };
        kl_sum += kl_bottom.iter().sum::<f64>() + kl_top.iter().sum::<f64>();
        kl_top_sum += kl_top.iter().sum::<f64>();
        for (acc, v) in per_dim.iter_mut().zip(&kl_bottom) {
            *acc += v;
        }
    }
    let nf = x.rows() as f64;
    for v in per_dim.iter_mut() {
        *v /= nf;
    }
    let active_dims = per_dim
        .iter()
        .filter(|&&v| v >= ACTIVE_DIM_KL_THRESHOLD)
        .count();
    let neg_log_lik = nll_sum / nf;
    let kl = kl_sum / nf;
    Ok(EvalMetrics {
        n_users: x.rows(),
        recon_mse: mse_sum / nf,
        neg_log_lik,
        kl,
        kl_top: kl_top_sum / nf,
        loss: neg_log_lik + params.config.beta * kl,
        per_dim_kl: per_dim,
        active_dims,
        sigma2,
    })
}
