//! Minibatch training loop with a per-epoch evaluation trace.

use super::{elbo_batch, elbo_with_gradients, ModelParams, VaeConfig, VaeError, Variant};
use crate::matrix::Matrix;
use crate::nn::AdamState;
use crate::rng::{normal_matrix, substream};
use rand::seq::SliceRandom;

/// One epoch of the trace. `train_loss`/`val_loss` are full-set objective
/// values; `recon` and `kl` are the training-set components.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Per-epoch training history.
///
/// Rows are computed after each epoch from a full pass over the train and
/// validation sets, using noise matrices drawn once per run. That makes the
/// trace a pure function of the parameters: with learning rate zero every
/// row repeats exactly, and reruns with the same seed are bit-identical.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    /// Training-set mean KL per bottom latent dimension, one entry per epoch.
    pub per_dim_kl: Vec<Vec<f64>>,
}

impl TrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,recon,kl\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.recon, r.kl
            ));
        }
        s
    }

    pub fn per_dim_kl_csv(&self) -> String {
        let mut s = String::from("epoch,dim,kl\n");
        for (row, kls) in self.rows.iter().zip(&self.per_dim_kl) {
            for (dim, v) in kls.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", row.epoch, dim, v));
            }
        }
        s
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.val_loss)
    }

    /// Mean KL per dimension at the final epoch.
    pub fn final_per_dim_kl(&self) -> Option<&[f64]> {
        self.per_dim_kl.last().map(Vec::as_slice)
    }
}

fn check_set(x: &Matrix, dim: usize, empty_err: VaeError) -> Result<(), VaeError> {
    if x.rows() == 0 {
        return Err(empty_err);
    }
    if x.cols() != dim {
        return Err(VaeError::InputDim {
            expected: dim,
            actual: x.cols(),
        });
    }
    if let Some((row, col)) = x.first_non_finite() {
        return Err(VaeError::NonFiniteInput { row, col });
    }
    Ok(())
}

fn gather_rows(src: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), src.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(src.row(i));
    }
    out
}

/// Trains a fresh model on `train_set`, tracking `val_set` once per epoch.
///
/// Both sets must already be standardized consistently (the CLI attaches the
/// fitted standardizer to the returned model afterwards). Randomness comes
/// from four named substreams of `seed`: "init" (weights), "train-shuffle"
/// (epoch order), "noise" (reparameterization draws), and "eval-noise"
/// (the fixed trace-evaluation draws).
pub fn train(
    config: &VaeConfig,
    variant: Variant,
    seed: u64,
    train_set: &Matrix,
    val_set: &Matrix,
) -> Result<(ModelParams, TrainingTrace), VaeError> {
    config.validate()?;
    check_set(train_set, config.input_dim, VaeError::EmptyTrain)?;
    check_set(val_set, config.input_dim, VaeError::EmptyVal)?;

    let mut params = ModelParams::new(config.clone(), variant, &mut substream(seed, "init"))?;
    let noise_dim = params.noise_dim();

    let mut eval_rng = substream(seed, "eval-noise");
    let eps_train_eval = normal_matrix(train_set.rows(), noise_dim, &mut eval_rng);
    let eps_val_eval = normal_matrix(val_set.rows(), noise_dim, &mut eval_rng);

    let mut shuffle_rng = substream(seed, "train-shuffle");
    let mut noise_rng = substream(seed, "noise");
    let mut adam = AdamState::new(params.param_count(), config.learning_rate);
    let mut flat = params.to_flat();
    let mut indices: Vec<usize> = (0..train_set.rows()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 1..=config.epochs {
        indices.shuffle(&mut shuffle_rng);
        for (b, chunk) in indices.chunks(config.batch_size).enumerate() {
            let batch = gather_rows(train_set, chunk);
            let eps = normal_matrix(chunk.len(), noise_dim, &mut noise_rng);
            let (terms, grads) = elbo_with_gradients(&params, &batch, &eps, config.beta)?;
            if !terms.loss.is_finite() {
                return Err(VaeError::Numeric {
                    epoch,
                    batch: b,
                    detail: format!("objective became {}", terms.loss),
                });
            }
            adam.step(&mut flat, &grads)
                .map_err(|e| VaeError::Numeric {
                    epoch,
                    batch: b,
                    detail: e.to_string(),
                })?;
            params.set_flat(&flat)?;
        }
        let t_train = elbo_batch(&params, train_set, &eps_train_eval, config.beta)?;
        let t_val = elbo_batch(&params, val_set, &eps_val_eval, config.beta)?;
        trace.rows.push(TraceRow {
            epoch,
            train_loss: t_train.loss,
            val_loss: t_val.loss,
            recon: t_train.recon,
            kl: t_train.kl,
        });
        trace.per_dim_kl.push(t_train.per_dim_kl);
    }
    Ok((params, trace))
}
