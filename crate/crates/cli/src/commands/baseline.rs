use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_many;
use crate::BaselineArgs;
use twinlab_core::baselines::{
    fa_fit, pca_fit, pca_project, pca_reconstruct, BaselineError, PcaModel,
};
use twinlab_core::data::standardize;
use twinlab_core::vae;
use twinlab_core::Matrix;

/// The leading `k` components of an already-fitted model. Slicing instead of
/// refitting keeps the error sweep consistent with one eigendecomposition.
fn leading(full: &PcaModel, k: usize) -> PcaModel {
    let d = full.components.cols();
    let mut components = Matrix::zeros(k, d);
    for j in 0..k {
        components
            .row_mut(j)
            .copy_from_slice(full.components.row(j));
    }
    PcaModel {
        mean: full.mean.clone(),
        components,
        explained_variance: full.explained_variance[..k].to_vec(),
    }
}

pub fn baseline(run: RunConfig, args: BaselineArgs) -> Result<(), CliError> {
    let data = super::embeddings_path(&run, args.data)?;
    let ds = super::load_inputs(&data, None)?;
    let x = if args.no_standardize {
        ds.embeddings.clone()
    } else {
        let (xs, s) = standardize(&ds.embeddings)?;
        if !s.degenerate.is_empty() {
            eprintln!(
                "warning: {} constant embedding column(s) carry no information and were zeroed",
                s.degenerate.len()
            );
        }
        xs
    };
    let (u, d) = (x.rows(), x.cols());

    let mut max_k = args
        .max_k
        .unwrap_or(10)
        .min(d)
        .min(u.saturating_sub(1))
        .max(1);
    let full = match pca_fit(&x, max_k) {
        Ok(m) => m,
        Err(BaselineError::RankDeficient { rank, .. }) if rank >= 1 => {
            max_k = rank;
            pca_fit(&x, max_k)?
        }
        Err(BaselineError::RankDeficient { .. }) => {
            return Err(CliError::data(
                "embeddings are constant across users; nothing to fit",
            ));
        }
        Err(e) => return Err(e.into()),
    };

    let mut pca_error = String::from("k,mse\n");
    for k in 1..=max_k {
        let m = leading(&full, k);
        let scores = pca_project(&m, &x)?;
        let rec = pca_reconstruct(&m, &scores)?;
        let mut sum = 0.0;
        for r in 0..u {
            for (a, b) in x.row(r).iter().zip(rec.row(r)) {
                let diff = a - b;
                sum += diff * diff;
            }
        }
        let _ = writeln!(pca_error, "{},{}", k, sum / (u * d) as f64);
    }

    let (_, trace) = fa_fit(&x, args.k.min(d), 100, 1e-6)?;
    let mut fa_loglik = String::from("iter,loglik\n");
    for (i, ll) in trace.iter().enumerate() {
        let _ = writeln!(fa_loglik, "{i},{ll}");
    }

    // Two-component map of the cohort. With a trained model alongside, each
    // point also gets its strongest latent dimension for eyeballing whether
    // the learned space and the principal plane agree.
    let dominant = match &args.checkpoint {
        Some(p) => {
            let params = super::load_checkpoint(p)?;
            let posteriors = vae::infer_posteriors(&params, &ds)?;
            Some(super::dominant_dims(&posteriors.means))
        }
        None => None,
    };
    let k_proj = 2.min(max_k);
    let scores = pca_project(&leading(&full, k_proj), &x)?;
    let mut projection = String::from("user_id");
    for j in 0..k_proj {
        let _ = write!(projection, ",pc{}", j + 1);
    }
    if dominant.is_some() {
        projection.push_str(",dominant_dim");
    }
    projection.push('\n');
    for (r, id) in ds.user_ids.iter().enumerate() {
        let _ = write!(projection, "{id}");
        for v in scores.row(r) {
            let _ = write!(projection, ",{v}");
        }
        if let Some(dom) = &dominant {
            let _ = write!(projection, ",{}", dom[r]);
        }
        projection.push('\n');
    }

    let files = [
        ("pca_error.csv", pca_error.into_bytes()),
        ("fa_loglik.csv", fa_loglik.into_bytes()),
        ("projection.csv", projection.into_bytes()),
    ];
    super::announce(&write_many(&run.out, &files)?);
    Ok(())
}
