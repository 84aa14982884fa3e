use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_atomic;
use crate::ReportArgs;
use twinlab_core::baselines::{pca_fit, pca_project, BaselineError};
use twinlab_core::vae;

/// Projects every user's posterior mean onto its leading principal plane and
/// tags each with the dominant latent dimension, giving a plottable summary
/// of the learned space.
pub fn report(run: RunConfig, args: ReportArgs) -> Result<(), CliError> {
    let ckpt = super::checkpoint_path(&run, args.checkpoint);
    let params = super::load_checkpoint(&ckpt)?;
    let data = super::embeddings_path(&run, args.data)?;
    let ds = super::load_inputs(&data, None)?;
    let posteriors = vae::infer_posteriors(&params, &ds)?;

    let mut k_proj = 2
        .min(params.config.latent_dim)
        .min(ds.n_users().saturating_sub(1))
        .max(1);
    let pca = match pca_fit(&posteriors.means, k_proj) {
        Ok(m) => m,
        Err(BaselineError::RankDeficient { rank, .. }) if rank >= 1 => {
            k_proj = rank;
            pca_fit(&posteriors.means, k_proj)?
        }
        Err(BaselineError::RankDeficient { .. }) => {
            return Err(CliError::data(
                "posterior means are constant across users; nothing to project",
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let scores = pca_project(&pca, &posteriors.means)?;
    let dominant = super::dominant_dims(&posteriors.means);

    let mut csv = String::from("user_id");
    for j in 0..k_proj {
        let _ = write!(csv, ",pc{}", j + 1);
    }
    csv.push_str(",dominant_dim\n");
    for (r, id) in ds.user_ids.iter().enumerate() {
        let _ = write!(csv, "{id}");
        for v in scores.row(r) {
            let _ = write!(csv, ",{v}");
        }
        let _ = writeln!(csv, ",{}", dominant[r]);
    }

    let path = run.out.join("latent_projection.csv");
    write_atomic(&path, csv.as_bytes())?;
    super::announce(&[path]);
    Ok(())
}
