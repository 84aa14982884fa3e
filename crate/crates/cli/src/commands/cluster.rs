use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::write_many;
use crate::ClusterArgs;
use twinlab_core::analysis::{cluster_response_profiles, kmeans_fit};
use twinlab_core::vae;

pub fn cluster(run: RunConfig, args: ClusterArgs) -> Result<(), CliError> {
    let ckpt = super::checkpoint_path(&run, args.checkpoint);
    let params = super::load_checkpoint(&ckpt)?;
    let data = super::embeddings_path(&run, args.data)?;
    let patterns_file = super::patterns_path(&run, args.patterns)?;
    let ds = super::load_inputs(&data, Some(&patterns_file))?;
    let patterns = ds.patterns.as_ref().expect("patterns were loaded");

    let k = args.k_clusters.unwrap_or(run.analysis.k_clusters);
    let posteriors = vae::infer_posteriors(&params, &ds)?;
    let iters = run.analysis.kmeans_iters;

    // The fit at k is the published clustering; the sweep below it gives an
    // elbow curve for choosing k next time.
    let km = kmeans_fit(&posteriors.means, k, run.seed, iters)?;
    let mut inertia = String::from("k,inertia\n");
    for kk in 1..k {
        let fit = kmeans_fit(&posteriors.means, kk, run.seed, iters)?;
        let _ = writeln!(inertia, "{},{}", kk, fit.inertia);
    }
    let _ = writeln!(inertia, "{},{}", k, km.inertia);

    let profiles = cluster_response_profiles(&km.assignments, k, patterns)?;

    let mut assignments = String::from("user_id,cluster\n");
    for (id, c) in ds.user_ids.iter().zip(&km.assignments) {
        let _ = writeln!(assignments, "{id},{c}");
    }
    let mut clusters_json = serde_json::to_string_pretty(&profiles).expect("profiles serialize");
    clusters_json.push('\n');

    let files = [
        ("assignments.csv", assignments.into_bytes()),
        ("clusters.json", clusters_json.into_bytes()),
        ("inertia.csv", inertia.into_bytes()),
    ];
    super::announce(&write_many(&run.out, &files)?);
    Ok(())
}
