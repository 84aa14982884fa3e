use std::fmt::Write as _;

use serde_json::json;

use crate::config::{parse_dims, RunConfig};
use crate::error::CliError;
use crate::output::write_many;
use crate::InterpretArgs;
use twinlab_core::analysis::{
    build_dimension_report, cluster_response_profiles, dimension_importance, kmeans_fit,
    DimensionImportance, TestResult,
};
use twinlab_core::vae;

fn importance_csv(importance: &[DimensionImportance]) -> String {
    let mut s = String::from("dim,variance,range,variance_rank,range_rank\n");
    for i in importance {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i.dim, i.variance, i.range, i.variance_rank, i.range_rank
        );
    }
    s
}

fn tests_csv<'a>(tests: impl Iterator<Item = &'a TestResult>) -> String {
    let mut s = String::from("dim,category,mean_diff,u,p,p_corrected,d,n_high,n_low\n");
    for t in tests {
        let d = t.d.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            t.dim,
            t.category.as_str(),
            t.mean_diff,
            t.u,
            t.p,
            t.p_corrected,
            d,
            t.n_high,
            t.n_low
        );
    }
    s
}

pub fn interpret(run: RunConfig, args: InterpretArgs) -> Result<(), CliError> {
    let ckpt = super::checkpoint_path(&run, args.checkpoint);
    let params = super::load_checkpoint(&ckpt)?;
    let data = super::embeddings_path(&run, args.data)?;
    let patterns_file = super::patterns_path(&run, args.patterns)?;
    let ds = super::load_inputs(&data, Some(&patterns_file))?;
    let patterns = ds.patterns.as_ref().expect("patterns were loaded");

    let quantile = args.quantile.unwrap_or(run.analysis.quantile);
    let alpha = args.alpha.unwrap_or(run.analysis.alpha);
    let k_clusters = args.k_clusters.unwrap_or(run.analysis.k_clusters);
    let dims: Vec<usize> = match args.dims.as_deref() {
        Some(list) => parse_dims(list).map_err(|e| CliError::usage(format!("--dims: {e}")))?,
        None => run
            .analysis
            .dims
            .clone()
            .unwrap_or_else(|| (0..params.config.latent_dim).collect()),
    };

    let posteriors = vae::infer_posteriors(&params, &ds)?;
    let importance = dimension_importance(&posteriors)?;
    let findings = build_dimension_report(&posteriors, patterns, &dims, quantile, alpha)?;
    let km = kmeans_fit(
        &posteriors.means,
        k_clusters,
        run.seed,
        run.analysis.kmeans_iters,
    )?;
    let clusters = cluster_response_profiles(&km.assignments, k_clusters, patterns)?;

    let tests: Vec<&TestResult> = findings.iter().flat_map(|f| f.tests.iter()).collect();
    let report = json!({
        "config": {
            "seed": run.seed,
            "checkpoint": ckpt.display().to_string(),
            "variant": params.variant,
            "latent_dim": params.config.latent_dim,
            "n_users": ds.n_users(),
            "quantile": quantile,
            "alpha": alpha,
            "k_clusters": k_clusters,
            "dims": dims,
        },
        "importance": &importance,
        "tests": &tests,
        "clusters": clusters,
    });
    let mut report_json = serde_json::to_string_pretty(&report).expect("report serialize");
    report_json.push('\n');

    let files = [
        ("report.json", report_json.into_bytes()),
        ("importance.csv", importance_csv(&importance).into_bytes()),
        ("tests.csv", tests_csv(tests.into_iter()).into_bytes()),
    ];
    super::announce(&write_many(&run.out, &files)?);
    Ok(())
}
