//! Layered run configuration: built-in defaults, then the optional TOML
//! config file, then command-line flags. `TWINLAB_OUT` fills the output
//! directory when neither flag nor file names one.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;
use twinlab_core::data::SynthConfig;
use twinlab_core::vae::{VaeConfig, Variant};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "./out";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub quantile: f64,
    pub alpha: f64,
    pub k_clusters: usize,
    /// Latent dimensions to test; `None` means all of them.
    pub dims: Option<Vec<usize>>,
    pub kmeans_iters: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            quantile: 0.1,
            alpha: 0.05,
            k_clusters: 5,
            dims: None,
            kmeans_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub embeddings: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub traits: Option<PathBuf>,
}

/// Fully merged settings every command runs against.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub vae: VaeConfig,
    pub variant: Variant,
    pub synth: SynthConfig,
    pub analysis: AnalysisSettings,
    pub data: DataPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            out: PathBuf::from(DEFAULT_OUT),
            vae: VaeConfig::default(),
            variant: Variant::Standard,
            synth: SynthConfig::default(),
            analysis: AnalysisSettings::default(),
            data: DataPaths::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    vae: Option<toml::Table>,
    synth: Option<SynthConfig>,
    analysis: Option<AnalysisSettings>,
    data: Option<DataPaths>,
}

fn parse_vae_section(mut table: toml::Table) -> Result<(VaeConfig, Option<Variant>), CliError> {
    // `variant` rides in the [vae] section but is not a model hyperparameter,
    // so it is split off before the strict config parse.
    let variant = match table.remove("variant") {
        None => None,
        Some(v) => Some(
            Variant::deserialize(v)
                .map_err(|e| CliError::usage(format!("config [vae].variant: {e}")))?,
        ),
    };
    let config = VaeConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::usage(format!("config [vae]: {e}")))?;
    Ok((config, variant))
}

/// Builds the run configuration from an optional config file plus the global
/// flags. Precedence: defaults, then file, then environment (`TWINLAB_OUT`),
/// then flags.
pub fn resolve(
    config_path: Option<&Path>,
    seed_flag: Option<u64>,
    out_flag: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let mut run = RunConfig::default();
    let mut out_set = false;

    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if let Some(seed) = file.seed {
            run.seed = seed;
        }
        if let Some(out) = file.out {
            run.out = out;
            out_set = true;
        }
        if let Some(vae) = file.vae {
            let (config, variant) = parse_vae_section(vae)?;
            run.vae = config;
            if let Some(v) = variant {
                run.variant = v;
            }
        }
        if let Some(synth) = file.synth {
            run.synth = synth;
        }
        if let Some(analysis) = file.analysis {
            run.analysis = analysis;
        }
        if let Some(data) = file.data {
            run.data = data;
        }
    }

    if !out_set {
        if let Some(env_out) = std::env::var_os("TWINLAB_OUT") {
            run.out = PathBuf::from(env_out);
        }
    }
    if let Some(seed) = seed_flag {
        run.seed = seed;
    }
    if let Some(out) = out_flag {
        run.out = out.to_path_buf();
    }
    Ok(run)
}

/// Parses a `--dims` style comma-separated index list.
pub fn parse_dims(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{part}` is not a dimension index"))
        })
        .collect()
}
