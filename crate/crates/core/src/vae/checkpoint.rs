//! Binary model checkpoints.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "TWINCKPT"
//! version u32      format version (currently 1)
//! hlen    u64      header length in bytes
//! header  hlen     JSON: config, variant, layer shapes, standardizer, n_params
//! payload 8*n      flat f64 parameters, ModelParams::to_flat layout
//! ```
//!
//! Parameters round-trip bit-exactly (`f64::to_le_bytes` is lossless).
//! Loading cross-checks the header's layer shapes against the shapes implied
//! by the stored config, so a checkpoint can never silently deserialize into
//! a structurally different model.

use super::{HierParams, ModelParams, Standardizer, VaeConfig, VaeError, Variant};
use crate::nn::{Activation, DenseLayer};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TWINCKPT";
/// magic + version + header length.
const PROLOGUE_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint has {extra} trailing bytes after the parameter payload")]
    TrailingBytes { extra: usize },
    #[error("checkpoint header is not valid JSON: {0}")]
    HeaderJson(#[from] serde_json::Error),
    #[error("checkpoint shapes inconsistent: {0}")]
    ShapeInconsistency(String),
    #[error("non-finite parameter at flat index {index}")]
    NonFiniteParam { index: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerSpec {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

impl LayerSpec {
    fn of(layer: &DenseLayer) -> Self {
        LayerSpec {
            in_dim: layer.in_dim,
            out_dim: layer.out_dim,
            activation: layer.activation,
        }
    }

    fn matches(&self, layer: &DenseLayer) -> bool {
        self.in_dim == layer.in_dim
            && self.out_dim == layer.out_dim
            && self.activation == layer.activation
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HierSpec {
    top_encoder: Vec<LayerSpec>,
    prior_net: Vec<LayerSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: VaeConfig,
    variant: Variant,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
    hier: Option<HierSpec>,
    has_log_obs_noise: bool,
    standardizer: Option<Standardizer>,
    n_params: u64,
}

/// Zero-parameter model with the exact structure implied by a config.
fn zeros_structure(config: &VaeConfig, variant: Variant) -> ModelParams {
    fn zeros_mlp(input: usize, hidden: &[usize], output: usize) -> Vec<DenseLayer> {
        let dims = super::mlp_dims(input, hidden, output);
        let last = dims.len() - 1;
        dims.iter()
            .enumerate()
            .map(|(i, &(inp, out))| {
                let act = if i == last {
                    Activation::Linear
                } else {
                    Activation::Tanh
                };
                DenseLayer::zeros(inp, out, act)
            })
            .collect()
    }
    let k = config.latent_dim;
    let d = config.input_dim;
    let hier = match variant {
        Variant::Standard => None,
        Variant::Hierarchical => Some(HierParams {
            top_encoder: zeros_mlp(d, &config.hier_hidden, 2 * config.hier_top_dim),
            prior_net: zeros_mlp(config.hier_top_dim, &config.hier_hidden, 2 * k),
        }),
    };
    ModelParams {
        log_obs_noise: config.learn_obs_noise.then_some(0.0),
        config: config.clone(),
        variant,
        encoder: zeros_mlp(d, &config.encoder_hidden, 2 * k),
        decoder: zeros_mlp(k, &config.decoder_hidden, d),
        hier,
        standardizer: None,
    }
}

fn check_specs(
    name: &str,
    specs: &[LayerSpec],
    layers: &[DenseLayer],
) -> Result<(), CheckpointError> {
    if specs.len() != layers.len() {
        return Err(CheckpointError::ShapeInconsistency(format!(
            "{name} has {} layers in the header but the config implies {}",
            specs.len(),
            layers.len()
        )));
    }
    for (i, (spec, layer)) in specs.iter().zip(layers).enumerate() {
        if !spec.matches(layer) {
            return Err(CheckpointError::ShapeInconsistency(format!(
                "{name} layer {i} is {}x{} ({:?}) in the header but the config implies {}x{} ({:?})",
                spec.out_dim, spec.in_dim, spec.activation, layer.out_dim, layer.in_dim, layer.activation
            )));
        }
    }
    Ok(())
}

/// Serializes a model into the container format.
pub fn to_bytes(params: &ModelParams) -> Result<Vec<u8>, CheckpointError> {
    params
        .config
        .validate()
        .map_err(|e| CheckpointError::ShapeInconsistency(e.to_string()))?;
    let flat = params.to_flat();
    if let Some(index) = flat.iter().position(|v| !v.is_finite()) {
        return Err(CheckpointError::NonFiniteParam { index });
    }
    let header = Header {
        config: params.config.clone(),
        variant: params.variant,
        encoder: params.encoder.iter().map(LayerSpec::of).collect(),
        decoder: params.decoder.iter().map(LayerSpec::of).collect(),
        hier: params.hier.as_ref().map(|h| HierSpec {
            top_encoder: h.top_encoder.iter().map(LayerSpec::of).collect(),
            prior_net: h.prior_net.iter().map(LayerSpec::of).collect(),
        }),
        has_log_obs_noise: params.log_obs_noise.is_some(),
        standardizer: params.standardizer.clone(),
        n_params: flat.len() as u64,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PROLOGUE_LEN + header_json.len() + flat.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for v in &flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses and validates a container produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    if bytes.len() < PROLOGUE_LEN {
        return Err(CheckpointError::Truncated(format!(
            "{} bytes is shorter than the {PROLOGUE_LEN}-byte prologue",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[PROLOGUE_LEN..];
    if hlen > body.len() {
        return Err(CheckpointError::Truncated(format!(
            "header claims {hlen} bytes but only {} remain",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::ShapeInconsistency(e.to_string()))?;
    if header.has_log_obs_noise != header.config.learn_obs_noise {
        return Err(CheckpointError::ShapeInconsistency(
            "learned-noise flag disagrees between header and config".into(),
        ));
    }
    let mut params = zeros_structure(&header.config, header.variant);
    check_specs("encoder", &header.encoder, &params.encoder)?;
    check_specs("decoder", &header.decoder, &params.decoder)?;
    match (&header.hier, &params.hier) {
        (Some(spec), Some(h)) => {
            check_specs("top_encoder", &spec.top_encoder, &h.top_encoder)?;
            check_specs("prior_net", &spec.prior_net, &h.prior_net)?;
        }
        (None, None) => {}
        _ => {
            return Err(CheckpointError::ShapeInconsistency(
                "hierarchical sub-networks disagree with the stored variant".into(),
            ))
        }
    }
    let expected = params.param_count();
    if header.n_params as usize != expected {
        return Err(CheckpointError::ShapeInconsistency(format!(
            "header claims {} parameters but the shapes imply {expected}",
            header.n_params
        )));
    }
    let payload = &body[hlen..];
    let need = expected * 8;
    if payload.len() < need {
        return Err(CheckpointError::Truncated(format!(
            "parameter payload has {} of {need} bytes",
            payload.len()
        )));
    }
    if payload.len() > need {
        return Err(CheckpointError::TrailingBytes {
            extra: payload.len() - need,
        });
    }
    let mut flat = Vec::with_capacity(expected);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(CheckpointError::NonFiniteParam { index: i });
        }
        flat.push(v);
    }
    params
        .set_flat(&flat)
        .map_err(|e: VaeError| CheckpointError::ShapeInconsistency(e.to_string()))?;
    params.standardizer = header.standardizer;
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, to_bytes(params)?)?)
}

pub fn load(path: &Path) -> Result<ModelParams, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_matrix, substream};

    fn sample_params(variant: Variant, learn_noise: bool) -> ModelParams {
        let config = VaeConfig {
            latent_dim: 3,
            input_dim: 5,
            encoder_hidden: vec![6],
            decoder_hidden: vec![4],
            hier_top_dim: 2,
            hier_hidden: vec![3],
            learn_obs_noise: learn_noise,
            ..VaeConfig::default()
        };
        let mut p = ModelParams::new(config, variant, &mut substream(21, "init")).unwrap();
        p.standardizer = Some(Standardizer {
            means: vec![0.1, -0.2, 0.3, 0.0, 1.5],
            sds: vec![1.0, 2.0, 0.5, 1.0, 3.0],
            degenerate: vec![3],
        });
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (variant, noise) in [
            (Variant::Standard, false),
            (Variant::Standard, true),
            (Variant::Hierarchical, false),
            (Variant::Hierarchical, true),
        ] {
            let params = sample_params(variant, noise);
            let restored = from_bytes(&to_bytes(&params).unwrap()).unwrap();
            assert_eq!(restored.to_flat(), params.to_flat());
            assert_eq!(restored.config, params.config);
            assert_eq!(restored.variant, params.variant);
            assert_eq!(restored.standardizer, params.standardizer);
        }
    }

    #[test]
    fn restored_encoder_is_bit_identical() {
        let params = sample_params(Variant::Standard, false);
        let restored = from_bytes(&to_bytes(&params).unwrap()).unwrap();
        let x = normal_matrix(10, 5, &mut substream(3, "probe"));
        for r in 0..x.rows() {
            let (mu_a, lv_a) = params.encode(x.row(r)).unwrap();
            let (mu_b, lv_b) = restored.encode(x.row(r)).unwrap();
            assert_eq!(mu_a, mu_b);
            assert_eq!(lv_a, lv_b);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = sample_params(Variant::Hierarchical, true);
        save(&params, &path).unwrap();
        let restored = load(&path).unwrap();
        assert_eq!(restored.to_flat(), params.to_flat());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = to_bytes(&sample_params(Variant::Standard, false)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn rejects_version_mismatch() {
        let mut bytes = to_bytes(&sample_params(Variant::Standard, false)).unwrap();
        bytes[8] = 99;
        assert!(matches!(
            from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn rejects_truncation_at_any_level() {
        let bytes = to_bytes(&sample_params(Variant::Standard, false)).unwrap();
        assert!(matches!(
            from_bytes(&bytes[..10]),
            Err(CheckpointError::Truncated(_))
        ));
        assert!(matches!(
            from_bytes(&bytes[..25]),
            Err(CheckpointError::Truncated(_))
        ));
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 8]),
            Err(CheckpointError::Truncated(_))
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = to_bytes(&sample_params(Variant::Standard, false)).unwrap();
        bytes.push(0);
        assert!(matches!(
            from_bytes(&bytes),
            Err(CheckpointError::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn rejects_shape_tampering() {
        let params = sample_params(Variant::Standard, false);
        // Rebuild the container with a lying n_params field.
        let flat = params.to_flat();
        let mut header = Header {
            config: params.config.clone(),
            variant: params.variant,
            encoder: params.encoder.iter().map(LayerSpec::of).collect(),
            decoder: params.decoder.iter().map(LayerSpec::of).collect(),
            hier: None,
            has_log_obs_noise: false,
            standardizer: None,
            n_params: flat.len() as u64 + 1,
        };
        let assemble = |header: &Header, flat: &[f64]| {
            let hj = serde_json::to_vec(header).unwrap();
            let mut out = Vec::new();
            out.extend_from_slice(MAGIC);
            out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            out.extend_from_slice(&(hj.len() as u64).to_le_bytes());
            out.extend_from_slice(&hj);
            for v in flat {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        };
        assert!(matches!(
            from_bytes(&assemble(&header, &flat)),
            Err(CheckpointError::ShapeInconsistency(_))
        ));
        // And with a mismatched layer shape.
        header.n_params = flat.len() as u64;
        header.encoder[0].out_dim += 1;
        assert!(matches!(
            from_bytes(&assemble(&header, &flat)),
            Err(CheckpointError::ShapeInconsistency(_))
        ));
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let mut bytes = to_bytes(&sample_params(Variant::Standard, false)).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(CheckpointError::NonFiniteParam { .. })
        ));
    }
}
