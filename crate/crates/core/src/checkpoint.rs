//! Model persistence.
//!
//! Two on-disk formats, chosen so that each model family round-trips
//! exactly (all values are raw IEEE-754 doubles or shortest-round-trip
//! decimal):
//!
//! # Network checkpoints (`*.ckpt`)
//!
//! A binary named-tensor file:
//!
//! ```text
//! magic      4 bytes         b"NPKT"
//! version    u32 LE          currently 1
//! hdr_len    u64 LE
//! header     hdr_len bytes   JSON (see below)
//! count      u64 LE          number of tensor records
//! record     repeated `count` times:
//!   name_len u64 LE
//!   name     name_len bytes  UTF-8
//!   layer    u64 LE          regularization-group tag
//!   rows     u64 LE
//!   cols     u64 LE
//!   values   rows·cols × f64 LE, row-major
//! ```
//!
//! The header JSON carries the architecture (`config`, input widths,
//! optimizer steps applied) and the preprocessing fitted alongside the
//! network: the primary-channel z-score statistics, the secondary-channel
//! standardizer, and the organ criteria used for the prior scores. The
//! tensor table holds every parameter in insertion order plus the
//! batch-norm running statistics under the reserved names
//! `bn.running_mean` / `bn.running_var`.
//!
//! A checkpoint is therefore self-contained: [`load_network`] returns the
//! model *and* everything needed to turn raw records back into its two
//! input views.
//!
//! # Tree checkpoints (`*.json`)
//!
//! Forests and boosters are a portable JSON tree list: an envelope
//! `{"kind": "forest"|"gbt", "models": [...]}` with one model per output
//! in target order, each a plain serialization of its trees (split column,
//! threshold, child indices, leaf values).

use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dataset::{Encoder, Standardizer, NUMERIC_DIM};
use crate::models::{
    build_multiview, Booster, Forest, MultiviewConfig, MultiviewModel, N_OUTPUTS,
};
use crate::priors::OrganCriteria;

pub const NETWORK_MAGIC: [u8; 4] = *b"NPKT";
pub const NETWORK_VERSION: u32 = 1;

const RUNNING_MEAN: &str = "bn.running_mean";
const RUNNING_VAR: &str = "bn.running_var";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {reason}")]
    BadCheckpoint { reason: String },
}

fn bad<T>(reason: impl Into<String>) -> Result<T, CheckpointError> {
    Err(CheckpointError::BadCheckpoint { reason: reason.into() })
}

/// A trained network together with the preprocessing fitted next to it;
/// the unit that [`save_network`] / [`load_network`] round-trip.
#[derive(Debug, Clone)]
pub struct NetworkBundle {
    pub model: MultiviewModel,
    /// Primary-channel encoder (one-hot layout + numeric z-scores).
    pub encoder: Encoder,
    /// Secondary-channel z-score statistics.
    pub secondary: Standardizer,
    /// Organ criteria the prior scores were computed with.
    pub criteria: OrganCriteria,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    kind: String,
    config: MultiviewConfig,
    d_primary: usize,
    d_secondary: usize,
    steps_trained: usize,
    encoder_means: Vec<f64>,
    encoder_stds: Vec<f64>,
    secondary_means: Vec<f64>,
    secondary_stds: Vec<f64>,
    criteria: OrganCriteria,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(buf, bytes.len() as u64);
    buf.extend_from_slice(bytes);
}

fn put_tensor(buf: &mut Vec<u8>, name: &str, layer: usize, rows: usize, cols: usize, data: &[f64]) {
    debug_assert_eq!(data.len(), rows * cols);
    put_bytes(buf, name.as_bytes());
    put_u64(buf, layer as u64);
    put_u64(buf, rows as u64);
    put_u64(buf, cols as u64);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes the bundle into the named-tensor format described in the
/// module docs.
pub fn network_to_bytes(bundle: &NetworkBundle) -> Vec<u8> {
    let m = &bundle.model;
    let header = NetworkHeader {
        kind: "multiview".into(),
        config: m.cfg.clone(),
        d_primary: m.d_primary,
        d_secondary: m.d_secondary,
        steps_trained: m.steps_trained,
        encoder_means: bundle.encoder.means().to_vec(),
        encoder_stds: bundle.encoder.stds().to_vec(),
        secondary_means: bundle.secondary.means.clone(),
        secondary_stds: bundle.secondary.stds.clone(),
        criteria: bundle.criteria.clone(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serialization cannot fail");

    let mut buf = Vec::new();
    buf.extend_from_slice(&NETWORK_MAGIC);
    buf.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
    put_bytes(&mut buf, &header_json);
    put_u64(&mut buf, (m.params.len() + 2) as u64);
    for (name, entry) in m.params.iter() {
        let (r, c) = entry.tensor.shape();
        put_tensor(&mut buf, name, entry.layer, r, c, &entry.tensor.data);
    }
    put_tensor(&mut buf, RUNNING_MEAN, 0, 1, m.bn_running_mean.len(), &m.bn_running_mean);
    put_tensor(&mut buf, RUNNING_VAR, 0, 1, m.bn_running_var.len(), &m.bn_running_var);
    buf
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return bad("file truncated");
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize, CheckpointError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).or_else(|_| bad("length field overflows this platform"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::BadCheckpoint {
            reason: "tensor size overflows".into(),
        })?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u64()?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).or_else(|_| bad("tensor name is not UTF-8"))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Parses the named-tensor format back into a bundle, validating magic,
/// version, architecture, tensor names/shapes/layer tags, and finiteness.
pub fn network_from_bytes(buf: &[u8]) -> Result<NetworkBundle, CheckpointError> {
    let mut r = ByteReader { buf, pos: 0 };
    if r.take(4)? != NETWORK_MAGIC {
        return bad("not a network checkpoint (bad magic)");
    }
    let version = r.u32()?;
    if version != NETWORK_VERSION {
        return bad(format!("unsupported checkpoint version {version}"));
    }
    let header_len = r.u64()?;
    let header: NetworkHeader = serde_json::from_slice(r.take(header_len)?)
        .or_else(|e| bad(format!("malformed header: {e}")))?;
    if header.kind != "multiview" {
        return bad(format!("unknown model kind '{}'", header.kind));
    }
    let mut model = build_multiview(&header.config, header.d_primary, header.d_secondary)
        .or_else(|e| bad(format!("invalid architecture: {e}")))?;
    model.steps_trained = header.steps_trained;

    let expected = model.params.len() + 2;
    let count = r.u64()?;
    if count != expected {
        return bad(format!("expected {expected} tensors, file declares {count}"));
    }
    let mut seen: HashSet<String> = HashSet::new();
    for _ in 0..count {
        let name = r.string()?;
        let layer = r.u64()?;
        let rows = r.u64()?;
        let cols = r.u64()?;
        let data = r.f64s(rows.checked_mul(cols).ok_or_else(|| {
            CheckpointError::BadCheckpoint { reason: format!("tensor '{name}' size overflows") }
        })?)?;
        if data.iter().any(|v| !v.is_finite()) {
            return bad(format!("non-finite value in tensor '{name}'"));
        }
        if !seen.insert(name.clone()) {
            return bad(format!("duplicate tensor '{name}'"));
        }
        let bn_len = model.bn_running_mean.len();
        match name.as_str() {
            RUNNING_MEAN | RUNNING_VAR => {
                if rows != 1 || cols != bn_len {
                    return bad(format!(
                        "tensor '{name}' has shape {rows}\u{d7}{cols}, expected 1\u{d7}{bn_len}"
                    ));
                }
                if name == RUNNING_MEAN {
                    model.bn_running_mean = data;
                } else {
                    model.bn_running_var = data;
                }
            }
            _ => {
                if !model.params.contains(&name) {
                    return bad(format!("unknown tensor '{name}' for this architecture"));
                }
                let (er, ec) = model.params.get(&name).shape();
                if (rows, cols) != (er, ec) {
                    return bad(format!(
                        "tensor '{name}' has shape {rows}\u{d7}{cols}, expected {er}\u{d7}{ec}"
                    ));
                }
                if layer != model.params.layer_of(&name) {
                    return bad(format!("tensor '{name}' carries the wrong layer tag"));
                }
                *model.params.get_mut(&name) = Tensor::from_vec(rows, cols, data);
            }
        }
    }
    if !r.done() {
        return bad("trailing bytes after the tensor table");
    }

    let means: [f64; NUMERIC_DIM] = header
        .encoder_means
        .try_into()
        .or_else(|_| bad("encoder means have the wrong width"))?;
    let stds: [f64; NUMERIC_DIM] = header
        .encoder_stds
        .try_into()
        .or_else(|_| bad("encoder stds have the wrong width"))?;
    if header.secondary_means.len() != header.d_secondary
        || header.secondary_stds.len() != header.d_secondary
    {
        return bad("secondary statistics do not match the secondary width");
    }
    Ok(NetworkBundle {
        model,
        encoder: Encoder::from_stats(means, stds),
        secondary: Standardizer {
            means: header.secondary_means,
            stds: header.secondary_stds,
        },
        criteria: header.criteria,
    })
}

pub fn save_network(path: &Path, bundle: &NetworkBundle) -> Result<(), CheckpointError> {
    std::fs::write(path, network_to_bytes(bundle))?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<NetworkBundle, CheckpointError> {
    network_from_bytes(&std::fs::read(path)?)
}

#[derive(Serialize, Deserialize)]
struct TreeFile<T> {
    kind: String,
    models: Vec<T>,
}

fn tree_bytes<T: Serialize>(kind: &str, models: &[T; N_OUTPUTS]) -> Vec<u8> {
    serde_json::to_vec_pretty(&TreeFile {
        kind: kind.to_string(),
        models: models.iter().collect::<Vec<_>>(),
    })
    .expect("tree serialization cannot fail")
}

fn trees_from_bytes<T: DeserializeOwned>(
    kind: &str,
    buf: &[u8],
) -> Result<[T; N_OUTPUTS], CheckpointError> {
    let file: TreeFile<T> =
        serde_json::from_slice(buf).or_else(|e| bad(format!("malformed tree file: {e}")))?;
    if file.kind != kind {
        return bad(format!("tree file holds '{}' models, expected '{kind}'", file.kind));
    }
    let n = file.models.len();
    file.models
        .try_into()
        .or_else(|_| bad(format!("expected {N_OUTPUTS} models (one per output), found {n}")))
}

/// Serializes one forest per output (target order) as a JSON tree list.
pub fn forests_to_bytes(models: &[Forest; N_OUTPUTS]) -> Vec<u8> {
    tree_bytes("forest", models)
}

/// Serializes one booster per output (target order) as a JSON tree list.
pub fn boosters_to_bytes(models: &[Booster; N_OUTPUTS]) -> Vec<u8> {
    tree_bytes("gbt", models)
}

/// Saves one forest per output (target order) as a JSON tree list.
pub fn save_forests(path: &Path, models: &[Forest; N_OUTPUTS]) -> Result<(), CheckpointError> {
    std::fs::write(path, forests_to_bytes(models))?;
    Ok(())
}

pub fn load_forests(path: &Path) -> Result<[Forest; N_OUTPUTS], CheckpointError> {
    trees_from_bytes("forest", &std::fs::read(path)?)
}

/// Saves one booster per output (target order) as a JSON tree list.
pub fn save_boosters(path: &Path, models: &[Booster; N_OUTPUTS]) -> Result<(), CheckpointError> {
    std::fs::write(path, boosters_to_bytes(models))?;
    Ok(())
}

pub fn load_boosters(path: &Path) -> Result<[Booster; N_OUTPUTS], CheckpointError> {
    trees_from_bytes("gbt", &std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        fit_forest, fit_gbt, predict_forest, predict_gbt, predict_multiview, ForestConfig,
        GbtConfig, Variant,
    };
    use crate::synth::{generate, SynthConfig};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config(variant: Variant) -> MultiviewConfig {
        MultiviewConfig {
            hidden_units: 64,
            aux_mlp_layers: 2,
            seed: 99,
            variant,
            ..MultiviewConfig::default()
        }
    }

    fn random_rows(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    fn sample_bundle(variant: Variant) -> NetworkBundle {
        let records = generate(&SynthConfig { n: 12, noise_sd_fraction: 0.0, seed: 3 });
        let mut model = build_multiview(&small_config(variant), 39, 16).unwrap();
        if !model.bn_running_mean.is_empty() {
            let h = model.bn_running_mean.len();
            let mean: Vec<f64> = (0..h).map(|i| 0.01 * i as f64 - 0.3).collect();
            let var: Vec<f64> = (0..h).map(|i| 1.0 + 0.002 * i as f64).collect();
            model.update_bn_stats(&mean, &var);
        }
        model.steps_trained = 41;
        NetworkBundle {
            model,
            encoder: Encoder::fit(&records).unwrap(),
            secondary: Standardizer {
                means: (0..16).map(|i| i as f64 * 0.25).collect(),
                stds: (0..16).map(|i| 1.0 + i as f64 * 0.1).collect(),
            },
            criteria: OrganCriteria::default(),
        }
    }

    #[test]
    fn network_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let bundle = sample_bundle(Variant::Full);
        save_network(&path, &bundle).unwrap();
        let loaded = load_network(&path).unwrap();

        assert_eq!(loaded.model.cfg, bundle.model.cfg);
        assert_eq!(loaded.model.params, bundle.model.params);
        assert_eq!(loaded.model.bn_running_mean, bundle.model.bn_running_mean);
        assert_eq!(loaded.model.bn_running_var, bundle.model.bn_running_var);
        assert_eq!(loaded.model.steps_trained, 41);
        assert_eq!(loaded.encoder, bundle.encoder);
        assert_eq!(loaded.secondary, bundle.secondary);
        assert_eq!(loaded.criteria, bundle.criteria);

        let x = random_rows(5, 39, 7);
        let xt = random_rows(5, 16, 8);
        assert_eq!(
            predict_multiview(&loaded.model, &x, &xt).unwrap(),
            predict_multiview(&bundle.model, &x, &xt).unwrap(),
        );
    }

    #[test]
    fn baseline_variant_without_batchnorm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.ckpt");
        let bundle = sample_bundle(Variant::MlpBaseline);
        assert!(bundle.model.bn_running_mean.is_empty());
        save_network(&path, &bundle).unwrap();
        let loaded = load_network(&path).unwrap();
        let x = random_rows(3, 39, 9);
        let xt = random_rows(3, 16, 10);
        assert_eq!(
            predict_multiview(&loaded.model, &x, &xt).unwrap(),
            predict_multiview(&bundle.model, &x, &xt).unwrap(),
        );
    }

    #[test]
    fn corrupt_network_files_are_rejected() {
        let good = network_to_bytes(&sample_bundle(Variant::Full));

        let mut wrong_magic = good.clone();
        wrong_magic[0] = b'X';
        let truncated = &good[..good.len() / 2];
        let mut garbage_header = good.clone();
        // Header starts after magic (4), version (4), and length (8).
        garbage_header[16] = b'!';
        let mut wrong_version = good.clone();
        wrong_version[4] = 9;
        let mut trailing = good.clone();
        trailing.push(0);
        let name_pos = good
            .windows(8)
            .position(|w| w == b"proj_k.w")
            .expect("first tensor name present");
        let mut unknown_name = good.clone();
        unknown_name[name_pos..name_pos + 8].copy_from_slice(b"proj_X.w");

        for (label, bytes) in [
            ("magic", &wrong_magic[..]),
            ("truncated", truncated),
            ("header", &garbage_header[..]),
            ("version", &wrong_version[..]),
            ("trailing", &trailing[..]),
            ("name", &unknown_name[..]),
        ] {
            let err = network_from_bytes(bytes).unwrap_err();
            assert!(
                matches!(err, CheckpointError::BadCheckpoint { .. }),
                "{label}: unexpected error {err:?}"
            );
        }
        // The pristine bytes still parse.
        network_from_bytes(&good).unwrap();
    }

    #[test]
    fn tree_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let x = random_rows(40, 6, 20);
        let targets: Vec<Vec<f64>> = (0..N_OUTPUTS)
            .map(|o| x.iter().map(|r| r[o % 6] * 2.0 + r[(o + 1) % 6]).collect())
            .collect();

        let forests: [Forest; N_OUTPUTS] = std::array::from_fn(|o| {
            fit_forest(&x, &targets[o], &ForestConfig { n_trees: 5, seed: o as u64, ..ForestConfig::default() })
        });
        let boosters: [Booster; N_OUTPUTS] = std::array::from_fn(|o| {
            fit_gbt(&x, &targets[o], &GbtConfig { n_rounds: 6, seed: o as u64, ..GbtConfig::default() })
        });

        let fp = dir.path().join("forest.json");
        let bp = dir.path().join("gbt.json");
        save_forests(&fp, &forests).unwrap();
        save_boosters(&bp, &boosters).unwrap();
        let lf = load_forests(&fp).unwrap();
        let lb = load_boosters(&bp).unwrap();
        for o in 0..N_OUTPUTS {
            assert_eq!(predict_forest(&lf[o], &x), predict_forest(&forests[o], &x));
            assert_eq!(predict_gbt(&lb[o], &x), predict_gbt(&boosters[o], &x));
        }

        // Kind mismatch and format mismatch are both rejected.
        assert!(matches!(
            load_boosters(&fp).unwrap_err(),
            CheckpointError::BadCheckpoint { .. }
        ));
        assert!(matches!(
            load_forests(&bp).unwrap_err(),
            CheckpointError::BadCheckpoint { .. }
        ));
        let np = dir.path().join("net.ckpt");
        save_network(&np, &sample_bundle(Variant::Full)).unwrap();
        assert!(matches!(
            load_forests(&np).unwrap_err(),
            CheckpointError::BadCheckpoint { .. }
        ));
        assert!(matches!(
            load_network(&fp).unwrap_err(),
            CheckpointError::BadCheckpoint { .. }
        ));
    }

    #[test]
    fn missing_file_reports_an_io_error() {
        let err = load_network(Path::new("/nonexistent/net.ckpt")).unwrap_err();
        assert!(matches!(err, CheckpointError::Io(_)));
    }
}
