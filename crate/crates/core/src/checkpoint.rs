//! Single-file checkpoints: a plain-text header followed by a JSON body.
//!
//! ```text
//! dhkge-checkpoint
//! format_version: 1
//! config_hash: <sha256 of the config>
//! body_sha256: <sha256 of the body>
//! body_bytes: <length of the body>
//!
//! {"config": ..., "params": {...}, "optimizer": {...}, ...}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{apply_ablation, ModelShape};
use crate::params::{snapshot, Adam, Params};
use crate::train::{EpochRecord, TrainState};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dhkge-checkpoint";

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    config: TrainConfig,
    shape: ModelShape,
    epochs_done: usize,
    params: BTreeMap<String, Tensor>,
    optimizer: Adam,
    log: Vec<EpochRecord>,
}

pub fn checkpoint_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let params = snapshot(&state.model, "")
        .into_iter()
        .map(|(k, (shape, values))| (k, Tensor { shape, values }))
        .collect();
    let body = Body {
        config: state.config.clone(),
        shape: state.shape,
        epochs_done: state.epochs_done,
        params,
        optimizer: state.optimizer.clone(),
        log: state.log.clone(),
    };
    let body = serde_json::to_vec(&body)?;
    let mut out = format!(
        "{MAGIC}\nformat_version: {FORMAT_VERSION}\nconfig_hash: {}\nbody_sha256: {}\nbody_bytes: {}\n\n",
        state.config.hash(),
        hex::encode(Sha256::digest(&body)),
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(state)?).map_err(|e| Error::io(path, e))
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Parses a checkpoint. `expected` is the shape of the dataset it will be
/// used with, if known; every tensor is checked against a model built for it.
pub fn checkpoint_from_bytes(bytes: &[u8], expected: Option<ModelShape>) -> Result<TrainState> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| corrupt("missing header terminator (truncated file?)"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8"))?;
    let body = &bytes[split + 2..];
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("not a checkpoint file"));
    }
    let mut fields = BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once(": ")
            .ok_or_else(|| corrupt(format!("bad header line `{line}`")))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| corrupt(format!("header lacks `{k}`")))
    };
    let version: u32 = field("format_version")?
        .parse()
        .map_err(|_| corrupt("bad format_version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len: usize = field("body_bytes")?.parse().map_err(|_| corrupt("bad body_bytes"))?;
    if body.len() != len {
        return Err(corrupt(format!(
            "body has {} bytes, header says {len} (truncated file?)",
            body.len()
        )));
    }
    if hex::encode(Sha256::digest(body)) != field("body_sha256")? {
        return Err(corrupt("body checksum mismatch"));
    }
    let body: Body = serde_json::from_slice(body)?;
    if body.config.hash() != field("config_hash")? {
        return Err(corrupt("config hash mismatch"));
    }
    body.config.validate()?;
    let shape = expected.unwrap_or(body.shape);
    let mut model = apply_ablation(&body.config, shape);
    restore(&mut model, &body.params)?;
    Ok(TrainState {
        config: body.config,
        shape,
        model,
        optimizer: body.optimizer,
        epochs_done: body.epochs_done,
        log: body.log,
    })
}

/// Copies every stored tensor into `model`, which must have exactly the
/// same tensor names and shapes.
fn restore<P: Params>(model: &mut P, params: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut error = None;
    let mut seen = 0;
    model.visit_mut("", &mut |name, shape, x| {
        if error.is_some() {
            return;
        }
        match params.get(name) {
            None => error = Some(corrupt(format!("tensor `{name}` missing from checkpoint"))),
            Some(t) if t.shape != shape || t.values.len() != x.len() => {
                error = Some(Error::ShapeMismatch {
                    field: name.to_string(),
                    expected: shape.to_vec(),
                    found: t.shape.clone(),
                })
            }
            Some(t) => {
                x.copy_from_slice(&t.values);
                seen += 1;
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    if seen != params.len() {
        let mut names = std::collections::BTreeSet::new();
        model.visit_mut("", &mut |name, _, _| {
            names.insert(name.to_string());
        });
        let extra = params.keys().find(|k| !names.contains(*k)).cloned().unwrap_or_default();
        return Err(corrupt(format!("unexpected tensor `{extra}` in checkpoint")));
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<ModelShape>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_dataset, generate_synthetic, SynthParams, SPLIT_RATIOS};
    use crate::dataset::{DhkgDataset, Split};
    use crate::eval::{evaluate_et, Predictor};
    use crate::model::Hypergraphs;
    use crate::train::train;

    fn data() -> DhkgDataset {
        let dump = generate_synthetic(&SynthParams::new(20, 6, 40, 8, 4, 3), 3).unwrap();
        build_dataset(&dump, None, SPLIT_RATIOS, 3).unwrap().0
    }

    fn config(dim: usize) -> TrainConfig {
        TrainConfig {
            dim,
            n_heads: 2,
            epochs: 2,
            batch_size: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_preserves_state_and_metrics() {
        let d = data();
        let state = train(config(8), &d).unwrap();
        let bytes = checkpoint_bytes(&state).unwrap();
        let back = checkpoint_from_bytes(&bytes, Some(ModelShape::of(&d))).unwrap();
        assert_eq!(back, state);
        let g = Hypergraphs::from_train(&d);
        let a = evaluate_et(&Predictor::new(&state, &g), &d, Split::Test, false).unwrap();
        let b = evaluate_et(&Predictor::new(&back, &g), &d, Split::Test, false).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn truncation_and_version_are_reported() {
        let d = data();
        let state = train(TrainConfig { epochs: 1, ..config(8) }, &d).unwrap();
        let bytes = checkpoint_bytes(&state).unwrap();
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                checkpoint_from_bytes(&bytes[..cut], None),
                Err(Error::Checkpoint(_))
            ));
        }
        let text = String::from_utf8(bytes)
            .unwrap()
            .replacen("format_version: 1", "format_version: 7", 1);
        assert!(matches!(
            checkpoint_from_bytes(text.as_bytes(), None),
            Err(Error::CheckpointVersion { found: 7, .. })
        ));
    }

    #[test]
    fn restoring_into_another_width_names_the_tensor() {
        let d = data();
        let state = train(TrainConfig { epochs: 1, ..config(8) }, &d).unwrap();
        let bytes = checkpoint_bytes(&state).unwrap();
        let body_start = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        let body: Body = serde_json::from_slice(&bytes[body_start..]).unwrap();
        let mut wider = apply_ablation(&config(16), ModelShape::of(&d));
        match restore(&mut wider, &body.params) {
            Err(Error::ShapeMismatch { field, .. }) => assert_eq!(field, "instance.encoder.embedding"),
            other => panic!("{other:?}"),
        }
    }
}
