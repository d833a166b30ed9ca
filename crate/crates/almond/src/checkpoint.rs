//! Model checkpoints: a text header followed by raw little-endian `f32`
//! parameter data.
//!
//! ```text
//! ALMONDNET-CKPT v1
//! model.variant = mini-v1
//! ...
//! classes = almond,shell
//! meta.epoch = 12
//! blob = 0.weight 3x3x1x16 0 576
//! ...
//! data_bytes = 81544
//! --
//! <data_bytes bytes>
//! ```
//!
//! Each `blob` line gives name, shape, byte offset and byte length within
//! the data section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use almond_core::almondnet::{build_almondnet20, ModelConfig};
use almond_core::imageproc::PreprocessParams;
use almond_core::nn::{Sequential, StateBlob};

use crate::config::{apply_model_key, apply_preprocess_key, model_entries, preprocess_entries};
use crate::error::{Error, IoContext, Result};
use crate::imageio::write_atomic;

pub const CHECKPOINT_MAGIC: &str = "ALMONDNET-CKPT";
pub const CHECKPOINT_VERSION: &str = "v1";
const SEPARATOR: &str = "--";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub preprocess: PreprocessParams,
    pub class_names: Vec<String>,
    /// Free-form training facts (`epoch`, `seed`, `val_accuracy`, ...).
    pub metadata: BTreeMap<String, String>,
    pub blobs: Vec<StateBlob<f32>>,
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl Checkpoint {
    pub fn from_model(
        model: &Sequential<f32>,
        config: &ModelConfig,
        preprocess: &PreprocessParams,
        class_names: &[String],
    ) -> Self {
        Self {
            model: config.clone(),
            preprocess: *preprocess,
            class_names: class_names.to_vec(),
            metadata: BTreeMap::new(),
            blobs: model.state_blobs(),
        }
    }

    /// Rebuilds the network and loads every blob into it.
    pub fn to_model(&self) -> Result<Sequential<f32>> {
        let specs = build_almondnet20(&self.model)?;
        let mut model = Sequential::<f32>::new(&specs, &self.model.input_shape(), 0)?;
        let expected = model.state_blobs();
        if expected.len() != self.blobs.len() {
            return Err(Error::ShapeMismatch {
                name: "<blob count>".into(),
                expected: vec![expected.len()],
                found: vec![self.blobs.len()],
            });
        }
        for (e, b) in expected.iter().zip(&self.blobs) {
            if e.name != b.name || e.shape != b.shape {
                return Err(Error::ShapeMismatch { name: b.name.clone(), expected: e.shape.clone(), found: b.shape.clone() });
            }
        }
        model.load_state(&self.blobs)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in model_entries(&self.model).into_iter().chain(preprocess_entries(&self.preprocess)) {
            header += &format!("{k} = {v}\n");
        }
        header += &format!("classes = {}\n", self.class_names.join(","));
        for (k, v) in &self.metadata {
            header += &format!("meta.{k} = {v}\n");
        }
        let mut offset = 0;
        for b in &self.blobs {
            let len = b.data.len() * 4;
            header += &format!("blob = {} {} {offset} {len}\n", b.name, shape_text(&b.shape));
            offset += len;
        }
        header += &format!("data_bytes = {offset}\n{SEPARATOR}\n");
        let mut bytes = header.into_bytes();
        bytes.reserve(offset);
        for b in &self.blobs {
            for v in &b.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Error::CorruptCheckpoint(m);
        let marker = format!("\n{SEPARATOR}\n");
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker.as_bytes())
            .ok_or_else(|| corrupt("header terminator not found (truncated?)".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8".into()))?;
        let data = &bytes[split + marker.len()..];

        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| corrupt(format!("not a checkpoint (first line {first:?})")))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version.into(), expected: CHECKPOINT_VERSION.into() });
        }

        let mut model = ModelConfig::mini();
        let mut preprocess = PreprocessParams::default();
        let mut class_names = Vec::new();
        let mut metadata = BTreeMap::new();
        let mut table = Vec::new();
        let mut data_bytes = None;
        for line in lines {
            let (key, value) = line.split_once(" = ").ok_or_else(|| corrupt(format!("bad header line {line:?}")))?;
            if apply_model_key(&mut model, key, value)? || apply_preprocess_key(&mut preprocess, key, value)? {
                continue;
            }
            if let Some(meta) = key.strip_prefix("meta.") {
                metadata.insert(meta.to_string(), value.to_string());
                continue;
            }
            match key {
                "classes" => class_names = value.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                "blob" => {
                    let parts: Vec<&str> = value.split(' ').collect();
                    let [name, shape, offset, len] = parts[..] else {
                        return Err(corrupt(format!("bad blob entry {value:?}")));
                    };
                    let shape: Vec<usize> = shape
                        .split('x')
                        .map(|d| d.parse().map_err(|_| corrupt(format!("bad shape in {value:?}"))))
                        .collect::<Result<_>>()?;
                    let offset: usize = offset.parse().map_err(|_| corrupt(format!("bad offset in {value:?}")))?;
                    let len: usize = len.parse().map_err(|_| corrupt(format!("bad length in {value:?}")))?;
                    if len != shape.iter().product::<usize>() * 4 {
                        return Err(corrupt(format!("blob {name}: length {len} does not match shape")));
                    }
                    table.push((name.to_string(), shape, offset, len));
                }
                "data_bytes" => data_bytes = Some(value.parse::<usize>().map_err(|_| corrupt("bad data_bytes".into()))?),
                _ => return Err(corrupt(format!("unknown header key {key:?}"))),
            }
        }
        let data_bytes = data_bytes.ok_or_else(|| corrupt("missing data_bytes".into()))?;
        if data.len() != data_bytes {
            return Err(corrupt(format!("expected {data_bytes} data bytes, found {}", data.len())));
        }
        let mut blobs = Vec::with_capacity(table.len());
        for (name, shape, offset, len) in table {
            let chunk = offset
                .checked_add(len)
                .and_then(|end| data.get(offset..end))
                .ok_or_else(|| corrupt(format!("blob {name} lies outside the data section")))?;
            let values = chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            blobs.push(StateBlob { name, shape, data: values });
        }
        Ok(Self { model, preprocess, class_names, metadata, blobs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Loads and verifies that the blobs fit the stored configuration.
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Self::from_bytes(&fs::read(path).at(path)?)?;
        ckpt.to_model()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use almond_core::nn::Tensor;

    fn sample() -> (Checkpoint, Sequential<f32>) {
        let cfg = ModelConfig::mini();
        let specs = build_almondnet20(&cfg).unwrap();
        let model = Sequential::<f32>::new(&specs, &cfg.input_shape(), 3).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, &cfg, &PreprocessParams::default(), &["almond".into(), "shell".into()]);
        ckpt.metadata.insert("epoch".into(), "4".into());
        (ckpt, model)
    }

    #[test]
    fn bytes_round_trip_is_exact() {
        let (ckpt, model) = sample();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        let x = Tensor::from_fn(&[2, 32, 32, 1], |i| (i % 17) as f32 / 17.0);
        let a = model.infer_logits(&x).unwrap();
        let b = back.to_model().unwrap().infer_logits(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncation_and_version() {
        let (ckpt, _) = sample();
        let bytes = ckpt.to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10, 0] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
        let text = String::from_utf8_lossy(&bytes[..40]).to_string();
        let v2 = [text.replacen("v1", "v2", 1).as_bytes(), &bytes[40..]].concat();
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let (mut ckpt, _) = sample();
        ckpt.model.channel_multiplier = 0.125;
        assert!(matches!(ckpt.to_model(), Err(Error::ShapeMismatch { .. })));
    }
}
