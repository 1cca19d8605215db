//! Versioned binary checkpoint format.
//!
//! Layout (integers little-endian, floats 32-bit little-endian):
//!
//! ```text
//! magic "RSCK" | version u8 | config_len u32 | config JSON
//! | blob_count u32 | blobs...
//! blob: name_len u16 | name utf-8 | rank u8 | extents u32 x rank | values f32
//! ```
//!
//! Blobs hold trainable parameters, batch-norm running statistics,
//! normalization statistics, and (for resumable training checkpoints)
//! optimizer velocity and progress counters. Round-trips are bit-exact.

use std::io::Read;
use std::path::Path;

use crate::data::NormStats;
use crate::error::ModelError;
use crate::numerics::{Scalar, Tensor};

use super::{ModelConfig, RscnetModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RSCK";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Parsed checkpoint container: the model configuration plus named,
/// shaped f32 blobs in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub blobs: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig) -> Self {
        Checkpoint {
            config,
            blobs: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.blobs.push((name.into(), shape, values));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.blobs
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, v)| (s.as_slice(), v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config_json = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&config_json);
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, shape, values) in &self.blobs {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &e in shape {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = cur.take(1)?[0];
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let config_len = cur.u32()? as usize;
        let config_json = cur.take(config_len)?;
        let config: ModelConfig = serde_json::from_slice(config_json)
            .map_err(|e| ModelError::Corrupt(format!("config: {e}")))?;
        let blob_count = cur.u32()? as usize;
        // Each blob needs at least name_len + rank + no values.
        if blob_count > bytes.len() {
            return Err(ModelError::Corrupt(format!(
                "blob count {blob_count} exceeds file size"
            )));
        }
        let mut blobs = Vec::with_capacity(blob_count.min(1024));
        for _ in 0..blob_count {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| ModelError::Corrupt("blob name is not utf-8".into()))?
                .to_string();
            let rank = cur.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            let mut numel: usize = 1;
            for _ in 0..rank {
                let e = cur.u32()? as usize;
                numel = numel
                    .checked_mul(e)
                    .ok_or_else(|| ModelError::Corrupt("blob extent overflow".into()))?;
                shape.push(e);
            }
            if numel.checked_mul(4).map_or(true, |b| b > cur.remaining()) {
                return Err(ModelError::Corrupt(format!(
                    "blob '{name}' declares {numel} values beyond end of file"
                )));
            }
            let raw = cur.take(numel * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            blobs.push((name, shape, values));
        }
        if cur.remaining() != 0 {
            return Err(ModelError::Corrupt(format!(
                "{} trailing bytes",
                cur.remaining()
            )));
        }
        Ok(Checkpoint { config, blobs })
    }

    pub fn from_reader(mut reader: impl Read) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn read_from(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.remaining() < n {
            return Err(ModelError::Corrupt(format!(
                "need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Serialize model parameters, batch-norm buffers, and normalization
/// statistics into a checkpoint.
pub fn save_model<T: Scalar>(model: &RscnetModel<T>) -> Checkpoint {
    let mut ck = Checkpoint::new(model.config.clone());
    for (name, tensor) in model.named_params() {
        ck.push(
            name,
            tensor.shape().to_vec(),
            tensor.values().iter().map(|v| v.to_f32()).collect(),
        );
    }
    for (name, buffer) in model.named_buffers() {
        let values = buffer.borrow();
        ck.push(
            name,
            vec![values.len()],
            values.iter().map(|v| v.to_f32()).collect(),
        );
    }
    if let Some(norm) = &model.norm {
        let shape = vec![norm.n_antennas, norm.n_subcarriers];
        ck.push(
            "norm.mean",
            shape.clone(),
            norm.mean.iter().map(|v| v.to_f32()).collect(),
        );
        ck.push(
            "norm.std",
            shape,
            norm.std.iter().map(|v| v.to_f32()).collect(),
        );
    }
    ck
}

/// Rebuild a model from a checkpoint. Every parameter and buffer must be
/// present with its exact shape; unknown blobs (optimizer state) are
/// ignored.
pub fn load_model<T: Scalar>(ck: &Checkpoint) -> Result<RscnetModel<T>, ModelError> {
    let mut model = RscnetModel::<T>::new(&ck.config, 0)?;
    for (name, slot) in model.named_params_mut() {
        let (shape, values) = ck
            .get(&name)
            .ok_or_else(|| ModelError::MissingBlob(name.clone()))?;
        if shape != slot.shape() {
            return Err(ModelError::BlobShapeMismatch {
                name,
                expected: format!("{:?}", slot.shape()),
                got: format!("{shape:?}"),
            });
        }
        let t: Vec<T> = values.iter().map(|&v| T::from_f32(v)).collect();
        *slot = Tensor::leaf(slot.shape().to_vec(), t, true)?;
    }
    for (name, buffer) in model.named_buffers() {
        let (shape, values) = ck
            .get(&name)
            .ok_or_else(|| ModelError::MissingBlob(name.clone()))?;
        let expected = buffer.borrow().len();
        if shape.iter().product::<usize>() != expected {
            return Err(ModelError::BlobShapeMismatch {
                name,
                expected: format!("[{expected}]"),
                got: format!("{shape:?}"),
            });
        }
        *buffer.borrow_mut() = values.iter().map(|&v| T::from_f32(v)).collect();
    }
    if let (Some((shape, mean)), Some((_, std))) = (ck.get("norm.mean"), ck.get("norm.std")) {
        model.norm = Some(NormStats {
            n_antennas: shape[0],
            n_subcarriers: shape[1],
            mean: mean.iter().map(|&v| T::from_f32(v)).collect(),
            std: std.iter().map(|&v| T::from_f32(v)).collect(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_timesteps: 20,
            window_frames: 5,
            compression_ratio: 3.0 / (3.0 * 30.0 * 5.0),
            encoder_width: 2,
            n_classes: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let model = RscnetModel::<f32>::new(&tiny_config(), 7).unwrap();
        let ck = save_model(&model);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck, back);
        assert_eq!(back.to_bytes(), bytes);

        let restored = load_model::<f32>(&back).unwrap();
        for ((n1, t1), (n2, t2)) in model.named_params().iter().zip(restored.named_params()) {
            assert_eq!(*n1, n2);
            assert_eq!(t1.values(), t2.values(), "{n1}");
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let model = RscnetModel::<f32>::new(&tiny_config(), 7).unwrap();
        let mut bytes = save_model(&model).to_bytes();
        bytes[0] ^= 0xff;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(ModelError::BadMagic)
        ));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let model = RscnetModel::<f32>::new(&tiny_config(), 7).unwrap();
        let mut bytes = save_model(&model).to_bytes();
        bytes[4] = 99;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(ModelError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn truncation_is_rejected() {
        let model = RscnetModel::<f32>::new(&tiny_config(), 7).unwrap();
        let bytes = save_model(&model).to_bytes();
        for cut in [3usize, 8, 40, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut={cut}");
        }
    }

    #[test]
    fn missing_parameter_blob_is_rejected() {
        let model = RscnetModel::<f32>::new(&tiny_config(), 7).unwrap();
        let mut ck = save_model(&model);
        ck.blobs.remove(0);
        assert!(matches!(
            load_model::<f32>(&ck),
            Err(ModelError::MissingBlob(_))
        ));
    }
}
