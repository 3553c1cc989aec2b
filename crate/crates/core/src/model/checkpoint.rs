//! Binary checkpoint container.
//!
//! All integers are little-endian `u32`, values are the IEEE-754 bit patterns
//! of `f64`, also little-endian:
//!
//! ```text
//! magic "TREECONV" | version | k | vocab | layers | out_channels[layers]
//! | tensors | { name_len | name (utf-8) | rank | dims[rank] | values } ...
//! | fnv1a-64 of every preceding byte (u64)
//! ```

use std::path::Path;

use thiserror::Error;

use super::{ModelError, ModelParams};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"TREECONV";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch; file is corrupt")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("tensor {name}: shape {found:?} does not match expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
    #[error("checkpoint has k={found}, run expects k={expected}; first differing tensor: {tensor}")]
    WindowMismatch {
        expected: usize,
        found: usize,
        tensor: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION as usize);
    put_u32(&mut buf, model.k());
    put_u32(&mut buf, model.vocab_size());
    put_u32(&mut buf, model.plan().layers());
    for c in model.plan().out_channels() {
        put_u32(&mut buf, *c);
    }
    put_u32(&mut buf, model.params.len());
    for p in model.params.iter() {
        put_u32(&mut buf, p.name.len());
        buf.extend_from_slice(p.name.as_bytes());
        put_u32(&mut buf, p.value.rank());
        for d in p.value.shape() {
            put_u32(&mut buf, *d);
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        let b = self.take(8)?;
        Ok(f64::from_bits(u64::from_le_bytes(b.try_into().unwrap())))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadMagic
        });
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        // A short file almost always fails here; report which.
        return Err(match decode_body(&mut Reader { bytes: body, pos: r.pos }) {
            Err(CheckpointError::Truncated) => CheckpointError::Truncated,
            _ => CheckpointError::Checksum,
        });
    }
    let mut r = Reader { bytes: body, pos: r.pos };
    let model = decode_body(&mut r)?;
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

fn decode_body(r: &mut Reader<'_>) -> Result<ModelParams, CheckpointError> {
    let k = r.u32()?;
    let vocab = r.u32()?;
    let layers = r.u32()?;
    if k < 2 || layers != k - 1 {
        return Err(CheckpointError::Corrupt(format!(
            "{layers} layers inconsistent with k={k}"
        )));
    }
    let mut plan = Vec::with_capacity(layers);
    for _ in 0..layers {
        plan.push(r.u32()?);
    }
    let mut model = ModelParams::zeros(k, vocab)?;
    if plan != model.plan().out_channels() {
        return Err(CheckpointError::Corrupt(format!(
            "channel plan {plan:?} differs from {:?}",
            model.plan().out_channels()
        )));
    }
    let count = r.u32()?;
    if count != model.params.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{count} tensors, expected {}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()?;
        if rank > 3 {
            return Err(CheckpointError::Corrupt(format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()?);
        }
        let id = model
            .params
            .id(&name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("unexpected tensor {name}")))?;
        let slot = model.params.get_mut(id);
        if slot.value.shape() != shape.as_slice() {
            return Err(CheckpointError::Shape {
                name,
                expected: slot.value.shape().to_vec(),
                found: shape,
            });
        }
        let mut data = Vec::with_capacity(slot.value.len());
        for _ in 0..slot.value.len() {
            data.push(r.f64()?);
        }
        slot.value = Tensor::new(shape, data).expect("shape checked");
    }
    Ok(model)
}

pub fn save_params(model: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(model)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_params(path: &Path) -> Result<ModelParams, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// Loads a checkpoint and checks it against the architecture of a
/// `(k, vocab)` run, naming the first tensor that does not line up.
pub fn load_params_for(
    path: &Path,
    k: usize,
    vocab_size: usize,
) -> Result<ModelParams, CheckpointError> {
    let model = load_params(path)?;
    let expected = ModelParams::zeros(k, vocab_size)?;
    for want in expected.params.iter() {
        match model.params.by_name(&want.name) {
            None => {
                return Err(if model.k() != k {
                    CheckpointError::WindowMismatch {
                        expected: k,
                        found: model.k(),
                        tensor: want.name.clone(),
                    }
                } else {
                    CheckpointError::Missing(want.name.clone())
                })
            }
            Some(have) if have.value.shape() != want.value.shape() => {
                return Err(CheckpointError::Shape {
                    name: want.name.clone(),
                    expected: want.value.shape().to_vec(),
                    found: have.value.shape().to_vec(),
                })
            }
            Some(_) => {}
        }
    }
    if model.k() != k {
        // Extra layers only: report the first tensor the run would not use.
        let extra = model
            .params
            .iter()
            .find(|p| expected.params.id(&p.name).is_none())
            .map(|p| p.name.clone())
            .unwrap_or_default();
        return Err(CheckpointError::WindowMismatch {
            expected: k,
            found: model.k(),
            tensor: extra,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, predict};
    use crate::windowing::SampleWindow;
    use crate::LabelPair;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = init_params(4, 37, 9).unwrap();
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back, m);
        let w = SampleWindow::from_sensors(&[1, 5, 9, 30], 4, 37, LabelPair::new(0, 0));
        let (a, b) = (predict(&m, &w).unwrap(), predict(&back, &w).unwrap());
        for (x, y) in a.activity_probs.data().iter().zip(b.activity_probs.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode(&init_params(2, 5, 1).unwrap());
        for cut in [0, 4, 8, 12, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        assert!(matches!(decode(&bytes[..bytes.len() - 9]), Err(CheckpointError::Truncated)));
    }

    #[test]
    fn flipped_byte_is_rejected() {
        let mut bytes = encode(&init_params(2, 5, 1).unwrap());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = encode(&init_params(2, 5, 1).unwrap());
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(CheckpointError::Version { found: 9 })));
        assert!(matches!(decode(b"NOTACHECKPOINT"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn smaller_k_names_missing_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k6.ckpt");
        save_params(&init_params(6, 37, 1).unwrap(), &path).unwrap();
        let err = load_params_for(&path, 8, 37).unwrap_err();
        assert!(err.to_string().contains("layer6.event.weight"), "{err}");
        assert!(load_params_for(&path, 6, 37).is_ok());
    }

    #[test]
    fn vocab_mismatch_names_head() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        save_params(&init_params(3, 20, 1).unwrap(), &path).unwrap();
        let err = load_params_for(&path, 3, 37).unwrap_err();
        assert!(err.to_string().contains("resident_head.weight"), "{err}");
    }
}
