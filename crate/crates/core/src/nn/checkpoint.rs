//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `FLCK`, `u32` version, `u8` dtype width
//! (4 or 8), `u32` metadata length and UTF-8 JSON metadata, `u32` slot count,
//! then per slot a `u16` name length, the name, a `u8` rank and `u64` dims,
//! and finally every parameter value in slot order.

use std::fs;
use std::path::Path;

use super::{Dtype, ParamVector, Real, Slot};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<R> {
    pub params: ParamVector<R>,
    pub meta: serde_json::Value,
    /// Precision the file was written in.
    pub stored: Dtype,
}

pub fn save_checkpoint<R: Real>(
    path: &Path,
    params: &ParamVector<R>,
    meta: &serde_json::Value,
) -> Result<()> {
    let mut out = Vec::with_capacity(params.data.len() * R::DTYPE.width() + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(R::DTYPE.width() as u8);
    let meta = serde_json::to_vec(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.slots.len() as u32).to_le_bytes());
    for s in &params.slots {
        out.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.push(s.shape.len() as u8);
        for d in &s.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
    }
    for v in &params.data {
        v.write_le(&mut out);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    }
    // Write-then-rename so a crash never leaves a truncated checkpoint.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &out).map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

/// Load a checkpoint, converting values to `R` if the file was written in the
/// other precision.
pub fn load_checkpoint<R: Real>(path: &Path) -> Result<Checkpoint<R>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let stored = match r.u8()? {
        4 => Dtype::F32,
        8 => Dtype::F64,
        w => return Err(Error::Checkpoint(format!("unknown value width {w}"))),
    };
    let meta_len = r.u32()? as usize;
    let meta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let n_slots = r.u32()? as usize;
    let mut slots = Vec::with_capacity(n_slots);
    let mut offset = 0;
    for _ in 0..n_slots {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("slot name: {e}")))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let slot = Slot {
            name,
            shape,
            offset,
        };
        offset += slot.len();
        slots.push(slot);
    }
    let width = stored.width();
    let raw = r.take(offset * width)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    let data = match stored {
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|c| R::from_f64(f64::read_le(c)))
            .collect(),
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|c| R::from_f64(f32::read_le(c) as f64))
            .collect(),
    };
    Ok(Checkpoint {
        params: ParamVector { data, slots },
        meta,
        stored,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{Activation, Mlp};

    #[test]
    fn round_trip_is_bit_exact() {
        let net = Mlp::<f64>::new(
            &[6, 16, 3],
            &[Activation::Relu, Activation::Identity],
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let pv = ParamVector::from_model(&net);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/net.ckpt");
        let meta = serde_json::json!({"algo": "dqn", "episodes": 3});
        save_checkpoint(&path, &pv, &meta).unwrap();
        let ck = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(ck.meta, meta);
        assert_eq!(ck.stored, Dtype::F64);
        assert_eq!(ck.params.slots, pv.slots);
        for (a, b) in ck.params.data.iter().zip(&pv.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut restored = net.zeros_like();
        ck.params.write_into(&mut restored).unwrap();
        assert_eq!(restored, net);
    }

    #[test]
    fn f32_files_load_as_f64() {
        let pv = ParamVector {
            data: vec![0.1f32, -2.5],
            slots: vec![Slot {
                name: "x".into(),
                shape: vec![2],
                offset: 0,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&path, &pv, &serde_json::Value::Null).unwrap();
        let ck = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(ck.stored, Dtype::F32);
        assert_eq!(ck.params.data, vec![0.1f32 as f64, -2.5]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Checkpoint(_))));
        let pv = ParamVector {
            data: vec![1.0f64],
            slots: vec![Slot {
                name: "x".into(),
                shape: vec![1],
                offset: 0,
            }],
        };
        save_checkpoint(&path, &pv, &serde_json::Value::Null).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Checkpoint(_))));
    }
}
