//! Versioned binary checkpoint container: a UTF-8 metadata blob plus named
//! arrays, all little-endian. Round-trip save/load is bit-exact.

use crate::math::DenseArray;
use crate::nn::ParamStore;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"LPCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (not a checkpoint file)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
}

/// Metadata text plus one parameter store. Sections of a run (model,
/// ensembles, replay states) are distinguished by name prefixes.
pub struct Checkpoint {
    pub meta: String,
    pub params: ParamStore,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = ckpt.meta.as_bytes();
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(meta);
    buf.extend_from_slice(&(ckpt.params.len() as u32).to_le_bytes());
    for (name, arr) in ckpt.params.iter() {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(arr.shape().len() as u32).to_le_bytes());
        for &d in arr.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in arr.values() {
            buf.extend_from_slice(&(v as f64).to_bits().to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = cur.u64()? as usize;
    let meta = String::from_utf8(cur.take(meta_len)?.to_vec())
        .map_err(|_| CheckpointError::Corrupt("metadata is not UTF-8"))?;
    let count = cur.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("name is not UTF-8"))?;
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_bits(cur.u64()?) as crate::math::Real);
        }
        params.insert(name, DenseArray::new(shape, values));
    }
    Ok(Checkpoint { meta, params })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;

    #[test]
    fn round_trip_bit_exact() {
        let mut rng = RngStream::seed_from(13);
        let mut params = ParamStore::new();
        params.insert(
            "a.w",
            DenseArray::matrix(3, 2, (0..6).map(|_| rng.standard_normal()).collect()),
        );
        params.insert("a.b", DenseArray::vector(vec![0.0, -0.0, 1.5e-300]));
        let ckpt = Checkpoint {
            meta: "kind = test\nseed = 7\n".to_string(),
            params,
        };
        let dir = std::env::temp_dir().join("lp_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.meta, ckpt.meta);
        assert_eq!(back.params.checksum(), ckpt.params.checksum());
        // Saving the loaded store again produces identical bytes.
        let path2 = dir.join("roundtrip2.ckpt");
        save_checkpoint(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn rejects_garbage() {
        let dir = std::env::temp_dir().join("lp_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
