//! Parameter snapshots on disk.
//!
//! Layout: the 5-byte magic `LGCV1`, then one block per parameter in
//! store order: name length (u32 LE), UTF-8 name, four shape dims
//! n, c, h, w (u32 LE each), then n*c*h*w values as f32 LE. No
//! padding, no trailer; any leftover or missing bytes is corruption.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tape::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 5] = b"LGCV1";

/// Longest parameter name accepted when loading; a guard against
/// reading garbage lengths from corrupt files.
const MAX_NAME_BYTES: usize = 4096;

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        file: file_name(path),
        reason: reason.into(),
    }
}

/// Serializes every parameter value (gradients are not persisted).
pub fn save(store: &ParamStore<f32>, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(MAGIC.len() + store.total_elements() * 4);
    bytes.extend_from_slice(MAGIC);
    for (name, entry) in store.iter() {
        let name_len = u32::try_from(name.len())
            .map_err(|_| corrupt(path, format!("parameter name {name} is too long to encode")))?;
        bytes.extend_from_slice(&name_len.to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        let s = entry.value.shape();
        for dim in [s.n, s.c, s.h, s.w] {
            let dim = u32::try_from(dim)
                .map_err(|_| corrupt(path, format!("dimension {dim} is too large to encode")))?;
            bytes.extend_from_slice(&dim.to_le_bytes());
        }
        for &v in entry.value.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::Checkpoint {
        file: file_name(path),
        reason: format!("write failed: {e}"),
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str, path: &Path) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| {
            corrupt(path, format!("{what}: length overflows"))
        })?;
        if end > self.bytes.len() {
            return Err(corrupt(
                path,
                format!(
                    "truncated reading {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn take_u32(&mut self, what: &str, path: &Path) -> Result<u32> {
        let b = self.take(4, what, path)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Reads a snapshot back into a fresh store (zeroed gradients), in the
/// order it was written. Validates the magic, every length field, and
/// that the file ends exactly at the last value.
pub fn load(path: &Path) -> Result<ParamStore<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint {
        file: file_name(path),
        reason: format!("read failed: {e}"),
    })?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take(MAGIC.len(), "magic", path)?;
    if magic != MAGIC {
        return Err(corrupt(path, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut store = ParamStore::new();
    while cur.remaining() > 0 {
        let name_len = cur.take_u32("name length", path)? as usize;
        if name_len == 0 || name_len > MAX_NAME_BYTES {
            return Err(corrupt(path, format!("implausible name length {name_len}")));
        }
        let name_bytes = cur.take(name_len, "parameter name", path)?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| corrupt(path, "parameter name is not UTF-8"))?
            .to_string();
        let mut dims = [0usize; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let dim = cur.take_u32("shape", path)? as usize;
            if dim == 0 {
                return Err(corrupt(path, format!("{name}: shape dimension {i} is zero")));
            }
            *d = dim;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(path, format!("{name}: element count overflows")))?;
        let byte_len = count
            .checked_mul(4)
            .ok_or_else(|| corrupt(path, format!("{name}: byte count overflows")))?;
        let raw = cur.take(byte_len, "parameter values", path)?;
        let mut data = Vec::with_capacity(count);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let tensor = Tensor::from_vec(shape, data)
            .map_err(|e| corrupt(path, format!("{name}: {e}")))?;
        store
            .insert(&name, tensor)
            .map_err(|_| corrupt(path, format!("duplicate parameter {name}")))?;
    }
    Ok(store)
}
