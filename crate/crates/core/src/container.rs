//! Binary tensor container shared by model weights and baseline bases.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes ("VAEW", "PCAB", "DCTB", "ADAM")
//! version    u32 = 1
//! meta_len   u32, then meta_len bytes of UTF-8 text
//! count      u32
//! manifest   count × { name_len u32, name bytes, rank u32, dims rank × u64 }
//! payload    tensors in manifest order, each as f64 little-endian values
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const VERSION: u32 = 1;

/// Text metadata plus an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(magic: &[u8; 4], meta: String) -> Self {
        Container {
            magic: *magic,
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], expected_magic: &[u8; 4], origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::format("tensor container", origin, detail);
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != expected_magic {
            return Err(bad(format!(
                "magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(expected_magic)
            )));
        }
        let version = read_u32(&mut r).map_err(|e| bad(e.to_string()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let meta_len = read_u32(&mut r).map_err(|e| bad(e.to_string()))? as usize;
        let meta = read_string(&mut r, meta_len).map_err(|e| bad(e.to_string()))?;
        let count = read_u32(&mut r).map_err(|e| bad(e.to_string()))? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = read_u32(&mut r).map_err(|e| bad(e.to_string()))? as usize;
            let name = read_string(&mut r, name_len).map_err(|e| bad(e.to_string()))?;
            let rank = read_u32(&mut r).map_err(|e| bad(e.to_string()))? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|e| bad(e.to_string()))?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            manifest.push((name, dims));
        }
        let mut tensors = Vec::with_capacity(manifest.len());
        for (name, dims) in manifest {
            let n: usize = dims.iter().product();
            if r.len() < n * 8 {
                return Err(bad(format!("payload of `{name}` truncated")));
            }
            let (payload, rest) = r.split_at(n * 8);
            r = rest;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| bad(format!("`{name}`: {e}")))?;
            tensors.push((name, t));
        }
        if !r.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.len())));
        }
        Ok(Container { magic, meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path, expected_magic: &[u8; 4]) -> Result<Self> {
        let bytes = fs::read(path)?;
        Container::from_bytes(&bytes, expected_magic, path)
    }
}

fn read_u32(r: &mut &[u8]) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut &[u8], len: usize) -> std::io::Result<String> {
    if r.len() < len {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    let (head, rest) = r.split_at(len);
    *r = rest;
    String::from_utf8(head.to_vec()).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_with_manifest_first() {
        let mut c = Container::new(b"VAEW", "{}".into());
        c.push("a", Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"VAEW");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..14], b"{}");
        assert_eq!(&bytes[14..18], &1u32.to_le_bytes());
        // name_len, name, rank, 2 dims, then payload
        let payload_start = 18 + 4 + 1 + 4 + 16;
        assert_eq!(&bytes[payload_start..payload_start + 8], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), payload_start + 16);
        let back = Container::from_bytes(&bytes, b"VAEW", Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut c = Container::new(b"PCAB", String::new());
        c.push("m", Tensor::zeros(&[3]));
        let bytes = c.to_bytes();
        assert!(Container::from_bytes(&bytes, b"DCTB", Path::new("mem")).is_err());
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1], b"PCAB", Path::new("mem")).is_err());
    }
}
