//! Binary container for named `f32` arrays plus a small text metadata block.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes   "UGAN"
//! version      u32       1
//! meta_len     u32       length of the metadata block in bytes
//! meta         UTF-8     `key=value` lines
//! n_arrays     u32
//! per array:
//!   name_len   u32
//!   name       UTF-8
//!   rank       u32
//!   extents    u64 × rank
//!   payload    f32 × product(extents)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UGAN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub arrays: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn push<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.arrays.push((name.into(), t.cast()));
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key `{key}`")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for `{key}`: {raw:?}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take<T: Scalar>(&self, name: &str, shape: &[usize]) -> Result<Tensor<T>> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("array `{name}` not found")))?;
        if t.shape() != shape {
            return Err(Error::CheckpointMismatch(format!(
                "array `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                shape
            )));
        }
        Ok(t.cast())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut meta = String::new();
        for (k, v) in &self.meta {
            assert!(
                !k.contains(['=', '\n']) && !v.contains('\n'),
                "metadata `{k}`"
            );
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, t) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a UGAN checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta_raw = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_raw.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let n = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| Error::Checkpoint(format!("array `{name}` extents overflow")))?;
            let payload = r.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| Error::Checkpoint(format!("array `{name}` too large")))?,
            )?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { meta, arrays })
    }

    /// Writes via a temporary file and rename so an interrupted write never
    /// replaces an existing checkpoint with a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated at byte {} (wanted {n} more, {} left)",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.set_meta("epoch", 3);
        c.push(
            "w",
            &Tensor::new([2, 3], vec![1.0f32, -2.5, 3.0, 0.0, 1e-30, f32::MAX]).unwrap(),
        );
        c.push("s", &Tensor::scalar(0.5f64));
        c
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"UGAN");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        let meta_len = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
        assert_eq!(&b[12..12 + meta_len], b"epoch=3\n");
        let n = u32::from_le_bytes(b[12 + meta_len..16 + meta_len].try_into().unwrap());
        assert_eq!(n, 2);
        // first record: name "w", rank 2, extents 2 and 3 as u64
        let rec = &b[16 + meta_len..];
        assert_eq!(u32::from_le_bytes(rec[..4].try_into().unwrap()), 1);
        assert_eq!(rec[4], b'w');
        assert_eq!(u32::from_le_bytes(rec[5..9].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(rec[9..17].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(rec[17..25].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(rec[25..29].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.meta_parse::<u32>("epoch").unwrap(), 3);
        assert_eq!(back.get("s").unwrap().shape(), &[] as &[usize]);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let b = sample().to_bytes();
        for bad in [&b[..b.len() - 1], &b[..10], b"NOPE\x01\0\0\0"] {
            let e = Checkpoint::from_bytes(bad).unwrap_err();
            assert!(e.is_data_format(), "{e}");
        }
        let mut v2 = b.clone();
        v2[4] = 9;
        assert!(Checkpoint::from_bytes(&v2)
            .unwrap_err()
            .to_string()
            .contains("version"));
        let mut extra = b;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn take_checks_shape() {
        let c = sample();
        assert!(c.take::<f32>("w", &[2, 3]).is_ok());
        assert!(matches!(
            c.take::<f32>("w", &[3, 2]),
            Err(Error::CheckpointMismatch(_))
        ));
        assert!(matches!(
            c.take::<f32>("nope", &[1]),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}
