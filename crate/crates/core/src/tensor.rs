//! `.swt` tensor files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SWT1" | version: u32 | rank: u32 | dims: u64 × rank | dtype: u8 (0 = f32) | payload
//! ```
//!
//! The payload is row-major and exactly `product(dims) × 4` bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SWT1";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let expected: u64 = dims.iter().product();
        if expected != data.len() as u64 {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Narrows `f64` samples to `f32`.
    pub fn from_f64(dims: Vec<u64>, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::new(dims, values.into_iter().map(|v| v as f32).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(DTYPE_F32);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let take = |at: usize, n: usize| -> Result<&[u8]> {
            bytes
                .get(at..at + n)
                .ok_or_else(|| fail(format!("truncated header at byte {at}")))
        };
        if take(0, 4)? != MAGIC {
            return Err(fail("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let rank = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
        let mut dims = Vec::with_capacity(rank);
        for k in 0..rank {
            dims.push(u64::from_le_bytes(take(12 + 8 * k, 8)?.try_into().unwrap()));
        }
        let dtype_at = 12 + 8 * rank;
        let dtype = take(dtype_at, 1)?[0];
        if dtype != DTYPE_F32 {
            return Err(fail(format!("unsupported dtype code {dtype}")));
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("dimension product overflows".into()))?;
        let payload = &bytes[dtype_at + 1..];
        if payload.len() as u64 != count * 4 {
            return Err(fail(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                count * 4
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }
}

/// Writes via a temporary sibling and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &tensor.encode())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let b = t.encode();
        assert_eq!(&b[0..4], b"SWT1");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..20], &2u64.to_le_bytes());
        assert_eq!(&b[20..28], &1u64.to_le_bytes());
        assert_eq!(b[28], 0);
        assert_eq!(&b[29..33], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 29 + 8);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("x.swt");
        let good = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().encode();
        assert!(Tensor::decode(&good[..good.len() - 1], p).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(Tensor::decode(&bad_magic, p).is_err());
        let mut bad_dtype = good.clone();
        bad_dtype[20] = 7;
        assert!(Tensor::decode(&bad_dtype, p).is_err());
        assert!(Tensor::decode(&good[..10], p).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/t.swt");
        let t = Tensor::new(vec![2, 3], vec![0.5, -0.0, f32::MIN_POSITIVE, 1e30, -7.25, 3.0]).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.dims, t.dims);
        assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(!path.with_extension("swt.tmp").exists());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(bits in proptest::collection::vec(any::<u32>(), 0..64), split in 1usize..8) {
            let data: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let dims = if !data.is_empty() && data.len() % split == 0 {
                vec![split as u64, (data.len() / split) as u64]
            } else {
                vec![data.len() as u64]
            };
            let t = Tensor::new(dims, data).unwrap();
            let back = Tensor::decode(&t.encode(), Path::new("mem")).unwrap();
            prop_assert_eq!(&back.dims, &t.dims);
            prop_assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
