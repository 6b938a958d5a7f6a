//! Binary weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! "PDF2"            magic, 4 bytes
//! u32               version (1)
//! u32               metadata count, then per entry:
//!   u16 len, key    UTF-8
//!   u16 len, value  UTF-8
//! u32               tensor count, then per tensor:
//!   u16 len, name   UTF-8
//!   u8              dtype (0 = f32, 1 = f64)
//!   u8              rank
//!   u32 x rank      dims
//!   raw data
//! ```

use std::path::Path;

use super::tensor::{DType, ParamStore, Tensor, TensorData};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 4] = b"PDF2";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.metadata().len() as u32).to_le_bytes());
    for (k, v) in store.metadata() {
        put_str(&mut out, k)?;
        put_str(&mut out, v)?;
    }
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        put_str(&mut out, name)?;
        out.push(t.dtype() as u8);
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| Error::domain(format!("{name}: rank above 255")))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::domain(format!("{name}: dim too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        match t.data() {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::domain(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let at = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(at as u64, format!("{what} is not valid UTF-8")))
    }
}

pub fn decode(buf: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, not a PDF2 container"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported container version {version}")));
    }
    let mut store = ParamStore::new();
    let n_meta = r.u32("metadata count")?;
    for _ in 0..n_meta {
        let at = r.pos;
        let k = r.string("metadata key")?;
        let v = r.string("metadata value")?;
        if store.meta(&k).is_some() {
            return Err(Error::format(at as u64, format!("duplicate metadata key {k:?}")));
        }
        store.set_meta(k, v);
    }
    let n_tensors = r.u32("tensor count")?;
    for _ in 0..n_tensors {
        let at = r.pos as u64;
        let name = r.string("tensor name")?;
        let dtype = match r.u8("dtype")? {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(Error::format(r.pos as u64 - 1, format!("unknown dtype {other}"))),
        };
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(dtype.size()).map(|b| (n, b)));
        let Some((n, bytes)) = count else {
            return Err(Error::format(at, format!("{name}: shape overflows")));
        };
        let data_at = r.pos as u64;
        let raw = r.take(bytes, "tensor data")?;
        let tensor = match dtype {
            DType::F32 => Tensor::from_f32(
                shape,
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => Tensor::from_f64(
                shape,
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
        .map_err(|e| Error::format(data_at, format!("{name}: {e}")))?;
        debug_assert_eq!(tensor.len(), n);
        store
            .insert(name, tensor)
            .map_err(|e| Error::format(at, e.to_string()))?;
    }
    if r.pos != buf.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes after last tensor", buf.len() - r.pos),
        ));
    }
    Ok(store)
}

pub fn save_container(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(store)?;
    write_atomic(path.as_ref(), |f| {
        use std::io::Write;
        f.write_all(&bytes)?;
        Ok(())
    })
}

pub fn load_container(path: impl AsRef<Path>) -> Result<ParamStore> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.set_meta("variant", "unified");
        s.insert("a.weight", Tensor::from_f32(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-30, 7.0]).unwrap())
            .unwrap();
        s.insert("b", Tensor::from_f64(vec![1], vec![std::f64::consts::PI]).unwrap())
            .unwrap();
        s.insert("scalar", Tensor::from_f64(vec![], vec![0.5]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let back = decode(&encode(&s).unwrap()).unwrap();
        assert!(back.bit_eq(&s));
    }

    #[test]
    fn empty_store_has_zero_tensors() {
        let bytes = encode(&ParamStore::new()).unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(&bytes[12..16], &0u32.to_le_bytes());
        assert_eq!(bytes.len(), 16);
        assert!(decode(&bytes).unwrap().is_empty());
    }

    #[test]
    fn layout_is_stable() {
        let mut s = ParamStore::new();
        s.set_meta("k", "v");
        s.insert("t", Tensor::from_f32(vec![1], vec![1.0]).unwrap()).unwrap();
        let expect: Vec<u8> = [
            &b"PDF2"[..],
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1u16.to_le_bytes(),
            b"k",
            &1u16.to_le_bytes(),
            b"v",
            &1u32.to_le_bytes(),
            &1u16.to_le_bytes(),
            b"t",
            &[0u8, 1u8],
            &1u32.to_le_bytes(),
            &1.0f32.to_le_bytes(),
        ]
        .concat();
        assert_eq!(encode(&s).unwrap(), expect);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&sample()).unwrap();
        for cut in [3, 10, bytes.len() - 1] {
            match decode(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_version_and_trailing_bytes() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 4, .. })));
        let mut bytes = encode(&sample()).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.pdf2");
        save_container(&sample(), &p).unwrap();
        assert!(load_container(&p).unwrap().bit_eq(&sample()));
    }
}
