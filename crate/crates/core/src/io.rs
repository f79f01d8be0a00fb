//! FLD1 binary field files, named-record archives, and small JSON/CSV helpers.
//!
//! FLD1 layout (little-endian throughout):
//!
//! ```text
//! "FLD1" | u32 rank | rank x (u8 axis tag, u32 extent) | product(extents) x f64
//! ```
//!
//! Archives hold several named fields (model checkpoints):
//!
//! ```text
//! "FLDA" | u32 count | count x (u32 name_len, name utf-8, u64 blob_len, FLD1 blob)
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Axis, Dim, Field};

pub const FIELD_MAGIC: &[u8; 4] = b"FLD1";
pub const ARCHIVE_MAGIC: &[u8; 4] = b"FLDA";

pub fn encode_field(f: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 5 * f.rank() + 8 * f.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(f.rank() as u32).to_le_bytes());
    for d in f.dims() {
        out.push(d.axis.tag());
        out.extend_from_slice(&(d.extent as u32).to_le_bytes());
    }
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Malformed {
                path: self.path.to_path_buf(),
                reason: "truncated header".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes one FLD1 blob; `path` is only used for error messages.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<Field> {
    if bytes.len() < 4 || &bytes[..4] != FIELD_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut r = Reader {
        bytes,
        pos: 4,
        path,
    };
    let rank = r.u32()? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let tag = r.u8()?;
        let axis = Axis::from_tag(tag).ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("unknown axis tag {tag}"),
        })?;
        dims.push(Dim::new(axis, r.u32()? as usize));
    }
    let declared: usize = dims.iter().map(|d| d.extent).product();
    let payload = &bytes[r.pos..];
    if payload.len() != declared * 8 {
        return Err(Error::LengthMismatch {
            declared,
            actual: payload.len() / 8,
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_vec(&dims, data)
}

pub fn write_field(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_field(f)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes, path)
}

pub fn write_archive(path: impl AsRef<Path>, records: &[(String, Field)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, field) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let blob = encode_field(field);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<(String, Field)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != ARCHIVE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut r = Reader {
        bytes: &bytes,
        pos: 4,
        path,
    };
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            reason: "record name is not utf-8".into(),
        })?;
        let blob_len = r.u64()? as usize;
        let blob = r.take(blob_len)?;
        records.push((name, decode_field(blob, path)?));
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Writes a CSV with a header row; values use Rust's shortest round-trip formatting.
pub fn write_csv<R, I>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: std::fmt::Display,
{
    let path = path.as_ref();
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn dims_strategy() -> impl Strategy<Value = Vec<Dim>> {
        prop::collection::vec((0u8..4, 1usize..5), 1..4).prop_map(|v| {
            v.into_iter()
                .map(|(t, e)| Dim::new(Axis::from_tag(t).unwrap(), e))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(dims in dims_strategy(), seed in any::<u64>()) {
            let f = RngStream::new(seed).standard_normal(&dims).unwrap();
            let back = decode_field(&encode_field(&f), Path::new("mem")).unwrap();
            prop_assert_eq!(back.dims(), f.dims());
            let a: Vec<u64> = f.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Field::from_vec(&[Dim::time(2), Dim::space(2)], vec![1.0, -0.0, 3.5, 1e-300]).unwrap();
        let p = dir.path().join("a.fld");
        write_field(&p, &f).unwrap();
        assert_eq!(read_field(&p).unwrap(), f);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let f = Field::new(&[Dim::space(2)], 1.0).unwrap();
        let mut bytes = encode_field(&f);
        bytes[0] = b'X';
        let err = decode_field(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn short_payload_is_length_mismatch() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FLD1");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..2 {
            bytes.push(2);
            bytes.extend_from_slice(&2u32.to_le_bytes());
        }
        for v in [1.0f64, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = decode_field(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
    }

    #[test]
    fn archive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.fla");
        let recs = vec![
            ("w0".to_string(), Field::new(&[Dim::channel(2), Dim::channel(3)], 0.5).unwrap()),
            ("b0".to_string(), Field::new(&[Dim::channel(3)], -1.0).unwrap()),
        ];
        write_archive(&p, &recs).unwrap();
        assert_eq!(read_archive(&p).unwrap(), recs);
    }
}
