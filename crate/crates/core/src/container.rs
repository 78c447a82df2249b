//! Versioned binary container shared by datasets, coefficient sets and
//! trained models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes
//! version      u32
//! meta_len     u32
//! meta         meta_len bytes, UTF-8 JSON
//! payload_len  u64
//! payload      payload_len bytes
//! crc32        u32   (IEEE, over every preceding byte)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, FormatError, Result};

pub type Magic = [u8; 8];

const FIXED_HEADER: usize = 8 + 4 + 4;

pub fn encode(magic: &Magic, version: u32, meta: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER + meta.len() + 8 + payload.len() + 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decoded container body.
#[derive(Debug)]
pub struct Decoded<'a> {
    pub meta: &'a str,
    pub payload: &'a [u8],
}

fn need(bytes: &[u8], needed: usize) -> Result<(), FormatError> {
    if bytes.len() < needed {
        Err(FormatError::Truncated {
            needed: needed as u64,
            available: bytes.len() as u64,
        })
    } else {
        Ok(())
    }
}

pub fn decode<'a>(bytes: &'a [u8], magic: &Magic, version: u32) -> Result<Decoded<'a>, FormatError> {
    need(bytes, 8)?;
    if &bytes[..8] != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    need(bytes, FIXED_HEADER)?;
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != version {
        return Err(FormatError::Version {
            found,
            supported: version,
        });
    }
    let meta_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let meta_end = FIXED_HEADER + meta_len;
    need(bytes, meta_end + 8)?;
    let payload_len = u64::from_le_bytes(bytes[meta_end..meta_end + 8].try_into().unwrap());
    let payload_start = meta_end + 8;
    let body_end = (payload_start as u64).saturating_add(payload_len);
    let total = body_end.saturating_add(4);
    if (bytes.len() as u64) < total {
        return Err(FormatError::Truncated {
            needed: total,
            available: bytes.len() as u64,
        });
    }
    let body_end = body_end as usize;
    let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    if bytes.len() as u64 > total {
        return Err(FormatError::Trailing(bytes.len() as u64 - total));
    }
    let meta = std::str::from_utf8(&bytes[FIXED_HEADER..meta_end])
        .map_err(|e| FormatError::Metadata(e.to_string()))?;
    Ok(Decoded {
        meta,
        payload: &bytes[payload_start..body_end],
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Little-endian payload writer.
#[derive(Default)]
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) -> &mut Self {
        for v in vs {
            self.f64(*v);
        }
        self
    }

    pub fn complexes<'a>(&mut self, vs: impl IntoIterator<Item = &'a num_complex::Complex64>) -> &mut Self {
        for v in vs {
            self.f64(v.re).f64(v.im);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Little-endian payload reader with bounds checking.
pub struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FormatError::Payload(format!("payload ends before offset {}", self.pos + n)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, FormatError> {
        usize::try_from(self.u64()?).map_err(|_| FormatError::Payload("length exceeds usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| FormatError::Payload("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn complexes(&mut self, n: usize) -> Result<Vec<num_complex::Complex64>, FormatError> {
        let flat = self.f64s(n.checked_mul(2).ok_or_else(|| FormatError::Payload("length overflow".into()))?)?;
        Ok(flat
            .chunks_exact(2)
            .map(|c| num_complex::Complex64::new(c[0], c[1]))
            .collect())
    }

    pub fn finish(self) -> Result<(), FormatError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Payload(format!(
                "{} unread payload bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &Magic = b"TESTCONT";

    #[test]
    fn roundtrip() {
        let bytes = encode(MAGIC, 3, "{\"a\":1}", &[1, 2, 3]);
        let d = decode(&bytes, MAGIC, 3).unwrap();
        assert_eq!(d.meta, "{\"a\":1}");
        assert_eq!(d.payload, &[1, 2, 3]);
    }

    #[test]
    fn distinct_failures() {
        let bytes = encode(MAGIC, 3, "{}", &[9; 32]);
        assert!(matches!(decode(&bytes, b"OTHERMAG", 3), Err(FormatError::BadMagic { .. })));
        assert!(matches!(
            decode(&bytes, MAGIC, 4),
            Err(FormatError::Version { found: 3, supported: 4 })
        ));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 5], MAGIC, 3),
            Err(FormatError::Truncated { .. })
        ));
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x40;
        assert!(matches!(decode(&flipped, MAGIC, 3), Err(FormatError::Checksum { .. })));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode(&longer, MAGIC, 3), Err(FormatError::Trailing(1))));
        assert!(matches!(decode(&bytes[..4], MAGIC, 3), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn reader_bounds() {
        let mut w = PayloadWriter::default();
        w.u64(7).f64(1.5);
        let buf = w.finish();
        let mut r = PayloadReader::new(&buf);
        assert_eq!(r.u64().unwrap(), 7);
        assert_eq!(r.f64().unwrap(), 1.5);
        assert!(r.f64().is_err());
    }
}
