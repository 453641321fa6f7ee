//! Little-endian binary encoding helpers shared by the dataset and
//! checkpoint formats. Decoding errors carry the byte offset at which
//! parsing failed.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("truncated input at byte {offset}: needed {needed} more byte(s)")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic at byte {offset}: expected {expected:?}")]
    BadMagic { offset: usize, expected: [u8; 4] },
    #[error("unsupported version {found} at byte {offset}, expected {expected}")]
    Version { offset: usize, found: u32, expected: u32 },
    #[error("invalid value at byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("{trailing} trailing byte(s) after record end at byte {offset}")]
    Trailing { offset: usize, trailing: usize },
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn magic(&mut self, magic: [u8; 4]) {
        self.buf.extend_from_slice(&magic);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Appends `inner` as a length-prefixed record.
    pub fn record(&mut self, inner: &ByteWriter) {
        self.u64(inner.buf.len() as u64);
        self.buf.extend_from_slice(&inner.buf);
    }
}

#[derive(Debug)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Offset of `buf[0]` in the enclosing file, for error reporting.
    base: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0, base: 0 }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                offset: self.offset(),
                needed: n - self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), DecodeError> {
        let offset = self.offset();
        let got = self.take(4)?;
        if got != expected {
            return Err(DecodeError::BadMagic { offset, expected });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<(), DecodeError> {
        let offset = self.offset();
        let found = self.u32()?;
        if found != expected {
            return Err(DecodeError::Version { offset, found, expected });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, DecodeError> {
        let offset = self.offset();
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| DecodeError::Invalid {
            offset,
            message: format!("length {v} does not fit in usize"),
        })
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>, DecodeError> {
        let n = self.usize()?;
        let offset = self.offset();
        if self.remaining() < n.saturating_mul(8) {
            return Err(DecodeError::Truncated {
                offset,
                needed: n * 8 - self.remaining(),
            });
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.usize()?;
        let offset = self.offset();
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Invalid {
            offset,
            message: "string is not valid utf-8".into(),
        })
    }

    /// Reads a length-prefixed record and returns a reader scoped to it.
    pub fn record(&mut self) -> Result<ByteReader<'a>, DecodeError> {
        let len = self.usize()?;
        let base = self.offset();
        let bytes = self.take(len)?;
        Ok(ByteReader { buf: bytes, pos: 0, base })
    }

    /// Fails if any bytes are left unread.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.remaining() != 0 {
            return Err(DecodeError::Trailing {
                offset: self.offset(),
                trailing: self.remaining(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_primitives() {
        let mut w = ByteWriter::new();
        w.magic(*b"TEST");
        w.u32(1);
        w.u64(42);
        w.f64(-1.5);
        w.str("hello");
        w.f64_slice(&[1.0, 2.0]);
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&bytes);
        r.magic(*b"TEST").unwrap();
        r.version(1).unwrap();
        assert_eq!(r.u64().unwrap(), 42);
        assert_eq!(r.f64().unwrap(), -1.5);
        assert_eq!(r.str().unwrap(), "hello");
        assert_eq!(r.f64_vec().unwrap(), vec![1.0, 2.0]);
        r.finish().unwrap();
    }

    #[test]
    fn truncation_reports_offset() {
        let mut w = ByteWriter::new();
        w.u64(100); // claims 100 bytes follow
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&bytes);
        match r.record() {
            Err(DecodeError::Truncated { offset: 8, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_detected() {
        let mut w = ByteWriter::new();
        w.u32(7);
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&bytes);
        assert!(matches!(
            r.version(1),
            Err(DecodeError::Version { found: 7, expected: 1, .. })
        ));
    }
}
