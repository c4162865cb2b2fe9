//! Little-endian primitives shared by the descriptor and vocabulary file formats.

use std::io::{self, Read};

use crate::error::{Error, Result};

pub(crate) struct LeReader<R> {
    inner: R,
    consumed: u64,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner, consumed: 0 }
    }

    pub(crate) fn consumed(&self) -> u64 {
        self.consumed
    }

    pub(crate) fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => {
                Error::TruncatedPayload(format!("file ends inside {what}"))
            }
            _ => Error::io(format!("reading {what}"), e),
        })?;
        self.consumed += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let mut found = [0u8; 4];
        self.exact(&mut found, "magic").map_err(|e| match e {
            Error::TruncatedPayload(_) => Error::BadMagic { expected, found },
            other => other,
        })?;
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.exact(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    /// Reads `rows x cols` f32 values, widening to f64 and rejecting
    /// non-finite entries by row.
    pub(crate) fn f32_rows(&mut self, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(rows);
        let mut buf = vec![0u8; cols * 4];
        for row in 0..rows {
            self.exact(&mut buf, "payload")?;
            let values: Vec<f64> = buf
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row });
            }
            out.push(values);
        }
        Ok(out)
    }

    /// Errors unless the stream is exhausted.
    pub(crate) fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::MalformedFile(format!(
                "trailing bytes after offset {}",
                self.consumed
            ))),
            Err(e) => Err(Error::io("reading file tail", e)),
        }
    }
}

/// Narrows to f32, failing with the row index if the value does not fit.
pub(crate) fn push_f32_row(out: &mut Vec<u8>, row: usize, values: &[f64]) -> Result<()> {
    for &v in values {
        let x = v as f32;
        if !x.is_finite() {
            return Err(Error::NonFiniteValue { row });
        }
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}
