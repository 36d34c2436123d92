//! `AFP1` parameter checkpoints.
//!
//! Layout (little-endian): magic `AFP1`, `u32` metadata length and UTF-8
//! metadata (a JSON document, possibly empty), `u32` array count, then per
//! array: `u32` name length, name bytes, `u8` trainable flag, `u32` rows,
//! `u32` cols and `rows * cols` `f64` values in row-major order.

use std::path::Path;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AFP1";

pub fn encode_params(store: &ParamStore, meta: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    u32le(&mut out, meta.len());
    out.extend_from_slice(meta.as_bytes());
    u32le(&mut out, store.len());
    for e in store.entries() {
        u32le(&mut out, e.name.len());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.trainable as u8);
        u32le(&mut out, e.value.rows);
        u32le(&mut out, e.value.cols);
        for v in &e.value.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated while reading {what}")))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

/// Returns the stored arrays and the metadata string.
pub fn decode_params(buf: &[u8]) -> Result<(ParamStore, String)> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Format("not an AFP1 checkpoint (bad magic)".into()));
    }
    let mut c = Cursor { buf, at: 4 };
    let meta = c.string("metadata")?;
    let count = c.u32("array count")?;
    let mut store = ParamStore::new();
    for k in 0..count {
        let name = c.string(&format!("name of array {k}"))?;
        let trainable = match c.take(1, "trainable flag")?[0] {
            0 => false,
            1 => true,
            b => {
                return Err(Error::Format(format!(
                    "array {name}: bad trainable flag {b}"
                )))
            }
        };
        let rows = c.u32("rows")?;
        let cols = c.u32("cols")?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("array {name}: size overflow")))?;
        let data = c
            .take(n, &name)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        store.add(name, Matrix { rows, cols, data }, trainable);
    }
    if c.at != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last array",
            buf.len() - c.at
        )));
    }
    Ok((store, meta))
}

pub fn save_params(store: &ParamStore, meta: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_params(store, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(ParamStore, String)> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&buf)
}
