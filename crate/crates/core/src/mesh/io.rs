//! `AFM1` sample files.
//!
//! Layout (all little-endian; floats are 64-bit, indices 32-bit unsigned):
//!
//! ```text
//! "AFM1"
//! u32 n_nodes, u32 n_triangles, u32 n_surface_edges
//! f64[2 n_nodes]       node_pos (x0 y0 x1 y1 ...)
//! f64[n_nodes]         sdf
//! u8[n_nodes]          surface_mask (0 or 1)
//! f64[4 n_nodes]       targets (ux uy p nut per node)
//! u32[3 n_triangles]   triangles
//! u32[2 n_surface_edges] surface_edges
//! f64 inlet_speed, f64 angle_of_attack, u8 surface_closed
//! ```
//!
//! A JSON sidecar `<stem>.meta.json` carries the flow metadata and provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate, MeshSample, PhysicsConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AFM1";

/// Contents of the `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub inlet_speed: f64,
    pub angle_of_attack: f64,
    pub nu: f64,
    pub provenance: String,
}

impl SampleMeta {
    pub fn for_sample(s: &MeshSample, nu: f64, provenance: impl Into<String>) -> Self {
        Self {
            inlet_speed: s.inlet_speed,
            angle_of_attack: s.angle_of_attack,
            nu,
            provenance: provenance.into(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub(crate) fn encode(s: &MeshSample) -> Vec<u8> {
    let n = s.n_nodes();
    let mut out = Vec::with_capacity(
        16 + n * (8 * 7 + 1) + s.triangles.len() * 12 + s.surface_edges.len() * 8 + 17,
    );
    out.extend_from_slice(MAGIC);
    for count in [n, s.triangles.len(), s.surface_edges.len()] {
        out.extend_from_slice(&(count as u32).to_le_bytes());
    }
    for p in &s.node_pos {
        out.extend_from_slice(&p[0].to_le_bytes());
        out.extend_from_slice(&p[1].to_le_bytes());
    }
    for d in &s.sdf {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend(s.surface_mask.iter().map(|&m| m as u8));
    for t in &s.targets {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for tri in &s.triangles {
        for v in tri {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for e in &s.surface_edges {
        for v in e {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&s.inlet_speed.to_le_bytes());
    out.extend_from_slice(&s.angle_of_attack.to_le_bytes());
    out.push(s.surface_closed as u8);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated while reading {what} at byte {}",
                    self.at
                ))
            })?;
        let slice = &self.buf[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).unwrap_or(usize::MAX), what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        let bytes = self.take(count.checked_mul(4).unwrap_or(usize::MAX), what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn decode(buf: &[u8]) -> Result<MeshSample> {
    let mut r = Reader { buf, at: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"AFM1\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let n = r.u32("node count")? as usize;
    let nt = r.u32("triangle count")? as usize;
    let ns = r.u32("surface edge count")? as usize;

    let node_pos = r
        .f64s(2 * n, "node_pos")?
        .chunks_exact(2)
        .map(|c| [c[0], c[1]])
        .collect();
    let sdf = r.f64s(n, "sdf")?;
    let surface_mask = r
        .take(n, "surface_mask")?
        .iter()
        .enumerate()
        .map(|(k, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Format(format!("surface_mask[{k}] = {b} is not 0/1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = r
        .f64s(4 * n, "targets")?
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    let triangles = r
        .u32s(3 * nt, "triangles")?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let surface_edges = r
        .u32s(2 * ns, "surface_edges")?
        .chunks_exact(2)
        .map(|c| [c[0], c[1]])
        .collect();
    let meta = r.f64s(2, "metadata")?;
    let closed = match r.take(1, "surface_closed")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("surface_closed flag {b} is not 0/1"))),
    };
    if r.at != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after sample",
            buf.len() - r.at
        )));
    }
    Ok(MeshSample {
        node_pos,
        inlet_speed: meta[0],
        angle_of_attack: meta[1],
        sdf,
        surface_mask,
        targets,
        triangles,
        surface_edges,
        surface_closed: closed,
    })
}

/// Reads and validates an `AFM1` file.
pub fn read_sample(path: impl AsRef<Path>) -> Result<MeshSample> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sample = decode(&buf)?;
    validate(&sample)?;
    Ok(sample)
}

/// Writes `sample` plus a sidecar with the default viscosity.
pub fn write_sample(sample: &MeshSample, path: impl AsRef<Path>) -> Result<()> {
    let meta = SampleMeta::for_sample(sample, PhysicsConfig::default().nu, "afb");
    write_sample_with_meta(sample, path, &meta)
}

/// Validates, then writes the binary file and its sidecar. Nothing is
/// created when validation fails.
pub fn write_sample_with_meta(
    sample: &MeshSample,
    path: impl AsRef<Path>,
    meta: &SampleMeta,
) -> Result<()> {
    let path = path.as_ref();
    validate(sample)?;
    fs::write(path, encode(sample)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn read_sidecar(sample_path: impl AsRef<Path>) -> Result<SampleMeta> {
    let side = sidecar_path(sample_path.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))
}

/// All `*.afm` files of a directory, sorted by file name.
pub fn list_samples(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "afm"))
        .collect();
    paths.sort();
    Ok(paths)
}
