//! Binary field snapshots, solver checkpoints and blow-up frame dumps.
//!
//! All three share one little-endian layout:
//!
//! ```text
//! magic[8]  nx:u64  ny:u64  lx:f64  ly:f64  x0:f64  y0:f64
//! tag_len:u32  tag[tag_len]           layout tag, "psi+a" for every writer here
//! meta_len:u32  meta[meta_len]        JSON metadata
//! ψ as (re, im) pairs, nodes row by row (i fastest)
//! A on x-edges, then A on y-edges, same ordering
//! ```
//!
//! The magic is `GLFIELD1` for plain snapshots and frame dumps and `GLCKPT01`
//! for checkpoints, whose metadata carries κ, H, the solve options and seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blowup::BlowupFrame;
use crate::error::{Error, Result};
use crate::gl::{GLState, SolveOptions, SolveStats};
use crate::grid::{ComplexField, EdgeField, Grid};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"GLFIELD1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GLCKPT01";
const LAYOUT_TAG: &str = "psi+a";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kappa: f64,
    pub h: f64,
    pub options: SolveOptions,
    pub seed: u64,
    #[serde(default)]
    pub stats: Option<SolveStats>,
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    let n = u32::try_from(b.len()).map_err(|_| Error::Format("header block too long".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(w.write_all(b)?)
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(b)
}
fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get::<8>(r)?))
}
fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}
fn get_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = u32::from_le_bytes(get::<4>(r)?) as usize;
    if n > 1 << 24 {
        return Err(Error::Format(format!("header block of {n} bytes")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

fn write_fields(
    w: &mut impl Write,
    magic: &[u8; 8],
    psi: &ComplexField,
    a: &EdgeField,
    meta: &serde_json::Value,
) -> Result<()> {
    let g = psi.grid();
    g.check_same(a.grid(), "snapshot")?;
    w.write_all(magic)?;
    put_u64(w, g.nx() as u64)?;
    put_u64(w, g.ny() as u64)?;
    put_f64(w, g.lx())?;
    put_f64(w, g.ly())?;
    let (x0, y0) = g.origin();
    put_f64(w, x0)?;
    put_f64(w, y0)?;
    put_bytes(w, LAYOUT_TAG.as_bytes())?;
    put_bytes(w, serde_json::to_string(meta)?.as_bytes())?;
    for z in psi.as_slice() {
        put_f64(w, z.re)?;
        put_f64(w, z.im)?;
    }
    for v in a.xs().iter().chain(a.ys()) {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn read_fields(r: &mut impl Read, magic: &[u8; 8]) -> Result<(ComplexField, EdgeField, serde_json::Value)> {
    let m = get::<8>(r)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let nx = get_u64(r)? as usize;
    let ny = get_u64(r)? as usize;
    let (lx, ly, x0, y0) = (get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?);
    if nx > 1 << 16 || ny > 1 << 16 {
        return Err(Error::Format(format!("implausible grid {nx}x{ny}")));
    }
    let g = Grid::new(nx, ny, lx, ly)?.with_origin(x0, y0);
    let tag = get_bytes(r)?;
    if tag != LAYOUT_TAG.as_bytes() {
        return Err(Error::Format(format!(
            "unknown layout tag {:?}",
            String::from_utf8_lossy(&tag)
        )));
    }
    let meta: serde_json::Value = serde_json::from_slice(&get_bytes(r)?)?;
    let mut psi = Vec::with_capacity(g.num_nodes());
    for _ in 0..g.num_nodes() {
        psi.push(Complex64::new(get_f64(r)?, get_f64(r)?));
    }
    let ax = (0..g.num_xedges()).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let ay = (0..g.num_yedges()).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after field data".into()));
    }
    Ok((
        ComplexField::from_vec(g, psi)?,
        EdgeField::from_vecs(g, ax, ay)?,
        meta,
    ))
}

pub fn write_snapshot(path: &Path, psi: &ComplexField, a: &EdgeField, meta: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_fields(&mut w, SNAPSHOT_MAGIC, psi, a, meta)?;
    Ok(w.flush()?)
}

pub fn read_snapshot(path: &Path) -> Result<(ComplexField, EdgeField, serde_json::Value)> {
    read_fields(&mut BufReader::new(File::open(path)?), SNAPSHOT_MAGIC)
}

/// Checkpoint of a solver state. Reading it back gives the exact bits, so a
/// resumed `minimize` repeats the original iteration history.
pub fn write_checkpoint(path: &Path, state: &GLState, meta: &CheckpointMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_fields(&mut w, CHECKPOINT_MAGIC, &state.psi, &state.a, &serde_json::to_value(meta)?)?;
    Ok(w.flush()?)
}

pub fn read_checkpoint(path: &Path) -> Result<(GLState, CheckpointMeta)> {
    let (psi, a, meta) = read_fields(&mut BufReader::new(File::open(path)?), CHECKPOINT_MAGIC)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)?;
    Ok((GLState::new(psi, a, meta.kappa, meta.h)?, meta))
}

/// Frame dump: the rescaled fields on the frame lattice, with `P`, `S`, `Λ`,
/// `R`, the case and the frame geometry as metadata.
pub fn write_frame(path: &Path, frame: &BlowupFrame) -> Result<()> {
    write_snapshot(path, frame.phi(), frame.a(), &serde_json::to_value(frame)?)
}
