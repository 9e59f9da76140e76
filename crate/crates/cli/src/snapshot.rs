//! Binary field snapshots: magic "CQW1", version u32, lattice kind u32
//! (0 honeycomb, 1 triangular, 2 square), dims u32 x 2, spinors-per-cell u32
//! (1, or 3 for edge fields re-sampled per unit cell), then row-major
//! little-endian f64 (re, im) pairs, up then down within each spinor.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use cqw_core::walk::triangular::EdgeField;
use cqw_core::walk::SpinorField;
use cqw_core::Complex64;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CQW1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad snapshot: {0}")]
    Format(String),
}

/// Parsed snapshot contents; amplitudes are cell-major, spinors within a
/// cell in side order, up before down.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: u32,
    pub n1: u32,
    pub n2: u32,
    pub spinors_per_cell: u32,
    pub amplitudes: Vec<Complex64>,
}

fn write_header(w: &mut impl Write, kind: u32, n1: u32, n2: u32, spc: u32) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    for v in [VERSION, kind, n1, n2, spc] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_amp(w: &mut impl Write, z: Complex64) -> io::Result<()> {
    w.write_all(&z.re.to_le_bytes())?;
    w.write_all(&z.im.to_le_bytes())
}

/// One spinor per cell.
pub fn write_sites(path: &Path, kind: u32, field: &SpinorField) -> io::Result<()> {
    let grid = &field.grid;
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, kind, grid.n1 as u32, grid.n2 as u32, 1)?;
    for idx in 0..grid.len() {
        write_amp(&mut w, field.up[idx])?;
        write_amp(&mut w, field.down[idx])?;
    }
    w.flush()
}

/// Edge field re-sampled onto the cell grid: the three side planes become
/// three spinors per cell.
pub fn write_edges(path: &Path, kind: u32, field: &EdgeField) -> io::Result<()> {
    let grid = &field.grid;
    let cells = field.cells();
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, kind, grid.n1 as u32, grid.n2 as u32, 3)?;
    for idx in 0..cells {
        for side in 0..3 {
            write_amp(&mut w, field.up[side * cells + idx])?;
            write_amp(&mut w, field.down[side * cells + idx])?;
        }
    }
    w.flush()
}

pub fn read(path: &Path) -> Result<Snapshot, SnapshotError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(SnapshotError::Format(format!("magic {magic:?} != {MAGIC:?}")));
    }
    let mut word = [0u8; 4];
    let mut next = |r: &mut BufReader<File>| -> Result<u32, SnapshotError> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = next(&mut r)?;
    if version != VERSION {
        return Err(SnapshotError::Format(format!("version {version} != {VERSION}")));
    }
    let kind = next(&mut r)?;
    if kind > 2 {
        return Err(SnapshotError::Format(format!("lattice kind {kind} > 2")));
    }
    let n1 = next(&mut r)?;
    let n2 = next(&mut r)?;
    let spc = next(&mut r)?;
    if spc != 1 && spc != 3 {
        return Err(SnapshotError::Format(format!("spinors per cell {spc} not 1 or 3")));
    }
    let count = (n1 as usize) * (n2 as usize) * (spc as usize) * 2;
    let mut amplitudes = Vec::with_capacity(count);
    let mut buf = [0u8; 16];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        amplitudes.push(Complex64::new(
            f64::from_le_bytes(buf[..8].try_into().unwrap()),
            f64::from_le_bytes(buf[8..].try_into().unwrap()),
        ));
    }
    let mut tail = [0u8; 1];
    match r.read(&mut tail)? {
        0 => Ok(Snapshot {
            kind,
            n1,
            n2,
            spinors_per_cell: spc,
            amplitudes,
        }),
        _ => Err(SnapshotError::Format("trailing bytes after amplitudes".into())),
    }
}
