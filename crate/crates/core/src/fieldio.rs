//! Flat binary serialization of scalar fields.
//!
//! Record layout: magic `ESNP`, version `u32`, domain tag `u8` (0 torus,
//! 1 unit square), `nx: u32`, `ny: u32`, then `nx * ny` row-major `f64`
//! values. All integers and floats little-endian. Bit patterns round-trip
//! exactly, which checkpoint restarts rely on.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Domain, Grid};
use std::io::{Read, Write};

const MAGIC: [u8; 4] = *b"ESNP";
const VERSION: u32 = 1;

fn domain_tag(d: Domain) -> u8 {
    match d {
        Domain::Torus2Pi => 0,
        Domain::UnitSquareDirichlet => 1,
    }
}

fn domain_from_tag(t: u8) -> Result<Domain> {
    match t {
        0 => Ok(Domain::Torus2Pi),
        1 => Ok(Domain::UnitSquareDirichlet),
        other => Err(Error::Format(format!("unknown domain tag {other}"))),
    }
}

/// Write one field record to `w`.
pub fn write_field(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[domain_tag(f.grid.domain)])?;
    w.write_all(&(f.grid.nx as u32).to_le_bytes())?;
    w.write_all(&(f.grid.ny as u32).to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read one field record from `r`.
pub fn read_field(r: &mut impl Read) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported record version {version}, expected {VERSION}"
        )));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let domain = domain_from_tag(tag[0])?;
    r.read_exact(&mut u32buf)?;
    let nx = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let ny = u32::from_le_bytes(u32buf) as usize;
    let grid = match domain {
        Domain::Torus2Pi => Grid::torus(nx, ny)?,
        Domain::UnitSquareDirichlet => Grid::square(nx, ny)?,
    };
    let mut values = vec![0.0f64; grid.len()];
    let mut f64buf = [0u8; 8];
    for v in &mut values {
        r.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    Ok(ScalarField { grid, values })
}
