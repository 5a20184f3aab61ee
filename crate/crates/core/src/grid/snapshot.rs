//! State snapshot files.
//!
//! Layout: one ASCII header line
//! `NEMATOWAVE1 dim=<d> points=<p1,p2,p3> extent=<e1,e2,e3> t=<time>`
//! followed by raw little-endian 64-bit floats for u then v, row-major.
//! Floats in the header print in shortest round-trip form, so the whole file
//! round-trips bit-exactly.

use super::{GridError, GridSpec, ScalarField, State};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "NEMATOWAVE1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad snapshot header: {0}")]
    BadHeader(String),
    #[error("snapshot payload truncated")]
    Truncated,
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub fn write_snapshot(path: &Path, state: &State) -> Result<(), SnapshotError> {
    let spec = state.spec();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "{MAGIC} dim={} points={},{},{} extent={},{},{} t={}",
        spec.dim(),
        spec.points(1),
        spec.points(2),
        spec.points(3),
        spec.extent(1),
        spec.extent(2),
        spec.extent(3),
        state.t
    )?;
    for field in [&state.u, &state.v] {
        for v in field.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<State, SnapshotError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(|_| SnapshotError::Truncated)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 4096 {
            return Err(SnapshotError::BadHeader("header line too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|e| SnapshotError::BadHeader(e.to_string()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(SnapshotError::BadHeader(format!("missing {MAGIC} magic")));
    }

    let mut dim = None;
    let mut points = None;
    let mut extent = None;
    let mut t = None;
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| SnapshotError::BadHeader(format!("bad token {token:?}")))?;
        match key {
            "dim" => dim = Some(parse_scalar::<usize>(value)?),
            "points" => points = Some(parse_triple::<usize>(value)?),
            "extent" => extent = Some(parse_triple::<f64>(value)?),
            "t" => t = Some(parse_scalar::<f64>(value)?),
            other => return Err(SnapshotError::BadHeader(format!("unknown key {other:?}"))),
        }
    }
    let (dim, points, extent, t) = match (dim, points, extent, t) {
        (Some(d), Some(p), Some(e), Some(t)) => (d, p, e, t),
        _ => return Err(SnapshotError::BadHeader("missing header fields".into())),
    };

    let spec = GridSpec::new(dim, &extent[..dim], &points[..dim])?;
    let mut read_field = || -> Result<ScalarField, SnapshotError> {
        let mut buf = vec![0u8; spec.len() * 8];
        r.read_exact(&mut buf).map_err(|_| SnapshotError::Truncated)?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScalarField::from_values(spec, values)?)
    };
    let u = read_field()?;
    let v = read_field()?;
    Ok(State::new(t, u, v)?)
}

fn parse_scalar<T: std::str::FromStr>(s: &str) -> Result<T, SnapshotError> {
    s.parse()
        .map_err(|_| SnapshotError::BadHeader(format!("cannot parse {s:?}")))
}

fn parse_triple<T: std::str::FromStr + Copy>(s: &str) -> Result<[T; 3], SnapshotError> {
    let parts: Vec<T> = s
        .split(',')
        .map(parse_scalar)
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(SnapshotError::BadHeader(format!("expected three values in {s:?}")));
    }
    Ok([parts[0], parts[1], parts[2]])
}
