//! Grid file format and CSV export.
//!
//! A `.psg` file is a one-line JSON header
//! `{space_tag, hbar, dims, spacing, origin}` followed by the samples as
//! little-endian 64-bit float `(re, im)` pairs in row-major axis order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::grid::{GridDescriptor, PhaseGrid, SpaceTag};
use crate::phase::PhaseVector;
use crate::scalar::{lit, Real, C};

#[derive(Serialize, Deserialize)]
struct PsgHeader {
    space_tag: String,
    hbar: f64,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
}

/// Write a grid in `.psg` format.
pub fn write_psg<T: Real, W: Write>(grid: &PhaseGrid<T>, mut out: W) -> Result<(), IoError> {
    let desc = grid.descriptor();
    let header = PsgHeader {
        space_tag: grid.tag().name().to_string(),
        hbar: desc.hbar().to_f64().unwrap(),
        dims: desc.dims().to_vec(),
        spacing: desc.spacing().iter().map(|s| s.to_f64().unwrap()).collect(),
        origin: desc.origin().flat().iter().map(|s| s.to_f64().unwrap()).collect(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| IoError::Format(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    let mut buf = Vec::with_capacity(grid.samples().len() * 16);
    for v in grid.samples() {
        buf.extend_from_slice(&v.re.to_f64().unwrap().to_le_bytes());
        buf.extend_from_slice(&v.im.to_f64().unwrap().to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Read a `.psg` file.
pub fn read_psg<T: Real, R: Read>(mut input: R) -> Result<PhaseGrid<T>, IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| IoError::Format("missing header line".into()))?;
    let header: PsgHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| IoError::Format(e.to_string()))?;
    let tag = match header.space_tag.as_str() {
        "centre" => SpaceTag::Centre,
        "chord" => SpaceTag::Chord,
        other => return Err(IoError::Format(format!("unknown space tag {other:?}"))),
    };
    if header.origin.len() != header.dims.len() {
        return Err(IoError::Format("origin length must match dims".into()));
    }
    let modes = header.dims.len() / 2;
    let origin = PhaseVector::new(
        header.origin[..modes].iter().map(|v| lit(*v)).collect(),
        header.origin[modes..].iter().map(|v| lit(*v)).collect(),
    );
    let desc = GridDescriptor::new(
        header.dims.clone(),
        header.spacing.iter().map(|v| lit(*v)).collect(),
        origin,
        lit(header.hbar),
    )
    .map_err(|e| IoError::Format(e.to_string()))?;
    let body = &bytes[newline + 1..];
    let expect = desc.len() * 16;
    if body.len() != expect {
        return Err(IoError::Format(format!(
            "payload is {} bytes, expected {expect}",
            body.len()
        )));
    }
    let mut samples = Vec::with_capacity(desc.len());
    for chunk in body.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        samples.push(C::new(lit(re), lit(im)));
    }
    PhaseGrid::new(tag, desc, samples).map_err(|e| IoError::Format(e.to_string()))
}

/// CSV dump of a grid: coordinate columns then `re, im`.
pub fn write_csv<T: Real, W: Write>(grid: &PhaseGrid<T>, mut out: W) -> Result<(), IoError> {
    let desc = grid.descriptor();
    let modes = desc.modes();
    for m in 0..modes {
        write!(out, "p{m},")?;
    }
    for m in 0..modes {
        write!(out, "q{m},")?;
    }
    writeln!(out, "re,im")?;
    for (idx, v) in grid.samples().iter().enumerate() {
        let pt = desc.point(idx);
        for c in pt.p.iter().chain(pt.q.iter()) {
            write!(out, "{c:e},")?;
        }
        writeln!(out, "{:e},{:e}", v.re, v.im)?;
    }
    Ok(())
}

/// CSV slice along one axis, other axes held at the origin: `coord, re, im`.
pub fn write_axis_slice_csv<T: Real, W: Write>(
    grid: &PhaseGrid<T>,
    axis: usize,
    mut out: W,
) -> Result<(), IoError> {
    let desc = grid.descriptor();
    if axis >= desc.rank() {
        return Err(IoError::Format(format!("axis {axis} out of range")));
    }
    writeln!(out, "coord,re,im")?;
    let mut multi: Vec<usize> = desc.dims().iter().map(|&n| n / 2).collect();
    for k in 0..desc.dims()[axis] {
        multi[axis] = k;
        let v = grid.samples()[desc.ravel(&multi)];
        writeln!(out, "{:e},{:e},{:e}", desc.axis_coord(axis, k), v.re, v.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{build_state, StateSpec};

    #[test]
    fn psg_roundtrip_bitexact() {
        let desc = GridDescriptor::square(1, 32, 6.0, 1.0).unwrap();
        let w = build_state(
            &StateSpec::Coherent { centre: PhaseVector::pq(0.5, -1.0) },
            &desc,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_psg(&w, &mut buf).unwrap();
        let back: PhaseGrid<f64> = read_psg(&buf[..]).unwrap();
        assert_eq!(back.tag(), SpaceTag::Centre);
        assert_eq!(back.descriptor().dims(), w.descriptor().dims());
        assert_eq!(back.samples(), w.samples());
        // header is a single JSON line
        let text = String::from_utf8_lossy(&buf[..buf.iter().position(|&b| b == b'\n').unwrap()]);
        assert!(text.contains("\"space_tag\":\"centre\""));
    }

    #[test]
    fn truncated_psg_rejected() {
        let desc = GridDescriptor::square(1, 32, 6.0, 1.0).unwrap();
        let w = build_state(&StateSpec::Fock { n: 0 }, &desc).unwrap();
        let mut buf = Vec::new();
        write_psg(&w, &mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(read_psg::<f64, _>(&buf[..]).is_err());
    }

    #[test]
    fn csv_slice_has_expected_rows() {
        let desc = GridDescriptor::square(1, 32, 6.0, 1.0).unwrap();
        let w = build_state(&StateSpec::Fock { n: 0 }, &desc).unwrap();
        let mut buf = Vec::new();
        write_axis_slice_csv(&w, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 33);
        assert!(text.starts_with("coord,re,im\n"));
    }
}
