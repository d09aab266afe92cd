//! File formats: a flat binary field format, CSV tables and two-column plot
//! data.
//!
//! Binary layout: `d` and `L` as little-endian `u64`, followed by the values
//! as little-endian `f64` in bond-index (or site-index) order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ensembles::ConductanceField;
use crate::error::{Error, Result};
use crate::graph_metric::ExtReal;
use crate::lattice::{BondField, ScalarField, Shape, TorusLattice};

/// Values per site or per bond.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Sites,
    Bonds,
}

impl FieldKind {
    fn len(self, shape: Shape) -> usize {
        match self {
            FieldKind::Sites => shape.site_count(),
            FieldKind::Bonds => shape.bond_count(),
        }
    }
}

pub fn write_binary<W: Write>(mut w: W, shape: Shape, values: &[f64]) -> Result<()> {
    w.write_all(&(shape.dim as u64).to_le_bytes())?;
    w.write_all(&(shape.side as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R, kind: FieldKind) -> Result<(Shape, Vec<f64>)> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word).map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(&mut r)?) as usize;
    let side = u64::from_le_bytes(next(&mut r)?) as usize;
    // validates the header before allocating
    let lat = TorusLattice::new(dim, side).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let n = kind.len(lat.shape());
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(f64::from_le_bytes(next(&mut r)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok((lat.shape(), values))
}

pub fn save_conductance(path: &Path, a: &ConductanceField) -> Result<()> {
    write_binary(BufWriter::new(File::create(path)?), a.shape(), a.values())
}

pub fn load_conductance(path: &Path) -> Result<(TorusLattice, ConductanceField)> {
    let (shape, values) = read_binary(BufReader::new(File::open(path)?), FieldKind::Bonds)?;
    let lat = TorusLattice::new(shape.dim, shape.side)?;
    let a = ConductanceField::new(lat.bond_field(values)?)?;
    Ok((lat, a))
}

pub fn save_scalar(path: &Path, u: &ScalarField) -> Result<()> {
    write_binary(BufWriter::new(File::create(path)?), u.shape(), &u.values)
}

pub fn load_scalar(path: &Path) -> Result<(TorusLattice, ScalarField)> {
    let (shape, values) = read_binary(BufReader::new(File::open(path)?), FieldKind::Sites)?;
    let lat = TorusLattice::new(shape.dim, shape.side)?;
    let u = lat.scalar_field(values)?;
    Ok((lat, u))
}

fn coord_headers(d: usize) -> impl Iterator<Item = String> {
    (0..d).map(|i| format!("x{i}"))
}

/// `bond, x0..x{d-1}, axis, value`.
pub fn write_bond_csv<W: Write>(w: W, lat: &TorusLattice, f: &BondField) -> Result<()> {
    lat.check_shape(f.shape())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["bond".to_string()];
    header.extend(coord_headers(lat.dim()));
    header.extend(["axis".to_string(), "value".to_string()]);
    out.write_record(&header)?;
    for (i, b) in lat.bonds().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(lat.coords(b.site).iter().map(|c| c.to_string()));
        row.push(b.axis.to_string());
        row.push(f.values[i].to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `x0..x{d-1}, value`.
pub fn write_scalar_csv<W: Write>(w: W, lat: &TorusLattice, u: &ScalarField) -> Result<()> {
    lat.check_shape(u.shape())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = coord_headers(lat.dim()).collect();
    header.push("value".into());
    out.write_record(&header)?;
    for (x, v) in u.values.iter().enumerate() {
        let mut row: Vec<String> = lat.coords(x).iter().map(|c| c.to_string()).collect();
        row.push(v.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `bond, omega, omega0`; infinite weights are written as `inf`.
pub fn write_weight_csv<W: Write>(w: W, omega: &[ExtReal], omega0: &[ExtReal]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bond", "omega", "omega0"])?;
    for (i, (o, o0)) in omega.iter().zip(omega0).enumerate() {
        out.write_record([i.to_string(), o.to_string(), o0.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Generic table with a header row.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Two space-separated columns per line.
pub fn write_dat<W: Write>(mut w: W, rows: &[(f64, f64)]) -> Result<()> {
    for (x, y) in rows {
        writeln!(w, "{x} {y}")?;
    }
    w.flush()?;
    Ok(())
}
