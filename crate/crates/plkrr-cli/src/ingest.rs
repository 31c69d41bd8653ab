//! Dataset CSV ingestion and export.
//!
//! The data format is a plain CSV with header `group,y,z,x1,...,xp`: group
//! ids are positive integers numbered contiguously from 1, the body is
//! numeric, and z must fall inside the declared kernel interval.  Every
//! rejection names the offending line.  Floats are written with 17
//! significant digits so a write → ingest round trip is exact.

use plkrr_core::{Error, PLDataset, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))
}

fn parse_field(raw: &str, column: &str, line: u64) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| {
        Error::InvalidData(format!("line {line}: column {column} value `{raw}` is not a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidData(format!(
            "line {line}: column {column} value {v} is not finite"
        )));
    }
    Ok(v)
}

/// Reads and validates a dataset; `z_interval` is the declared kernel
/// input range, closed on both ends.
pub fn ingest_csv(path: &Path, z_interval: (f64, f64)) -> Result<PLDataset> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidData(format!("cannot read header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "group" || cols[1] != "y" || cols[2] != "z" {
        return Err(Error::InvalidData(
            "header must be group,y,z,x1,...,xp with at least one covariate".into(),
        ));
    }
    let p = cols.len() - 3;
    for (k, name) in cols[3..].iter().enumerate() {
        let expected = format!("x{}", k + 1);
        if *name != expected {
            return Err(Error::InvalidData(format!(
                "header column {} must be {expected}, got `{name}`",
                k + 4
            )));
        }
    }

    let (lo, hi) = z_interval;
    let mut groups: BTreeMap<u64, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::InvalidData(format!("malformed row: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols.len() {
            return Err(Error::InvalidData(format!(
                "line {line}: expected {} fields, got {}",
                cols.len(),
                rec.len()
            )));
        }
        let gid: u64 = rec[0].parse().ok().filter(|g| *g >= 1).ok_or_else(|| {
            Error::InvalidData(format!(
                "line {line}: group id `{}` must be a positive integer",
                &rec[0]
            ))
        })?;
        let y = parse_field(&rec[1], "y", line)?;
        let z = parse_field(&rec[2], "z", line)?;
        if z < lo || z > hi {
            return Err(Error::InvalidData(format!(
                "line {line}: z = {z} outside the declared range [{lo}, {hi}]"
            )));
        }
        let entry = groups.entry(gid).or_default();
        for k in 0..p {
            entry.0.push(parse_field(&rec[3 + k], &format!("x{}", k + 1), line)?);
        }
        entry.1.push(z);
        entry.2.push(y);
    }
    if groups.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    let max_id = *groups.keys().last().expect("nonempty map has a last key");
    for id in 1..=max_id {
        if !groups.contains_key(&id) {
            return Err(Error::InvalidData(format!(
                "group {id} is empty (ids must be contiguous from 1)"
            )));
        }
    }
    let ordered: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = groups.into_values().collect();
    PLDataset::from_groups(ordered, p)
}

/// Writes a dataset in the ingestable format. Exercised by the round-trip
/// test; the binary itself only reads data.
#[cfg_attr(not(test), allow(dead_code))]
pub fn write_csv(data: &PLDataset, path: &Path) -> Result<()> {
    let p = data.p();
    let mut out = String::from("group,y,z");
    for k in 1..=p {
        write!(out, ",x{k}").expect("writing to a String cannot fail");
    }
    out.push('\n');
    for j in 0..data.n_groups() {
        let g = data.group(j);
        for i in 0..g.n() {
            write!(out, "{},{:.16e},{:.16e}", j + 1, g.y[i], g.z[i])
                .expect("writing to a String cannot fail");
            for k in 0..p {
                write!(out, ",{:.16e}", g.x[i * p + k]).expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Rejects rank-deficient per-group linear designs before fitting, where
/// the coefficients would not be identified.
pub fn check_designs(data: &PLDataset) -> Result<()> {
    for j in 0..data.n_groups() {
        let x = data.group(j).x_matrix();
        let sv = x.svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if smin <= 1e-10 * smax.max(1.0) {
            return Err(Error::InvalidData(format!(
                "group {}: linear design is rank deficient (singular values {:.3e} .. {:.3e})",
                j + 1,
                smin,
                smax
            )));
        }
    }
    Ok(())
}

/// Reads a headerless numeric matrix CSV (used for contrasts and null
/// values); all rows must have equal width.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::InvalidData(format!("cannot open {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::InvalidData(format!("malformed row: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(rec.len());
        for (k, field) in rec.iter().enumerate() {
            row.push(parse_field(field, &format!("{}", k + 1), line)?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::InvalidData(format!(
                    "line {line}: expected {} fields, got {}",
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}
