//! Plain-text columnar output.
//!
//! Floats are written with 17 significant digits. A density field file starts with
//!
//! ```text
//! # nfpe-field dim=2 lo=-8,-8 hi=8,8 cells=64,64
//! ```
//!
//! followed by one `x [y] value` row per cell, x index fastest.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid};
use crate::lyapunov::LyapunovReport;
use crate::particles::ParticleEnsemble;
use crate::resolvent::StepDiagnostics;

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn field_header(grid: &Grid) -> String {
    format!(
        "# nfpe-field dim={} lo={} hi={} cells={}",
        grid.dimension(),
        join(&grid.lo().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>()),
        join(&grid.hi().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>()),
        join(grid.cells())
    )
}

pub fn write_field(w: &mut impl Write, u: &DensityField) -> Result<()> {
    let grid = u.grid();
    writeln!(w, "{}", field_header(grid))?;
    let mut x = vec![0.0; grid.dimension()];
    for (c, v) in u.values.iter().enumerate() {
        grid.center(c, &mut x);
        let mut row: Vec<String> = x.iter().map(|xi| fmt_f64(*xi)).collect();
        row.push(fmt_f64(*v));
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value {p:?} for {key}"),
            })
        })
        .collect()
}

/// Reads a field written by [`write_field`]; the grid is rebuilt from the header.
pub fn read_field(r: impl BufRead) -> Result<DensityField> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let header = header?;
    let rest = header.strip_prefix("# nfpe-field").ok_or(Error::Parse {
        line: 1,
        message: "missing '# nfpe-field' header".into(),
    })?;
    let (mut dim, mut lo, mut hi, mut cells) = (None, None, None, None);
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or(Error::Parse { line: 1, message: format!("expected key=value, got {kv:?}") })?;
        match k {
            "dim" => dim = Some(parse_list::<usize>(v, 1, k)?[0]),
            "lo" => lo = Some(parse_list::<f64>(v, 1, k)?),
            "hi" => hi = Some(parse_list::<f64>(v, 1, k)?),
            "cells" => cells = Some(parse_list::<usize>(v, 1, k)?),
            _ => return Err(Error::Parse { line: 1, message: format!("unknown header key {k:?}") }),
        }
    }
    let missing = |k: &str| Error::Parse { line: 1, message: format!("header lacks {k}") };
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let grid = Grid::new(lo.ok_or_else(|| missing("lo"))?, hi.ok_or_else(|| missing("hi"))?, cells.ok_or_else(|| missing("cells"))?)?;
    if grid.dimension() != dim {
        return Err(Error::Parse { line: 1, message: "dim disagrees with lo/hi/cells".into() });
    }
    let mut values = Vec::with_capacity(grid.n_cells());
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = t.split_whitespace().collect();
        if cols.len() != dim + 1 {
            return Err(Error::Parse { line: i + 1, message: format!("expected {} columns, got {}", dim + 1, cols.len()) });
        }
        let v: f64 = cols[dim].parse().map_err(|_| Error::Parse { line: i + 1, message: format!("bad value {:?}", cols[dim]) })?;
        values.push(v);
    }
    if values.len() != grid.n_cells() {
        return Err(Error::Parse {
            line: values.len() + 1,
            message: format!("expected {} rows, got {}", grid.n_cells(), values.len()),
        });
    }
    DensityField::new(Arc::new(grid), values)
}

pub const DIAGNOSTICS_HEADER: &str = "# step t mass l1 weighted_norm S E V Psi min_u newton_iterations residual lambda";

pub fn write_diagnostics_header(w: &mut impl Write) -> Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    Ok(())
}

pub fn write_diagnostics_row(w: &mut impl Write, d: &StepDiagnostics) -> Result<()> {
    let cols = [d.t, d.mass, d.l1, d.weighted_norm, d.entropy, d.energy, d.v, d.psi, d.min_u];
    let body: Vec<String> = cols.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(w, "{} {} {} {} {}", d.step, body.join(" "), d.newton_iterations, fmt_f64(d.residual), fmt_f64(d.lambda))?;
    Ok(())
}

/// Columns `t S E V Psi slack`.
pub fn write_lyapunov(w: &mut impl Write, rep: &LyapunovReport) -> Result<()> {
    writeln!(w, "# t S E V Psi slack")?;
    for k in 0..rep.t.len() {
        let row = [rep.t[k], rep.entropy[k], rep.energy[k], rep.v[k], rep.psi[k], rep.slack[k]];
        writeln!(w, "{}", row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "))?;
    }
    Ok(())
}

/// One row of coordinates per particle.
pub fn write_ensemble(w: &mut impl Write, ens: &ParticleEnsemble) -> Result<()> {
    writeln!(w, "# nfpe-ensemble dim={} n={} seed={} step={} t={}", ens.dimension, ens.len(), ens.seed, ens.step, fmt_f64(ens.t))?;
    for k in 0..ens.len() {
        writeln!(w, "{}", ens.position(k).iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "))?;
    }
    Ok(())
}

/// Two columns `r value`.
pub fn write_radial_table(w: &mut impl Write, table: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "# r phi")?;
    for (r, v) in table {
        writeln!(w, "{} {}", fmt_f64(*r), fmt_f64(*v))?;
    }
    Ok(())
}
