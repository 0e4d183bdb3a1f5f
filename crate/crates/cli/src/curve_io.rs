//! Curve files: comma-separated values with header `s,x1,..,xd,t` and one
//! row per node, every number printed with 17 significant digits so doubles
//! round-trip bit-faithfully. Extra columns after `t` are preserved on read
//! but ignored by the geometry.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use statgeo_core::spacetime::{SpacetimeCurve, SpacetimePoint};

/// 17 significant digits: exact round trip for f64.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curve(path: &Path, curve: &SpacetimeCurve) -> Result<(), String> {
    write_curve_with_extra(path, curve, None)
}

/// Optionally appends one extra named column (per-row values).
pub fn write_curve_with_extra(
    path: &Path,
    curve: &SpacetimeCurve,
    extra: Option<(&str, &[f64])>,
) -> Result<(), String> {
    let d = curve.dim();
    let n = curve.n_segments();
    let mut out = String::from("s");
    for l in 1..=d {
        out.push_str(&format!(",x{l}"));
    }
    out.push_str(",t");
    if let Some((name, values)) = extra {
        if values.len() != n + 1 {
            return Err("extra column must have one value per node".into());
        }
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');

    for (i, node) in curve.nodes().iter().enumerate() {
        out.push_str(&fmt(i as f64 / n as f64));
        for l in 0..d {
            out.push(',');
            out.push_str(&fmt(node.x[l]));
        }
        out.push(',');
        out.push_str(&fmt(node.t));
        if let Some((_, values)) = extra {
            out.push(',');
            out.push_str(&fmt(values[i]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Reads a curve file, returning the curve and its spatial dimension.
pub fn read_curve(path: &Path) -> Result<SpacetimeCurve, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("curve file is empty")?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"s") {
        return Err("curve file must start with an `s` column".into());
    }
    let t_col = columns
        .iter()
        .position(|c| *c == "t")
        .ok_or("curve file has no `t` column")?;
    let d = t_col - 1;
    for (l, c) in columns[1..t_col].iter().enumerate() {
        let expected = format!("x{}", l + 1);
        if *c != expected {
            return Err(format!("expected column `{expected}`, found `{c}`"));
        }
    }

    let mut nodes = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < t_col + 1 {
            return Err(format!("row {}: expected at least {} fields", row + 2, t_col + 1));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| format!("row {}: bad number `{s}`: {e}", row + 2))
        };
        let x = DVector::from_iterator(
            d,
            fields[1..t_col]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        );
        nodes.push(SpacetimePoint::new(x, parse(fields[t_col])?));
    }
    SpacetimeCurve::new(nodes).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = SpacetimePoint::new(DVector::from_vec(vec![0.1, -0.2]), 0.3);
        let q = SpacetimePoint::new(
            DVector::from_vec(vec![std::f64::consts::PI, 1.0 / 3.0]),
            -7.0 / 11.0,
        );
        let curve = SpacetimeCurve::straight(&p, &q, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve(&path, &curve).unwrap();
        let back = read_curve(&path).unwrap();
        for (a, b) in curve.nodes().iter().zip(back.nodes()) {
            assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
            assert_eq!(a.x[1].to_bits(), b.x[1].to_bits());
            assert_eq!(a.t.to_bits(), b.t.to_bits());
        }
    }

    #[test]
    fn extra_columns_are_tolerated_on_read() {
        let p = SpacetimePoint::new(DVector::from_vec(vec![0.0, 0.0]), 0.0);
        let q = SpacetimePoint::new(DVector::from_vec(vec![1.0, 0.0]), 1.0);
        let curve = SpacetimeCurve::straight(&p, &q, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lift.csv");
        let extra = vec![0.0; 5];
        write_curve_with_extra(&path, &curve, Some(("null_residual", &extra))).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(back.n_segments(), 4);
        assert_eq!(back.dim(), 2);
    }
}
