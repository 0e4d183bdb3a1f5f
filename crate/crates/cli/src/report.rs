//! Human-readable diagnostic reports with a machine-parsable
//! `key: value` grammar. All numbers carry 17 significant digits.

use statgeo_core::solver::{Diagnostics, SolveResult, Tolerances};
use statgeo_core::spacetime::SpacetimeCurve;

use crate::curve_io::fmt;

fn push_kv(out: &mut String, key: &str, value: impl AsRef<str>) {
    out.push_str(key);
    out.push_str(": ");
    out.push_str(value.as_ref());
    out.push('\n');
}

/// The block of keys shared by solve reports and re-certification reports:
/// identical code path, so a re-diagnosed solve output reproduces it.
pub fn diagnostics_block(diag: &Diagnostics, curve: &SpacetimeCurve, tol: &Tolerances) -> String {
    let mut out = String::new();
    push_kv(&mut out, "segments", curve.n_segments().to_string());
    push_kv(&mut out, "delta", fmt(curve.delta_z()));
    push_kv(&mut out, "t0", fmt(curve.first().t));
    push_kv(&mut out, "c_z", fmt(diag.conservation.c_z));
    push_kv(&mut out, "c_z_max_deviation", fmt(diag.conservation.max_deviation));
    push_kv(&mut out, "e_z", fmt(diag.conservation.e_z));
    push_kv(&mut out, "e_z_deviation", fmt(diag.conservation.e_deviation));
    push_kv(&mut out, "geodesic_residual", fmt(diag.geodesic_residual));
    push_kv(&mut out, "orthogonality_r0", fmt(diag.orthogonality.0));
    push_kv(&mut out, "orthogonality_r1", fmt(diag.orthogonality.1));
    push_kv(&mut out, "causal_character", diag.character.to_string());
    push_kv(&mut out, "endpoint_violation_p", fmt(diag.endpoint_violation_p));
    push_kv(&mut out, "endpoint_violation_q", fmt(diag.endpoint_violation_q));
    push_kv(&mut out, "certified", diag.certified(tol).to_string());
    out
}

pub fn solve_report(scenario_name: &str, result: &SolveResult, tol: &Tolerances) -> String {
    let mut out = String::new();
    push_kv(&mut out, "scenario", scenario_name);
    push_kv(&mut out, "hypothesis_branch", result.hypothesis.to_string());
    push_kv(&mut out, "converged", result.converged.to_string());
    push_kv(&mut out, "restart_index", result.restart_index.to_string());
    push_kv(&mut out, "iterations", result.iterations.to_string());
    push_kv(&mut out, "j_value", fmt(result.j_value));
    out.push_str(&diagnostics_block(&result.diagnostics, &result.curve, tol));
    for w in &result.warnings {
        push_kv(&mut out, "warning", w);
    }
    out
}

pub fn diagnose_report(
    scenario_name: &str,
    curve_file: &str,
    f_value: f64,
    diag: &Diagnostics,
    curve: &SpacetimeCurve,
    tol: &Tolerances,
) -> String {
    let mut out = String::new();
    push_kv(&mut out, "scenario", scenario_name);
    push_kv(&mut out, "curve_file", curve_file);
    push_kv(&mut out, "f_value", fmt(f_value));
    out.push_str(&diagnostics_block(diag, curve, tol));
    out
}
