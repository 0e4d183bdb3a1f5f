//! TOML scenario files.
//!
//! A scenario file declares the chart, the metric data (a builtin name or
//! polynomial coefficient tables), the two boundary submanifolds, the
//! hypothesis tag and solver parameters. Unknown keys are rejected.
//!
//! ```toml
//! dim = 2
//! chart = { min = [-10.0, -10.0], max = [10.0, 10.0] }
//! seed = 7
//!
//! [metric]
//! builtin = "boost"
//!
//! [boundary]
//! hypothesis = "H1"
//! p = { shape = "sphere", center = [0.0, 0.0], radius = 1.0, t = 0.0 }
//! q = { shape = "point", x = [3.0, 0.0], t = 2.0 }
//!
//! [solver]
//! segments = 64
//! restarts = 4
//! ```
//!
//! Polynomials are term lists over the spatial coordinates (metric data) or
//! over `(x, t)` (constraint shapes): `[{ powers = [2, 0], coeff = 1.0 }]`
//! means `x1^2`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use statgeo_core::scenarios::{self, Scenario};
use statgeo_core::solver::{SolveParams, Tolerances};
use statgeo_core::spacetime::{ChartBounds, MetricField};
use statgeo_core::submanifolds::{BoundaryPair, Hypothesis, Submanifold};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub dim: usize,
    pub chart: ChartSpec,
    pub seed: Option<u64>,
    pub metric: MetricSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    /// Name of a catalog metric; mutually exclusive with the tables below.
    pub builtin: Option<String>,
    /// `d x d` table of polynomials in `x`.
    pub g0: Option<Vec<Vec<Poly>>>,
    /// `d` polynomials in `x`.
    pub delta: Option<Vec<Poly>>,
    /// One polynomial in `x`.
    pub beta: Option<Poly>,
    /// Finite-difference step for metric derivatives.
    pub fd_step: Option<f64>,
}

pub type Poly = Vec<Term>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub powers: Vec<u32>,
    pub coeff: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub hypothesis: String,
    pub p: ShapeSpec,
    pub q: ShapeSpec,
    /// Optional a-priori bound on `sup_Q |s_Q|` (the H1 time-gap advisory).
    pub d_q_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// A fixed spacetime point, or with `cylindrical = true` the Killing
    /// cylinder over a spatial point.
    Point {
        x: Vec<f64>,
        t: Option<f64>,
        #[serde(default)]
        cylindrical: bool,
    },
    /// Sphere `|x - center| = radius` at time `t`, or its Killing cylinder.
    Sphere {
        center: Vec<f64>,
        radius: f64,
        t: Option<f64>,
        #[serde(default)]
        cylindrical: bool,
    },
    /// Affine hyperplane `normal . (x, t) = offset`.
    Plane { normal: Vec<f64>, offset: f64 },
    /// Zero set of polynomial constraints in `(x, t)`.
    Polynomial {
        constraints: Vec<Poly>,
        #[serde(default)]
        cylindrical: bool,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub segments: Option<usize>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub penalty: Option<Vec<f64>>,
    pub restarts: Option<usize>,
    pub perturbation: Option<f64>,
    pub momentum: Option<f64>,
    pub t0: Option<f64>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub tol_on: Option<f64>,
    pub tol_causal: Option<f64>,
    pub tol_geo: Option<f64>,
    pub tol_cons: Option<f64>,
    pub tol_orth: Option<f64>,
}

fn eval_poly(poly: &[Term], point: &DVector<f64>) -> f64 {
    poly.iter()
        .map(|term| {
            term.coeff
                * term
                    .powers
                    .iter()
                    .enumerate()
                    .map(|(l, &p)| point[l].powi(p as i32))
                    .product::<f64>()
        })
        .sum()
}

fn check_poly_arity(poly: &[Term], arity: usize, what: &str) -> Result<(), String> {
    for term in poly {
        if term.powers.len() != arity {
            return Err(format!(
                "{what}: term has {} powers, expected {arity}",
                term.powers.len()
            ));
        }
    }
    Ok(())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("scenario parse error: {e}"))
    }

    /// Build a runnable scenario, validating the declaration.
    pub fn build(self) -> Result<Scenario, String> {
        let d = self.dim;
        if d == 0 {
            return Err("dim must be at least 1".into());
        }
        if self.chart.min.len() != d || self.chart.max.len() != d {
            return Err("chart bounds must have `dim` entries".into());
        }
        let chart = ChartBounds::new(
            DVector::from_vec(self.chart.min.clone()),
            DVector::from_vec(self.chart.max.clone()),
        )
        .map_err(|e| e.to_string())?;

        let metric = self.build_metric(d, chart)?;
        metric.validate(8).map_err(|e| format!("metric invariants: {e}"))?;

        let hypothesis = match self.boundary.hypothesis.as_str() {
            "H1" => Hypothesis::H1,
            "H2" => Hypothesis::H2,
            other => return Err(format!("unknown hypothesis `{other}` (use H1 or H2)")),
        };
        let p = build_shape(&self.boundary.p, d)?;
        let q = build_shape(&self.boundary.q, d)?;
        let mut boundary = BoundaryPair::new(p, q, hypothesis);
        boundary.d_q_bound = self.boundary.d_q_bound;

        let mut params = SolveParams::default();
        let s = &self.solver;
        if let Some(v) = s.segments {
            params.segments = v;
        }
        if let Some(v) = s.max_iters {
            params.max_iters = v;
        }
        if let Some(v) = s.grad_tol {
            params.grad_tol = v;
        }
        if let Some(v) = &s.penalty {
            params.penalty_schedule = v.clone();
        }
        if let Some(v) = s.restarts {
            params.restarts = v;
        }
        if let Some(v) = s.perturbation {
            params.perturbation = v;
        }
        if s.momentum.is_some() {
            params.momentum = s.momentum;
        }
        if let Some(v) = s.t0 {
            params.t0 = v;
        }
        if let Some(v) = self.seed {
            params.seed = v;
        }
        let mut tol = Tolerances::default();
        let t = &s.tolerances;
        if let Some(v) = t.tol_on {
            tol.tol_on = v;
        }
        if let Some(v) = t.tol_causal {
            tol.tol_causal = v;
        }
        if let Some(v) = t.tol_geo {
            tol.tol_geo = v;
        }
        if let Some(v) = t.tol_cons {
            tol.tol_cons = v;
        }
        if let Some(v) = t.tol_orth {
            tol.tol_orth = v;
        }
        params.tolerances = tol;
        params.validate().map_err(|e| e.to_string())?;

        Ok(Scenario {
            name: self.name.unwrap_or_else(|| "custom".into()),
            description: "scenario file",
            metric,
            boundary,
            params,
            expected: None,
        })
    }

    fn build_metric(&self, d: usize, chart: ChartBounds) -> Result<MetricField, String> {
        let spec = &self.metric;
        let has_tables = spec.g0.is_some() || spec.delta.is_some() || spec.beta.is_some();
        match (&spec.builtin, has_tables) {
            (Some(_), true) => {
                Err("metric: give either `builtin` or coefficient tables, not both".into())
            }
            (Some(name), false) => {
                let s = scenarios::builtin(name).map_err(|e| e.to_string())?;
                if s.metric.dim() != d {
                    return Err(format!(
                        "builtin metric `{name}` has dimension {}, file declares {d}",
                        s.metric.dim()
                    ));
                }
                let m = if let Some(h) = spec.fd_step {
                    s.metric.with_fd_step(h)
                } else {
                    s.metric
                };
                Ok(m)
            }
            (None, _) => {
                let g0 = spec.g0.as_ref().ok_or("metric: missing g0 table")?;
                let delta = spec.delta.as_ref().ok_or("metric: missing delta table")?;
                let beta = spec.beta.as_ref().ok_or("metric: missing beta polynomial")?;
                if g0.len() != d || g0.iter().any(|row| row.len() != d) {
                    return Err("metric: g0 must be a d x d table".into());
                }
                if delta.len() != d {
                    return Err("metric: delta must have d entries".into());
                }
                for (i, row) in g0.iter().enumerate() {
                    for (j, poly) in row.iter().enumerate() {
                        check_poly_arity(poly, d, &format!("g0[{i}][{j}]"))?;
                    }
                }
                for (i, poly) in delta.iter().enumerate() {
                    check_poly_arity(poly, d, &format!("delta[{i}]"))?;
                }
                check_poly_arity(beta, d, "beta")?;

                let g0 = g0.clone();
                let delta = delta.clone();
                let beta = beta.clone();
                let m = MetricField::new(
                    d,
                    Arc::new(move |x: &DVector<f64>| {
                        // symmetrized evaluation of the coefficient table
                        let raw = DMatrix::from_fn(d, d, |i, j| eval_poly(&g0[i][j], x));
                        0.5 * (&raw + raw.transpose())
                    }),
                    Arc::new(move |x: &DVector<f64>| {
                        DVector::from_iterator(d, delta.iter().map(|p| eval_poly(p, x)))
                    }),
                    Arc::new(move |x: &DVector<f64>| eval_poly(&beta, x)),
                    chart,
                )
                .map_err(|e| e.to_string())?;
                Ok(if let Some(h) = spec.fd_step {
                    m.with_fd_step(h)
                } else {
                    m
                })
            }
        }
    }
}

fn build_shape(spec: &ShapeSpec, d: usize) -> Result<Submanifold, String> {
    match spec {
        ShapeSpec::Point { x, t, cylindrical } => {
            if x.len() != d {
                return Err("point: x must have d entries".into());
            }
            let x0 = DVector::from_vec(x.clone());
            if *cylindrical {
                if t.is_some() {
                    return Err("point: cylindrical points must not fix t".into());
                }
                Ok(Submanifold::cylinder_over_point(x0))
            } else {
                Ok(Submanifold::point(x0, t.unwrap_or(0.0)))
            }
        }
        ShapeSpec::Sphere {
            center,
            radius,
            t,
            cylindrical,
        } => {
            if center.len() != d {
                return Err("sphere: center must have d entries".into());
            }
            if !(*radius > 0.0) {
                return Err("sphere: radius must be positive".into());
            }
            let c = DVector::from_vec(center.clone());
            if *cylindrical {
                if t.is_some() {
                    return Err("sphere: cylindrical spheres must not fix t".into());
                }
                Ok(Submanifold::cylinder_over_sphere(c, *radius))
            } else {
                Ok(Submanifold::sphere_at_time(c, *radius, t.unwrap_or(0.0)))
            }
        }
        ShapeSpec::Plane { normal, offset } => {
            if normal.len() != d + 1 {
                return Err("plane: normal must have d + 1 entries (x .., t)".into());
            }
            Ok(Submanifold::plane(DVector::from_vec(normal.clone()), *offset))
        }
        ShapeSpec::Polynomial {
            constraints,
            cylindrical,
        } => {
            if constraints.is_empty() || constraints.len() > d + 1 {
                return Err("polynomial: need between 1 and d + 1 constraints".into());
            }
            for (i, poly) in constraints.iter().enumerate() {
                check_poly_arity(poly, d + 1, &format!("constraint {i}"))?;
                if *cylindrical
                    && poly.iter().any(|term| term.powers[d] != 0)
                {
                    return Err(format!(
                        "constraint {i}: cylindrical shapes must not involve t"
                    ));
                }
            }
            let k = constraints.len();
            let constraints = constraints.clone();
            Submanifold::from_constraint(
                d + 1,
                k,
                Arc::new(move |p: &DVector<f64>| {
                    DVector::from_iterator(k, constraints.iter().map(|poly| eval_poly(poly, p)))
                }),
                None,
                *cylindrical,
            )
            .map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dim = 2
chart = { min = [-5.0, -5.0], max = [5.0, 5.0] }

[metric]
builtin = "minkowski"

[boundary]
hypothesis = "H1"
p = { shape = "point", x = [0.0, 0.0], t = 0.0 }
q = { shape = "point", x = [1.0, 0.0], t = 0.0 }
"#;

    #[test]
    fn minimal_file_builds() {
        let scenario = ScenarioFile::parse(MINIMAL).unwrap().build().unwrap();
        assert_eq!(scenario.metric.dim(), 2);
        assert_eq!(scenario.boundary.hypothesis, Hypothesis::H1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[metric]", "frobnicate = 3\n[metric]");
        assert!(ScenarioFile::parse(&text).is_err());
    }

    #[test]
    fn polynomial_metric_builds_and_evaluates() {
        let text = r#"
dim = 2
chart = { min = [-2.0, -2.0], max = [2.0, 2.0] }

[metric]
g0 = [
  [[{ powers = [0, 0], coeff = 1.0 }], []],
  [[], [{ powers = [0, 0], coeff = 1.0 }]],
]
delta = [[{ powers = [0, 1], coeff = -0.3 }], [{ powers = [1, 0], coeff = 0.3 }]]
beta = [
  { powers = [0, 0], coeff = 1.0 },
  { powers = [2, 0], coeff = -0.09 },
  { powers = [0, 2], coeff = -0.09 },
]

[boundary]
hypothesis = "H1"
p = { shape = "point", x = [-0.5, 0.0], t = 0.0 }
q = { shape = "point", x = [0.5, 0.0], t = 0.0 }
"#;
        let scenario = ScenarioFile::parse(text).unwrap().build().unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(scenario.metric.beta_at(&x), 1.0 - 0.18);
        assert_eq!(scenario.metric.delta_at(&x), DVector::from_vec(vec![0.3, 0.3]));
    }

    #[test]
    fn beta_must_stay_positive() {
        let text = r#"
dim = 2
chart = { min = [-5.0, -5.0], max = [5.0, 5.0] }

[metric]
g0 = [
  [[{ powers = [0, 0], coeff = 1.0 }], []],
  [[], [{ powers = [0, 0], coeff = 1.0 }]],
]
delta = [[], []]
beta = [{ powers = [1, 0], coeff = 1.0 }]

[boundary]
hypothesis = "H1"
p = { shape = "point", x = [0.0, 0.0], t = 0.0 }
q = { shape = "point", x = [1.0, 0.0], t = 0.0 }
"#;
        let err = ScenarioFile::parse(text).unwrap().build().unwrap_err();
        assert!(err.contains("metric invariants"), "{err}");
    }

    #[test]
    fn polynomial_shape_with_time_dependence_cannot_be_cylindrical() {
        let text = r#"
dim = 2
chart = { min = [-5.0, -5.0], max = [5.0, 5.0] }

[metric]
builtin = "minkowski"

[boundary]
hypothesis = "H2"
p = { shape = "polynomial", cylindrical = true, constraints = [[{ powers = [0, 0, 1], coeff = 1.0 }]] }
q = { shape = "point", x = [3.0, 0.0], cylindrical = true }
"#;
        let err = ScenarioFile::parse(text).unwrap().build().unwrap_err();
        assert!(err.contains("must not involve t"), "{err}");
    }
}
