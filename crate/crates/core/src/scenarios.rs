//! Built-in example spacetimes and boundary pairs with oracle-computable
//! answers. These back the test suite and the CLI catalog.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::reduction::{ReducedState, SpatialCurve};
use crate::solver::SolveParams;
use crate::spacetime::{ChartBounds, MetricField};
use crate::submanifolds::{BoundaryPair, Hypothesis, Submanifold};

/// Oracle answers attached to a catalog scenario.
#[derive(Clone, Debug)]
pub struct ExpectedAnswers {
    pub j_value: Option<f64>,
    pub delta: Option<f64>,
    /// Spatial position of the optimal starting point on `P`, when known.
    pub endpoint_p: Option<DVector<f64>>,
    pub endpoint_q: Option<DVector<f64>>,
    pub tol: f64,
    pub provenance: &'static str,
}

/// A named spacetime with one boundary pair and solver defaults.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: &'static str,
    pub metric: MetricField,
    pub boundary: BoundaryPair,
    pub params: SolveParams,
    pub expected: Option<ExpectedAnswers>,
}

/// Names of every catalog entry, in display order.
pub fn catalog() -> Vec<&'static str> {
    vec![
        "minkowski",
        "minkowski-sphere-point",
        "minkowski-cylinders",
        "boost",
        "boost-sphere-point",
        "boost-cylinders",
        "static-well",
        "static-well-sphere-point",
        "rotating",
        "rotating-sphere-point",
    ]
}

fn minkowski_metric() -> MetricField {
    flat_metric(DVector::zeros(2), 10.0)
}

fn boost_metric() -> MetricField {
    flat_metric(DVector::from_vec(vec![0.5, 0.0]), 10.0)
}

fn flat_metric(delta: DVector<f64>, half_width: f64) -> MetricField {
    MetricField::new(
        2,
        Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
        Arc::new(move |_x: &DVector<f64>| delta.clone()),
        Arc::new(|_x: &DVector<f64>| 1.0),
        ChartBounds::centered(2, half_width),
    )
    .expect("flat metric data is consistent")
}

fn static_well_metric() -> MetricField {
    MetricField::new(
        2,
        Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
        Arc::new(|_x: &DVector<f64>| DVector::zeros(2)),
        Arc::new(|x: &DVector<f64>| 1.0 + x.norm_squared()),
        ChartBounds::centered(2, 5.0),
    )
    .expect("static-well metric data is consistent")
}

/// Flat spacetime in rotating coordinates with angular rate `a`: the chart
/// is shrunk so that `a |x| < 1` everywhere, keeping `beta = 1 - a^2 |x|^2`
/// positive and `K` timelike (`g(K,K) = a^2 |x|^2 - 1 < 0`).
fn rotating_metric() -> MetricField {
    let a = 0.3;
    MetricField::new(
        2,
        Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
        Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![-a * x[1], a * x[0]])),
        Arc::new(move |x: &DVector<f64>| 1.0 - a * a * x.norm_squared()),
        ChartBounds::centered(2, 2.0),
    )
    .expect("rotating metric data is consistent")
}

fn vec2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

fn point_pair(px: DVector<f64>, pt: f64, qx: DVector<f64>, qt: f64) -> BoundaryPair {
    let mut bp = BoundaryPair::new(
        Submanifold::point(px, pt),
        Submanifold::point(qx, qt),
        Hypothesis::H1,
    );
    bp.d_q_bound = Some(qt.abs());
    bp
}

fn sphere_point_pair(radius: f64, qx: DVector<f64>, qt: f64) -> BoundaryPair {
    let mut bp = BoundaryPair::new(
        Submanifold::sphere_at_time(DVector::zeros(2), radius, 0.0),
        Submanifold::point(qx, qt),
        Hypothesis::H1,
    );
    bp.d_q_bound = Some(qt.abs());
    bp
}

fn cylinder_pair() -> BoundaryPair {
    BoundaryPair::new(
        Submanifold::cylinder_over_sphere(DVector::zeros(2), 1.0),
        Submanifold::cylinder_over_point(vec2(3.0, 0.0)),
        Hypothesis::H2,
    )
}

/// Look up a catalog scenario by name.
pub fn builtin(name: &str) -> Result<Scenario> {
    let params = SolveParams::default();
    let curved = SolveParams {
        // curved fields: finite-difference floors put 1e-10 gradients out of
        // reach, and discretization error dominates certification
        grad_tol: 1e-7,
        tolerances: crate::solver::Tolerances {
            tol_geo: 2e-2,
            tol_cons: 1e-4,
            tol_orth: 1e-4,
            ..Default::default()
        },
        ..SolveParams::default()
    };
    let scenario = match name {
        "minkowski" => Scenario {
            name: name.into(),
            description: "flat spacetime, two fixed points",
            metric: minkowski_metric(),
            boundary: point_pair(vec2(0.0, 0.0), 0.0, vec2(1.0, 0.0), 0.0),
            params,
            expected: Some(ExpectedAnswers {
                j_value: Some(0.5),
                delta: Some(0.0),
                endpoint_p: Some(vec2(0.0, 0.0)),
                endpoint_q: Some(vec2(1.0, 0.0)),
                tol: 1e-8,
                provenance: "closed-form: straight chord in a constant metric",
            }),
        },
        "minkowski-sphere-point" => Scenario {
            name: name.into(),
            description: "flat spacetime, unit sphere at t=0 to a point",
            metric: minkowski_metric(),
            boundary: sphere_point_pair(1.0, vec2(3.0, 0.0), 2.0),
            params,
            expected: Some(ExpectedAnswers {
                j_value: Some(0.0),
                delta: Some(2.0),
                endpoint_p: Some(vec2(1.0, 0.0)),
                endpoint_q: Some(vec2(3.0, 0.0)),
                tol: 1e-6,
                provenance: "closed-form: radial chord meets the sphere orthogonally",
            }),
        },
        "minkowski-cylinders" => Scenario {
            name: name.into(),
            description: "flat spacetime, Killing cylinders over a sphere and a point",
            metric: minkowski_metric(),
            boundary: cylinder_pair(),
            params,
            expected: Some(ExpectedAnswers {
                j_value: Some(2.0),
                delta: Some(0.0),
                endpoint_p: Some(vec2(1.0, 0.0)),
                endpoint_q: Some(vec2(3.0, 0.0)),
                tol: 1e-6,
                provenance: "closed-form: radial base geodesic, constant lift",
            }),
        },
        "boost" => Scenario {
            name: name.into(),
            description: "constant drift delta=(1/2,0), two fixed points",
            metric: boost_metric(),
            boundary: point_pair(vec2(0.0, 0.0), 0.0, vec2(1.0, 0.0), 0.0),
            params,
            expected: Some(ExpectedAnswers {
                j_value: Some(0.5),
                delta: Some(0.0),
                endpoint_p: Some(vec2(0.0, 0.0)),
                endpoint_q: Some(vec2(1.0, 0.0)),
                tol: 1e-8,
                provenance: "closed-form: constant-field integrals",
            }),
        },
        "boost-sphere-point" => Scenario {
            name: name.into(),
            description: "constant drift, unit sphere at t=0 to a point",
            metric: boost_metric(),
            boundary: sphere_point_pair(1.0, vec2(3.0, 0.0), 2.0),
            params,
            expected: None,
        },
        "boost-cylinders" => Scenario {
            name: name.into(),
            description: "constant drift, Killing cylinders over a sphere and a point",
            metric: boost_metric(),
            boundary: cylinder_pair(),
            params,
            expected: Some(ExpectedAnswers {
                j_value: Some(2.5),
                delta: Some(1.0),
                endpoint_p: Some(vec2(1.0, 0.0)),
                endpoint_q: Some(vec2(3.0, 0.0)),
                tol: 1e-6,
                provenance: "closed-form: h1 = diag(1.25, 1) keeps the radial chord minimal",
            }),
        },
        "static-well" => Scenario {
            name: name.into(),
            description: "static metric with beta = 1 + |x|^2, two fixed points",
            metric: static_well_metric(),
            boundary: point_pair(vec2(-1.0, 0.0), 0.0, vec2(1.0, 0.5), 1.5),
            params: curved,
            expected: None,
        },
        "static-well-sphere-point" => Scenario {
            name: name.into(),
            description: "static well, unit sphere at t=0 to a point",
            metric: static_well_metric(),
            boundary: sphere_point_pair(1.0, vec2(3.0, 0.0), 1.0),
            params: curved,
            expected: None,
        },
        "rotating" => Scenario {
            name: name.into(),
            description: "flat spacetime in rotating coordinates (a = 0.3), two fixed points",
            metric: rotating_metric(),
            boundary: point_pair(vec2(-0.8, 0.0), 0.0, vec2(0.8, 0.4), 0.3),
            params: curved,
            expected: None,
        },
        "rotating-sphere-point" => Scenario {
            name: name.into(),
            description: "rotating coordinates, small sphere at t=0 to a point",
            metric: rotating_metric(),
            boundary: sphere_point_pair(0.5, vec2(1.5, 0.0), 0.5),
            params: curved,
            expected: None,
        },
        other => return Err(Error::UnknownScenario(other.into())),
    };
    Ok(scenario)
}

/// A smooth random curve that can be sampled at any resolution: a chord
/// between two points of the inner 60% of the chart plus low-frequency sine
/// bumps.
#[derive(Clone, Debug)]
pub struct CurveFamily {
    p: DVector<f64>,
    q: DVector<f64>,
    bumps: Vec<DVector<f64>>,
}

impl CurveFamily {
    pub fn random<R: Rng>(m: &MetricField, rng: &mut R) -> Self {
        let chart = m.chart();
        let d = m.dim();
        let extent: Vec<f64> = (0..d).map(|l| chart.hi()[l] - chart.lo()[l]).collect();
        let center: Vec<f64> =
            (0..d).map(|l| 0.5 * (chart.hi()[l] + chart.lo()[l])).collect();

        let sample_inner = |rng: &mut R| {
            DVector::from_iterator(
                d,
                (0..d).map(|l| center[l] + 0.3 * extent[l] * rng.gen_range(-1.0..1.0)),
            )
        };
        let p = sample_inner(rng);
        let q = sample_inner(rng);
        let bumps = (0..3)
            .map(|_| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|l| 0.04 * extent[l] * rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        Self { p, q, bumps }
    }

    /// Sample the curve on the uniform partition with `n` segments.
    pub fn sample(&self, n: usize) -> SpatialCurve {
        let nodes = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                let mut x = &self.p + s * (&self.q - &self.p);
                for (k, bump) in self.bumps.iter().enumerate() {
                    x += ((k + 1) as f64 * std::f64::consts::PI * s).sin() * bump;
                }
                x
            })
            .collect();
        SpatialCurve::new(nodes).expect("generated nodes are valid")
    }
}

/// Random smooth spatial curve inside the chart.
pub fn random_spatial_curve<R: Rng>(m: &MetricField, n: usize, rng: &mut R) -> SpatialCurve {
    CurveFamily::random(m, rng).sample(n)
}

/// Random reduced state over [`random_spatial_curve`].
pub fn random_reduced_state<R: Rng>(m: &MetricField, n: usize, rng: &mut R) -> ReducedState {
    let x = random_spatial_curve(m, n, rng);
    let t0 = rng.gen_range(-1.0..1.0);
    let delta = rng.gen_range(-2.0..2.0);
    ReducedState::new(x, t0, delta).expect("generated state is valid")
}
