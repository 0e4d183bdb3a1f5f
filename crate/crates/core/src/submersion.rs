//! The Lorentzian-submersion route.
//!
//! The projection `M0 x R -> M0` is a Lorentzian submersion onto the base
//! carrying `h1[v,v] = g0[v,v] + (1/beta)(g0[delta,v])^2`: it restricts to
//! an isometry on horizontal subspaces (orthogonal complements of `K`).
//! Horizontal lifts of base geodesics are spacetime geodesics, so for
//! Killing-invariant boundary data the boundary problem drops to a
//! Riemannian one on `(M0, h1)` and lifts back with
//! `t(s) = t0 + int_0^s (1/beta) g0[delta, xdot]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom;
use crate::reduction::SpatialCurve;
use crate::solver::{self, EndpointCondition, SolveParams};
use crate::spacetime::{MetricField, SpacetimeCurve};
use crate::submanifolds::Submanifold;

/// The base Riemannian metric `h1` of the submersion.
#[derive(Clone, Debug)]
pub struct BaseMetric {
    source: MetricField,
}

impl BaseMetric {
    pub fn new(source: MetricField) -> Self {
        Self { source }
    }

    pub fn source(&self) -> &MetricField {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// `h1 = g0 + (1/beta) (g0 delta)(g0 delta)^T` at `x`.
    pub fn h1_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g0 = self.source.g0_at(x);
        let u = &g0 * self.source.delta_at(x);
        &g0 + (&u * u.transpose()) / self.source.beta_at(x)
    }

    /// Polarized bilinear value `h1(x)[v, w]`.
    pub fn eval_h1(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        if !self.source.chart().contains(x) {
            return Err(Error::OutsideChart {
                point: x.iter().copied().collect(),
            });
        }
        Ok((self.h1_matrix(x) * w).dot(v))
    }

    /// Max over interior nodes of the `h1`-norm of the discrete geodesic
    /// equation residual of a base curve.
    pub fn geodesic_residual(&self, x: &SpatialCurve) -> Result<f64> {
        if x.n_segments() < 4 {
            return Err(Error::InvalidCurve(
                "geodesic residual needs at least 4 segments".into(),
            ));
        }
        let d = self.dim();
        let n = x.n_segments() as f64;
        let h = self.source.fd_step();
        let mut worst = 0.0_f64;
        for i in 1..x.n_segments() {
            let acc = (x.node(i + 1) - 2.0 * x.node(i) + x.node(i - 1)) * n * n;
            let vel = (x.node(i + 1) - x.node(i - 1)) * (0.5 * n);
            let gamma = geom::christoffel_fd(|p| self.h1_matrix(p), x.node(i), d, h)?;
            let residual = acc + geom::contract_christoffel(&gamma, &vel, &vel);
            let h1 = self.h1_matrix(x.node(i));
            worst = worst.max((&h1 * &residual).dot(&residual).sqrt());
        }
        Ok(worst)
    }

    /// `h1`-orthogonality residuals of a base curve against two base
    /// submanifolds, normalized like the spacetime version.
    pub fn orthogonality_residual(
        &self,
        x: &SpatialCurve,
        p_s: &Submanifold,
        q_s: &Submanifold,
    ) -> Result<(f64, f64)> {
        let r0 = self.endpoint_residual(p_s, x.first(), &x.boundary_velocity_start())?;
        let r1 = self.endpoint_residual(q_s, x.last(), &x.boundary_velocity_end())?;
        Ok((r0, r1))
    }

    fn endpoint_residual(
        &self,
        sub: &Submanifold,
        endpoint: &DVector<f64>,
        velocity: &DVector<f64>,
    ) -> Result<f64> {
        let h1 = self.h1_matrix(endpoint);
        let speed = (&h1 * velocity).dot(velocity).max(0.0).sqrt();
        let mut worst = 0.0_f64;
        for v in sub.tangent_basis(endpoint)? {
            worst = worst.max((&h1 * &v).dot(velocity).abs());
        }
        Ok(worst / (1.0 + speed))
    }
}

/// Minimize the `h1` energy between two base submanifolds and certify the
/// output: discrete geodesic residual and endpoint `h1`-orthogonality both
/// within the solve tolerances.
pub fn riemannian_normal_geodesic(
    bm: &BaseMetric,
    p_s: &Submanifold,
    q_s: &Submanifold,
    params: &SolveParams,
) -> Result<SpatialCurve> {
    let matrix = {
        let bm = bm.clone();
        Arc::new(move |x: &DVector<f64>| bm.h1_matrix(x))
    };
    let curve = solver::minimize_riemannian_energy(
        matrix,
        bm.dim(),
        bm.source.chart(),
        EndpointCondition::On(p_s.clone()),
        EndpointCondition::On(q_s.clone()),
        params,
    )?;

    let tol = &params.tolerances;
    let residual = bm.geodesic_residual(&curve)?;
    let (r0, r1) = bm.orthogonality_residual(&curve, p_s, q_s)?;
    if residual > tol.tol_geo || r0 > tol.tol_orth || r1 > tol.tol_orth {
        let lift = horizontal_lift(bm, &curve, 0.0);
        let best = solver::diagnose_with_result(bm.source(), &lift, None, params)?;
        return Err(Error::NoGeodesicFound {
            restarts: params.restarts,
            best: Box::new(best),
        });
    }
    Ok(curve)
}

/// Horizontal lift of a base curve starting at fiber point `t0`:
/// `t` integrates `(1/beta) g0[delta, xdot]`, making `g(zdot, K)` vanish
/// segmentwise.
pub fn horizontal_lift(bm: &BaseMetric, x: &SpatialCurve, t0: f64) -> SpacetimeCurve {
    let m = &bm.source;
    let n = x.n_segments();
    let mut times = Vec::with_capacity(n + 1);
    let mut t = t0;
    times.push(t);
    for i in 0..n {
        let mid = x.segment_midpoint(i);
        let v = x.segment_velocity(i);
        let tdot = (m.g0_at(&mid) * m.delta_at(&mid)).dot(&v) / m.beta_at(&mid);
        t += tdot / n as f64;
        times.push(t);
    }
    SpacetimeCurve::from_spatial(x, &times).expect("lift preserves validity")
}

/// Full-metric geodesic residual of a curve; certifies that lifts of base
/// geodesics are spacetime geodesics.
pub fn lift_is_geodesic_check(m: &MetricField, c: &SpacetimeCurve) -> Result<f64> {
    m.geodesic_residual(c)
}
