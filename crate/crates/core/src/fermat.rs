//! Randers-type Fermat metrics of a standard stationary spacetime.
//!
//! A lightlike curve `z = (x, t)` satisfies `g(zdot, zdot) = 0`; solving for
//! `tdot` shows that the time of flight is the length of the spatial
//! projection under one of two Finsler metrics on `M0`:
//!
//! ```text
//! F±(x, y) = ±g~0[delta, y] + sqrt( (g~0[delta, y])^2 + g~0[y, y] )
//! ```
//!
//! with `g~0 = g0 / beta` (`F+` for future-pointing, `F-` for past-pointing
//! curves). Both are Randers metrics: `sqrt(h[y,y]) + omega[y]` with
//! `h[y,y] = (g~0[delta,y])^2 + g~0[y,y]` and `omega = ±g~0[delta, .]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::reduction::{self, SpatialCurve};
use crate::solver::{self, SolveParams};
use crate::spacetime::{MetricField, SpacetimeCurve};

/// Time orientation of the lightlike curves the metric describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FermatSide {
    Future,
    Past,
}

/// The Randers data `(h, omega)` derived from a metric field, for one side.
#[derive(Clone, Debug)]
pub struct FermatStructure {
    base: MetricField,
    side: FermatSide,
}

impl FermatStructure {
    pub fn new(base: MetricField, side: FermatSide) -> Self {
        Self { base, side }
    }

    pub fn side(&self) -> FermatSide {
        self.side
    }

    pub fn base(&self) -> &MetricField {
        &self.base
    }

    fn sign(&self) -> f64 {
        match self.side {
            FermatSide::Future => 1.0,
            FermatSide::Past => -1.0,
        }
    }

    /// `g~0[delta, y]` and `g~0[y, y]` at `x`.
    fn drift_and_quad(&self, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
        let g0 = self.base.g0_at(x);
        let beta = self.base.beta_at(x);
        let a = (&g0 * self.base.delta_at(x)).dot(y) / beta;
        let q = (&g0 * y).dot(y) / beta;
        (a, q)
    }

    /// The Finsler structure `F±(x, y)`.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (a, q) = self.drift_and_quad(x, y);
        self.sign() * a + (a * a + q).sqrt()
    }

    /// `F` together with its fiber derivative `dF/dy`. The derivative of
    /// `F^2/2` is smooth through `y = 0`, where it vanishes.
    pub(crate) fn eval_with_grad_vel(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (f64, DVector<f64>) {
        let g0 = self.base.g0_at(x);
        let beta = self.base.beta_at(x);
        let u = (&g0 * self.base.delta_at(x)) / beta; // grad of a = g~0[delta, y]
        let a = u.dot(y);
        let gty = (&g0 * y) / beta;
        let q = gty.dot(y);
        let s = (a * a + q).sqrt();
        let f = self.sign() * a + s;
        if s < 1e-300 {
            return (f, DVector::zeros(y.len()));
        }
        (f, self.sign() * &u + (a * u + gty) / s)
    }

    /// Matrix of the associated Riemannian metric
    /// `h = (g~0 delta)(g~0 delta)^T + g~0`.
    pub fn h_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g0 = self.base.g0_at(x);
        let beta = self.base.beta_at(x);
        let gt = &g0 / beta;
        let u = &gt * self.base.delta_at(x);
        &u * u.transpose() + gt
    }

    /// The one-form `omega± = ±g~0[delta, .]` as a covector.
    pub fn omega(&self, x: &DVector<f64>) -> DVector<f64> {
        let g0 = self.base.g0_at(x);
        let beta = self.base.beta_at(x);
        (self.sign() / beta) * (&g0 * self.base.delta_at(x))
    }

    /// `|omega|_h = sqrt(omega^T h^{-1} omega)`; Randers admissibility needs
    /// this below 1, which holds identically for Fermat data:
    /// with `c = g~0[delta,delta]` the norm is `sqrt(c / (1 + c))`.
    pub fn omega_norm(&self, x: &DVector<f64>) -> f64 {
        let omega = self.omega(x);
        let h = self.h_matrix(x);
        let sol = h
            .cholesky()
            .expect("h is positive definite for valid metric data")
            .solve(&omega);
        sol.dot(&omega).max(0.0).sqrt()
    }
}

/// Composite midpoint quadrature of `F` along a spatial curve. Randers
/// metrics are non-reversible: reversing the curve changes the value.
pub fn fermat_length(fs: &FermatStructure, x: &SpatialCurve) -> f64 {
    let n = x.n_segments();
    let mut sum = 0.0;
    for i in 0..n {
        sum += fs.eval(&x.segment_midpoint(i), &x.segment_velocity(i));
    }
    sum / n as f64
}

/// Time of flight of the lightlike curve over `x`:
/// `T+ = +length(F+, x)` (future-pointing), `T- = -length(F-, x)`.
pub fn arrival_time(m: &MetricField, side: FermatSide, x: &SpatialCurve) -> f64 {
    let fs = FermatStructure::new(m.clone(), side);
    match side {
        FermatSide::Future => fermat_length(&fs, x),
        FermatSide::Past => -fermat_length(&fs, x),
    }
}

/// The lightlike curve over `x` starting at time `t0`, built by integrating
/// `tdot = F+(x, xdot)` (future) or `tdot = -F-(x, xdot)` (past) segmentwise.
/// Every segment of the output is null to roundoff under the same midpoint
/// quadrature, and its time gap equals [`arrival_time`] exactly.
pub fn lightlike_lift(
    fs: &FermatStructure,
    x: &SpatialCurve,
    t0: f64,
) -> Result<SpacetimeCurve> {
    let n = x.n_segments();
    let mut times = Vec::with_capacity(n + 1);
    let mut t = t0;
    times.push(t);
    for i in 0..n {
        let v = x.segment_velocity(i);
        if v.norm() < 1e-12 {
            return Err(Error::ZeroVelocitySegment { segment: i });
        }
        let tdot = fs.sign() * fs.eval(&x.segment_midpoint(i), &v);
        t += tdot / n as f64;
        times.push(t);
    }
    SpacetimeCurve::from_spatial(x, &times)
}

/// The time gap that makes the reduced functional vanish:
/// `T~±(x) = int g~0[delta, xdot] ± sqrt((int g0[xdot,xdot] +
/// int g~0[delta,xdot] g0[delta,xdot]) * int 1/beta)`.
pub fn t_tilde(m: &MetricField, x: &SpatialCurve, side: FermatSide) -> f64 {
    let ints = reduction::integrals(&reduction::segment_terms(m, x));
    let radicand = (ints.c + ints.d) * ints.b;
    debug_assert!(radicand >= 0.0);
    let sign = match side {
        FermatSide::Future => 1.0,
        FermatSide::Past => -1.0,
    };
    ints.a + sign * radicand.sqrt()
}

/// Checks the comparison `T+(x) <= T~+(x)` and `T~-(x) <= T-(x)`
/// (a Cauchy-Schwarz consequence, with equality at constant-speed curves in
/// static data). Returns whether both hold within `1e-9` absolute slack,
/// and the smaller of the two slacks.
pub fn check_stimo(m: &MetricField, x: &SpatialCurve) -> (bool, f64) {
    let upper = t_tilde(m, x, FermatSide::Future) - arrival_time(m, FermatSide::Future, x);
    let lower = arrival_time(m, FermatSide::Past, x) - t_tilde(m, x, FermatSide::Past);
    let slack = upper.min(lower);
    (slack >= -1e-9, slack)
}

/// Variational upper bound of the (asymmetric) Finsler distance from `p` to
/// `q`: multi-start minimization of the Finsler energy over discrete curves,
/// reported as the length of the best minimizer together with that curve.
pub fn fermat_distance(
    fs: &FermatStructure,
    p: &DVector<f64>,
    q: &DVector<f64>,
    params: &SolveParams,
) -> Result<(f64, SpatialCurve)> {
    let curve = solver::minimize_finsler_energy(fs, p, q, params)?;
    Ok((fermat_length(fs, &curve), curve))
}
