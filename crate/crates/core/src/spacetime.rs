//! The standard stationary metric, its auxiliary Riemannian metric, the
//! Killing flow, Christoffel symbols and per-curve geodesic diagnostics.
//!
//! Everything lives on a single coordinate chart: an axis-aligned box in
//! `R^d` for the spatial factor, with the time coordinate unconstrained.
//! The Killing field is `K = d/dt` throughout.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom;
use crate::reduction::SpatialCurve;

/// Default finite-difference step for metric derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Default relative tolerance for the causal classification of a curve.
pub const DEFAULT_TOL_CAUSAL: f64 = 1e-6;

type MatrixFieldFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type VectorFieldFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type ScalarFieldFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Axis-aligned box in `R^d` on which the metric data is valid.
#[derive(Clone, Debug)]
pub struct ChartBounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl ChartBounds {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| a >= b) {
            return Err(Error::InvalidParams("chart bounds must satisfy lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Cube `[-r, r]^d`.
    pub fn centered(dim: usize, r: f64) -> Self {
        Self {
            lo: DVector::from_element(dim, -r),
            hi: DVector::from_element(dim, r),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    pub fn contains_with_margin(&self, x: &DVector<f64>, margin: f64) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(xi, (lo, hi))| *xi >= lo + margin && *xi <= hi - margin)
    }

    /// Uniform grid with `per_axis` samples along each axis.
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        assert!(per_axis >= 2);
        let d = self.dim();
        let mut points = Vec::with_capacity(per_axis.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            let x = DVector::from_iterator(
                d,
                idx.iter().enumerate().map(|(k, &i)| {
                    self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (per_axis - 1) as f64
                }),
            );
            points.push(x);
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == d {
                    return points;
                }
            }
        }
    }
}

/// The spatial data `(g0, delta, beta)` defining a standard stationary
/// metric on a chart, together with the finite-difference step used for
/// all field derivatives.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    g0: Arc<MatrixFieldFn>,
    delta: Arc<VectorFieldFn>,
    beta: Arc<ScalarFieldFn>,
    chart: ChartBounds,
    fd_step: f64,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("chart", &self.chart)
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl MetricField {
    pub fn new(
        dim: usize,
        g0: Arc<MatrixFieldFn>,
        delta: Arc<VectorFieldFn>,
        beta: Arc<ScalarFieldFn>,
        chart: ChartBounds,
    ) -> Result<Self> {
        if chart.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: chart.dim(),
            });
        }
        Ok(Self {
            dim,
            g0,
            delta,
            beta,
            chart,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h > 0.0);
        self.fd_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart(&self) -> &ChartBounds {
        &self.chart
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn g0_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.g0)(x)
    }

    pub fn delta_at(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.delta)(x)
    }

    pub fn beta_at(&self, x: &DVector<f64>) -> f64 {
        (self.beta)(x)
    }

    fn check_in_chart(&self, x: &DVector<f64>) -> Result<()> {
        if self.chart.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart {
                point: x.iter().copied().collect(),
            })
        }
    }

    /// Checks the field invariants (`g0` SPD, `beta > 0`) on a uniform grid.
    pub fn validate(&self, per_axis: usize) -> Result<()> {
        for x in self.chart.grid(per_axis) {
            let g0 = self.g0_at(&x);
            if g0.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite {
                    point: x.iter().copied().collect(),
                });
            }
            let b = self.beta_at(&x);
            if !(b > 0.0) {
                return Err(Error::NonPositiveBeta {
                    value: b,
                    point: x.iter().copied().collect(),
                });
            }
        }
        Ok(())
    }

    /// The full `(d+1) x (d+1)` metric matrix in coordinates `(x, t)`:
    /// spatial block `g0`, cross column `g0 delta`, time-time entry `-beta`.
    pub fn metric_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_in_chart(x)?;
        Ok(self.metric_matrix_unchecked(x))
    }

    pub(crate) fn metric_matrix_unchecked(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let g0 = self.g0_at(x);
        let cross = &g0 * self.delta_at(x);
        let beta = self.beta_at(x);
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g.view_mut((0, 0), (d, d)).copy_from(&g0);
        for i in 0..d {
            g[(i, d)] = cross[i];
            g[(d, i)] = cross[i];
        }
        g[(d, d)] = -beta;
        g
    }

    /// Matrix of the auxiliary Riemannian metric `g_R` at `x`:
    /// `g_R(v,w) = g(v,w) - 2 g(v,K) g(w,K) / g(K,K)`.
    pub fn g_r_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_in_chart(x)?;
        let beta = self.beta_at(x);
        if -beta >= 0.0 {
            return Err(Error::KillingNotTimelike { gkk: -beta });
        }
        let d = self.dim;
        let g = self.metric_matrix_unchecked(x);
        // last column of g is the covector g(., K)
        let k_col = g.column(d).clone_owned();
        Ok(&g + (2.0 / beta) * &k_col * k_col.transpose())
    }

    /// The metric `g` applied to two tangent vectors at `p`.
    pub fn eval_g(&self, p: &SpacetimePoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        self.check_in_chart(&p.x)?;
        Ok(self.eval_g_at(&p.x, v, w))
    }

    pub(crate) fn eval_g_at(&self, x: &DVector<f64>, v: &TangentVector, w: &TangentVector) -> f64 {
        let g0 = self.g0_at(x);
        let delta = self.delta_at(x);
        let g0_delta = &g0 * &delta;
        (&g0 * &w.y).dot(&v.y) + g0_delta.dot(&v.y) * w.tau + g0_delta.dot(&w.y) * v.tau
            - self.beta_at(x) * v.tau * w.tau
    }

    /// The auxiliary Riemannian metric `g_R` applied to two tangent vectors.
    pub fn eval_g_r(
        &self,
        p: &SpacetimePoint,
        v: &TangentVector,
        w: &TangentVector,
    ) -> Result<f64> {
        self.check_in_chart(&p.x)?;
        let beta = self.beta_at(&p.x);
        if -beta >= 0.0 {
            return Err(Error::KillingNotTimelike { gkk: -beta });
        }
        let k = TangentVector::killing(self.dim);
        let gv = self.eval_g_at(&p.x, v, &k);
        let gw = self.eval_g_at(&p.x, w, &k);
        Ok(self.eval_g_at(&p.x, v, w) + 2.0 * gv * gw / beta)
    }

    /// Christoffel symbols of the full metric at `p`, one symmetric
    /// `(d+1) x (d+1)` matrix per upper index, with derivatives by central
    /// finite differences of step [`MetricField::fd_step`].
    pub fn christoffel(&self, p: &SpacetimePoint) -> Result<Vec<DMatrix<f64>>> {
        self.check_in_chart(&p.x)?;
        if !self.chart.contains_with_margin(&p.x, self.fd_step) {
            return Err(Error::InsufficientMargin { margin: self.fd_step });
        }
        geom::christoffel_fd(
            |x| self.metric_matrix_unchecked(x),
            &p.x,
            self.dim + 1,
            self.fd_step,
        )
    }

    /// Sup over interior nodes of the `g_R`-norm of the discrete geodesic
    /// equation residual `zddot + Gamma(zdot, zdot)`, second-order central
    /// differences.
    pub fn geodesic_residual(&self, c: &SpacetimeCurve) -> Result<f64> {
        if c.n_segments() < 4 {
            return Err(Error::InvalidCurve(
                "geodesic residual needs at least 4 segments".into(),
            ));
        }
        let n = c.n_segments() as f64;
        let mut worst = 0.0_f64;
        for i in 1..c.n_segments() {
            let zm = c.node(i - 1).ambient();
            let z0 = c.node(i).ambient();
            let zp = c.node(i + 1).ambient();
            let acc = (&zp - 2.0 * &z0 + &zm) * n * n;
            let vel = (&zp - &zm) * (0.5 * n);
            let gamma = self.christoffel(c.node(i))?;
            let residual = acc + geom::contract_christoffel(&gamma, &vel, &vel);
            let g_r = self.g_r_matrix(&c.node(i).x)?;
            worst = worst.max((&g_r * &residual).dot(&residual).sqrt());
        }
        Ok(worst)
    }

    /// Median per-segment energy `g(zdot, zdot)` and the causal character it
    /// implies, with the default classification tolerance.
    pub fn energy_and_character(&self, c: &SpacetimeCurve) -> Result<(f64, CausalCharacter)> {
        self.energy_and_character_with_tol(c, DEFAULT_TOL_CAUSAL)
    }

    /// As [`MetricField::energy_and_character`], with an explicit relative
    /// tolerance. The absolute threshold is `tol * (1 + s)` where `s` is the
    /// median per-segment `g_R` energy of the curve.
    pub fn energy_and_character_with_tol(
        &self,
        c: &SpacetimeCurve,
        tol_causal: f64,
    ) -> Result<(f64, CausalCharacter)> {
        let energies = self.segment_energies(c)?;
        let e_z = geom::median(&energies);

        let mut gr_energies = Vec::with_capacity(c.n_segments());
        for i in 0..c.n_segments() {
            let x = c.segment_midpoint_x(i);
            let v = c.segment_velocity(i);
            let k = TangentVector::killing(self.dim);
            let gv = self.eval_g_at(&x, &v, &k);
            let beta = self.beta_at(&x);
            gr_energies.push(self.eval_g_at(&x, &v, &v) + 2.0 * gv * gv / beta);
        }
        let scale = geom::median(&gr_energies).abs();
        let tol = tol_causal * (1.0 + scale);
        Ok((e_z, CausalCharacter::classify(e_z, tol)))
    }

    /// Per-segment values of `g(zdot, zdot)` at segment midpoints.
    pub fn segment_energies(&self, c: &SpacetimeCurve) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(c.n_segments());
        for i in 0..c.n_segments() {
            let x = c.segment_midpoint_x(i);
            self.check_in_chart(&x)?;
            let v = c.segment_velocity(i);
            out.push(self.eval_g_at(&x, &v, &v));
        }
        Ok(out)
    }

    /// Values and spatial derivatives of `(g0, delta, beta)` at `x`,
    /// derivatives by central differences of step [`MetricField::fd_step`].
    pub(crate) fn field_jet(&self, x: &DVector<f64>) -> FieldJet {
        let d = self.dim;
        let h = self.fd_step;
        let mut dg0 = Vec::with_capacity(d);
        let mut ddelta = Vec::with_capacity(d);
        let mut dbeta = DVector::zeros(d);
        for l in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += h;
            xm[l] -= h;
            dg0.push((self.g0_at(&xp) - self.g0_at(&xm)) / (2.0 * h));
            ddelta.push((self.delta_at(&xp) - self.delta_at(&xm)) / (2.0 * h));
            dbeta[l] = (self.beta_at(&xp) - self.beta_at(&xm)) / (2.0 * h);
        }
        FieldJet {
            g0: self.g0_at(x),
            dg0,
            delta: self.delta_at(x),
            ddelta,
            beta: self.beta_at(x),
            dbeta,
        }
    }

    /// Spatial derivatives of the full metric matrix at `x`.
    pub(crate) fn metric_matrix_derivs(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let h = self.fd_step;
        (0..self.dim)
            .map(|l| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[l] += h;
                xm[l] -= h;
                (self.metric_matrix_unchecked(&xp) - self.metric_matrix_unchecked(&xm)) / (2.0 * h)
            })
            .collect()
    }

    /// Per-segment values of `g(zdot, K)` at segment midpoints.
    pub fn segment_killing_products(&self, c: &SpacetimeCurve) -> Result<Vec<f64>> {
        let k = TangentVector::killing(self.dim);
        let mut out = Vec::with_capacity(c.n_segments());
        for i in 0..c.n_segments() {
            let x = c.segment_midpoint_x(i);
            self.check_in_chart(&x)?;
            let v = c.segment_velocity(i);
            out.push(self.eval_g_at(&x, &v, &k));
        }
        Ok(out)
    }
}

/// Metric data and its first spatial derivatives at one point.
pub(crate) struct FieldJet {
    pub g0: DMatrix<f64>,
    pub dg0: Vec<DMatrix<f64>>,
    pub delta: DVector<f64>,
    pub ddelta: Vec<DVector<f64>>,
    pub beta: f64,
    pub dbeta: DVector<f64>,
}

/// Flow of the Killing field `K = d/dt`: translation of the time coordinate.
pub fn killing_flow(p: &SpacetimePoint, s: f64) -> SpacetimePoint {
    SpacetimePoint::new(p.x.clone(), p.t + s)
}

/// Flow parameter bringing `p` onto the Cauchy slice `t = 0`.
pub fn s_r(p: &SpacetimePoint) -> f64 {
    -p.t
}

/// A point of the spacetime `M0 x R`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimePoint {
    pub x: DVector<f64>,
    pub t: f64,
}

impl SpacetimePoint {
    pub fn new(x: DVector<f64>, t: f64) -> Self {
        Self { x, t }
    }

    /// Coordinates `(x_1, .., x_d, t)` as one vector.
    pub fn ambient(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.x.len() + 1);
        v.rows_mut(0, self.x.len()).copy_from(&self.x);
        v[self.x.len()] = self.t;
        v
    }

    pub fn from_ambient(v: &DVector<f64>) -> Self {
        let d = v.len() - 1;
        Self::new(v.rows(0, d).clone_owned(), v[d])
    }
}

/// A tangent vector `(y, tau)` at a point of `M0 x R`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub y: DVector<f64>,
    pub tau: f64,
}

impl TangentVector {
    pub fn new(y: DVector<f64>, tau: f64) -> Self {
        Self { y, tau }
    }

    pub fn spatial(y: DVector<f64>) -> Self {
        Self { y, tau: 0.0 }
    }

    /// The Killing field `K = d/dt` as a tangent vector.
    pub fn killing(dim: usize) -> Self {
        Self {
            y: DVector::zeros(dim),
            tau: 1.0,
        }
    }

    pub fn ambient(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.y.len() + 1);
        v.rows_mut(0, self.y.len()).copy_from(&self.y);
        v[self.y.len()] = self.tau;
        v
    }

    pub fn from_ambient(v: &DVector<f64>) -> Self {
        let d = v.len() - 1;
        Self::new(v.rows(0, d).clone_owned(), v[d])
    }
}

/// A discrete spacetime curve: `N + 1` nodes on the uniform partition of
/// `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimeCurve {
    nodes: Vec<SpacetimePoint>,
}

impl SpacetimeCurve {
    pub fn new(nodes: Vec<SpacetimePoint>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidCurve("need at least 2 segments".into()));
        }
        let d = nodes[0].x.len();
        for p in &nodes {
            if p.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: p.x.len(),
                });
            }
            if !p.t.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCurve("non-finite node".into()));
            }
        }
        Ok(Self { nodes })
    }

    /// Straight segment from `p` to `q` with `n` segments.
    pub fn straight(p: &SpacetimePoint, q: &SpacetimePoint, n: usize) -> Result<Self> {
        let nodes = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                SpacetimePoint::new(&p.x + s * (&q.x - &p.x), p.t + s * (q.t - p.t))
            })
            .collect();
        Self::new(nodes)
    }

    /// Pair a spatial curve with explicit nodal times.
    pub fn from_spatial(x: &SpatialCurve, times: &[f64]) -> Result<Self> {
        if times.len() != x.nodes().len() {
            return Err(Error::DimensionMismatch {
                expected: x.nodes().len(),
                actual: times.len(),
            });
        }
        Self::new(
            x.nodes()
                .iter()
                .zip(times.iter())
                .map(|(xi, &ti)| SpacetimePoint::new(xi.clone(), ti))
                .collect(),
        )
    }

    pub fn n_segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].x.len()
    }

    pub fn nodes(&self) -> &[SpacetimePoint] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &SpacetimePoint {
        &self.nodes[i]
    }

    pub fn first(&self) -> &SpacetimePoint {
        &self.nodes[0]
    }

    pub fn last(&self) -> &SpacetimePoint {
        self.nodes.last().unwrap()
    }

    /// The time gap `Delta = t(1) - t(0)`.
    pub fn delta_z(&self) -> f64 {
        self.last().t - self.first().t
    }

    /// Spatial projection of the curve.
    pub fn spatial(&self) -> SpatialCurve {
        SpatialCurve::new(self.nodes.iter().map(|p| p.x.clone()).collect())
            .expect("spacetime curve projects to a valid spatial curve")
    }

    /// Chord velocity of segment `i`, scaled to the unit parameter interval.
    pub fn segment_velocity(&self, i: usize) -> TangentVector {
        let n = self.n_segments() as f64;
        TangentVector::new(
            (&self.nodes[i + 1].x - &self.nodes[i].x) * n,
            (self.nodes[i + 1].t - self.nodes[i].t) * n,
        )
    }

    pub fn segment_midpoint_x(&self, i: usize) -> DVector<f64> {
        0.5 * (&self.nodes[i].x + &self.nodes[i + 1].x)
    }

    /// Second-order one-sided estimate of the initial velocity.
    pub fn boundary_velocity_start(&self) -> TangentVector {
        let n = self.n_segments() as f64;
        let a = self.nodes[0].ambient();
        let b = self.nodes[1].ambient();
        let c = self.nodes[2].ambient();
        TangentVector::from_ambient(&(n * (-1.5 * a + 2.0 * b - 0.5 * c)))
    }

    /// Second-order one-sided estimate of the final velocity.
    pub fn boundary_velocity_end(&self) -> TangentVector {
        let n = self.n_segments();
        let a = self.nodes[n].ambient();
        let b = self.nodes[n - 1].ambient();
        let c = self.nodes[n - 2].ambient();
        TangentVector::from_ambient(&(n as f64 * (1.5 * a - 2.0 * b + 0.5 * c)))
    }
}

/// Causal character of a curve, decided by the sign of the conserved energy
/// `E_z` relative to a tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalCharacter {
    Timelike,
    Lightlike,
    Spacelike,
}

impl CausalCharacter {
    pub fn classify(e_z: f64, tol: f64) -> Self {
        if e_z.abs() <= tol {
            CausalCharacter::Lightlike
        } else if e_z < 0.0 {
            CausalCharacter::Timelike
        } else {
            CausalCharacter::Spacelike
        }
    }
}

impl fmt::Display for CausalCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CausalCharacter::Timelike => "timelike",
            CausalCharacter::Lightlike => "lightlike",
            CausalCharacter::Spacelike => "spacelike",
        };
        f.write_str(s)
    }
}
