//! Level-set boundary data.
//!
//! `P` and `Q` are zero sets of maps `Phi: R^{d+1} -> R^k` in coordinates
//! `(x, t)` (or `R^d -> R^k` for base-space submanifolds used by the
//! submersion route). The module provides Gauss-Newton projection onto the
//! zero set, orthonormal tangent bases from the constraint Jacobian,
//! orthogonality residuals of curves, and the sampled checks behind the two
//! admissible boundary hypotheses.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom;
use crate::spacetime::{ChartBounds, MetricField, SpacetimeCurve, SpacetimePoint, TangentVector};

/// Default absolute tolerance on `|Phi|` for "on the submanifold".
pub const DEFAULT_TOL_ON: f64 = 1e-9;

/// Default iteration cap for the damped Gauss-Newton projection.
pub const DEFAULT_MAX_PROJ_ITERS: usize = 100;

type ConstraintFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A submanifold given as the zero set of a full-rank constraint map.
#[derive(Clone)]
pub struct Submanifold {
    ambient_dim: usize,
    codim: usize,
    constraint: Arc<ConstraintFn>,
    jacobian: Option<Arc<JacobianFn>>,
    cylindrical: bool,
    jac_step: f64,
}

impl fmt::Debug for Submanifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Submanifold")
            .field("ambient_dim", &self.ambient_dim)
            .field("codim", &self.codim)
            .field("cylindrical", &self.cylindrical)
            .finish()
    }
}

impl Submanifold {
    /// General constructor. `ambient_dim` counts all coordinates: `d + 1`
    /// for spacetime submanifolds in `(x, t)`, `d` for base submanifolds.
    /// Without an explicit `jacobian` a central finite difference is used.
    pub fn from_constraint(
        ambient_dim: usize,
        codim: usize,
        constraint: Arc<ConstraintFn>,
        jacobian: Option<Arc<JacobianFn>>,
        cylindrical: bool,
    ) -> Result<Self> {
        if codim == 0 || codim > ambient_dim {
            return Err(Error::InvalidParams(format!(
                "codimension {codim} invalid for ambient dimension {ambient_dim}"
            )));
        }
        Ok(Self {
            ambient_dim,
            codim,
            constraint,
            jacobian,
            cylindrical,
            jac_step: 1e-7,
        })
    }

    /// A single spacetime point `(x0, t0)` (codimension `d + 1`).
    pub fn point(x0: DVector<f64>, t0: f64) -> Self {
        let n = x0.len() + 1;
        let target = SpacetimePoint::new(x0, t0).ambient();
        Self {
            ambient_dim: n,
            codim: n,
            constraint: Arc::new(move |p: &DVector<f64>| p - &target),
            jacobian: Some(Arc::new(move |_p: &DVector<f64>| DMatrix::identity(n, n))),
            cylindrical: false,
            jac_step: 1e-7,
        }
    }

    /// The Killing cylinder over a spatial point: `{(x0, t) : t in R}`.
    pub fn cylinder_over_point(x0: DVector<f64>) -> Self {
        let d = x0.len();
        Self {
            ambient_dim: d + 1,
            codim: d,
            constraint: Arc::new(move |p: &DVector<f64>| p.rows(0, d).clone_owned() - &x0),
            jacobian: Some(Arc::new(move |_p: &DVector<f64>| {
                let mut j = DMatrix::zeros(d, d + 1);
                j.view_mut((0, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
                j
            })),
            cylindrical: true,
            jac_step: 1e-7,
        }
    }

    /// Sphere `|x - c| = r` inside the slice `t = t0` (codimension 2).
    pub fn sphere_at_time(center: DVector<f64>, radius: f64, t0: f64) -> Self {
        let d = center.len();
        let c = center.clone();
        let c2 = center;
        Self {
            ambient_dim: d + 1,
            codim: 2,
            constraint: Arc::new(move |p: &DVector<f64>| {
                let x = p.rows(0, d);
                DVector::from_vec(vec![
                    (x - &c).norm_squared() - radius * radius,
                    p[d] - t0,
                ])
            }),
            jacobian: Some(Arc::new(move |p: &DVector<f64>| {
                let x = p.rows(0, d);
                let mut j = DMatrix::zeros(2, d + 1);
                for l in 0..d {
                    j[(0, l)] = 2.0 * (x[l] - c2[l]);
                }
                j[(1, d)] = 1.0;
                j
            })),
            cylindrical: false,
            jac_step: 1e-7,
        }
    }

    /// The Killing cylinder over a sphere: `|x - c| = r` for every `t`.
    pub fn cylinder_over_sphere(center: DVector<f64>, radius: f64) -> Self {
        let d = center.len();
        let c = center.clone();
        let c2 = center;
        Self {
            ambient_dim: d + 1,
            codim: 1,
            constraint: Arc::new(move |p: &DVector<f64>| {
                let x = p.rows(0, d);
                DVector::from_vec(vec![(x - &c).norm_squared() - radius * radius])
            }),
            jacobian: Some(Arc::new(move |p: &DVector<f64>| {
                let x = p.rows(0, d);
                let mut j = DMatrix::zeros(1, d + 1);
                for l in 0..d {
                    j[(0, l)] = 2.0 * (x[l] - c2[l]);
                }
                j
            })),
            cylindrical: true,
            jac_step: 1e-7,
        }
    }

    /// Affine hyperplane `normal . (x, t) = offset` (codimension 1).
    pub fn plane(normal: DVector<f64>, offset: f64) -> Self {
        let n = normal.len();
        let cylindrical = normal[n - 1] == 0.0;
        let nrm = normal.clone();
        let nrm2 = normal;
        Self {
            ambient_dim: n,
            codim: 1,
            constraint: Arc::new(move |p: &DVector<f64>| {
                DVector::from_vec(vec![nrm.dot(p) - offset])
            }),
            jacobian: Some(Arc::new(move |_p: &DVector<f64>| {
                DMatrix::from_rows(&[nrm2.transpose()])
            })),
            cylindrical,
            jac_step: 1e-7,
        }
    }

    /// A single point of the base `M0` (ambient dimension `d`).
    pub fn base_point(x0: DVector<f64>) -> Self {
        let d = x0.len();
        Self {
            ambient_dim: d,
            codim: d,
            constraint: Arc::new(move |p: &DVector<f64>| p - &x0),
            jacobian: Some(Arc::new(move |_p: &DVector<f64>| DMatrix::identity(d, d))),
            cylindrical: true,
            jac_step: 1e-7,
        }
    }

    /// Sphere `|x - c| = r` in the base `M0`.
    pub fn base_sphere(center: DVector<f64>, radius: f64) -> Self {
        let d = center.len();
        let c = center.clone();
        let c2 = center;
        Self {
            ambient_dim: d,
            codim: 1,
            constraint: Arc::new(move |p: &DVector<f64>| {
                DVector::from_vec(vec![(p - &c).norm_squared() - radius * radius])
            }),
            jacobian: Some(Arc::new(move |p: &DVector<f64>| {
                DMatrix::from_fn(1, d, |_r, l| 2.0 * (p[l] - c2[l]))
            })),
            cylindrical: true,
            jac_step: 1e-7,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn is_cylindrical(&self) -> bool {
        self.cylindrical
    }

    pub fn constraint_at(&self, p: &DVector<f64>) -> DVector<f64> {
        (self.constraint)(p)
    }

    /// `|Phi(p)|`, the on-manifold residual.
    pub fn residual(&self, p: &DVector<f64>) -> f64 {
        self.constraint_at(p).norm()
    }

    pub fn jacobian_at(&self, p: &DVector<f64>) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(p);
        }
        let h = self.jac_step;
        let mut j = DMatrix::zeros(self.codim, self.ambient_dim);
        for l in 0..self.ambient_dim {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[l] += h;
            pm[l] -= h;
            let col = (self.constraint_at(&pp) - self.constraint_at(&pm)) / (2.0 * h);
            j.set_column(l, &col);
        }
        j
    }

    /// Damped Gauss-Newton on `1/2 |Phi|^2` from `p`: a locally nearest
    /// feasible point with `|Phi| <= tol_on`.
    pub fn project(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_with(p, DEFAULT_TOL_ON, DEFAULT_MAX_PROJ_ITERS)
    }

    pub fn project_with(
        &self,
        p: &DVector<f64>,
        tol_on: f64,
        max_iters: usize,
    ) -> Result<DVector<f64>> {
        let mut cur = p.clone();
        let mut phi = self.constraint_at(&cur);
        for _ in 0..max_iters {
            let r = phi.norm();
            if r <= tol_on {
                return Ok(cur);
            }
            let j = self.jacobian_at(&cur);
            let jjt = &j * j.transpose();
            let y = jjt
                .cholesky()
                .ok_or(Error::DegenerateSubmanifold)?
                .solve(&phi);
            let step = -(j.transpose() * y);

            let mut alpha = 1.0;
            loop {
                let cand = &cur + alpha * &step;
                let cand_phi = self.constraint_at(&cand);
                if cand_phi.norm() <= (1.0 - 0.25 * alpha) * r {
                    cur = cand;
                    phi = cand_phi;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return Err(Error::ProjectionFailed {
                        residual: r,
                        last: cur.iter().copied().collect(),
                    });
                }
            }
        }
        let r = phi.norm();
        if r <= tol_on {
            Ok(cur)
        } else {
            Err(Error::ProjectionFailed {
                residual: r,
                last: cur.iter().copied().collect(),
            })
        }
    }

    /// Projection helper for spacetime submanifolds.
    pub fn project_point(&self, p: &SpacetimePoint) -> Result<SpacetimePoint> {
        Ok(SpacetimePoint::from_ambient(&self.project(&p.ambient())?))
    }

    /// Projection driven to the floating-point floor. Optimizer feasibility
    /// restoration needs much tighter feasibility than `tol_on`, otherwise
    /// projection noise floors the projected-gradient iteration. Falls back
    /// to `tol_on` accuracy when the tight target is unreachable.
    pub(crate) fn project_tight(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        match self.project_with(p, 1e-13, DEFAULT_MAX_PROJ_ITERS) {
            Ok(q) => Ok(q),
            Err(Error::ProjectionFailed { residual, last }) if residual <= DEFAULT_TOL_ON => {
                Ok(DVector::from_vec(last))
            }
            Err(e) => Err(e),
        }
    }

    /// Orthonormal (Euclidean) basis of `ker(dPhi(p))`. Empty for points.
    pub fn tangent_basis(&self, p: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        geom::orthonormal_kernel(&self.jacobian_at(p))
    }

    /// Tangent basis of a spacetime submanifold as tangent vectors.
    pub fn tangent_basis_at_point(&self, p: &SpacetimePoint) -> Result<Vec<TangentVector>> {
        Ok(self
            .tangent_basis(&p.ambient())?
            .iter()
            .map(TangentVector::from_ambient)
            .collect())
    }

    /// The base section of a cylindrical spacetime submanifold:
    /// `Phi_base(x) = Phi(x, 0)` on ambient dimension `d`.
    pub fn base_section(&self) -> Result<Submanifold> {
        if !self.cylindrical {
            return Err(Error::InvalidBoundary {
                hypothesis: "H2".into(),
                reason: "base section requires a cylindrical submanifold".into(),
            });
        }
        let d = self.ambient_dim - 1;
        let constraint = self.constraint.clone();
        let jac = self.jacobian.clone();
        Submanifold::from_constraint(
            d,
            self.codim,
            Arc::new(move |x: &DVector<f64>| {
                let mut p = DVector::zeros(d + 1);
                p.rows_mut(0, d).copy_from(x);
                constraint(&p)
            }),
            jac.map(|jac| {
                Arc::new(move |x: &DVector<f64>| {
                    let mut p = DVector::zeros(d + 1);
                    p.rows_mut(0, d).copy_from(x);
                    jac(&p).columns(0, d).clone_owned()
                }) as Arc<JacobianFn>
            }),
            true,
        )
    }

    /// Draw feasible samples by projecting random chart points. Spacetime
    /// submanifolds also randomize the time coordinate over
    /// `[-t_range, t_range]`. Projection failures are skipped.
    pub fn sample<R: Rng>(
        &self,
        chart: &ChartBounds,
        t_range: f64,
        count: usize,
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        let d = chart.dim();
        let mut out = Vec::new();
        for _ in 0..count {
            let mut p = DVector::zeros(self.ambient_dim);
            for l in 0..d.min(self.ambient_dim) {
                p[l] = rng.gen_range(chart.lo()[l]..chart.hi()[l]);
            }
            if self.ambient_dim == d + 1 {
                p[d] = rng.gen_range(-t_range..t_range);
            }
            if let Ok(q) = self.project(&p) {
                out.push(q);
            }
        }
        out
    }

    /// Sampled check that the constraint does not depend on `t`.
    pub(crate) fn check_cylindrical_invariance<R: Rng>(
        &self,
        chart: &ChartBounds,
        t_range: f64,
        count: usize,
        rng: &mut R,
    ) -> bool {
        let d = chart.dim();
        if self.ambient_dim != d + 1 {
            return true;
        }
        for _ in 0..count {
            let mut p = DVector::zeros(d + 1);
            for l in 0..d {
                p[l] = rng.gen_range(chart.lo()[l]..chart.hi()[l]);
            }
            p[d] = rng.gen_range(-t_range..t_range);
            let mut p0 = p.clone();
            p0[d] = 0.0;
            if (self.constraint_at(&p) - self.constraint_at(&p0)).norm() > 1e-10 {
                return false;
            }
        }
        true
    }
}

/// Which existence hypothesis the boundary pair is declared under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    /// `P` compact and `sup_Q |s_Q|` finite; solved by reduced minimization.
    H1,
    /// `P`, `Q` invariant under the Killing flow with a compact base;
    /// solved through the base metric and a horizontal lift.
    H2,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::H1 => f.write_str("H1"),
            Hypothesis::H2 => f.write_str("H2"),
        }
    }
}

/// The two boundary submanifolds with their hypothesis tag.
#[derive(Clone, Debug)]
pub struct BoundaryPair {
    pub p: Submanifold,
    pub q: Submanifold,
    pub hypothesis: Hypothesis,
    pub d_q_bound: Option<f64>,
}

impl BoundaryPair {
    pub fn new(p: Submanifold, q: Submanifold, hypothesis: Hypothesis) -> Self {
        Self {
            p,
            q,
            hypothesis,
            d_q_bound: None,
        }
    }

    /// Sampled validity checks: dimensions, disjointness, and for `H2`
    /// cylindricality plus boundedness of at least one base set.
    pub fn validate<R: Rng>(&self, chart: &ChartBounds, rng: &mut R) -> Result<()> {
        let n = chart.dim() + 1;
        for (sub, name) in [(&self.p, "P"), (&self.q, "Q")] {
            if sub.ambient_dim() != n {
                return Err(Error::InvalidBoundary {
                    hypothesis: self.hypothesis.to_string(),
                    reason: format!(
                        "{name} has ambient dimension {}, chart needs {n}",
                        sub.ambient_dim()
                    ),
                });
            }
        }

        if self.hypothesis == Hypothesis::H2 {
            for (sub, name) in [(&self.p, "P"), (&self.q, "Q")] {
                if !sub.is_cylindrical() {
                    return Err(Error::InvalidBoundary {
                        hypothesis: "H2".into(),
                        reason: format!("{name} is not flagged cylindrical"),
                    });
                }
                if !sub.check_cylindrical_invariance(chart, 10.0, 50, rng) {
                    return Err(Error::InvalidBoundary {
                        hypothesis: "H2".into(),
                        reason: format!("{name}'s constraint depends on t"),
                    });
                }
            }
            let bounded = |sub: &Submanifold, rng: &mut R| {
                let base = match sub.base_section() {
                    Ok(b) => b,
                    Err(_) => return false,
                };
                let samples = base.sample(chart, 0.0, 60, rng);
                !samples.is_empty()
                    && samples.iter().all(|x| {
                        (0..chart.dim()).all(|l| {
                            let margin = 0.02 * (chart.hi()[l] - chart.lo()[l]);
                            x[l] >= chart.lo()[l] + margin && x[l] <= chart.hi()[l] - margin
                        })
                    })
            };
            if !bounded(&self.p, rng) && !bounded(&self.q, rng) {
                return Err(Error::InvalidBoundary {
                    hypothesis: "H2".into(),
                    reason: "neither base set looks bounded inside the chart".into(),
                });
            }
        }

        // disjointness at sampled resolution
        let p_samples = self.p.sample(chart, 5.0, 40, rng);
        let q_samples = self.q.sample(chart, 5.0, 40, rng);
        if p_samples.is_empty() || q_samples.is_empty() {
            return Err(Error::InvalidBoundary {
                hypothesis: self.hypothesis.to_string(),
                reason: "could not sample feasible points on both submanifolds".into(),
            });
        }
        let tol_disjoint = 1e-6;
        let crossing = p_samples.iter().any(|s| self.q.residual(s) <= tol_disjoint)
            || q_samples.iter().any(|s| self.p.residual(s) <= tol_disjoint);
        if crossing {
            return Err(Error::NotDisjoint);
        }
        Ok(())
    }
}

/// Orthogonality residuals of a curve against a boundary pair.
///
/// `r0` is the largest `|g(zdot(0), v)|` over an orthonormal tangent basis
/// `v` of `P` at `z(0)`, normalized by `1 + |zdot(0)|_{g_R}`; `r1` is the
/// same at the far endpoint. Point submanifolds give 0 vacuously.
pub fn orthogonality_residual(
    m: &MetricField,
    c: &SpacetimeCurve,
    bp: &BoundaryPair,
    tol_on: f64,
) -> Result<(f64, f64)> {
    for (sub, node) in [(&bp.p, c.first()), (&bp.q, c.last())] {
        let r = sub.residual(&node.ambient());
        if r > tol_on {
            return Err(Error::EndpointOffManifold { residual: r, tol: tol_on });
        }
    }
    orthogonality_residual_lenient(m, c, bp)
}

/// As [`orthogonality_residual`] but without the on-manifold precondition:
/// the tangent basis is taken on the level set through the endpoint as-is.
pub fn orthogonality_residual_lenient(
    m: &MetricField,
    c: &SpacetimeCurve,
    bp: &BoundaryPair,
) -> Result<(f64, f64)> {
    let r0 = endpoint_residual(m, &bp.p, c.first(), &c.boundary_velocity_start())?;
    let r1 = endpoint_residual(m, &bp.q, c.last(), &c.boundary_velocity_end())?;
    Ok((r0, r1))
}

fn endpoint_residual(
    m: &MetricField,
    sub: &Submanifold,
    endpoint: &SpacetimePoint,
    velocity: &TangentVector,
) -> Result<f64> {
    let basis = sub.tangent_basis_at_point(endpoint)?;
    let speed = m.eval_g_r(endpoint, velocity, velocity)?.max(0.0).sqrt();
    let mut worst = 0.0_f64;
    for v in &basis {
        worst = worst.max(m.eval_g(endpoint, velocity, v)?.abs());
    }
    Ok(worst / (1.0 + speed))
}

/// Sampling budget for the hypothesis checks.
#[derive(Clone, Copy, Debug)]
pub struct SamplingParams {
    pub count: usize,
    pub t_range: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            count: 400,
            t_range: 10.0,
            seed: 0,
        }
    }
}

/// Advisory report of the sampled `H1` check.
#[derive(Clone, Debug)]
pub struct H1Report {
    /// Sampled estimate of `sup_Q |s_Q|`.
    pub d_q_estimate: f64,
    /// The estimate kept growing with the sampling window, or `Q` is
    /// declared Killing-invariant: `sup |s_Q|` looks infinite.
    pub q_suspected_unbounded: bool,
    /// Bounding box of the sampled spatial positions on `P`.
    pub p_extent: Option<(DVector<f64>, DVector<f64>)>,
    /// Some `P` sample came within 2% of the chart boundary, so compactness
    /// inside the chart is doubtful.
    pub p_touches_chart: bool,
    pub q_samples: usize,
    pub p_samples: usize,
}

/// Sampled estimate of `sup_Q |s_Q|` plus a boundedness check on `P`.
/// Advisory only: compactness is not decidable from finitely many samples.
pub fn check_h1(
    bp: &BoundaryPair,
    chart: &ChartBounds,
    params: &SamplingParams,
) -> Result<H1Report> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let d = chart.dim();

    let q_samples = bp.q.sample(chart, params.t_range, params.count, &mut rng);
    let d_q_estimate = q_samples
        .iter()
        .map(|p| p[d].abs())
        .fold(0.0_f64, f64::max);
    let q_suspected_unbounded =
        bp.q.is_cylindrical() || d_q_estimate >= 0.9 * params.t_range;

    let p_samples = bp.p.sample(chart, params.t_range, params.count, &mut rng);
    let p_extent = if p_samples.is_empty() {
        None
    } else {
        let mut lo = p_samples[0].rows(0, d).clone_owned();
        let mut hi = lo.clone();
        for s in &p_samples {
            for l in 0..d {
                lo[l] = lo[l].min(s[l]);
                hi[l] = hi[l].max(s[l]);
            }
        }
        Some((lo, hi))
    };
    let p_touches_chart = p_samples.iter().any(|s| {
        (0..d).any(|l| {
            let margin = 0.02 * (chart.hi()[l] - chart.lo()[l]);
            s[l] < chart.lo()[l] + margin || s[l] > chart.hi()[l] - margin
        })
    });

    Ok(H1Report {
        d_q_estimate,
        q_suspected_unbounded,
        p_extent,
        p_touches_chart,
        q_samples: q_samples.len(),
        p_samples: p_samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn vec3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    #[test]
    fn project_onto_cylinder_is_radial() {
        let sub = Submanifold::cylinder_over_sphere(vec2(0.0, 0.0), 1.0);
        let q = sub.project(&vec3(2.0, 0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn project_is_idempotent_within_tolerance() {
        let sub = Submanifold::cylinder_over_sphere(vec2(0.0, 0.0), 1.0);
        let q = sub.project(&vec3(0.3, -2.2, 0.0)).unwrap();
        let q2 = sub.project(&q).unwrap();
        assert!(sub.residual(&q2) <= DEFAULT_TOL_ON);
        assert!((q - q2).norm() <= 1e-9);
    }

    #[test]
    fn project_onto_time_plane() {
        let sub = Submanifold::plane(vec3(0.0, 0.0, 1.0), 5.0);
        let q = sub.project(&vec3(1.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn project_reports_failure_on_empty_level_set() {
        // |x|^2 + 1 never vanishes
        let sub = Submanifold::from_constraint(
            2,
            1,
            Arc::new(|p: &DVector<f64>| DVector::from_vec(vec![p.norm_squared() + 1.0])),
            None,
            true,
        )
        .unwrap();
        assert!(matches!(
            sub.project(&vec2(0.4, 0.2)),
            Err(Error::ProjectionFailed { .. })
        ));
    }

    #[test]
    fn tangent_basis_of_time_plane() {
        let sub = Submanifold::plane(vec3(0.0, 0.0, 1.0), 0.0);
        let basis = sub.tangent_basis(&vec3(0.2, 0.4, 0.0)).unwrap();
        assert_eq!(basis.len(), 2);
        for v in &basis {
            assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tangent_basis_of_cylinder_at_unit_point() {
        let sub = Submanifold::cylinder_over_sphere(vec2(0.0, 0.0), 1.0);
        let basis = sub.tangent_basis(&vec3(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(basis.len(), 2);
        // kernel of (2, 0, 0): spanned by e2 and e3
        for v in &basis {
            assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tangent_basis_annihilates_the_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sub = Submanifold::from_constraint(
            3,
            1,
            Arc::new(|p: &DVector<f64>| {
                DVector::from_vec(vec![p[0] * p[0] - p[1] + 0.3 * p[2] * p[0]])
            }),
            None,
            false,
        )
        .unwrap();
        for _ in 0..20 {
            let p = sub
                .project(&vec3(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ))
                .unwrap();
            let j = sub.jacobian_at(&p);
            for v in sub.tangent_basis(&p).unwrap() {
                assert!((&j * &v).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn tangent_basis_rejects_rank_deficiency() {
        // gradient of (|x|^2 - 1)^2 vanishes on the level set
        let sub = Submanifold::from_constraint(
            2,
            1,
            Arc::new(|p: &DVector<f64>| {
                let r = p.norm_squared() - 1.0;
                DVector::from_vec(vec![r * r])
            }),
            None,
            true,
        )
        .unwrap();
        assert!(matches!(
            sub.tangent_basis(&vec2(1.0, 0.0)),
            Err(Error::DegenerateSubmanifold)
        ));
    }

    #[test]
    fn cylindrical_tangent_space_contains_killing_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for sub in [
            Submanifold::cylinder_over_sphere(vec2(0.0, 0.0), 1.0),
            Submanifold::cylinder_over_point(vec2(3.0, 0.0)),
        ] {
            let chart = ChartBounds::centered(2, 5.0);
            for p in sub.sample(&chart, 3.0, 10, &mut rng) {
                let j = sub.jacobian_at(&p);
                // K = e_t lies in ker(J): the t-column vanishes
                assert!(j.column(2).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn orthogonality_of_radial_segment_from_sphere() {
        let scenario = scenarios::builtin("minkowski-sphere-point").unwrap();
        let m = scenario.metric;
        // radial straight segment, endpoints on P and Q
        let a = SpacetimePoint::new(vec2(1.0, 0.0), 0.0);
        let b = SpacetimePoint::new(vec2(3.0, 0.0), 2.0);
        let c = SpacetimeCurve::straight(&a, &b, 16).unwrap();
        let (r0, r1) =
            orthogonality_residual(&m, &c, &scenario.boundary, DEFAULT_TOL_ON).unwrap();
        assert!(r0 <= 1e-8, "r0 = {r0}");
        assert!(r1 <= 1e-8, "r1 = {r1}");
    }

    #[test]
    fn point_to_point_residual_is_vacuous() {
        let scenario = scenarios::builtin("minkowski").unwrap();
        let m = scenario.metric;
        let a = SpacetimePoint::new(vec2(0.0, 0.0), 0.0);
        let b = SpacetimePoint::new(vec2(1.0, 0.0), 0.0);
        let c = SpacetimeCurve::straight(&a, &b, 8).unwrap();
        let (r0, r1) =
            orthogonality_residual(&m, &c, &scenario.boundary, DEFAULT_TOL_ON).unwrap();
        assert_eq!((r0, r1), (0.0, 0.0));
    }

    #[test]
    fn non_radial_segment_has_large_residual() {
        let scenario = scenarios::builtin("minkowski-sphere-point").unwrap();
        let m = scenario.metric;
        let theta: f64 = 0.8;
        let a = SpacetimePoint::new(vec2(theta.cos(), theta.sin()), 0.0);
        let b = SpacetimePoint::new(vec2(3.0, 0.0), 2.0);
        let c = SpacetimeCurve::straight(&a, &b, 16).unwrap();
        let (r0, _) =
            orthogonality_residual(&m, &c, &scenario.boundary, DEFAULT_TOL_ON).unwrap();
        assert!(r0 > 0.1, "r0 = {r0}");
    }

    #[test]
    fn off_manifold_endpoints_are_a_precondition_error() {
        let scenario = scenarios::builtin("minkowski-sphere-point").unwrap();
        let m = scenario.metric;
        let a = SpacetimePoint::new(vec2(1.5, 0.0), 0.0);
        let b = SpacetimePoint::new(vec2(3.0, 0.0), 2.0);
        let c = SpacetimeCurve::straight(&a, &b, 8).unwrap();
        assert!(matches!(
            orthogonality_residual(&m, &c, &scenario.boundary, DEFAULT_TOL_ON),
            Err(Error::EndpointOffManifold { .. })
        ));
    }

    #[test]
    fn check_h1_plane_estimate() {
        let chart = ChartBounds::centered(2, 5.0);
        let bp = BoundaryPair::new(
            Submanifold::sphere_at_time(vec2(0.0, 0.0), 1.0, 0.0),
            Submanifold::plane(vec3(0.0, 0.0, 1.0), 2.0),
            Hypothesis::H1,
        );
        let report = check_h1(&bp, &chart, &SamplingParams::default()).unwrap();
        assert_abs_diff_eq!(report.d_q_estimate, 2.0, epsilon = 1e-9);
        assert!(!report.q_suspected_unbounded);
        assert!(!report.p_touches_chart);
    }

    #[test]
    fn check_h1_flags_cylindrical_q_as_unbounded() {
        let chart = ChartBounds::centered(2, 5.0);
        let bp = BoundaryPair::new(
            Submanifold::sphere_at_time(vec2(0.0, 0.0), 1.0, 0.0),
            Submanifold::cylinder_over_point(vec2(3.0, 0.0)),
            Hypothesis::H1,
        );
        let report = check_h1(&bp, &chart, &SamplingParams::default()).unwrap();
        assert!(report.q_suspected_unbounded);
    }

    #[test]
    fn check_h1_bounded_graph() {
        // t = sin(|x|) has |t| <= 1 on the level set
        let chart = ChartBounds::centered(2, 5.0);
        let q = Submanifold::from_constraint(
            3,
            1,
            Arc::new(|p: &DVector<f64>| {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                DVector::from_vec(vec![p[2] - r.sin()])
            }),
            None,
            false,
        )
        .unwrap();
        let bp = BoundaryPair::new(
            Submanifold::sphere_at_time(vec2(0.0, 0.0), 1.0, 0.0),
            q,
            Hypothesis::H1,
        );
        let report = check_h1(&bp, &chart, &SamplingParams::default()).unwrap();
        assert!(report.d_q_estimate <= 1.0 + 1e-9);
        assert!(!report.q_suspected_unbounded);
    }

    #[test]
    fn validate_rejects_intersecting_pair() {
        let chart = ChartBounds::centered(2, 5.0);
        let bp = BoundaryPair::new(
            Submanifold::point(vec2(0.0, 0.0), 0.0),
            Submanifold::point(vec2(0.0, 0.0), 0.0),
            Hypothesis::H1,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        assert!(matches!(bp.validate(&chart, &mut rng), Err(Error::NotDisjoint)));
    }

    #[test]
    fn validate_rejects_non_cylindrical_h2() {
        let chart = ChartBounds::centered(2, 5.0);
        let bp = BoundaryPair::new(
            Submanifold::sphere_at_time(vec2(0.0, 0.0), 1.0, 0.0),
            Submanifold::cylinder_over_point(vec2(3.0, 0.0)),
            Hypothesis::H2,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        assert!(matches!(
            bp.validate(&chart, &mut rng),
            Err(Error::InvalidBoundary { .. })
        ));
    }

    #[test]
    fn base_section_of_cylinder_is_the_sphere() {
        let sub = Submanifold::cylinder_over_sphere(vec2(0.0, 0.0), 1.0);
        let base = sub.base_section().unwrap();
        assert_eq!(base.ambient_dim(), 2);
        assert!(base.residual(&vec2(1.0, 0.0)) <= 1e-12);
        assert!(base.residual(&vec2(2.0, 0.0)) > 1.0);
    }
}
