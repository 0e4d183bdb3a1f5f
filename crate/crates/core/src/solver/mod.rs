//! Constrained minimization of the reduced functional over curves with
//! endpoints on the boundary submanifolds, plus the generic Riemannian and
//! Finsler curve optimizers the other modules reuse.
//!
//! The reduced solve works on the variable vector
//! `u = (x_0, .., x_N, t0, Delta)`. It runs an increasing quadratic-penalty
//! schedule on the endpoint constraints, then a projected-gradient polish
//! that keeps the endpoints exactly feasible and the search direction
//! tangent. Every returned curve carries full diagnostics; `converged` is
//! only set when the certification thresholds all hold. Restarts are
//! seeded, sequential, and reduced with a deterministic tie-break (lowest
//! `J`, then lowest geodesic residual).

mod energy;
mod optim;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fermat::FermatStructure;
use crate::reduction::{self, ReducedState, SpatialCurve};
use crate::spacetime::{
    CausalCharacter, ChartBounds, MetricField, SpacetimeCurve, TangentVector,
};
use crate::submanifolds::{self, BoundaryPair, Hypothesis, Submanifold};
use crate::submersion::{self, BaseMetric};

use energy::{
    pack_nodes, project_onto_kernel, total_energy, total_energy_grad, unpack_nodes,
    CurveEndpointHandler, FinslerEnergy, RiemannianEnergy, SegmentEnergy,
};
use optim::{gradient_descent, ConstraintHandler, GdOptions, Unconstrained};

/// Certification thresholds applied to every solve output.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Absolute bound on `|Phi|` for feasible endpoints.
    pub tol_on: f64,
    /// Relative tolerance of the causal classification.
    pub tol_causal: f64,
    /// Bound on the discrete geodesic residual.
    pub tol_geo: f64,
    /// Bound on the sup-deviation of `g(zdot, K)` from `C_z`.
    pub tol_cons: f64,
    /// Bound on the endpoint orthogonality residuals.
    pub tol_orth: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_on: 1e-9,
            tol_causal: 1e-6,
            tol_geo: 1e-5,
            tol_cons: 1e-5,
            tol_orth: 1e-5,
        }
    }
}

/// Backtracking line-search parameters.
#[derive(Clone, Copy, Debug)]
pub struct StepRule {
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: u32,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// All knobs of one solve.
#[derive(Clone, Debug)]
pub struct SolveParams {
    pub segments: usize,
    /// Iteration cap per optimization phase.
    pub max_iters: usize,
    pub grad_tol: f64,
    pub penalty_schedule: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
    pub step: StepRule,
    /// Scale of the seeded Gaussian noise restarts apply to the endpoint
    /// picks and the time gap.
    pub perturbation: f64,
    /// Heavy-ball factor; `None` disables step memory.
    pub momentum: Option<f64>,
    /// Fiber point for horizontal lifts (the `H2` branch).
    pub t0: f64,
    pub tolerances: Tolerances,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            segments: 64,
            max_iters: 60_000,
            grad_tol: 1e-10,
            penalty_schedule: vec![1e2, 1e4],
            restarts: 4,
            seed: 0,
            step: StepRule::default(),
            perturbation: 0.1,
            momentum: None,
            t0: 0.0,
            tolerances: Tolerances::default(),
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 8 {
            return Err(Error::InvalidParams("need at least 8 segments".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParams("grad_tol must be positive".into()));
        }
        if self.penalty_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "penalty weights must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Per-curve certification record.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub conservation: reduction::ConservationRecord,
    pub geodesic_residual: f64,
    pub orthogonality: (f64, f64),
    pub character: CausalCharacter,
    pub endpoint_violation_p: f64,
    pub endpoint_violation_q: f64,
}

impl Diagnostics {
    /// All four certification thresholds hold.
    pub fn certified(&self, tol: &Tolerances) -> bool {
        self.geodesic_residual <= tol.tol_geo
            && self.conservation.max_deviation <= tol.tol_cons
            && self.orthogonality.0 <= tol.tol_orth
            && self.orthogonality.1 <= tol.tol_orth
            && self.endpoint_violation_p <= tol.tol_on
            && self.endpoint_violation_q <= tol.tol_on
    }
}

/// Output of one solve: the curve with its certification.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub curve: SpacetimeCurve,
    pub j_value: f64,
    pub diagnostics: Diagnostics,
    pub converged: bool,
    pub iterations: usize,
    pub hypothesis: Hypothesis,
    pub restart_index: usize,
    pub warnings: Vec<String>,
}

/// Endpoint regime of a generic curve optimization.
#[derive(Clone, Debug)]
pub enum EndpointCondition {
    Fixed(DVector<f64>),
    On(Submanifold),
}

/// Recompute full diagnostics for a stored curve, independent of any solve.
pub fn diagnose(
    m: &MetricField,
    c: &SpacetimeCurve,
    bp: Option<&BoundaryPair>,
    tol: &Tolerances,
) -> Result<Diagnostics> {
    let conservation = reduction::conservation_record(m, c)?;
    let geodesic_residual = m.geodesic_residual(c)?;
    let (_, character) = m.energy_and_character_with_tol(c, tol.tol_causal)?;
    let (orthogonality, viol_p, viol_q) = match bp {
        Some(bp) => {
            let orth = submanifolds::orthogonality_residual_lenient(m, c, bp)?;
            let vp = bp.p.residual(&c.first().ambient());
            let vq = bp.q.residual(&c.last().ambient());
            (orth, vp, vq)
        }
        None => ((0.0, 0.0), 0.0, 0.0),
    };
    Ok(Diagnostics {
        conservation,
        geodesic_residual,
        orthogonality,
        character,
        endpoint_violation_p: viol_p,
        endpoint_violation_q: viol_q,
    })
}

/// Wrap a curve and its diagnostics as a [`SolveResult`].
pub(crate) fn diagnose_with_result(
    m: &MetricField,
    c: &SpacetimeCurve,
    bp: Option<&BoundaryPair>,
    params: &SolveParams,
) -> Result<SolveResult> {
    let diagnostics = diagnose(m, c, bp, &params.tolerances)?;
    let converged = diagnostics.certified(&params.tolerances);
    Ok(SolveResult {
        curve: c.clone(),
        j_value: reduction::eval_f(m, c),
        diagnostics,
        converged,
        iterations: 0,
        hypothesis: bp.map(|b| b.hypothesis).unwrap_or(Hypothesis::H1),
        restart_index: 0,
        warnings: Vec::new(),
    })
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::TAU * u2 / 2.0).cos()
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Project a random chart point onto `sub` (spacetime: random time in
/// `[-t_span, t_span]`). Retries a few times before giving up.
fn sample_on_submanifold<R: Rng>(
    sub: &Submanifold,
    chart: &ChartBounds,
    t_span: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = chart.dim();
    let mut last = Err(Error::Internal("sampling never ran".into()));
    for _ in 0..24 {
        let mut p = DVector::zeros(sub.ambient_dim());
        for l in 0..d.min(sub.ambient_dim()) {
            p[l] = rng.gen_range(chart.lo()[l]..chart.hi()[l]);
        }
        if sub.ambient_dim() == d + 1 {
            p[d] = rng.gen_range(-t_span..t_span);
        }
        match sub.project(&p) {
            Ok(q) => return Ok(q),
            err => last = err,
        }
    }
    last
}

// ---------------------------------------------------------------------------
// the reduced (H1) solve
// ---------------------------------------------------------------------------

struct ReducedVars {
    n_nodes: usize,
    dim: usize,
}

impl ReducedVars {
    fn len(&self) -> usize {
        self.n_nodes * self.dim + 2
    }

    fn t0_idx(&self) -> usize {
        self.n_nodes * self.dim
    }

    fn delta_idx(&self) -> usize {
        self.t0_idx() + 1
    }

    fn pack(&self, nodes: &[DVector<f64>], t0: f64, delta: f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.len());
        for (j, node) in nodes.iter().enumerate() {
            u.rows_mut(j * self.dim, self.dim).copy_from(node);
        }
        u[self.t0_idx()] = t0;
        u[self.delta_idx()] = delta;
        u
    }

    fn unpack(&self, u: &DVector<f64>) -> (SpatialCurve, f64, f64) {
        let nodes = unpack_nodes(&u.rows(0, self.n_nodes * self.dim).clone_owned(), self.n_nodes, self.dim);
        (
            SpatialCurve::new(nodes).expect("optimizer keeps nodes valid"),
            u[self.t0_idx()],
            u[self.delta_idx()],
        )
    }

    fn endpoint_p(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut p = DVector::zeros(self.dim + 1);
        p.rows_mut(0, self.dim).copy_from(&u.rows(0, self.dim));
        p[self.dim] = u[self.t0_idx()];
        p
    }

    fn endpoint_q(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut q = DVector::zeros(self.dim + 1);
        q.rows_mut(0, self.dim)
            .copy_from(&u.rows((self.n_nodes - 1) * self.dim, self.dim));
        q[self.dim] = u[self.t0_idx()] + u[self.delta_idx()];
        q
    }
}

fn reduced_objective(m: &MetricField, vars: &ReducedVars, bp: &BoundaryPair, mu: f64, u: &DVector<f64>) -> f64 {
    let (x, _, delta) = vars.unpack(u);
    let mut value = reduction::eval_j(m, &x, delta);
    if mu > 0.0 {
        value += mu
            * (bp.p.constraint_at(&vars.endpoint_p(u)).norm_squared()
                + bp.q.constraint_at(&vars.endpoint_q(u)).norm_squared());
    }
    value
}

fn reduced_gradient(
    m: &MetricField,
    vars: &ReducedVars,
    bp: &BoundaryPair,
    mu: f64,
    u: &DVector<f64>,
) -> DVector<f64> {
    let (x, _, delta) = vars.unpack(u);
    let (node_grads, dj_ddelta) = reduction::grad_j(m, &x, delta);
    let mut g = DVector::zeros(vars.len());
    for (j, ng) in node_grads.iter().enumerate() {
        g.rows_mut(j * vars.dim, vars.dim).copy_from(ng);
    }
    g[vars.delta_idx()] = dj_ddelta;

    if mu > 0.0 {
        let d = vars.dim;
        let pa = vars.endpoint_p(u);
        let jp = bp.p.jacobian_at(&pa);
        let gp = 2.0 * mu * (jp.transpose() * bp.p.constraint_at(&pa));
        for l in 0..d {
            g[l] += gp[l];
        }
        g[vars.t0_idx()] += gp[d];

        let qa = vars.endpoint_q(u);
        let jq = bp.q.jacobian_at(&qa);
        let gq = 2.0 * mu * (jq.transpose() * bp.q.constraint_at(&qa));
        for l in 0..d {
            g[(vars.n_nodes - 1) * d + l] += gq[l];
        }
        g[vars.t0_idx()] += gq[d];
        g[vars.delta_idx()] += gq[d];
    }
    g
}

/// Feasibility and tangency for the reduced variables: endpoints projected
/// onto `P` and `Q` (updating `t0` and `Delta`), gradients projected onto
/// the joint constraint kernel.
struct ReducedHandler<'a> {
    bp: &'a BoundaryPair,
    vars: &'a ReducedVars,
}

impl ConstraintHandler for ReducedHandler<'_> {
    fn restore(&self, u: &mut DVector<f64>) -> Result<()> {
        let d = self.vars.dim;
        let pa = self.bp.p.project_tight(&self.vars.endpoint_p(u))?;
        for l in 0..d {
            u[l] = pa[l];
        }
        u[self.vars.t0_idx()] = pa[d];

        let qa = self.bp.q.project_tight(&self.vars.endpoint_q(u))?;
        for l in 0..d {
            u[(self.vars.n_nodes - 1) * d + l] = qa[l];
        }
        u[self.vars.delta_idx()] = qa[d] - pa[d];
        Ok(())
    }

    fn project_gradient(&self, u: &DVector<f64>, g: &mut DVector<f64>) -> Result<()> {
        let d = self.vars.dim;
        let jp = self.bp.p.jacobian_at(&self.vars.endpoint_p(u));
        let jq = self.bp.q.jacobian_at(&self.vars.endpoint_q(u));
        let (k1, k2) = (jp.nrows(), jq.nrows());

        // reduced columns: x_0 block, x_N block, t0, Delta
        let mut a = DMatrix::zeros(k1 + k2, 2 * d + 2);
        for r in 0..k1 {
            for l in 0..d {
                a[(r, l)] = jp[(r, l)];
            }
            a[(r, 2 * d)] = jp[(r, d)];
        }
        for r in 0..k2 {
            for l in 0..d {
                a[(k1 + r, d + l)] = jq[(r, l)];
            }
            a[(k1 + r, 2 * d)] = jq[(r, d)];
            a[(k1 + r, 2 * d + 1)] = jq[(r, d)];
        }

        let last = (self.vars.n_nodes - 1) * d;
        let mut block = DVector::zeros(2 * d + 2);
        for l in 0..d {
            block[l] = g[l];
            block[d + l] = g[last + l];
        }
        block[2 * d] = g[self.vars.t0_idx()];
        block[2 * d + 1] = g[self.vars.delta_idx()];

        project_onto_kernel(&a, &mut block)?;

        for l in 0..d {
            g[l] = block[l];
            g[last + l] = block[d + l];
        }
        g[self.vars.t0_idx()] = block[2 * d];
        g[self.vars.delta_idx()] = block[2 * d + 1];
        Ok(())
    }
}

/// Penalty phases followed by the projected polish; returns the polished
/// variables with the iteration count and the final gradient status.
fn optimize_reduced(
    m: &MetricField,
    bp: &BoundaryPair,
    vars: &ReducedVars,
    mut u: DVector<f64>,
    params: &SolveParams,
) -> Result<(DVector<f64>, usize, bool)> {
    let mut iterations = 0;
    let noise_floor = {
        let (x, _, delta) = vars.unpack(&u);
        1e-14 * (1.0 + reduction::eval_j_magnitude(m, &x, delta))
    };
    // penalty phases only rough in the solution; the projected polish does
    // the accurate work, so keep them on a short leash
    for &mu in &params.penalty_schedule {
        let out = gradient_descent(
            |u| reduced_objective(m, vars, bp, mu, u),
            |u| reduced_gradient(m, vars, bp, mu, u),
            u,
            &Unconstrained,
            &GdOptions {
                max_iters: params.max_iters.min(500),
                grad_tol: params.grad_tol.max(1e-5 * (1.0 + mu.sqrt())),
                step: &params.step,
                momentum: params.momentum,
                noise_floor,
            },
        )?;
        u = out.x;
        iterations += out.iterations;
    }

    let handler = ReducedHandler { bp, vars };
    let out = gradient_descent(
        |u| reduced_objective(m, vars, bp, 0.0, u),
        |u| reduced_gradient(m, vars, bp, 0.0, u),
        u,
        &handler,
        &GdOptions {
            max_iters: params.max_iters,
            grad_tol: params.grad_tol,
            step: &params.step,
            momentum: params.momentum,
            noise_floor,
        },
    )?;
    iterations += out.iterations;
    Ok((out.x, iterations, out.converged))
}

/// Deterministic restart ordering: certified before uncertified, then lower
/// `J`, ties by lower geodesic residual.
fn better(a: &SolveResult, b: &SolveResult) -> bool {
    if a.converged != b.converged {
        return a.converged;
    }
    let scale = 1.0 + a.j_value.abs().max(b.j_value.abs());
    if (a.j_value - b.j_value).abs() > 1e-12 * scale {
        a.j_value < b.j_value
    } else {
        a.diagnostics.geodesic_residual < b.diagnostics.geodesic_residual
    }
}

fn solve_h1(m: &MetricField, bp: &BoundaryPair, params: &SolveParams) -> Result<SolveResult> {
    let d = m.dim();
    let vars = ReducedVars {
        n_nodes: params.segments + 1,
        dim: d,
    };

    // sampled t-extent of P for the time-gap advisory
    let d_p = if bp.d_q_bound.is_some() {
        let mut rng = restart_rng(params.seed, usize::MAX >> 1);
        let samples = bp.p.sample(m.chart(), 10.0, 100, &mut rng);
        Some(samples.iter().map(|s| s[d].abs()).fold(0.0_f64, f64::max))
    } else {
        None
    };

    let mut best: Option<SolveResult> = None;
    for restart in 0..params.restarts.max(1) {
        let mut rng = restart_rng(params.seed, restart);
        let mut pa = sample_on_submanifold(&bp.p, m.chart(), 2.0, &mut rng)?;
        let mut qa = sample_on_submanifold(&bp.q, m.chart(), 2.0, &mut rng)?;
        let mut delta = qa[d] - pa[d];
        if restart > 0 {
            for l in 0..=d {
                pa[l] += params.perturbation * gaussian(&mut rng);
                qa[l] += params.perturbation * gaussian(&mut rng);
            }
            pa = bp.p.project(&pa)?;
            qa = bp.q.project(&qa)?;
            delta = qa[d] - pa[d] + params.perturbation * gaussian(&mut rng);
        }

        let chord = SpatialCurve::straight(
            &pa.rows(0, d).clone_owned(),
            &qa.rows(0, d).clone_owned(),
            params.segments,
        )?;
        let u0 = vars.pack(chord.nodes(), pa[d], delta);

        let (u, iterations, grad_ok) = optimize_reduced(m, bp, &vars, u0, params)?;
        let (x, t0, delta) = vars.unpack(&u);
        let rs = ReducedState::new(x, t0, delta)?;
        let curve = reduction::reconstruct_t(m, &rs);

        let diagnostics = diagnose(m, &curve, Some(bp), &params.tolerances)?;
        let converged = grad_ok && diagnostics.certified(&params.tolerances);
        let mut warnings = Vec::new();
        if let (Some(d_q), Some(d_p)) = (bp.d_q_bound, d_p) {
            if delta.abs() > d_q + d_p + 1e-6 {
                warnings.push(format!(
                    "time gap {delta:.6} exceeds the sampled bound D_Q + D_P = {:.6}",
                    d_q + d_p
                ));
            }
        }
        let result = SolveResult {
            curve,
            j_value: reduction::eval_j(m, &rs.x, rs.delta),
            diagnostics,
            converged,
            iterations,
            hypothesis: Hypothesis::H1,
            restart_index: restart,
            warnings,
        };
        if best.as_ref().map_or(true, |b| better(&result, b)) {
            best = Some(result);
        }
    }

    let best = best.expect("at least one restart ran");
    if best.converged {
        Ok(best)
    } else {
        Err(Error::NoGeodesicFound {
            restarts: params.restarts.max(1),
            best: Box::new(best),
        })
    }
}

fn solve_h2(m: &MetricField, bp: &BoundaryPair, params: &SolveParams) -> Result<SolveResult> {
    let bm = BaseMetric::new(m.clone());
    let p_s = bp.p.base_section()?;
    let q_s = bp.q.base_section()?;
    let base = submersion::riemannian_normal_geodesic(&bm, &p_s, &q_s, params)?;
    let curve = submersion::horizontal_lift(&bm, &base, params.t0);

    let diagnostics = diagnose(m, &curve, Some(bp), &params.tolerances)?;
    let converged = diagnostics.certified(&params.tolerances);
    let result = SolveResult {
        j_value: reduction::eval_f(m, &curve),
        curve,
        diagnostics,
        converged,
        iterations: 0,
        hypothesis: Hypothesis::H2,
        restart_index: 0,
        warnings: Vec::new(),
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NoGeodesicFound {
            restarts: params.restarts.max(1),
            best: Box::new(result),
        })
    }
}

/// Find a certified normal geodesic joining `bp.p` to `bp.q`.
///
/// The `H1` branch minimizes the reduced functional with seeded multi-start;
/// the `H2` branch solves the base Riemannian problem and lifts
/// horizontally. Failure returns the best attempt inside the error.
pub fn solve_normal_geodesic(
    m: &MetricField,
    bp: &BoundaryPair,
    params: &SolveParams,
) -> Result<SolveResult> {
    params.validate()?;
    let mut rng = restart_rng(params.seed, usize::MAX);
    bp.validate(m.chart(), &mut rng)?;
    match bp.hypothesis {
        Hypothesis::H1 => solve_h1(m, bp, params),
        Hypothesis::H2 => solve_h2(m, bp, params),
    }
}

// ---------------------------------------------------------------------------
// generic curve optimizers
// ---------------------------------------------------------------------------

fn endpoint_representative<R: Rng>(
    cond: &EndpointCondition,
    chart: &ChartBounds,
    rng: &mut R,
) -> Result<DVector<f64>> {
    match cond {
        EndpointCondition::Fixed(p) => Ok(p.clone()),
        EndpointCondition::On(sub) => sample_on_submanifold(sub, chart, 0.0, rng),
    }
}

fn optimize_curve(
    energy: &dyn SegmentEnergy,
    start: &EndpointCondition,
    end: &EndpointCondition,
    init: Vec<DVector<f64>>,
    params: &SolveParams,
) -> Result<(Vec<DVector<f64>>, f64, bool)> {
    let n_nodes = init.len();
    let dim = init[0].len();
    let handler = CurveEndpointHandler {
        start,
        end,
        n_nodes,
        dim,
    };
    let mut u = pack_nodes(&init);

    // penalty phases only matter when an endpoint rides a submanifold
    let has_submanifold = matches!(start, EndpointCondition::On(_))
        || matches!(end, EndpointCondition::On(_));
    if has_submanifold {
        for &mu in &params.penalty_schedule {
            let obj = |u: &DVector<f64>| {
                let nodes = unpack_nodes(u, n_nodes, dim);
                let mut v = total_energy(energy, &nodes);
                if let EndpointCondition::On(sub) = start {
                    v += mu * sub.constraint_at(&nodes[0]).norm_squared();
                }
                if let EndpointCondition::On(sub) = end {
                    v += mu * sub.constraint_at(&nodes[n_nodes - 1]).norm_squared();
                }
                v
            };
            let grad = |u: &DVector<f64>| {
                let nodes = unpack_nodes(u, n_nodes, dim);
                let mut grads = total_energy_grad(energy, &nodes);
                if let EndpointCondition::On(sub) = start {
                    grads[0] += 2.0
                        * mu
                        * (sub.jacobian_at(&nodes[0]).transpose()
                            * sub.constraint_at(&nodes[0]));
                }
                if let EndpointCondition::On(sub) = end {
                    grads[n_nodes - 1] += 2.0
                        * mu
                        * (sub.jacobian_at(&nodes[n_nodes - 1]).transpose()
                            * sub.constraint_at(&nodes[n_nodes - 1]));
                }
                pack_nodes(&grads)
            };
            // fixed endpoints stay pinned even inside the penalty phases
            let fixed_only = FixedOnlyHandler {
                start,
                end,
                n_nodes,
                dim,
            };
            let out = gradient_descent(
                obj,
                grad,
                u,
                &fixed_only,
                &GdOptions {
                    max_iters: params.max_iters.min(500),
                    grad_tol: params.grad_tol.max(1e-5 * (1.0 + mu.sqrt())),
                    step: &params.step,
                    momentum: params.momentum,
                    noise_floor: 0.0,
                },
            )?;
            u = out.x;
        }
    }

    let obj = |u: &DVector<f64>| total_energy(energy, &unpack_nodes(u, n_nodes, dim));
    let grad =
        |u: &DVector<f64>| pack_nodes(&total_energy_grad(energy, &unpack_nodes(u, n_nodes, dim)));
    let out = gradient_descent(
        obj,
        grad,
        u,
        &handler,
        &GdOptions {
            max_iters: params.max_iters,
            grad_tol: params.grad_tol,
            step: &params.step,
            momentum: params.momentum,
            noise_floor: 0.0,
        },
    )?;
    Ok((
        unpack_nodes(&out.x, n_nodes, dim),
        out.value,
        out.converged,
    ))
}

/// Restores only `Fixed` endpoints; submanifold endpoints move freely under
/// the penalty terms.
struct FixedOnlyHandler<'a> {
    start: &'a EndpointCondition,
    end: &'a EndpointCondition,
    n_nodes: usize,
    dim: usize,
}

impl ConstraintHandler for FixedOnlyHandler<'_> {
    fn restore(&self, x: &mut DVector<f64>) -> Result<()> {
        if let EndpointCondition::Fixed(p) = self.start {
            x.rows_mut(0, self.dim).copy_from(p);
        }
        if let EndpointCondition::Fixed(p) = self.end {
            x.rows_mut((self.n_nodes - 1) * self.dim, self.dim).copy_from(p);
        }
        Ok(())
    }

    fn project_gradient(&self, _x: &DVector<f64>, g: &mut DVector<f64>) -> Result<()> {
        if matches!(self.start, EndpointCondition::Fixed(_)) {
            g.rows_mut(0, self.dim).fill(0.0);
        }
        if matches!(self.end, EndpointCondition::Fixed(_)) {
            g.rows_mut((self.n_nodes - 1) * self.dim, self.dim).fill(0.0);
        }
        Ok(())
    }
}

fn multi_start_curve(
    energy: &dyn SegmentEnergy,
    chart: &ChartBounds,
    start: &EndpointCondition,
    end: &EndpointCondition,
    params: &SolveParams,
) -> Result<SpatialCurve> {
    params.validate()?;
    let mut best: Option<(f64, bool, Vec<DVector<f64>>)> = None;
    for restart in 0..params.restarts.max(1) {
        let mut rng = restart_rng(params.seed, restart);
        let mut a = endpoint_representative(start, chart, &mut rng)?;
        let mut b = endpoint_representative(end, chart, &mut rng)?;
        if restart > 0 {
            let dim = a.len();
            if let EndpointCondition::On(sub) = start {
                for l in 0..dim {
                    a[l] += params.perturbation * gaussian(&mut rng);
                }
                a = sub.project(&a)?;
            }
            if let EndpointCondition::On(sub) = end {
                for l in 0..dim {
                    b[l] += params.perturbation * gaussian(&mut rng);
                }
                b = sub.project(&b)?;
            }
        }
        let init: Vec<DVector<f64>> = (0..=params.segments)
            .map(|i| {
                let s = i as f64 / params.segments as f64;
                &a + s * (&b - &a)
            })
            .collect();

        let (nodes, value, converged) = optimize_curve(energy, start, end, init, params)?;
        let replace = match &best {
            None => true,
            Some((bv, bc, _)) => (converged && !bc) || (converged == *bc && value < *bv),
        };
        if replace {
            best = Some((value, converged, nodes));
        }
    }
    let (_, converged, nodes) = best.expect("at least one restart ran");
    if !converged {
        return Err(Error::NotConverged);
    }
    SpatialCurve::new(nodes)
}

/// Discrete minimizer of `1/2 int A(x)[xdot, xdot]` for an SPD matrix field
/// under the given endpoint regime; first-order condition to `grad_tol`.
pub fn minimize_riemannian_energy(
    matrix: Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>,
    dim: usize,
    chart: &ChartBounds,
    start: EndpointCondition,
    end: EndpointCondition,
    params: &SolveParams,
) -> Result<SpatialCurve> {
    let _ = dim;
    let energy = RiemannianEnergy {
        matrix,
        fd_step: 1e-5,
    };
    multi_start_curve(&energy, chart, &start, &end, params)
}

/// Fixed-endpoint Finsler energy minimizer backing the distance estimates.
pub(crate) fn minimize_finsler_energy(
    fs: &FermatStructure,
    p: &DVector<f64>,
    q: &DVector<f64>,
    params: &SolveParams,
) -> Result<SpatialCurve> {
    let energy = FinslerEnergy {
        structure: fs,
        fd_step: 1e-6,
    };
    multi_start_curve(
        &energy,
        fs.base().chart(),
        &EndpointCondition::Fixed(p.clone()),
        &EndpointCondition::Fixed(q.clone()),
        params,
    )
    .map_err(|e| match e {
        Error::NotConverged => Error::NoDistanceEstimate,
        other => other,
    })
}

// ---------------------------------------------------------------------------
// refinement and the variational-principle check
// ---------------------------------------------------------------------------

/// Upsample a converged solve by `factor` and re-polish at the finer
/// resolution. Fails (returning the original inside the error) when the
/// refined residual is worse than both the original and twice the
/// second-order prediction.
pub fn refine(
    m: &MetricField,
    bp: &BoundaryPair,
    result: &SolveResult,
    factor: usize,
    params: &SolveParams,
) -> Result<SolveResult> {
    if factor <= 1 {
        return Ok(result.clone());
    }
    let fine_params = SolveParams {
        segments: result.curve.n_segments() * factor,
        ..params.clone()
    };

    let refined = match result.hypothesis {
        Hypothesis::H1 => {
            let x = result.curve.spatial().upsample(factor);
            let t0 = result.curve.first().t;
            let delta = result.curve.delta_z();
            let vars = ReducedVars {
                n_nodes: x.nodes().len(),
                dim: m.dim(),
            };
            let u0 = vars.pack(x.nodes(), t0, delta);
            let noise_floor = 1e-14 * (1.0 + reduction::eval_j_magnitude(m, &x, delta));
            let handler = ReducedHandler { bp, vars: &vars };

            // already critical at the finer resolution: polishing would only
            // churn roundoff
            let mut g0 = reduced_gradient(m, &vars, bp, 0.0, &u0);
            handler.project_gradient(&u0, &mut g0)?;
            let out = if g0.norm() <= 10.0 * fine_params.grad_tol {
                optim::GdOutcome {
                    x: u0,
                    value: 0.0,
                    grad_norm: g0.norm(),
                    iterations: 0,
                    converged: true,
                }
            } else {
                gradient_descent(
                    |u| reduced_objective(m, &vars, bp, 0.0, u),
                    |u| reduced_gradient(m, &vars, bp, 0.0, u),
                    u0,
                    &handler,
                    &GdOptions {
                        max_iters: fine_params.max_iters,
                        grad_tol: fine_params.grad_tol,
                        step: &fine_params.step,
                        momentum: fine_params.momentum,
                        noise_floor,
                    },
                )?
            };
            let (x, t0, delta) = vars.unpack(&out.x);
            let rs = ReducedState::new(x, t0, delta)?;
            let curve = reduction::reconstruct_t(m, &rs);
            let diagnostics = diagnose(m, &curve, Some(bp), &fine_params.tolerances)?;
            SolveResult {
                j_value: reduction::eval_j(m, &rs.x, rs.delta),
                converged: out.converged && diagnostics.certified(&fine_params.tolerances),
                curve,
                diagnostics,
                iterations: out.iterations,
                hypothesis: Hypothesis::H1,
                restart_index: result.restart_index,
                warnings: result.warnings.clone(),
            }
        }
        Hypothesis::H2 => {
            let bm = BaseMetric::new(m.clone());
            let base = result.curve.spatial().upsample(factor);
            let matrix = {
                let bm = bm.clone();
                Arc::new(move |x: &DVector<f64>| bm.h1_matrix(x))
            };
            let energy = RiemannianEnergy {
                matrix,
                fd_step: 1e-5,
            };
            let start = EndpointCondition::On(bp.p.base_section()?);
            let end = EndpointCondition::On(bp.q.base_section()?);
            let (nodes, _, grad_ok) =
                optimize_curve(&energy, &start, &end, base.nodes().to_vec(), &fine_params)?;
            let curve =
                submersion::horizontal_lift(&bm, &SpatialCurve::new(nodes)?, result.curve.first().t);
            let diagnostics = diagnose(m, &curve, Some(bp), &fine_params.tolerances)?;
            SolveResult {
                j_value: reduction::eval_f(m, &curve),
                converged: grad_ok && diagnostics.certified(&fine_params.tolerances),
                curve,
                diagnostics,
                iterations: 0,
                hypothesis: Hypothesis::H2,
                restart_index: result.restart_index,
                warnings: result.warnings.clone(),
            }
        }
    };

    // allow for the roundoff floor: second differences amplify nodal noise
    // by the square of the finer segment count
    let old = result.diagnostics.geodesic_residual;
    let predicted = 2.0 * old / (factor * factor) as f64;
    let n_fine = (result.curve.n_segments() * factor) as f64;
    let noise = 1e-12 * n_fine * n_fine * (1.0 + result.j_value.abs());
    let allowance = old.max(predicted) + noise;
    if refined.diagnostics.geodesic_residual > allowance {
        return Err(Error::RefinementFailed {
            original: Box::new(result.clone()),
        });
    }
    Ok(refined)
}

/// Max of `|df(z)[zeta]|` over `samples` random admissible variations of
/// unit discrete `g_R` norm, including pure Killing-direction fields
/// `zeta = mu K` with `mu` vanishing at the endpoints.
pub fn variational_principle_check(
    m: &MetricField,
    result: &SolveResult,
    bp: &BoundaryPair,
    samples: usize,
) -> Result<f64> {
    let c = &result.curve;
    let n = c.n_segments();
    let d = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ samples as u64);

    let basis_p = bp.p.tangent_basis_at_point(c.first())?;
    let basis_q = bp.q.tangent_basis_at_point(c.last())?;

    let mut worst = 0.0_f64;
    for sample in 0..samples {
        let variation: Vec<TangentVector> = if sample % 4 == 3 {
            // zeta = mu K, mu(0) = mu(1) = 0
            let coeffs: Vec<f64> = (1..=4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..=n)
                .map(|j| {
                    let s = j as f64 / n as f64;
                    let mu: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * s).sin())
                        .sum();
                    TangentVector::new(DVector::zeros(d), mu)
                })
                .collect()
        } else {
            let combine = |basis: &[TangentVector], rng: &mut ChaCha8Rng| {
                let mut v = DVector::zeros(d + 1);
                for b in basis {
                    v += rng.gen_range(-1.0..1.0) * b.ambient();
                }
                v
            };
            let v0 = combine(&basis_p, &mut rng);
            let v1 = combine(&basis_q, &mut rng);
            let bumps: Vec<DVector<f64>> = (0..4)
                .map(|_| {
                    DVector::from_fn(d + 1, |_, _| rng.gen_range(-1.0..1.0))
                })
                .collect();
            (0..=n)
                .map(|j| {
                    let s = j as f64 / n as f64;
                    let mut v = (1.0 - s) * &v0 + s * &v1;
                    for (k, b) in bumps.iter().enumerate() {
                        v += ((k + 1) as f64 * std::f64::consts::PI * s).sin() * b;
                    }
                    TangentVector::from_ambient(&v)
                })
                .collect()
        };

        // discrete H1-type g_R norm
        let mut norm_sq = {
            let g_r = m.g_r_matrix(&c.first().x)?;
            let v0 = variation[0].ambient();
            (&g_r * &v0).dot(&v0)
        };
        for i in 0..n {
            let g_r = m.g_r_matrix(&c.segment_midpoint_x(i))?;
            let dv = (variation[i + 1].ambient() - variation[i].ambient()) * n as f64;
            norm_sq += (&g_r * &dv).dot(&dv) / n as f64;
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-12 {
            continue;
        }
        let df = reduction::first_variation_f(m, c, &variation)?;
        worst = worst.max(df.abs() / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_abs_diff_eq;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn minkowski_two_point_solve_is_the_straight_chord() {
        let s = scenarios::builtin("minkowski").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        assert!(result.converged);
        assert_abs_diff_eq!(result.j_value, 0.5, epsilon = 1e-8);
        for (i, node) in result.curve.nodes().iter().enumerate() {
            let sfrac = i as f64 / result.curve.n_segments() as f64;
            assert!((node.x[0] - sfrac).abs() <= 1e-6);
            assert!(node.x[1].abs() <= 1e-6);
            assert!(node.t.abs() <= 1e-6);
        }
        assert!(result.diagnostics.geodesic_residual <= 1e-8);
    }

    #[test]
    fn sphere_point_solve_lands_radially() {
        let s = scenarios::builtin("minkowski-sphere-point").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        assert!(result.converged);
        assert_abs_diff_eq!(result.curve.first().x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(result.curve.first().x[1], 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(result.curve.first().t, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(result.curve.delta_z(), 2.0, epsilon = 1e-8);
        assert!(result.diagnostics.orthogonality.0 <= 1e-5);
        assert_abs_diff_eq!(result.j_value, 0.0, epsilon = 1e-6);
        assert_eq!(result.diagnostics.character, CausalCharacter::Lightlike);
    }

    #[test]
    fn h2_solve_projects_onto_the_base_geodesic() {
        let s = scenarios::builtin("boost-cylinders").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        assert!(result.converged);
        assert_eq!(result.hypothesis, Hypothesis::H2);
        assert_eq!(result.diagnostics.character, CausalCharacter::Spacelike);
        assert!(result.diagnostics.geodesic_residual <= 1e-6);
        // the projection is the h1 normal geodesic from the circle
        assert_abs_diff_eq!(result.curve.first().x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(result.curve.first().x[1], 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!(result.j_value, 2.5, epsilon = 1e-6);
        assert_abs_diff_eq!(result.curve.delta_z(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_pair_is_rejected_up_front() {
        let s = scenarios::builtin("minkowski").unwrap();
        let bp = BoundaryPair::new(
            Submanifold::point(vec2(0.0, 0.0), 0.0),
            Submanifold::point(vec2(0.0, 0.0), 0.0),
            Hypothesis::H1,
        );
        assert!(matches!(
            solve_normal_geodesic(&s.metric, &bp, &s.params),
            Err(Error::NotDisjoint)
        ));
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let s = scenarios::builtin("minkowski-sphere-point").unwrap();
        let a = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        let b = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        for (na, nb) in a.curve.nodes().iter().zip(b.curve.nodes()) {
            assert_eq!(na.x, nb.x);
            assert!(na.t.to_bits() == nb.t.to_bits());
        }
    }

    #[test]
    fn euclidean_energy_minimizer_with_fixed_endpoints() {
        let chart = ChartBounds::centered(2, 10.0);
        let params = SolveParams {
            segments: 16,
            ..SolveParams::default()
        };
        let x = minimize_riemannian_energy(
            Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
            2,
            &chart,
            EndpointCondition::Fixed(vec2(0.0, 0.0)),
            EndpointCondition::Fixed(vec2(2.0, 1.0)),
            &params,
        )
        .unwrap();
        for (i, node) in x.nodes().iter().enumerate() {
            let s = i as f64 / 16.0;
            assert!((node - vec2(2.0 * s, s)).norm() <= 1e-7);
        }
    }

    #[test]
    fn constant_spd_metric_keeps_the_chord_optimal() {
        let chart = ChartBounds::centered(2, 10.0);
        let params = SolveParams {
            segments: 16,
            ..SolveParams::default()
        };
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a2 = a.clone();
        let p = vec2(-1.0, 0.5);
        let q = vec2(2.0, -0.5);
        let x = minimize_riemannian_energy(
            Arc::new(move |_x: &DVector<f64>| a2.clone()),
            2,
            &chart,
            EndpointCondition::Fixed(p.clone()),
            EndpointCondition::Fixed(q.clone()),
            &params,
        )
        .unwrap();
        let mut energy = 0.0;
        for i in 0..x.n_segments() {
            let v = x.segment_velocity(i);
            energy += (&a * &v).dot(&v);
        }
        energy *= 0.5 / x.n_segments() as f64;
        let diff = &q - &p;
        assert_abs_diff_eq!(energy, 0.5 * (&a * &diff).dot(&diff), epsilon = 1e-9);
        for (i, node) in x.nodes().iter().enumerate() {
            let s = i as f64 / 16.0;
            assert!((node - (&p + s * &diff)).norm() <= 1e-7);
        }
    }

    #[test]
    fn circle_constrained_minimizer_is_radial() {
        let chart = ChartBounds::centered(2, 10.0);
        let params = SolveParams {
            segments: 16,
            ..SolveParams::default()
        };
        let x = minimize_riemannian_energy(
            Arc::new(|_x: &DVector<f64>| DMatrix::identity(2, 2)),
            2,
            &chart,
            EndpointCondition::On(Submanifold::base_sphere(vec2(0.0, 0.0), 1.0)),
            EndpointCondition::Fixed(vec2(3.0, 0.0)),
            &params,
        )
        .unwrap();
        assert_abs_diff_eq!(x.first()[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(x.first()[1], 0.0, epsilon = 1e-5);
    }

    #[test]
    fn refine_is_a_no_op_at_factor_one() {
        let s = scenarios::builtin("minkowski").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        let same = refine(&s.metric, &s.boundary, &result, 1, &s.params).unwrap();
        assert_eq!(result.curve.nodes().len(), same.curve.nodes().len());
    }

    #[test]
    fn refine_keeps_exact_solutions_exact() {
        let s = scenarios::builtin("minkowski").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        let refined = refine(&s.metric, &s.boundary, &result, 2, &s.params).unwrap();
        assert_eq!(refined.curve.n_segments(), 2 * result.curve.n_segments());
        for (i, node) in refined.curve.nodes().iter().enumerate() {
            let sfrac = i as f64 / refined.curve.n_segments() as f64;
            assert!((node.x[0] - sfrac).abs() <= 1e-10);
            assert!(node.x[1].abs() <= 1e-10);
        }
    }

    #[test]
    fn refine_shrinks_curved_scenario_residuals() {
        let s = scenarios::builtin("static-well").unwrap();
        let params = SolveParams {
            segments: 16,
            grad_tol: 1e-9,
            tolerances: Tolerances {
                tol_geo: 0.5, // coarse grid: certification by residual is loose
                ..s.params.tolerances
            },
            ..s.params.clone()
        };
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &params).unwrap();
        let refined = refine(&s.metric, &s.boundary, &result, 2, &params).unwrap();
        let ratio = result.diagnostics.geodesic_residual / refined.diagnostics.geodesic_residual;
        assert!(
            ratio > 2.5,
            "expected ~4x residual reduction, got {ratio} ({} -> {})",
            result.diagnostics.geodesic_residual,
            refined.diagnostics.geodesic_residual
        );
    }

    #[test]
    fn variational_principle_holds_at_solutions() {
        let s = scenarios::builtin("minkowski").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        let df = variational_principle_check(&s.metric, &result, &s.boundary, 60).unwrap();
        assert!(df <= 1e-6, "df = {df}");
    }

    #[test]
    fn variational_principle_rejects_non_critical_curves() {
        let s = scenarios::builtin("minkowski").unwrap();
        let mut result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        // bend the curve: no longer critical
        let mut nodes = result.curve.nodes().to_vec();
        let n = nodes.len() - 1;
        for (i, node) in nodes.iter_mut().enumerate() {
            let sfrac = i as f64 / n as f64;
            node.x[1] += sfrac * (1.0 - sfrac);
        }
        result.curve = SpacetimeCurve::new(nodes).unwrap();
        let df = variational_principle_check(&s.metric, &result, &s.boundary, 60).unwrap();
        assert!(df > 0.1, "df = {df}");
    }

    #[test]
    fn killing_directions_are_flat_at_any_reconstructed_curve() {
        let s = scenarios::builtin("boost-sphere-point").unwrap();
        let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
        // restrict to the mu K family only: indices 3 mod 4
        let df = variational_principle_check(&s.metric, &result, &s.boundary, 8).unwrap();
        assert!(df <= 1e-6, "df = {df}");
    }

    #[test]
    fn certification_is_recheckable_from_the_stored_curve() {
        for name in ["minkowski-sphere-point", "boost-cylinders"] {
            let s = scenarios::builtin(name).unwrap();
            let result = solve_normal_geodesic(&s.metric, &s.boundary, &s.params).unwrap();
            assert!(result.converged);
            let recheck =
                diagnose(&s.metric, &result.curve, Some(&s.boundary), &s.params.tolerances)
                    .unwrap();
            assert!(recheck.certified(&s.params.tolerances), "{name}");
        }
    }

    #[test]
    fn time_gap_advisory_warns_without_rejecting() {
        let s = scenarios::builtin("minkowski-sphere-point").unwrap();
        let mut bp = s.boundary.clone();
        // assert a bound the known solution (delta = 2) must violate
        bp.d_q_bound = Some(0.5);
        let result = solve_normal_geodesic(&s.metric, &bp, &s.params).unwrap();
        assert!(result.converged);
        assert!(
            result.warnings.iter().any(|w| w.contains("time gap")),
            "expected a time-gap advisory, got {:?}",
            result.warnings
        );
    }

    #[test]
    fn shared_types_are_send_and_sync() {
        fn check<T: Send + Sync>() {}
        check::<MetricField>();
        check::<Submanifold>();
        check::<BoundaryPair>();
        check::<SolveParams>();
        check::<SolveResult>();
        check::<scenarios::Scenario>();
    }

    #[test]
    fn params_validation_catches_bad_inputs() {
        let mut p = SolveParams::default();
        p.segments = 4;
        assert!(p.validate().is_err());
        let mut p = SolveParams::default();
        p.penalty_schedule = vec![10.0, 10.0];
        assert!(p.validate().is_err());
    }
}
