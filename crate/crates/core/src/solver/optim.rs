//! Gradient descent with Armijo backtracking, optionally constrained by a
//! feasibility/tangency handler (projected gradient descent).
//!
//! The trial step uses the Barzilai-Borwein quotient from the previous
//! iterate when it is positive; backtracking then enforces sufficient
//! decrease, so accepted steps are monotone up to roundoff.

use nalgebra::DVector;

use crate::error::Result;
use crate::solver::StepRule;

pub(crate) struct GdOptions<'a> {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step: &'a StepRule,
    pub momentum: Option<f64>,
    /// Absolute evaluation-noise scale of the objective. Objectives built
    /// from cancelling terms (the reduced functional near a lightlike
    /// minimizer) have noise far above `eps * |f|`; the line search must
    /// tolerate it or it stalls short of the gradient tolerance.
    pub noise_floor: f64,
}

pub(crate) struct GdOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    #[allow(dead_code)] // reported in test assertions
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Keeps iterates feasible and gradients tangent. The unconstrained case is
/// a pair of no-ops.
pub(crate) trait ConstraintHandler {
    fn restore(&self, _x: &mut DVector<f64>) -> Result<()> {
        Ok(())
    }
    fn project_gradient(&self, _x: &DVector<f64>, _g: &mut DVector<f64>) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct Unconstrained;

impl ConstraintHandler for Unconstrained {}

pub(crate) fn gradient_descent<F, G>(
    f: F,
    grad: G,
    x0: DVector<f64>,
    constraints: &dyn ConstraintHandler,
    opts: &GdOptions,
) -> Result<GdOutcome>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0;
    constraints.restore(&mut x)?;
    let mut fx = f(&x);
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut last_alpha = opts.step.initial_step;

    // stall detector: break after many consecutive steps of negligible length
    let mut tiny_moves = 0usize;

    for it in 0..opts.max_iters {
        let mut g = grad(&x);
        constraints.project_gradient(&x, &mut g)?;
        let gn = g.norm();
        if gn <= opts.grad_tol {
            return Ok(GdOutcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations: it,
                converged: true,
            });
        }

        let mut alpha = match &prev {
            Some((px, pg)) => {
                let s = &x - px;
                let y = &g - pg;
                let sy = s.dot(&y);
                if sy > 1e-300 {
                    (s.dot(&s) / sy).clamp(1e-14, 1e8)
                } else {
                    (last_alpha * 4.0).min(1e8)
                }
            }
            None => opts.step.initial_step,
        };
        let x_before = x.clone();
        prev = Some((x.clone(), g.clone()));

        // Armijo with a roundoff allowance so the search does not stall at
        // the floating-point floor of f.
        let mut accepted = false;
        for _ in 0..opts.step.max_backtracks {
            let mut cand = &x - alpha * &g;
            constraints.restore(&mut cand)?;
            let fc = f(&cand);
            let slack = 4.0 * f64::EPSILON * (fx.abs() + fc.abs()) + opts.noise_floor;
            if fc <= fx - opts.step.sufficient_decrease * alpha * gn * gn + slack {
                x = cand;
                fx = fc;
                last_alpha = alpha;
                accepted = true;
                break;
            }
            alpha *= opts.step.shrink;
        }
        if !accepted {
            return Ok(GdOutcome {
                x,
                value: fx,
                grad_norm: gn,
                iterations: it,
                converged: false,
            });
        }
        if last_alpha * gn <= 1e-16 * (1.0 + x.norm()) {
            tiny_moves += 1;
            if tiny_moves > 50 {
                return Ok(GdOutcome {
                    x,
                    value: fx,
                    grad_norm: gn,
                    iterations: it,
                    converged: false,
                });
            }
        } else {
            tiny_moves = 0;
        }

        if let Some(mu) = opts.momentum {
            let mut cand = &x + mu * (&x - &x_before);
            constraints.restore(&mut cand)?;
            let fc = f(&cand);
            if fc < fx {
                x = cand;
                fx = fc;
            }
        }
    }

    let mut g = grad(&x);
    constraints.project_gradient(&x, &mut g)?;
    let gn = g.norm();
    Ok(GdOutcome {
        x,
        value: fx,
        grad_norm: gn,
        iterations: opts.max_iters,
        converged: gn <= opts.grad_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    #[test]
    fn quadratic_converges_to_the_minimum() {
        let f = |x: &DVector<f64>| 0.5 * (4.0 * x[0] * x[0] + x[1] * x[1]);
        let grad = |x: &DVector<f64>| DVector::from_vec(vec![4.0 * x[0], x[1]]);
        let step = StepRule::default();
        let out = gradient_descent(
            f,
            grad,
            DVector::from_vec(vec![3.0, -2.0]),
            &Unconstrained,
            &GdOptions {
                max_iters: 10_000,
                grad_tol: 1e-12,
                step: &step,
                momentum: None,
                noise_floor: 0.0,
            },
        )
        .unwrap();
        assert!(out.converged);
        assert!(out.x.norm() < 1e-11);
    }

    #[test]
    fn accepted_values_are_monotone_within_roundoff() {
        let history = RefCell::new(Vec::new());
        let f = |x: &DVector<f64>| {
            let v = (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 0.5).powi(2);
            history.borrow_mut().push(v);
            v
        };
        let grad = |x: &DVector<f64>| {
            DVector::from_vec(vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 0.5)])
        };
        let step = StepRule::default();
        gradient_descent(
            f,
            grad,
            DVector::from_vec(vec![5.0, 5.0]),
            &Unconstrained,
            &GdOptions {
                max_iters: 2_000,
                grad_tol: 1e-10,
                step: &step,
                momentum: None,
                noise_floor: 0.0,
            },
        )
        .unwrap();
        // accepted values form a decreasing subsequence; the full history
        // includes rejected trials, so check the running minimum only drops
        let h = history.borrow();
        let mut run_min = f64::INFINITY;
        let mut mins = Vec::new();
        for v in h.iter() {
            if *v < run_min {
                run_min = *v;
                mins.push(*v);
            }
        }
        assert!(mins.windows(2).all(|w| w[1] < w[0] + 1e-12));
        assert!(run_min < 1e-15);
    }

    #[test]
    fn ill_conditioned_quadratic_reaches_tight_tolerance() {
        // mimics the discrete curve energy Hessian spectrum
        let n = 64;
        let f = |x: &DVector<f64>| {
            let mut v = 0.0;
            for i in 0..=n {
                let prev = if i == 0 { 0.0 } else { x[i - 1] };
                let next = if i == n { 0.0 } else { x[i] };
                v += (next - prev) * (next - prev);
            }
            0.5 * (n as f64) * v
        };
        let grad = |x: &DVector<f64>| {
            let mut g = DVector::zeros(n);
            for i in 0..n {
                let xm = if i == 0 { 0.0 } else { x[i - 1] };
                let xp = if i + 1 == n { 0.0 } else { x[i + 1] };
                g[i] = (n as f64) * (2.0 * x[i] - xm - xp);
            }
            g
        };
        let x0 = DVector::from_fn(n, |i, _| ((i + 1) as f64 * 0.37).sin());
        let step = StepRule::default();
        let out = gradient_descent(
            f,
            grad,
            x0,
            &Unconstrained,
            &GdOptions {
                max_iters: 50_000,
                grad_tol: 1e-10,
                step: &step,
                momentum: None,
                noise_floor: 0.0,
            },
        )
        .unwrap();
        assert!(out.converged, "grad stalled at {}", out.grad_norm);
    }
}
