//! Discrete curve energies over segment closures, and the endpoint
//! feasibility handlers used by the curve optimizers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fermat::FermatStructure;
use crate::solver::optim::ConstraintHandler;
use crate::solver::EndpointCondition;

type MatrixFieldFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// One segment's contribution to a curve energy, with partial derivatives
/// in the segment midpoint and chord velocity.
pub(crate) trait SegmentEnergy {
    fn value(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> f64;
    fn grad_mid(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64>;
    fn grad_vel(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64>;
}

/// `1/2 v^T A(m) v` for an SPD matrix field.
pub(crate) struct RiemannianEnergy {
    pub matrix: Arc<MatrixFieldFn>,
    pub fd_step: f64,
}

impl SegmentEnergy for RiemannianEnergy {
    fn value(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> f64 {
        0.5 * ((self.matrix)(mid) * vel).dot(vel)
    }

    fn grad_mid(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64> {
        let h = self.fd_step;
        DVector::from_fn(mid.len(), |l, _| {
            let mut mp = mid.clone();
            let mut mm = mid.clone();
            mp[l] += h;
            mm[l] -= h;
            let da = ((self.matrix)(&mp) - (self.matrix)(&mm)) / (2.0 * h);
            0.5 * (da * vel).dot(vel)
        })
    }

    fn grad_vel(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64> {
        (self.matrix)(mid) * vel
    }
}

/// `1/2 F(m, v)^2` for a Fermat (Randers) structure.
pub(crate) struct FinslerEnergy<'a> {
    pub structure: &'a FermatStructure,
    pub fd_step: f64,
}

impl SegmentEnergy for FinslerEnergy<'_> {
    fn value(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> f64 {
        let f = self.structure.eval(mid, vel);
        0.5 * f * f
    }

    fn grad_mid(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64> {
        let h = self.fd_step;
        DVector::from_fn(mid.len(), |l, _| {
            let mut mp = mid.clone();
            let mut mm = mid.clone();
            mp[l] += h;
            mm[l] -= h;
            let fp = self.structure.eval(&mp, vel);
            let fm = self.structure.eval(&mm, vel);
            0.5 * (fp * fp - fm * fm) / (2.0 * h)
        })
    }

    fn grad_vel(&self, mid: &DVector<f64>, vel: &DVector<f64>) -> DVector<f64> {
        let (f, df) = self.structure.eval_with_grad_vel(mid, vel);
        f * df
    }
}

/// `(1/N) sum_i e(mid_i, v_i)` over the nodes of a discrete curve.
pub(crate) fn total_energy(e: &dyn SegmentEnergy, nodes: &[DVector<f64>]) -> f64 {
    let n = nodes.len() - 1;
    let nf = n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let mid = 0.5 * (&nodes[i] + &nodes[i + 1]);
        let vel = (&nodes[i + 1] - &nodes[i]) * nf;
        sum += e.value(&mid, &vel);
    }
    sum / nf
}

/// Gradient of [`total_energy`] with respect to every node.
pub(crate) fn total_energy_grad(
    e: &dyn SegmentEnergy,
    nodes: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let n = nodes.len() - 1;
    let nf = n as f64;
    let dim = nodes[0].len();
    let mut grads = vec![DVector::zeros(dim); n + 1];
    for i in 0..n {
        let mid = 0.5 * (&nodes[i] + &nodes[i + 1]);
        let vel = (&nodes[i + 1] - &nodes[i]) * nf;
        let gm = e.grad_mid(&mid, &vel) * (0.5 / nf);
        let gv = e.grad_vel(&mid, &vel); // (1/N) * N cancels
        grads[i] += &gm - &gv;
        grads[i + 1] += &gm + &gv;
    }
    grads
}

pub(crate) fn pack_nodes(nodes: &[DVector<f64>]) -> DVector<f64> {
    let dim = nodes[0].len();
    let mut u = DVector::zeros(nodes.len() * dim);
    for (j, node) in nodes.iter().enumerate() {
        u.rows_mut(j * dim, dim).copy_from(node);
    }
    u
}

pub(crate) fn unpack_nodes(u: &DVector<f64>, n_nodes: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..n_nodes)
        .map(|j| u.rows(j * dim, dim).clone_owned())
        .collect()
}

/// Euclidean-orthogonal projection of `block` onto `ker(jac)`.
pub(crate) fn project_onto_kernel(jac: &DMatrix<f64>, block: &mut DVector<f64>) -> Result<()> {
    let jjt = jac * jac.transpose();
    let chol = jjt.cholesky().ok_or(Error::DegenerateSubmanifold)?;
    let y = chol.solve(&(jac * &*block));
    *block -= jac.transpose() * y;
    Ok(())
}

/// Endpoint handler for node-only curve problems: fixed endpoints are
/// restored verbatim and their gradient slots zeroed; submanifold endpoints
/// are projected back to the level set and their gradients made tangent.
pub(crate) struct CurveEndpointHandler<'a> {
    pub start: &'a EndpointCondition,
    pub end: &'a EndpointCondition,
    pub n_nodes: usize,
    pub dim: usize,
}

impl CurveEndpointHandler<'_> {
    fn restore_block(&self, cond: &EndpointCondition, block: &mut DVector<f64>) -> Result<()> {
        match cond {
            EndpointCondition::Fixed(p) => {
                block.copy_from(p);
                Ok(())
            }
            EndpointCondition::On(sub) => {
                let projected = sub.project_tight(&block.clone_owned())?;
                block.copy_from(&projected);
                Ok(())
            }
        }
    }

    fn project_block(
        &self,
        cond: &EndpointCondition,
        at: &DVector<f64>,
        block: &mut DVector<f64>,
    ) -> Result<()> {
        match cond {
            EndpointCondition::Fixed(_) => {
                block.fill(0.0);
                Ok(())
            }
            EndpointCondition::On(sub) => project_onto_kernel(&sub.jacobian_at(at), block),
        }
    }
}

impl ConstraintHandler for CurveEndpointHandler<'_> {
    fn restore(&self, x: &mut DVector<f64>) -> Result<()> {
        let d = self.dim;
        let mut first = x.rows(0, d).clone_owned();
        self.restore_block(self.start, &mut first)?;
        x.rows_mut(0, d).copy_from(&first);

        let last_at = (self.n_nodes - 1) * d;
        let mut last = x.rows(last_at, d).clone_owned();
        self.restore_block(self.end, &mut last)?;
        x.rows_mut(last_at, d).copy_from(&last);
        Ok(())
    }

    fn project_gradient(&self, x: &DVector<f64>, g: &mut DVector<f64>) -> Result<()> {
        let d = self.dim;
        let first_at = x.rows(0, d).clone_owned();
        let mut first = g.rows(0, d).clone_owned();
        self.project_block(self.start, &first_at, &mut first)?;
        g.rows_mut(0, d).copy_from(&first);

        let last_idx = (self.n_nodes - 1) * d;
        let last_at = x.rows(last_idx, d).clone_owned();
        let mut last = g.rows(last_idx, d).clone_owned();
        self.project_block(self.end, &last_at, &mut last)?;
        g.rows_mut(last_idx, d).copy_from(&last);
        Ok(())
    }
}
