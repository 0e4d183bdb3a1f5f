//! Small numerical helpers shared across modules: medians, finite-difference
//! Christoffel symbols of a matrix-valued field, and kernel bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Median of a slice (average of the two middle entries for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Christoffel symbols of the second kind for a matrix field `G`.
///
/// `G` maps a point `x` of length `n_active` to a symmetric `n x n` matrix
/// with `n >= n_active`; components with index `>= n_active` are cyclic
/// coordinates (no derivative is taken along them). Derivatives of `G` are
/// central finite differences with step `h`.
///
/// Returns one symmetric `n x n` matrix per upper index.
pub(crate) fn christoffel_fd<F>(
    matrix_at: F,
    x: &DVector<f64>,
    n: usize,
    h: f64,
) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n_active = x.len();
    let g = matrix_at(x);
    let g_inv = g.clone().try_inverse().ok_or(Error::SingularMetric)?;

    // dg[l] = dG/dx^l, zero for cyclic coordinates
    let mut dg = vec![DMatrix::zeros(n, n); n];
    for l in 0..n_active {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[l] += h;
        xm[l] -= h;
        dg[l] = (matrix_at(&xp) - matrix_at(&xm)) / (2.0 * h);
    }

    let mut gamma = vec![DMatrix::zeros(n, n); n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut sum = 0.0;
                for m in 0..n {
                    sum += g_inv[(k, m)] * (dg[j][(m, i)] + dg[i][(m, j)] - dg[m][(i, j)]);
                }
                let val = 0.5 * sum;
                gamma[k][(i, j)] = val;
                gamma[k][(j, i)] = val;
            }
        }
    }
    Ok(gamma)
}

/// Contraction `Gamma^k_{ij} v^i w^j` for every upper index `k`.
pub(crate) fn contract_christoffel(
    gamma: &[DMatrix<f64>],
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_iterator(gamma.len(), gamma.iter().map(|gk| (gk * w).dot(v)))
}

/// Orthonormal basis of `ker(jac)` with respect to the Euclidean inner
/// product, built by Gram-Schmidt against the (orthonormalized) rows of
/// `jac` and the coordinate directions.
///
/// Fails with `DegenerateSubmanifold` when the rows of `jac` are not
/// linearly independent.
pub(crate) fn orthonormal_kernel(jac: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    let (k, n) = jac.shape();
    if k > n {
        return Err(Error::DegenerateSubmanifold);
    }

    // Orthonormalize the rows; rank deficiency shows up as a tiny residual.
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut r: DVector<f64> = jac.row(i).transpose();
        let scale = r.norm();
        if scale < 1e-14 {
            return Err(Error::DegenerateSubmanifold);
        }
        for q in &rows {
            let c = q.dot(&r);
            r -= q * c;
        }
        if r.norm() < 1e-10 * scale.max(1.0) {
            return Err(Error::DegenerateSubmanifold);
        }
        r /= r.norm();
        rows.push(r);
    }

    // Complete with coordinate directions; double Gram-Schmidt for stability.
    let mut kernel: Vec<DVector<f64>> = Vec::with_capacity(n - k);
    for j in 0..n {
        if kernel.len() == n - k {
            break;
        }
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        for _ in 0..2 {
            for q in rows.iter().chain(kernel.iter()) {
                let c = q.dot(&e);
                e -= q * c;
            }
        }
        let norm = e.norm();
        if norm > 1e-6 {
            kernel.push(e / norm);
        }
    }
    if kernel.len() != n - k {
        return Err(Error::DegenerateSubmanifold);
    }
    Ok(kernel)
}
