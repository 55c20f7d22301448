//! Independent reference solvers used to validate the production code paths.

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::scalar::Scalar;

/// Result of [`min_relative_entropy`].
#[derive(Debug, Clone)]
pub struct OracleSolution<S> {
    /// Optimal coupling masses, row-major.
    pub coupling: Vec<S>,
    /// `H(π | R) = Σ π log(π / R)`.
    pub value: S,
    pub iterations: usize,
    /// Newton decrement of the projected step at exit.
    pub stationarity: S,
}

/// Minimizes `Σ π_ij log(π_ij / r_ij)` over `n × m` couplings with row sums `a`
/// and column sums `b` (all strictly positive), directly on the coupling
/// polytope. Each step moves along the gradient projected onto the tangent
/// space `{D : D 1 = 0, Dᵀ 1 = 0}` in the metric of the Hessian `diag(1/π)`,
/// with Armijo backtracking and a fraction-to-boundary cap keeping `π > 0`.
pub fn min_relative_entropy<S: Scalar>(
    r: &[S],
    a: &[S],
    b: &[S],
    tol: S,
    max_iter: usize,
) -> Result<OracleSolution<S>> {
    let (n, m) = (a.len(), b.len());
    if r.len() != n * m || m == 0 {
        return Err(Error::DimensionMismatch { expected: n * m, found: r.len() });
    }
    if a.iter().chain(b).chain(r).any(|&x| !(x > S::zero())) {
        return Err(Error::InvalidArgument("oracle needs strictly positive data".into()));
    }
    let objective = |p: &[S]| -> S { p.iter().zip(r).map(|(&x, &y)| x * (x / y).ln()).sum() };
    let mut p: Vec<S> = (0..n * m).map(|k| a[k / m] * b[k % m]).collect();
    let mut f = objective(&p);
    let dim = n + m - 1;
    let mut iterations = 0;
    let mut stationarity = S::infinity();
    while iterations < max_iter {
        let g: Vec<S> = p.iter().zip(r).map(|(&x, &y)| (x / y).ln() + S::one()).collect();
        // Multipliers of the row and column constraints (last column pinned).
        let mut mat = vec![S::zero(); dim * dim];
        let mut rhs = vec![S::zero(); dim];
        for i in 0..n {
            for j in 0..m {
                let w = p[i * m + j];
                mat[i * dim + i] = mat[i * dim + i] + w;
                rhs[i] = rhs[i] + w * g[i * m + j];
                if j + 1 < m {
                    mat[i * dim + n + j] = w;
                    mat[(n + j) * dim + i] = w;
                    mat[(n + j) * dim + n + j] = mat[(n + j) * dim + n + j] + w;
                    rhs[n + j] = rhs[n + j] + w * g[i * m + j];
                }
            }
        }
        let lambda = cholesky_solve(&mat, &rhs, dim)?;
        let reduced: Vec<S> = (0..n * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                let col = if j + 1 < m { lambda[n + j] } else { S::zero() };
                g[k] - lambda[i] - col
            })
            .collect();
        let d: Vec<S> = reduced.iter().zip(&p).map(|(&x, &w)| -w * x).collect();
        let decrement: S = d.iter().zip(&reduced).map(|(&x, &y)| -x * y).sum();
        stationarity = decrement.max(S::zero()).sqrt();
        if stationarity <= tol {
            break;
        }
        iterations += 1;
        let mut cap = S::infinity();
        for (&x, &dx) in p.iter().zip(&d) {
            if dx < S::zero() {
                cap = cap.min(-x / dx);
            }
        }
        let mut alpha = S::one().min(S::of(0.99) * cap);
        let noise = S::of(16.0) * S::epsilon() * f.abs().max(S::one());
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<S> = p.iter().zip(&d).map(|(&x, &dx)| x + alpha * dx).collect();
            let fc = objective(&cand);
            if fc <= f - S::of(1e-4) * alpha * decrement + noise {
                p = cand;
                f = fc;
                accepted = true;
                break;
            }
            alpha = alpha / S::of(2.0);
        }
        if !accepted {
            break;
        }
    }
    Ok(OracleSolution { coupling: p, value: f, iterations, stationarity })
}
