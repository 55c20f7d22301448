//! Matrix scaling: find `u, v` with `diag(u) K diag(v)` having row sums `a`
//! and column sums `b`. Stabilized by absorbing the scalings into the kernel
//! (Schmitzer's scheme) whenever they leave `[e^{-ABSORB}, e^{ABSORB}]`.

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

const ABSORB: f64 = 30.0;

#[derive(Debug, Clone)]
pub(crate) struct Scaling<S> {
    /// `log u` (rows), `-inf` off the support of `a`.
    pub log_u: Vec<S>,
    /// `log v` (columns), `-inf` off the support of `b`.
    pub log_v: Vec<S>,
    /// L¹ mismatch of the row marginal after the last column update.
    pub residual: S,
    pub iterations: usize,
    pub history: Vec<S>,
    pub converged: bool,
}

/// `log_k` is row-major `rows × cols`, `a` and `b` are the target masses.
pub(crate) fn scale<S: Scalar>(
    log_k: &[S],
    rows: usize,
    cols: usize,
    a: &[S],
    b: &[S],
    tol: S,
    max_iter: usize,
) -> Result<Scaling<S>> {
    if a.len() != rows || b.len() != cols || log_k.len() != rows * cols {
        return Err(Error::DimensionMismatch { expected: rows * cols, found: log_k.len() });
    }
    let ninf = S::neg_infinity();
    let mut alpha: Vec<S> = a.iter().map(|&x| if x > S::zero() { S::zero() } else { ninf }).collect();
    let mut beta: Vec<S> = b.iter().map(|&x| if x > S::zero() { S::zero() } else { ninf }).collect();
    let mut kt = vec![S::zero(); rows * cols];
    let absorb = S::of(ABSORB);

    let rebuild = |kt: &mut Vec<S>, alpha: &[S], beta: &[S]| {
        for i in 0..rows {
            let row = &mut kt[i * cols..(i + 1) * cols];
            if alpha[i] == ninf {
                row.iter_mut().for_each(|x| *x = S::zero());
                continue;
            }
            for (j, x) in row.iter_mut().enumerate() {
                *x = (log_k[i * cols + j] + alpha[i] + beta[j]).exp();
            }
        }
    };
    rebuild(&mut kt, &alpha, &beta);

    let mut u = vec![S::one(); rows];
    let mut v: Vec<S> = b.iter().map(|&x| if x > S::zero() { S::one() } else { S::zero() }).collect();
    let mut s = row_sums(&kt, &v, rows, cols);
    let mut colsum = vec![S::zero(); cols];
    let mut history = Vec::new();
    let mut residual = S::infinity();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        // Row update; fall back to an exact log-domain step where the
        // stabilized kernel underflows on the support.
        let mut degenerate = false;
        for i in 0..rows {
            if a[i] > S::zero() {
                if s[i] > S::zero() && s[i].is_finite() {
                    u[i] = a[i] / s[i];
                } else {
                    degenerate = true;
                }
            } else {
                u[i] = S::zero();
            }
        }
        if degenerate {
            absorb_into(&mut alpha, &mut u);
            absorb_into(&mut beta, &mut v);
            for i in 0..rows {
                if a[i] > S::zero() {
                    let lse = log_sum_exp((0..cols).map(|j| log_k[i * cols + j] + beta[j]));
                    if lse == ninf {
                        return Err(Error::DegenerateKernel);
                    }
                    alpha[i] = a[i].ln() - lse;
                }
            }
            rebuild(&mut kt, &alpha, &beta);
            u.iter_mut().zip(a).for_each(|(x, &w)| *x = if w > S::zero() { S::one() } else { S::zero() });
        }

        colsum.iter_mut().for_each(|x| *x = S::zero());
        for i in 0..rows {
            if u[i] == S::zero() {
                continue;
            }
            let ui = u[i];
            for (c, &k) in colsum.iter_mut().zip(&kt[i * cols..(i + 1) * cols]) {
                *c = *c + ui * k;
            }
        }
        let mut col_degenerate = false;
        for j in 0..cols {
            if b[j] > S::zero() {
                if colsum[j] > S::zero() && colsum[j].is_finite() {
                    v[j] = b[j] / colsum[j];
                } else {
                    col_degenerate = true;
                }
            } else {
                v[j] = S::zero();
            }
        }
        if col_degenerate {
            absorb_into(&mut alpha, &mut u);
            absorb_into(&mut beta, &mut v);
            for j in 0..cols {
                if b[j] > S::zero() {
                    let lse = log_sum_exp((0..rows).map(|i| log_k[i * cols + j] + alpha[i]));
                    if lse == ninf {
                        return Err(Error::DegenerateKernel);
                    }
                    beta[j] = b[j].ln() - lse;
                }
            }
            rebuild(&mut kt, &alpha, &beta);
            v.iter_mut().zip(b).for_each(|(x, &w)| *x = if w > S::zero() { S::one() } else { S::zero() });
            u.iter_mut().zip(a).for_each(|(x, &w)| *x = if w > S::zero() { S::one() } else { S::zero() });
        }

        s = row_sums(&kt, &v, rows, cols);
        residual = (0..rows).map(|i| (u[i] * s[i] - a[i]).abs()).sum();
        history.push(residual);
        if !residual.is_finite() {
            return Err(Error::NonFinite(iterations));
        }
        if residual <= tol {
            break;
        }
        if out_of_range(&u, absorb) || out_of_range(&v, absorb) {
            absorb_into(&mut alpha, &mut u);
            absorb_into(&mut beta, &mut v);
            rebuild(&mut kt, &alpha, &beta);
            u.iter_mut().zip(a).for_each(|(x, &w)| *x = if w > S::zero() { S::one() } else { S::zero() });
            v.iter_mut().zip(b).for_each(|(x, &w)| *x = if w > S::zero() { S::one() } else { S::zero() });
            s = row_sums(&kt, &v, rows, cols);
        }
    }

    let log_u = alpha.iter().zip(&u).map(|(&al, &x)| if x > S::zero() { al + x.ln() } else { ninf }).collect();
    let log_v = beta.iter().zip(&v).map(|(&be, &x)| if x > S::zero() { be + x.ln() } else { ninf }).collect();
    Ok(Scaling { log_u, log_v, residual, iterations, history, converged: residual <= tol })
}

fn row_sums<S: Scalar>(kt: &[S], v: &[S], rows: usize, cols: usize) -> Vec<S> {
    (0..rows).map(|i| kt[i * cols..(i + 1) * cols].iter().zip(v).map(|(&k, &x)| k * x).sum()).collect()
}

fn out_of_range<S: Scalar>(x: &[S], bound: S) -> bool {
    x.iter().any(|&v| v > S::zero() && v.ln().abs() > bound)
}

fn absorb_into<S: Scalar>(pot: &mut [S], scale: &mut [S]) {
    for (p, s) in pot.iter_mut().zip(scale.iter_mut()) {
        if *s > S::zero() && *p != S::neg_infinity() {
            *p = *p + s.ln();
            *s = S::one();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_a_small_matrix() {
        let log_k: Vec<f64> = [1.0, 2.0, 0.5, 0.2, 1.0, 3.0, 1.5, 0.1, 1.0].iter().map(|x: &f64| x.ln()).collect();
        let a = [0.2, 0.5, 0.3];
        let b = [0.4, 0.4, 0.2];
        let s = scale(&log_k, 3, 3, &a, &b, 1e-13, 10_000).unwrap();
        assert!(s.converged);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| (log_k[i * 3 + j] + s.log_u[i] + s.log_v[j]).exp()).sum();
            assert!((r - a[i]).abs() < 1e-12);
        }
        for j in 0..3 {
            let c: f64 = (0..3).map(|i| (log_k[i * 3 + j] + s.log_u[i] + s.log_v[j]).exp()).sum();
            assert!((c - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn respects_zero_masses() {
        let log_k = vec![0.0f64; 9];
        let a = [0.5, 0.0, 0.5];
        let b = [0.0, 1.0, 0.0];
        let s = scale(&log_k, 3, 3, &a, &b, 1e-13, 100).unwrap();
        assert!(s.converged);
        assert_eq!(s.log_u[1], f64::NEG_INFINITY);
        assert_eq!(s.log_v[0], f64::NEG_INFINITY);
    }

    #[test]
    fn reports_unreachable_tolerance() {
        let log_k: Vec<f64> = [0.0, -30.0, -30.0, 0.0].to_vec();
        let s = scale(&log_k, 2, 2, &[0.9, 0.1], &[0.1, 0.9], 1e-15, 3).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 3);
        assert_eq!(s.history.len(), 3);
    }

    #[test]
    fn degenerate_support_is_an_error() {
        let log_k = vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let err = scale(&log_k, 2, 2, &[0.5, 0.5], &[0.5, 0.5], 1e-10, 100);
        assert!(matches!(err, Err(Error::DegenerateKernel)));
    }
}
