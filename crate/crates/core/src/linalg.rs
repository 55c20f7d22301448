//! Small dense/tridiagonal kernels used by the spectral backend, the
//! mean-field chain and the brute-force oracles.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition of a real symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen<S> {
    /// Eigenvalues in ascending order.
    pub values: Vec<S>,
    /// Eigenvectors, `vectors[k * n + i]` is component `i` of eigenvector `k`.
    pub vectors: Vec<S>,
}

/// Implicit QL with Wilkinson shifts (the EISPACK `tql2` scheme) on the
/// tridiagonal matrix with diagonal `diag` and super-diagonal `off`.
pub fn symmetric_tridiagonal_eigen<S: Scalar>(diag: &[S], off: &[S]) -> Result<TridiagonalEigen<S>> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::DimensionMismatch { expected: n.saturating_sub(1), found: off.len() });
    }
    let mut d = diag.to_vec();
    let mut e: Vec<S> = off.iter().copied().chain(std::iter::once(S::zero())).collect();
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }
    let two = S::of(2.0);
    let eps = S::epsilon();
    let mut f = S::zero();
    let mut tst1 = S::zero();
    let max_sweeps = 60 * n.max(10);
    let mut sweeps = 0usize;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                sweeps += 1;
                if sweeps > max_sweeps {
                    return Err(Error::IllConditioned("tridiagonal QL did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(S::one());
                if p < S::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = S::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = S::zero();
                let mut s2 = S::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..(i + 1) * n];
                    let col_i1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = col_i1[k];
                        col_i1[k] = s * col_i[k] + c * hk;
                        col_i[k] = c * col_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = S::zero();
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        vectors.extend_from_slice(&v[k * n..(k + 1) * n]);
    }
    Ok(TridiagonalEigen { values, vectors })
}

/// Natural cubic spline through `(xs, ys)`, evaluated at `at`.
pub fn natural_spline<S: Scalar>(xs: &[S], ys: &[S], at: &[S]) -> Result<Vec<S>> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::DimensionMismatch { expected: n, found: ys.len() });
    }
    if n < 3 {
        return Err(Error::InvalidArgument("spline needs at least 3 knots".into()));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("spline knots must be strictly increasing".into()));
    }
    // Second derivatives by the Thomas algorithm, natural end conditions.
    let two = S::of(2.0);
    let six = S::of(6.0);
    let mut m2 = vec![S::zero(); n];
    let mut cp = vec![S::zero(); n];
    let mut dp = vec![S::zero(); n];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let rhs = six * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        let diag = two * (h0 + h1) - h0 * cp[i - 1];
        cp[i] = h1 / diag;
        dp[i] = (rhs - h0 * dp[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m2[i] = dp[i] - cp[i] * m2[i + 1];
    }
    at.iter()
        .map(|&x| {
            if x < xs[0] || x > xs[n - 1] {
                return Err(Error::InvalidArgument(format!(
                    "spline evaluation at {x} outside [{}, {}]",
                    xs[0],
                    xs[n - 1]
                )));
            }
            let k = match xs.iter().position(|&k| k >= x) {
                Some(0) => 1,
                Some(k) => k,
                None => n - 1,
            };
            let h = xs[k] - xs[k - 1];
            let a = (xs[k] - x) / h;
            let b = (x - xs[k - 1]) / h;
            Ok(a * ys[k - 1] + b * ys[k] + ((a * a * a - a) * m2[k - 1] + (b * b * b - b) * m2[k]) * h * h / six)
        })
        .collect()
}

/// Dense row-major product `a (r×k) · b (k×c)`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], r: usize, k: usize, c: usize) -> Vec<S> {
    use rayon::prelude::*;
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    let mut out = vec![S::zero(); r * c];
    out.par_chunks_mut(c).enumerate().for_each(|(i, row)| {
        for (l, &ail) in a[i * k..(i + 1) * k].iter().enumerate() {
            if ail == S::zero() {
                continue;
            }
            for (o, &blj) in row.iter_mut().zip(&b[l * c..(l + 1) * c]) {
                *o = *o + ail * blj;
            }
        }
    });
    out
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
pub fn cholesky_solve<S: Scalar>(a: &[S], b: &[S], n: usize) -> Result<Vec<S>> {
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > S::zero()) {
                    return Err(Error::IllConditioned("matrix is not positive definite".into()));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_eigen_reconstructs() {
        let diag = [2.0f64, -1.0, 0.5, 3.0, 1.0];
        let off = [0.3, -0.7, 1.1, 0.2];
        let eig = symmetric_tridiagonal_eigen(&diag, &off).unwrap();
        let n = diag.len();
        for k in 0..n {
            let v = &eig.vectors[k * n..(k + 1) * n];
            for i in 0..n {
                let mut av = diag[i] * v[i];
                if i > 0 {
                    av += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    av += off[i] * v[i + 1];
                }
                assert!((av - eig.values[k] * v[i]).abs() < 1e-12);
            }
            let norm: f64 = v.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spline_reproduces_cubics_in_the_interior() {
        let xs: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let at = [-0.33, 0.0, 0.71];
        let out = natural_spline(&xs, &ys, &at).unwrap();
        for (x, y) in at.iter().zip(out) {
            assert!((y - x * x).abs() < 1e-3);
        }
    }

    #[test]
    fn cholesky_solves_spd() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        let sol = cholesky_solve(&a, &b, 3).unwrap();
        for (s, e) in sol.iter().zip(x) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![2.0, 1.0, 4.0, 3.0]);
    }
}
