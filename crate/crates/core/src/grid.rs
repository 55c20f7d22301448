//! Uniform grids on a truncated interval, trapezoid quadrature, finite
//! differences and the entropy functionals built on top of them.

use crate::error::{Error, Result};
use crate::scalar::{xlogx, Scalar};

/// Uniform grid on `[a, b]` with trapezoid weights against Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S> {
    a: S,
    b: S,
    h: S,
    points: Vec<S>,
    quad: Vec<S>,
}

impl<S: Scalar> Grid<S> {
    /// Builds the grid `a, a + h, ..., b` with `n` points.
    pub fn new(a: S, b: S, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n}")));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGrid(format!("need a < b, got a = {a}, b = {b}")));
        }
        let h = (b - a) / S::of_usize(n - 1);
        let points = (0..n).map(|i| if i == n - 1 { b } else { a + S::of_usize(i) * h }).collect();
        let half = h / S::of(2.0);
        let quad = (0..n).map(|i| if i == 0 || i == n - 1 { half } else { h }).collect();
        Ok(Self { a, b, h, points, quad })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: S, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn a(&self) -> S {
        self.a
    }

    pub fn b(&self) -> S {
        self.b
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> S {
        self.h
    }

    pub fn points(&self) -> &[S] {
        &self.points
    }

    /// Trapezoid weights w.r.t. Lebesgue measure.
    pub fn quad(&self) -> &[S] {
        &self.quad
    }

    /// Trapezoid rule for `∫ f dx`.
    pub fn integrate(&self, f: &[S]) -> S {
        debug_assert_eq!(f.len(), self.len());
        f.iter().zip(&self.quad).map(|(&v, &w)| v * w).sum()
    }

    /// Tabulates `f` on the grid.
    pub fn map(&self, f: impl Fn(S) -> S) -> GridFunction<S> {
        GridFunction(self.points.iter().map(|&x| f(x)).collect())
    }

    /// Index range of points with `|x| <= radius`.
    pub fn bulk(&self, radius: S) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().enumerate().filter(move |(_, &x)| x.abs() <= radius).map(|(i, _)| i)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.len(), found: len })
        }
    }
}

/// Real values on the grid nodes (potentials, test functions, log-densities).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFunction<S>(pub Vec<S>);

impl<S: Scalar> GridFunction<S> {
    pub fn constant(n: usize, c: S) -> Self {
        Self(vec![c; n])
    }

    pub fn values(&self) -> &[S] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }
}

impl<S> From<Vec<S>> for GridFunction<S> {
    fn from(v: Vec<S>) -> Self {
        Self(v)
    }
}

/// A probability density with respect to the invariant measure `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MDensity<S> {
    values: Vec<S>,
}

/// Tolerance on `∫ ρ dm = 1` accepted by [`MDensity::new`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

impl<S: Scalar> MDensity<S> {
    /// Validates non-negativity and `∫ ρ dm = 1` against the weights `m`.
    pub fn new(values: Vec<S>, m: &[S]) -> Result<Self> {
        check_density(&values, m)?;
        let mass = integrate_m(&values, m)?;
        if (mass.f64() - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(mass.f64()));
        }
        Ok(Self { values })
    }

    /// Rescales non-negative values so that `∫ ρ dm = 1`.
    pub fn normalized(mut values: Vec<S>, m: &[S]) -> Result<Self> {
        check_density(&values, m)?;
        let mass = integrate_m(&values, m)?;
        if !(mass > S::zero()) || !mass.is_finite() {
            return Err(Error::NotNormalized(mass.f64()));
        }
        values.iter_mut().for_each(|v| *v = *v / mass);
        Ok(Self { values })
    }

    /// The constant density `ρ ≡ 1`, i.e. `μ = m`.
    pub fn uniform(n: usize) -> Self {
        Self { values: vec![S::one(); n] }
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest index set where `ρ > 0`, as a mask.
    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > S::zero()).collect()
    }

    /// `L¹(m)` distance to another density.
    pub fn l1_distance(&self, other: &Self, m: &[S]) -> S {
        self.values.iter().zip(&other.values).zip(m).map(|((&a, &b), &w)| (a - b).abs() * w).sum()
    }
}

fn check_density<S: Scalar>(values: &[S], m: &[S]) -> Result<()> {
    if values.len() != m.len() {
        return Err(Error::DimensionMismatch { expected: m.len(), found: values.len() });
    }
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(index));
        }
        if v < S::zero() {
            return Err(Error::NegativeDensity { index, value: v.f64() });
        }
    }
    Ok(())
}

/// `∫ f dm = Σ f_i m_i`.
pub fn integrate_m<S: Scalar>(f: &[S], m: &[S]) -> Result<S> {
    if f.len() != m.len() {
        return Err(Error::DimensionMismatch { expected: m.len(), found: f.len() });
    }
    Ok(f.iter().zip(m).map(|(&a, &b)| a * b).sum())
}

/// Central differences in the interior, one-sided second order at the ends.
pub fn grad<S: Scalar>(grid: &Grid<S>, f: &[S]) -> Result<GridFunction<S>> {
    grid.check_len(f.len())?;
    let n = f.len();
    let h2 = grid.spacing() * S::of(2.0);
    let (three, four) = (S::of(3.0), S::of(4.0));
    let mut out = vec![S::zero(); n];
    out[0] = (-three * f[0] + four * f[1] - f[2]) / h2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    out[n - 1] = (three * f[n - 1] - four * f[n - 2] + f[n - 3]) / h2;
    Ok(GridFunction(out))
}

/// `∇u / u` from `log u`: the [`grad`] stencil applied to `log u` (exact when
/// `log u` is quadratic). Next to zeros of `u` (`-inf` neighbours) the stencil
/// is applied to `u / u_i` instead. Nodes with `u = 0` get gradient 0.
pub fn grad_log<S: Scalar>(grid: &Grid<S>, log_u: &[S]) -> Result<GridFunction<S>> {
    grid.check_len(log_u.len())?;
    let n = log_u.len();
    let h2 = grid.spacing() * S::of(2.0);
    let (three, four) = (S::of(3.0), S::of(4.0));
    let ninf = S::neg_infinity();
    let rel = |j: usize, i: usize| (log_u[j] - log_u[i]).exp();
    let mut out = vec![S::zero(); n];
    for i in 0..n {
        if log_u[i] == ninf {
            continue;
        }
        let (j, k) = if i == 0 {
            (1, 2)
        } else if i == n - 1 {
            (n - 2, n - 3)
        } else {
            (i + 1, i - 1)
        };
        let finite = log_u[j] != ninf && log_u[k] != ninf;
        out[i] = if i == 0 {
            if finite {
                (-three * log_u[0] + four * log_u[1] - log_u[2]) / h2
            } else {
                (-three + four * rel(1, 0) - rel(2, 0)) / h2
            }
        } else if i == n - 1 {
            if finite {
                (three * log_u[i] - four * log_u[n - 2] + log_u[n - 3]) / h2
            } else {
                (three - four * rel(n - 2, i) + rel(n - 3, i)) / h2
            }
        } else if finite {
            (log_u[i + 1] - log_u[i - 1]) / h2
        } else {
            (rel(i + 1, i) - rel(i - 1, i)) / h2
        };
    }
    Ok(GridFunction(out))
}

/// `H(ρm | m) = ∫ ρ log ρ dm` with `0 log 0 = 0`.
pub fn relative_entropy<S: Scalar>(rho: &MDensity<S>, m: &[S]) -> Result<S> {
    check_density(rho.values(), m)?;
    Ok(rho.values().iter().zip(m).map(|(&r, &w)| xlogx(r) * w).sum())
}

/// `∫ |∇ log ρ|² ρ dm`; nodes where `ρ = 0` contribute nothing.
pub fn fisher_information<S: Scalar>(grid: &Grid<S>, rho: &MDensity<S>, m: &[S]) -> Result<S> {
    check_density(rho.values(), m)?;
    let log_rho: Vec<S> = rho.values().iter().map(|v| v.ln()).collect();
    fisher_from_log(grid, &log_rho, m)
}

/// Fisher information from `log ρ` (any additive constant in `log ρ` is
/// irrelevant, the density itself is `exp(log ρ)` up to that constant).
pub fn fisher_from_log<S: Scalar>(grid: &Grid<S>, log_rho: &[S], m: &[S]) -> Result<S> {
    let g = grad_log(grid, log_rho)?;
    let shift = log_rho.iter().fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
    // Normalize so the result does not depend on the constant.
    let weights: Vec<S> = log_rho.iter().map(|&l| (l - shift).exp()).collect();
    let mass = integrate_m(&weights, m)?;
    let raw: S = g.values().iter().zip(&weights).zip(m).map(|((&d, &r), &w)| d * d * r * w).sum();
    Ok(raw / mass)
}
