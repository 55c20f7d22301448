//! Exact one-dimensional optimal transport (monotone rearrangement), the
//! displacement geodesic, and the small-horizon behaviour of the cost.

use rayon::prelude::*;

use crate::bridge::{sinkhorn_solve, time_integral};
use crate::error::{Error, Result};
use crate::grid::{fisher_from_log, relative_entropy, MDensity};
use crate::inequalities::fit_slope;
use crate::linalg::cholesky_solve;
use crate::reference::ReferenceProcess;
use crate::scalar::Scalar;

/// Number of quantile samples for `W₂`.
pub const QUANTILE_SAMPLES: usize = 10_000;

/// Distribution on the grid with a piecewise-linear Lebesgue density, with
/// exact CDF and quantile function. Cumulative masses are kept from both ends
/// so both tails keep full relative precision.
#[derive(Debug, Clone)]
pub struct Distribution1d<S> {
    xs: Vec<S>,
    dens: Vec<S>,
    left: Vec<S>,
    right: Vec<S>,
    h: S,
}

impl<S: Scalar> Distribution1d<S> {
    /// From the Lebesgue density at the (uniform) nodes; renormalized.
    pub fn new(xs: &[S], dens: &[S]) -> Result<Self> {
        let n = xs.len();
        if dens.len() != n || n < 2 {
            return Err(Error::DimensionMismatch { expected: n, found: dens.len() });
        }
        if dens.iter().any(|&d| !(d >= S::zero()) || !d.is_finite()) {
            return Err(Error::InvalidArgument("density must be finite and non-negative".into()));
        }
        let h = xs[1] - xs[0];
        let seg: Vec<S> = dens.windows(2).map(|w| (w[0] + w[1]) * h / S::of(2.0)).collect();
        let total: S = seg.iter().copied().sum();
        if !(total > S::zero()) {
            return Err(Error::NotNormalized(total.f64()));
        }
        let dens: Vec<S> = dens.iter().map(|&d| d / total).collect();
        let mut left = vec![S::zero(); n];
        for i in 1..n {
            left[i] = left[i - 1] + seg[i - 1] / total;
        }
        let mut right = vec![S::zero(); n];
        for i in (0..n - 1).rev() {
            right[i] = right[i + 1] + seg[i] / total;
        }
        Ok(Self { xs: xs.to_vec(), dens, left, right, h })
    }

    pub fn from_density(rho: &MDensity<S>, reference: &ReferenceProcess<S>) -> Result<Self> {
        Self::new(reference.grid().points(), &reference.lebesgue_from_density(rho))
    }

    /// Density at `x`: cubic (Catmull-Rom) interpolation of the log-density
    /// where the four surrounding nodes are positive, linear otherwise.
    pub fn density_at(&self, x: S) -> S {
        let (i, s) = match self.locate(x) {
            Some(v) => v,
            None => return S::zero(),
        };
        let w = s / self.h;
        let n = self.dens.len();
        if i >= 1 && i + 2 < n && self.dens[i - 1..=i + 2].iter().all(|&d| d > S::zero()) {
            let l: Vec<S> = self.dens[i - 1..=i + 2].iter().map(|d| d.ln()).collect();
            let half = S::of(0.5);
            let (m0, m1) = ((l[2] - l[0]) * half, (l[3] - l[1]) * half);
            let (w2, w3) = (w * w, w * w * w);
            let h00 = S::of(2.0) * w3 - S::of(3.0) * w2 + S::one();
            let h10 = w3 - S::of(2.0) * w2 + w;
            let h01 = S::of(-2.0) * w3 + S::of(3.0) * w2;
            let h11 = w3 - w2;
            return (h00 * l[1] + h10 * m0 + h01 * l[2] + h11 * m1).exp();
        }
        self.dens[i] * (S::one() - w) + self.dens[i + 1] * w
    }

    fn locate(&self, x: S) -> Option<(usize, S)> {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return None;
        }
        let i = (((x - self.xs[0]) / self.h).floor().to_usize().unwrap_or(0)).min(n - 2);
        Some((i, x - self.xs[i]))
    }

    /// Mass of the segment part `[x_i, x_i + s]`.
    fn partial(&self, i: usize, s: S) -> S {
        let slope = (self.dens[i + 1] - self.dens[i]) / self.h;
        self.dens[i] * s + slope * s * s / S::of(2.0)
    }

    /// `(F(x), 1 − F(x))`, each accurate in its own tail.
    pub fn tails(&self, x: S) -> (S, S) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (S::zero(), S::one());
        }
        if x >= self.xs[n - 1] {
            return (S::one(), S::zero());
        }
        let (i, s) = self.locate(x).expect("inside");
        let p = self.partial(i, s);
        let seg = self.left[i + 1] - self.left[i];
        (self.left[i] + p, self.right[i + 1] + (seg - p))
    }

    /// Offset `s ∈ [0, h]` in segment `i` carrying mass `c` from its left end.
    fn solve_segment(&self, i: usize, c: S) -> S {
        let a = (self.dens[i + 1] - self.dens[i]) / (S::of(2.0) * self.h);
        let b = self.dens[i];
        let disc = (b * b + S::of(4.0) * a * c).max(S::zero()).sqrt();
        let denom = b + disc;
        let s = if denom > S::zero() { S::of(2.0) * c / denom } else { S::zero() };
        s.max(S::zero()).min(self.h)
    }

    /// `x` with `F(x) = p`.
    pub fn quantile_left(&self, p: S) -> S {
        let n = self.xs.len();
        if p <= S::zero() {
            return self.xs[self.left.iter().position(|&v| v > S::zero()).map_or(0, |k| k - 1)];
        }
        // Last node with left[i] < p.
        let i = self.left.partition_point(|&v| v < p).saturating_sub(1).min(n - 2);
        self.xs[i] + self.solve_segment(i, p - self.left[i])
    }

    /// `x` with `1 − F(x) = p`.
    pub fn quantile_right(&self, p: S) -> S {
        let n = self.xs.len();
        if p <= S::zero() {
            return self.xs[self.right.iter().rposition(|&v| v > S::zero()).map_or(n - 1, |k| k + 1)];
        }
        // First node with right[i+1] < p, i.e. the segment containing the point.
        let j = self.right.partition_point(|&v| v >= p);
        let i = j.saturating_sub(1).min(n - 2);
        let seg = self.left[i + 1] - self.left[i];
        self.xs[i] + self.solve_segment(i, seg - (p - self.right[i + 1]))
    }

    pub fn quantile(&self, q: S) -> S {
        if q <= S::of(0.5) {
            self.quantile_left(q)
        } else {
            self.quantile_right(S::one() - q)
        }
    }

    /// Monotone map `F_ν^{-1} ∘ F_μ` pushing `self` onto `target`.
    pub fn transport_to(&self, target: &Self, x: S) -> S {
        let (pl, pr) = self.tails(x);
        if pl <= pr {
            target.quantile_left(pl)
        } else {
            target.quantile_right(pr)
        }
    }

    pub fn mean(&self) -> S {
        let n = S::of_usize(QUANTILE_SAMPLES);
        (0..QUANTILE_SAMPLES).map(|k| self.quantile((S::of_usize(k) + S::of(0.5)) / n)).sum::<S>() / n
    }
}

/// `W₂²(μ, ν) = ∫₀¹ |F_μ^{-1}(q) − F_ν^{-1}(q)|² dq`, midpoint rule on
/// [`QUANTILE_SAMPLES`] quantile levels.
pub fn wasserstein2_1d<S: Scalar>(mu: &MDensity<S>, nu: &MDensity<S>, reference: &ReferenceProcess<S>) -> Result<S> {
    let a = Distribution1d::from_density(mu, reference)?;
    let b = Distribution1d::from_density(nu, reference)?;
    Ok(wasserstein2_between(&a, &b))
}

pub fn wasserstein2_between<S: Scalar>(a: &Distribution1d<S>, b: &Distribution1d<S>) -> S {
    let n = S::of_usize(QUANTILE_SAMPLES);
    (0..QUANTILE_SAMPLES)
        .map(|k| {
            let q = (S::of_usize(k) + S::of(0.5)) / n;
            let d = a.quantile(q) - b.quantile(q);
            d * d
        })
        .sum::<S>()
        / n
}

#[derive(Debug, Clone)]
pub struct GeodesicCurve<S> {
    pub t_grid: Vec<S>,
    pub densities: Vec<MDensity<S>>,
    /// Mass of each slice before renormalization.
    pub raw_mass: Vec<S>,
    pub w2sq: S,
    pub fisher: Vec<S>,
    /// `∫₀¹ ∫|∇log ρ_t⁰|²ρ_t⁰ dm dt`.
    pub fisher_integral: S,
}

/// Displacement interpolation between `μ` and `ν`: the law of
/// `(1−t)X + t T(X)` with `T = F_ν^{-1} ∘ F_μ`. The density at a node `x` is
/// evaluated exactly by change of variables at the preimage `y` of `x`
/// (found by bisection): `ρ_t(x) = d_μ(y) d_ν(T y) / ((1−t) d_ν(T y) + t d_μ(y))`.
pub fn displacement_geodesic<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    t_grid: &[S],
) -> Result<GeodesicCurve<S>> {
    if t_grid.iter().any(|&t| !(t >= S::zero() && t <= S::one())) {
        return Err(Error::InvalidArgument("times must lie in [0, 1]".into()));
    }
    for rho in [mu, nu] {
        let sup = rho.support();
        let first = sup.iter().position(|&s| s);
        let last = sup.iter().rposition(|&s| s);
        if let (Some(f), Some(l)) = (first, last) {
            if sup[f..=l].iter().any(|&s| !s) {
                return Err(Error::IllConditioned("geodesic needs connected supports".into()));
            }
        }
    }
    let a = Distribution1d::from_density(mu, reference)?;
    let b = Distribution1d::from_density(nu, reference)?;
    let w2sq = wasserstein2_between(&a, &b);
    let grid = reference.grid();
    let xs = grid.points();
    let leb = reference.lebesgue_density();
    let m = reference.m();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let slices: Vec<Result<(MDensity<S>, S, S)>> = t_grid
        .par_iter()
        .map(|&t| {
            let one_t = S::one() - t;
            let pos = |y: S| one_t * y + t * a.transport_to(&b, y);
            let (x_lo, x_hi) = (pos(lo), pos(hi));
            let vals: Vec<S> = xs
                .iter()
                .zip(leb)
                .map(|(&x, &l)| {
                    if x < x_lo || x > x_hi {
                        return S::zero();
                    }
                    let (mut y0, mut y1) = (lo, hi);
                    for _ in 0..80 {
                        let mid = (y0 + y1) / S::of(2.0);
                        if pos(mid) < x {
                            y0 = mid;
                        } else {
                            y1 = mid;
                        }
                    }
                    let y = (y0 + y1) / S::of(2.0);
                    let da = a.density_at(y);
                    let db = b.density_at(a.transport_to(&b, y));
                    let denom = one_t * db + t * da;
                    let d = if denom > S::zero() { da * db / denom } else { S::zero() };
                    d / l
                })
                .collect();
            let mass: S = vals.iter().zip(m).map(|(&v, &w)| v * w).sum();
            let rho = MDensity::normalized(vals, m)?;
            let log_rho: Vec<S> = rho.values().iter().map(|v| v.ln()).collect();
            let fisher = fisher_from_log(grid, &log_rho, m)?;
            Ok((rho, mass, fisher))
        })
        .collect();
    let mut densities = Vec::with_capacity(t_grid.len());
    let mut raw_mass = Vec::with_capacity(t_grid.len());
    let mut fisher = Vec::with_capacity(t_grid.len());
    for s in slices {
        let (rho, mass, f) = s?;
        densities.push(rho);
        raw_mass.push(mass);
        fisher.push(f);
    }
    let uniform = t_grid.len() >= 2
        && t_grid[0] == S::zero()
        && t_grid[t_grid.len() - 1] == S::one()
        && t_grid.windows(2).all(|w| ((w[1] - w[0]) - (t_grid[1] - t_grid[0])).abs() < S::of(1e-12));
    let fisher_integral = if uniform { time_integral(&fisher) } else { S::nan() };
    Ok(GeodesicCurve { t_grid: t_grid.to_vec(), densities, raw_mass, w2sq, fisher, fisher_integral })
}

/// Uniform grid of `n` times on `[0, 1]`.
pub fn uniform_times<S: Scalar>(n: usize) -> Vec<S> {
    (0..n).map(|k| S::of_usize(k) / S::of_usize(n - 1)).collect()
}

/// Geodesic Fisher integral on a 33-node time grid.
pub fn geodesic_fisher<S: Scalar>(mu: &MDensity<S>, nu: &MDensity<S>, reference: &ReferenceProcess<S>) -> Result<S> {
    Ok(displacement_geodesic(mu, nu, reference, &uniform_times(33))?.fisher_integral)
}

/// `(low, mid, high)` with `mid = T C_T − ½W₂²`, `low = 0` and
/// `high = (T/2)(H(μ)+H(ν)) + (T²/8) ∫∫|∇log ρ_t⁰|²ρ_t⁰`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimeSandwich<S> {
    pub horizon: S,
    pub low: S,
    pub mid: S,
    pub high: S,
}

impl<S: Scalar> ShortTimeSandwich<S> {
    pub fn holds(&self, slack: S) -> bool {
        self.mid >= self.low - slack && self.mid <= self.high + slack
    }
}

/// Inputs shared by the short-time checks: entropies, `W₂²` and the geodesic
/// Fisher integral.
#[derive(Debug, Clone, Copy)]
pub struct ShortTimeData<S> {
    pub entropy_mu: S,
    pub entropy_nu: S,
    pub w2sq: S,
    pub geodesic_fisher: S,
}

impl<S: Scalar> ShortTimeData<S> {
    pub fn compute(mu: &MDensity<S>, nu: &MDensity<S>, reference: &ReferenceProcess<S>) -> Result<Self> {
        let m = reference.m();
        let curve = displacement_geodesic(mu, nu, reference, &uniform_times(33))?;
        Ok(Self {
            entropy_mu: relative_entropy(mu, m)?,
            entropy_nu: relative_entropy(nu, m)?,
            w2sq: curve.w2sq,
            geodesic_fisher: curve.fisher_integral,
        })
    }

    pub fn sandwich(&self, horizon: S, cost: S) -> ShortTimeSandwich<S> {
        ShortTimeSandwich {
            horizon,
            low: S::zero(),
            mid: horizon * cost - self.w2sq / S::of(2.0),
            high: horizon / S::of(2.0) * (self.entropy_mu + self.entropy_nu)
                + horizon * horizon / S::of(8.0) * self.geodesic_fisher,
        }
    }
}

pub fn check_shorttime_bound<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    horizon: S,
) -> Result<ShortTimeSandwich<S>> {
    let data = ShortTimeData::compute(mu, nu, reference)?;
    let cost = sinkhorn_solve(mu, nu, horizon, reference, S::of(1e-12), 100_000)?.entropic_cost();
    Ok(data.sandwich(horizon, cost))
}

/// Coefficients of the least-squares quadratic `T C_T ≈ a + bT + cT²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorFit<S> {
    pub a: S,
    pub b: S,
    pub c: S,
}

pub fn fit_quadratic<S: Scalar>(points: &[(S, S)]) -> Result<TaylorFit<S>> {
    if points.len() < 3 {
        return Err(Error::IllConditioned("quadratic fit needs three points".into()));
    }
    let mut ata = [S::zero(); 9];
    let mut atb = [S::zero(); 3];
    for &(x, y) in points {
        let row = [S::one(), x, x * x];
        for i in 0..3 {
            atb[i] = atb[i] + row[i] * y;
            for j in 0..3 {
                ata[i * 3 + j] = ata[i * 3 + j] + row[i] * row[j];
            }
        }
    }
    let sol = cholesky_solve(&ata, &atb, 3).map_err(|_| Error::IllConditioned("horizons too clustered".into()))?;
    Ok(TaylorFit { a: sol[0], b: sol[1], c: sol[2] })
}

/// Least-squares quadratic fit of `T C_T` over small horizons.
pub fn taylor_fit<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    ts: &[S],
) -> Result<TaylorFit<S>> {
    if ts.len() < 5 {
        return Err(Error::InvalidArgument("need at least five horizons".into()));
    }
    let spread = ts.iter().copied().fold(S::neg_infinity(), S::max) - ts.iter().copied().fold(S::infinity(), S::min);
    if !(spread > S::of(1e-3)) {
        return Err(Error::IllConditioned("horizons too clustered".into()));
    }
    let points: Vec<Result<(S, S)>> = ts
        .par_iter()
        .map(|&t| Ok((t, t * sinkhorn_solve(mu, nu, t, reference, S::of(1e-12), 100_000)?.entropic_cost())))
        .collect();
    fit_quadratic(&points.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Slope of `log(T C_T − ½W₂²)` against `log T`; approaches 1 as `T → 0`.
pub fn lower_gap_order<S: Scalar>(data: &ShortTimeData<S>, ts: &[S], costs: &[S]) -> Result<S> {
    let pts: Vec<(S, S)> = ts
        .iter()
        .zip(costs)
        .map(|(&t, &c)| (t.ln(), data.sandwich(t, c).mid.max(S::min_positive_value()).ln()))
        .collect();
    fit_slope(&pts)
}
