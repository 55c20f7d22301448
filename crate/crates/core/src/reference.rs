//! The reference diffusion `dX = -U'(X) dt + dB`: potential, invariant
//! measure `m ∝ exp(-2U)`, semigroup `P_t` and transition kernel `p_t(x, y)`
//! (density with respect to `m`).
//!
//! Two backends:
//!
//! * [`Backend::OuExact`] evaluates the closed-form Ornstein-Uhlenbeck kernel
//!   and applies `P_t` by Nyström quadrature against `m`. Gradients of `P_t u`
//!   are taken through the kernel (`∂_x p_t` is explicit), so they carry no
//!   finite-difference error. Accurate as long as `√t` is a few grid spacings.
//! * [`Backend::Spectral`] handles any tabulated potential through the
//!   eigendecomposition of a reversible birth-death generator on the grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{grad, grad_log, Grid, GridFunction, MDensity};
use crate::linalg::{natural_spline, symmetric_tridiagonal_eigen, TridiagonalEigen};
use crate::scalar::{log_sum_exp, Scalar};

/// Tolerance on the discrete curvature condition `2U'' ≥ κ`.
pub const CURVATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    OuExact,
    Spectral,
}

/// How the potential `U` is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential<S> {
    /// `U(x) = κx²/4`.
    Ou { kappa: S },
    /// Samples `(x, U(x))`, interpolated onto the grid by a natural cubic spline.
    Tabulated { x: Vec<S>, u: Vec<S> },
    /// `U ≡ 0` (uniform `m`, curvature 0). Only meaningful with `κ ≤ 0`.
    Flat,
}

#[derive(Debug, Clone)]
struct SpectralData<S> {
    eig: TridiagonalEigen<S>,
    sqrt_m: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct ReferenceProcess<S> {
    grid: Grid<S>,
    kappa: S,
    ou_kappa: Option<S>,
    potential: GridFunction<S>,
    m: Vec<S>,
    log_m: Vec<S>,
    lebesgue: Vec<S>,
    backend: Backend,
    spectral: Option<SpectralData<S>>,
}

/// Closed-form OU kernel with respect to `N(0, 1/κ)`.
pub fn ou_kernel<S: Scalar>(kappa: S, t: S, x: S, y: S) -> Result<S> {
    Ok(log_ou_kernel(kappa, t, x, y)?.exp())
}

/// `log p_t(x, y)` for the OU process, stable for large `κt`.
pub fn log_ou_kernel<S: Scalar>(kappa: S, t: S, x: S, y: S) -> Result<S> {
    let c = OuCoefficients::new(kappa, t)?;
    Ok(c.log_kernel(x, y))
}

/// `log p_t(x,y) = pref − c1 (x² + y²) + 2 c2 x y`.
#[derive(Debug, Clone, Copy)]
struct OuCoefficients<S> {
    pref: S,
    c1: S,
    c2: S,
}

impl<S: Scalar> OuCoefficients<S> {
    fn new(kappa: S, t: S) -> Result<Self> {
        if !(t > S::zero()) {
            return Err(Error::NonPositiveTime(t.f64()));
        }
        if !(kappa > S::zero()) {
            return Err(Error::InvalidArgument(format!("OU kernel needs kappa > 0, got {kappa}")));
        }
        let kt = kappa * t;
        let two = S::of(2.0);
        let pref = -(-(-kt).exp_m1()).ln() / two;
        let c1 = kappa / (two * kt.exp_m1());
        let c2 = kappa / (S::of(4.0) * (kt / two).sinh());
        Ok(Self { pref, c1, c2 })
    }

    #[inline]
    fn log_kernel(&self, x: S, y: S) -> S {
        self.pref - self.c1 * (x * x + y * y) + S::of(2.0) * self.c2 * x * y
    }
}

impl<S: Scalar> ReferenceProcess<S> {
    /// Builds the reference process; validates `2U'' ≥ κ` on the grid and the
    /// normalizability of `m`.
    pub fn new(grid: Grid<S>, kappa: S, potential: &Potential<S>, backend: Backend) -> Result<Self> {
        let xs = grid.points();
        let n = grid.len();
        let (u, ou_kappa) = match potential {
            Potential::Ou { kappa: k } => {
                let quarter = S::of(0.25);
                (xs.iter().map(|&x| *k * x * x * quarter).collect::<Vec<_>>(), Some(*k))
            }
            Potential::Tabulated { x, u } => (natural_spline(x, u, xs)?, None),
            Potential::Flat => (vec![S::zero(); n], None),
        };
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }

        let h = grid.spacing();
        let two = S::of(2.0);
        for i in 1..n - 1 {
            let second = (u[i + 1] - two * u[i] + u[i - 1]) / (h * h);
            if two * second < kappa - S::of(CURVATURE_TOL) {
                return Err(Error::Curvature { x: xs[i].f64(), value: (two * second).f64(), kappa: kappa.f64() });
            }
        }

        let log_w: Vec<S> = grid.quad().iter().zip(&u).map(|(&q, &ui)| q.ln() - two * ui).collect();
        let log_z = log_sum_exp(log_w.iter().copied());
        if !log_z.is_finite() {
            return Err(Error::NonNormalizable);
        }
        let log_m: Vec<S> = log_w.iter().map(|&l| l - log_z).collect();
        let m: Vec<S> = log_m.iter().map(|l| l.exp()).collect();
        let lebesgue: Vec<S> = u.iter().map(|&ui| (-two * ui - log_z).exp()).collect();

        let spectral = match backend {
            Backend::OuExact => {
                match ou_kappa {
                    Some(k) if (k - kappa).abs() <= S::of(1e-12) * k.abs().max(S::one()) && k > S::zero() => {}
                    _ => {
                        return Err(Error::InvalidArgument(
                            "OU_EXACT backend needs an OU potential with the same kappa > 0".into(),
                        ))
                    }
                }
                None
            }
            Backend::Spectral => Some(build_spectral(&grid, &u, &m)?),
        };

        Ok(Self {
            grid,
            kappa,
            ou_kappa: if backend == Backend::OuExact { ou_kappa } else { None },
            potential: GridFunction(u),
            m,
            log_m,
            lebesgue,
            backend,
            spectral,
        })
    }

    /// OU process on the symmetric domain `[-8/√κ, 8/√κ]` with `n` points.
    pub fn ou(kappa: S, n: usize, backend: Backend) -> Result<Self> {
        let grid = Grid::symmetric(S::of(8.0) / kappa.sqrt(), n)?;
        Self::new(grid, kappa, &Potential::Ou { kappa }, backend)
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn potential(&self) -> &GridFunction<S> {
        &self.potential
    }

    /// Quadrature weights of `m` (sum to 1).
    pub fn m(&self) -> &[S] {
        &self.m
    }

    pub fn log_m(&self) -> &[S] {
        &self.log_m
    }

    /// Lebesgue density of `m` at the nodes.
    pub fn lebesgue_density(&self) -> &[S] {
        &self.lebesgue
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Converts a Lebesgue density sampled on the grid to a density w.r.t. `m`.
    pub fn density_from_lebesgue(&self, values: &[S]) -> Result<MDensity<S>> {
        self.grid.check_len(values.len())?;
        MDensity::normalized(values.iter().zip(&self.lebesgue).map(|(&v, &l)| v / l).collect(), &self.m)
    }

    /// Lebesgue density of `ρ m`.
    pub fn lebesgue_from_density(&self, rho: &MDensity<S>) -> Vec<S> {
        rho.values().iter().zip(&self.lebesgue).map(|(&r, &l)| r * l).collect()
    }

    /// `log p_t(x_i, x_j)`.
    pub fn log_kernel(&self, t: S, i: usize, j: usize) -> Result<S> {
        match self.backend {
            Backend::OuExact => {
                let c = OuCoefficients::new(self.ou_kappa.expect("ou backend"), t)?;
                let x = self.grid.points();
                Ok(c.log_kernel(x[i], x[j]))
            }
            Backend::Spectral => {
                if !(t > S::zero()) {
                    return Err(Error::NonPositiveTime(t.f64()));
                }
                let sp = self.spectral.as_ref().expect("spectral data");
                let n = self.len();
                let mut acc = S::zero();
                for (k, &lam) in sp.eig.values.iter().enumerate() {
                    let v = &sp.eig.vectors[k * n..(k + 1) * n];
                    acc = acc + v[i] * v[j] * (t * lam).exp();
                }
                Ok((acc / (sp.sqrt_m[i] * sp.sqrt_m[j])).max(S::zero()).ln())
            }
        }
    }

    /// Row-major matrix of `log p_t(x_i, x_j)`.
    pub fn log_kernel_matrix(&self, t: S) -> Result<Vec<S>> {
        let n = self.len();
        match self.backend {
            Backend::OuExact => {
                let c = OuCoefficients::new(self.ou_kappa.expect("ou backend"), t)?;
                let x = self.grid.points();
                let mut out = vec![S::zero(); n * n];
                out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                    for (o, &y) in row.iter_mut().zip(x) {
                        *o = c.log_kernel(x[i], y);
                    }
                });
                Ok(out)
            }
            Backend::Spectral => {
                if !(t > S::zero()) {
                    return Err(Error::NonPositiveTime(t.f64()));
                }
                let sp = self.spectral.as_ref().expect("spectral data");
                let decay: Vec<S> = sp.eig.values.iter().map(|&l| (t * l).exp()).collect();
                let vec = &sp.eig.vectors;
                let mut out = vec![S::zero(); n * n];
                out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                    for (k, &d) in decay.iter().enumerate() {
                        if d == S::zero() {
                            continue;
                        }
                        let vk = &vec[k * n..(k + 1) * n];
                        let a = vk[i] * d;
                        for (o, &vj) in row.iter_mut().zip(vk) {
                            *o = *o + a * vj;
                        }
                    }
                    for (j, o) in row.iter_mut().enumerate() {
                        *o = (*o / (sp.sqrt_m[i] * sp.sqrt_m[j])).max(S::zero()).ln();
                    }
                });
                Ok(out)
            }
        }
    }

    /// `P_t u`. `t = 0` returns `u`.
    pub fn apply(&self, t: S, u: &[S]) -> Result<GridFunction<S>> {
        Ok(GridFunction(self.apply_with_grad(t, u)?.0))
    }

    /// `(P_t u, ∇P_t u)`.
    pub fn apply_with_grad(&self, t: S, u: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        self.grid.check_len(u.len())?;
        if t < S::zero() {
            return Err(Error::NonPositiveTime(t.f64()));
        }
        if t == S::zero() {
            let g = grad(&self.grid, u)?;
            return Ok((u.to_vec(), g.0));
        }
        match self.backend {
            Backend::OuExact => {
                let c = OuCoefficients::new(self.ou_kappa.expect("ou backend"), t)?;
                let x = self.grid.points();
                let two = S::of(2.0);
                let rows: Vec<(S, S)> = (0..self.len())
                    .into_par_iter()
                    .map(|i| {
                        let (mut val, mut der) = (S::zero(), S::zero());
                        for j in 0..x.len() {
                            let w = (c.log_kernel(x[i], x[j]) + self.log_m[j]).exp() * u[j];
                            val = val + w;
                            der = der + w * (two * c.c2 * x[j] - two * c.c1 * x[i]);
                        }
                        (val, der)
                    })
                    .collect();
                Ok(rows.into_iter().unzip())
            }
            Backend::Spectral => {
                let out = self.spectral_apply(t, u);
                let g = grad(&self.grid, &out)?;
                Ok((out, g.0))
            }
        }
    }

    /// `log P_t u` from `log u` (entries may be `-inf`).
    pub fn log_apply(&self, t: S, log_u: &[S]) -> Result<Vec<S>> {
        Ok(self.log_apply_with_grad(t, log_u)?.0)
    }

    /// `(log P_t u, ∇ log P_t u)` from `log u`. Nodes where `P_t u = 0` get
    /// gradient 0.
    pub fn log_apply_with_grad(&self, t: S, log_u: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        self.grid.check_len(log_u.len())?;
        if let Some(i) = log_u.iter().position(|v| v.is_nan() || *v == S::infinity()) {
            return Err(Error::NonFinite(i));
        }
        if t < S::zero() {
            return Err(Error::NonPositiveTime(t.f64()));
        }
        if t == S::zero() {
            let g = grad_log(&self.grid, log_u)?;
            return Ok((log_u.to_vec(), g.0));
        }
        match self.backend {
            Backend::OuExact => {
                let c = OuCoefficients::new(self.ou_kappa.expect("ou backend"), t)?;
                let x = self.grid.points();
                let two = S::of(2.0);
                let base: Vec<S> = (0..x.len()).map(|j| log_u[j] + self.log_m[j] - c.c1 * x[j] * x[j]).collect();
                let rows: Vec<(S, S)> = (0..x.len())
                    .into_par_iter()
                    .map(|i| {
                        let slope = two * c.c2 * x[i];
                        let mut mx = S::neg_infinity();
                        for j in 0..x.len() {
                            let l = base[j] + slope * x[j];
                            if l > mx {
                                mx = l;
                            }
                        }
                        if mx == S::neg_infinity() {
                            return (mx, S::zero());
                        }
                        let (mut sum, mut first) = (S::zero(), S::zero());
                        for j in 0..x.len() {
                            let w = (base[j] + slope * x[j] - mx).exp();
                            sum = sum + w;
                            first = first + w * x[j];
                        }
                        let log_val = c.pref - c.c1 * x[i] * x[i] + mx + sum.ln();
                        let der = two * c.c2 * first / sum - two * c.c1 * x[i];
                        (log_val, der)
                    })
                    .collect();
                Ok(rows.into_iter().unzip())
            }
            Backend::Spectral => {
                let mx = log_u.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
                if mx == S::neg_infinity() {
                    return Ok((log_u.to_vec(), vec![S::zero(); log_u.len()]));
                }
                let u: Vec<S> = log_u.iter().map(|&l| (l - mx).exp()).collect();
                let out = self.spectral_apply(t, &u);
                let log_out: Vec<S> = out.iter().map(|&v| v.max(S::zero()).ln() + mx).collect();
                let g = grad_log(&self.grid, &log_out)?;
                Ok((log_out, g.0))
            }
        }
    }

    fn spectral_apply(&self, t: S, u: &[S]) -> Vec<S> {
        let sp = self.spectral.as_ref().expect("spectral data");
        let n = self.len();
        // The constant mode is handled exactly; only the centred part goes
        // through the eigenvectors, whose roundoff is amplified by 1/√m.
        let mean: S = u.iter().zip(&self.m).map(|(&a, &b)| a * b).sum();
        let scaled: Vec<S> = u.iter().zip(&sp.sqrt_m).map(|(&a, &b)| (a - mean) * b).collect();
        let mut out = vec![S::zero(); n];
        for (k, &lam) in sp.eig.values.iter().enumerate() {
            let d = (t * lam).exp();
            if d == S::zero() {
                continue;
            }
            let v = &sp.eig.vectors[k * n..(k + 1) * n];
            let coef: S = v.iter().zip(&scaled).map(|(&a, &b)| a * b).sum::<S>() * d;
            for (o, &vi) in out.iter_mut().zip(v) {
                *o = *o + coef * vi;
            }
        }
        out.iter_mut().zip(&sp.sqrt_m).for_each(|(o, &s)| *o = *o / s + mean);
        // The exact discrete semigroup is positivity preserving; drop the
        // roundoff that leaks below zero.
        if u.iter().all(|&v| v >= S::zero()) {
            out.iter_mut().for_each(|o| *o = o.max(S::zero()));
        }
        out
    }
}

/// Birth-death generator with rates `exp(U_i − U_j) / (2h·quad_i)` between
/// neighbours: reversible w.r.t. `m` exactly, consistent with `½Δ − U'∇`.
/// Its `m`-symmetrization has off-diagonal `1/(2h√(quad_i quad_j))`.
fn build_spectral<S: Scalar>(grid: &Grid<S>, u: &[S], m: &[S]) -> Result<SpectralData<S>> {
    let n = grid.len();
    let h = grid.spacing();
    let q = grid.quad();
    let two = S::of(2.0);
    let rate = |i: usize, j: usize| (u[i] - u[j]).exp() / (two * h * q[i]);
    let mut diag = vec![S::zero(); n];
    for (i, d) in diag.iter_mut().enumerate() {
        if i > 0 {
            *d = *d - rate(i, i - 1);
        }
        if i + 1 < n {
            *d = *d - rate(i, i + 1);
        }
    }
    let off: Vec<S> = (0..n - 1).map(|i| S::one() / (two * h * (q[i] * q[i + 1]).sqrt())).collect();
    let eig = symmetric_tridiagonal_eigen(&diag, &off)?;
    Ok(SpectralData { eig, sqrt_m: m.iter().map(|v| v.sqrt()).collect() })
}

/// Outcome of a pointwise inequality scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport<S> {
    pub instances: usize,
    /// `max(lhs − rhs − slack)` over the scanned points.
    pub max_violation: S,
    pub slack: S,
    /// Location (or pair of locations) of the largest violation.
    pub worst: (S, S),
}

impl<S: Scalar> CheckReport<S> {
    pub fn passed(&self) -> bool {
        self.max_violation <= S::zero()
    }
}

/// `|∇P_t u|² ≤ e^{−κt} P_t(|∇u|²)` on the bulk `|x| ≤ L/2`.
/// The slack is `1e−3 · max(rhs)` over the scanned points.
pub fn bakry_emery_check<S: Scalar>(reference: &ReferenceProcess<S>, t: S, u: &[S]) -> Result<CheckReport<S>> {
    let grid = reference.grid();
    let (_, dpu) = reference.apply_with_grad(t, u)?;
    let du = grad(grid, u)?;
    let du2: Vec<S> = du.values().iter().map(|d| *d * *d).collect();
    let rhs_base = reference.apply(t, &du2)?;
    let decay = (-reference.kappa() * t).exp();
    let radius = (grid.b() - grid.a()) / S::of(4.0);
    let bulk: Vec<usize> = grid.bulk(radius).collect();
    let scale = bulk.iter().map(|&i| rhs_base.values()[i] * decay).fold(S::zero(), |a, b| a.max(b.abs()));
    let slack = S::of(1e-3) * scale;
    let mut report =
        CheckReport { instances: bulk.len(), max_violation: S::neg_infinity(), slack, worst: (S::zero(), S::zero()) };
    for &i in &bulk {
        let lhs = dpu[i] * dpu[i];
        let rhs = decay * rhs_base.values()[i];
        let v = lhs - rhs - slack;
        if v > report.max_violation {
            report.max_violation = v;
            report.worst = (grid.points()[i], grid.points()[i]);
        }
    }
    Ok(report)
}

/// `p_t(x, y) ≥ exp(−κ|x−y|² / (2(e^{κt/2} − 1)))` on bulk pairs; the slack is
/// relative (`1e−3` of the bound).
pub fn kernel_lower_bound_check<S: Scalar>(reference: &ReferenceProcess<S>, t: S) -> Result<CheckReport<S>> {
    let kappa = reference.kappa();
    if !(kappa > S::zero()) {
        return Err(Error::InvalidArgument("kernel lower bound needs kappa > 0".into()));
    }
    let grid = reference.grid();
    let radius = (grid.b() - grid.a()) / S::of(4.0);
    let bulk: Vec<usize> = grid.bulk(radius).collect();
    let denom = S::of(2.0) * (kappa * t / S::of(2.0)).exp_m1();
    let x = grid.points();
    let mut report = CheckReport {
        instances: 0,
        max_violation: S::neg_infinity(),
        slack: S::of(1e-3),
        worst: (S::zero(), S::zero()),
    };
    for &i in &bulk {
        for &j in &bulk {
            let d = x[i] - x[j];
            let bound = (-kappa * d * d / denom).exp();
            let p = reference.log_kernel(t, i, j)?.exp();
            let v = bound - p - S::of(1e-3) * bound;
            report.instances += 1;
            if v > report.max_violation {
                report.max_violation = v;
                report.worst = (x[i], x[j]);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ou(n: usize, backend: Backend) -> ReferenceProcess<f64> {
        ReferenceProcess::ou(1.0, n, backend).unwrap()
    }

    fn bulk_max(r: &ReferenceProcess<f64>, v: &[f64]) -> f64 {
        r.grid().bulk(4.0).map(|i| v[i].abs()).fold(0.0, f64::max)
    }

    #[test]
    fn kernel_value_at_ln2() {
        let p = ou_kernel(1.0, 2f64.ln(), 0.0, 0.0).unwrap();
        assert!((p - 2f64.sqrt()).abs() < 1e-12);
        assert!(ou_kernel(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(ou_kernel(1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_is_symmetric_and_matches_display() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, y, t): (f64, f64, f64) =
                (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.05..5.0));
            let k = 1.3;
            let p = ou_kernel(k, t, x, y).unwrap();
            assert!((p - ou_kernel(k, t, y, x).unwrap()).abs() < 1e-12 * p.max(1.0));
            let direct = (1.0 - (-k * t).exp()).powf(-0.5)
                * (-k * (x * x - 2.0 * (k * t / 2.0).exp() * x * y + y * y) / (2.0 * ((k * t).exp() - 1.0))).exp();
            assert!((p - direct).abs() < 1e-10 * direct.max(1e-300));
        }
    }

    #[test]
    fn ou_invariant_measure_is_gaussian() {
        let r = ou(801, Backend::OuExact);
        for (x, l) in r.grid().points().iter().zip(r.lebesgue_density()) {
            let exact = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((l - exact).abs() < 1e-10);
        }
        assert!((r.m().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_stochastic_in_the_bulk() {
        let r = ou(801, Backend::OuExact);
        let ones = vec![1.0; 801];
        let p1 = r.apply(1.0, &ones).unwrap();
        let dev: Vec<f64> = p1.values().iter().map(|v| v - 1.0).collect();
        assert!(bulk_max(&r, &dev) < 1e-10);
    }

    #[test]
    fn flat_potential_gives_uniform_m() {
        let grid = Grid::new(0.0f64, 1.0, 51).unwrap();
        let r = ReferenceProcess::new(grid, 0.0, &Potential::Flat, Backend::Spectral).unwrap();
        for (i, &w) in r.m().iter().enumerate() {
            let expect = if i == 0 || i == 50 { 0.01 } else { 0.02 };
            assert!((w - expect).abs() < 1e-14);
        }
        assert!(r.lebesgue_density().iter().all(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn construction_rejections() {
        let grid = Grid::symmetric(4.0, 101).unwrap();
        // Curvature 1 cannot satisfy kappa = 2.
        let err = ReferenceProcess::new(grid.clone(), 2.0, &Potential::Ou { kappa: 1.0 }, Backend::Spectral);
        assert!(matches!(err, Err(Error::Curvature { .. })));
        let err = ReferenceProcess::new(grid.clone(), 0.0, &Potential::Flat, Backend::OuExact);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let xs: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        let concave: Vec<f64> = xs.iter().map(|x| -x * x).collect();
        let err = ReferenceProcess::new(
            grid.clone(),
            0.0,
            &Potential::Tabulated { x: xs.clone(), u: concave },
            Backend::Spectral,
        );
        assert!(matches!(err, Err(Error::Curvature { .. })));
        let huge: Vec<f64> = xs.iter().map(|x| 1e6 * x * x).collect();
        let err = ReferenceProcess::new(grid, 0.0, &Potential::Tabulated { x: xs, u: huge }, Backend::Spectral);
        assert!(err.is_ok() || matches!(err, Err(Error::NonNormalizable)));
    }

    #[test]
    fn spectral_matches_exact_kernel() {
        let exact = ou(801, Backend::OuExact);
        let spec = ou(801, Backend::Spectral);
        // Compared as transition densities p_t(x, y) m(y) w.r.t. Lebesgue.
        let mut worst: f64 = 0.0;
        for i in (200..=600).step_by(10) {
            for j in (200..=600).step_by(10) {
                let a = exact.log_kernel(1.0, i, j).unwrap().exp();
                let b = spec.log_kernel(1.0, i, j).unwrap().exp();
                worst = worst.max((a - b).abs() * exact.lebesgue_density()[j]);
            }
        }
        assert!(worst < 1e-4, "kernel mismatch {worst}");
    }

    #[test]
    fn spectral_semigroup_rows_sum_to_one() {
        let spec = ou(401, Backend::Spectral);
        let ones = vec![1.0; 401];
        for t in [0.1, 1.0, 10.0] {
            let p = spec.apply(t, &ones).unwrap();
            let dev = p.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-10, "t={t}: {dev}");
        }
    }

    fn random_u(rng: &mut ChaCha8Rng, r: &ReferenceProcess<f64>) -> Vec<f64> {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0), rng.gen_range(0.0..6.0));
        r.grid().points().iter().map(|&x| 1.0 + a * (b * x + c).sin() * (-x * x / 20.0).exp()).collect()
    }

    #[test]
    fn mass_and_self_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for backend in [Backend::OuExact, Backend::Spectral] {
            let r = ou(401, backend);
            for t in [0.1, 1.0, 10.0] {
                let u = random_u(&mut rng, &r);
                let v = random_u(&mut rng, &r);
                let pu = r.apply(t, &u).unwrap();
                let pv = r.apply(t, &v).unwrap();
                let mass = |f: &[f64]| f.iter().zip(r.m()).map(|(a, b)| a * b).sum::<f64>();
                assert!((mass(pu.values()) - mass(&u)).abs() < 1e-8);
                let lhs: f64 = pu.values().iter().zip(&v).zip(r.m()).map(|((a, b), w)| a * b * w).sum();
                let rhs: f64 = u.iter().zip(pv.values()).zip(r.m()).map(|((a, b), w)| a * b * w).sum();
                assert!((lhs - rhs).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn semigroup_property_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for backend in [Backend::OuExact, Backend::Spectral] {
            let r = ou(401, backend);
            let u = random_u(&mut rng, &r);
            let two_step = r.apply(0.3, r.apply(0.5, &u).unwrap().values()).unwrap();
            let one_step = r.apply(0.8, &u).unwrap();
            let diff: Vec<f64> = two_step.values().iter().zip(one_step.values()).map(|(a, b)| a - b).collect();
            assert!(bulk_max(&r, &diff) < 1e-7, "{backend:?}");
            let pos: Vec<f64> = u.iter().map(|v| (v - 1.0).max(0.0)).collect();
            let p = r.apply(0.2, &pos).unwrap();
            assert!(p.values().iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn ergodic_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = ou(401, Backend::Spectral);
        let u = random_u(&mut rng, &r);
        let mean: f64 = u.iter().zip(r.m()).map(|(a, b)| a * b).sum();
        let p = r.apply(40.0, &u).unwrap();
        assert!(p.values().iter().all(|v| (v - mean).abs() < 1e-6));
    }

    #[test]
    fn log_apply_agrees_with_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (backend, grad_tol) in [(Backend::OuExact, 1e-8), (Backend::Spectral, 1e-3)] {
            let r = ou(401, backend);
            let u = random_u(&mut rng, &r);
            let log_u: Vec<f64> = u.iter().map(|v| v.ln()).collect();
            let (lp, dlp) = r.log_apply_with_grad(0.7, &log_u).unwrap();
            let (p, dp) = r.apply_with_grad(0.7, &u).unwrap();
            for i in r.grid().bulk(4.0) {
                assert!((lp[i].exp() - p[i]).abs() < 1e-10);
                assert!((dlp[i] - dp[i] / p[i]).abs() < grad_tol);
            }
        }
    }

    #[test]
    fn ou_gradient_of_linear_function() {
        let r = ou(801, Backend::OuExact);
        let x = r.grid().points().to_vec();
        let (p, dp) = r.apply_with_grad(1.0, &x).unwrap();
        let e = (-0.5f64).exp();
        for i in r.grid().bulk(4.0) {
            assert!((p[i] - e * x[i]).abs() < 1e-9);
            assert!((dp[i] - e).abs() < 1e-9);
        }
    }

    #[test]
    fn bakry_emery_cases() {
        let r = ou(801, Backend::OuExact);
        let c = vec![2.0; 801];
        let rep = bakry_emery_check(&r, 1.0, &c).unwrap();
        assert!(rep.max_violation.abs() < 1e-12);
        let x = r.grid().points().to_vec();
        let rep = bakry_emery_check(&r, 1.0, &x).unwrap();
        // Equality case: the residual is the slack itself up to 1e-4.
        assert!((rep.max_violation + rep.slack).abs() < 1e-4);
        let s: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        assert!(bakry_emery_check(&r, 0.5, &s).unwrap().passed());
        let spec = ou(401, Backend::Spectral);
        let s: Vec<f64> = spec.grid().points().iter().map(|v| v.sin()).collect();
        assert!(bakry_emery_check(&spec, 0.5, &s).unwrap().passed());
    }

    #[test]
    fn gaussian_lower_bound() {
        let r = ou(161, Backend::OuExact);
        let rep = kernel_lower_bound_check(&r, 1.0).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.instances > 1000);
        let p0 = r.log_kernel(50.0, 80, 80).unwrap().exp();
        assert!((p0 - 1.0).abs() < 1e-12);
    }
}
