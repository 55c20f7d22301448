//! Mean-field Schrödinger problem in one dimension: the reference dynamics
//! carries the self-consistent drift `−W' ∗ ρ_t`. Densities here are with
//! respect to Lebesgue measure on the grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::inequalities::fit_slope;
use crate::scalar::{log_sum_exp, xlogx, Scalar};

/// Even interaction potential with `2W'' ≥ κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionPotential<S> {
    /// `κz²/4`.
    Quadratic { kappa: S },
    /// `κz²/4 + εz⁴`.
    QuadraticQuartic { kappa: S, eps: S },
}

impl<S: Scalar> InteractionPotential<S> {
    pub fn kappa(&self) -> S {
        match *self {
            Self::Quadratic { kappa } | Self::QuadraticQuartic { kappa, .. } => kappa,
        }
    }

    fn eps(&self) -> S {
        match *self {
            Self::Quadratic { .. } => S::zero(),
            Self::QuadraticQuartic { eps, .. } => eps,
        }
    }

    pub fn w(&self, z: S) -> S {
        let z2 = z * z;
        self.kappa() * z2 / S::of(4.0) + self.eps() * z2 * z2
    }

    pub fn dw(&self, z: S) -> S {
        self.kappa() * z / S::of(2.0) + S::of(4.0) * self.eps() * z * z * z
    }

    pub fn d2w(&self, z: S) -> S {
        self.kappa() / S::of(2.0) + S::of(12.0) * self.eps() * z * z
    }

    pub fn d3w(&self, z: S) -> S {
        S::of(24.0) * self.eps() * z
    }

    /// Rejects `κ ≤ 0`, `ε < 0`, and checks `2W'' ≥ κ − 1e-9` on `[-range, range]`.
    pub fn validate(&self, range: S) -> Result<()> {
        let kappa = self.kappa();
        if !(kappa > S::zero()) || !kappa.is_finite() {
            return Err(Error::InvalidArgument("interaction needs κ > 0".into()));
        }
        if !(self.eps() >= S::zero()) || !self.eps().is_finite() {
            return Err(Error::InvalidArgument("quartic coefficient must be non-negative".into()));
        }
        for k in 0..=1000 {
            let z = range * (S::of_usize(k) / S::of(500.0) - S::one());
            let value = S::of(2.0) * self.d2w(z);
            if value < kappa - S::of(1e-9) {
                return Err(Error::Curvature { x: z.f64(), value: value.f64(), kappa: kappa.f64() });
            }
        }
        Ok(())
    }
}

fn check_density<S: Scalar>(grid: &Grid<S>, rho: &[S]) -> Result<()> {
    grid.check_len(rho.len())?;
    if let Some(i) = rho.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if let Some(i) = rho.iter().position(|&v| v < S::zero()) {
        return Err(Error::NegativeDensity { index: i, value: rho[i].f64() });
    }
    let mass = grid.integrate(rho);
    if (mass - S::one()).abs() > S::of(1e-8) {
        return Err(Error::NotNormalized(mass.f64()));
    }
    Ok(())
}

/// Lebesgue density from nodal values, normalized by the grid quadrature.
pub fn normalize_density<S: Scalar>(grid: &Grid<S>, values: Vec<S>) -> Result<Vec<S>> {
    grid.check_len(values.len())?;
    let mass = grid.integrate(&values);
    if !(mass > S::zero()) || !mass.is_finite() || values.iter().any(|&v| v < S::zero()) {
        return Err(Error::NotNormalized(mass.f64()));
    }
    Ok(values.into_iter().map(|v| v / mass).collect())
}

pub fn barycenter<S: Scalar>(grid: &Grid<S>, rho: &[S]) -> S {
    rho.iter().zip(grid.points()).zip(grid.quad()).map(|((&r, &x), &w)| r * x * w).sum()
}

fn convolve<S: Scalar>(grid: &Grid<S>, f: impl Fn(S) -> S + Sync, rho: &[S]) -> Vec<S> {
    let xs = grid.points();
    let q = grid.quad();
    xs.par_iter().map(|&x| xs.iter().zip(rho).zip(q).map(|((&y, &r), &w)| f(x - y) * r * w).sum()).collect()
}

/// `b(x) = −∫W'(x−y)ρ(y)dy`.
pub fn interaction_drift<S: Scalar>(grid: &Grid<S>, w: &InteractionPotential<S>, rho: &[S]) -> Result<GridFunction<S>> {
    grid.check_len(rho.len())?;
    Ok(GridFunction(convolve(grid, |z| -w.dw(z), rho)))
}

/// Drift with its first two derivatives.
#[derive(Debug, Clone)]
struct DriftJet<S> {
    b: Vec<S>,
    db: Vec<S>,
    d2b: Vec<S>,
}

impl<S: Scalar> DriftJet<S> {
    fn of(grid: &Grid<S>, w: &InteractionPotential<S>, rho: &[S]) -> Self {
        Self {
            b: convolve(grid, |z| -w.dw(z), rho),
            db: convolve(grid, |z| -w.d2w(z), rho),
            d2b: convolve(grid, |z| -w.d3w(z), rho),
        }
    }

    fn midpoint(&self, other: &Self) -> Self {
        let avg = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&x, &y)| (x + y) / S::of(2.0)).collect();
        Self { b: avg(&self.b, &other.b), db: avg(&self.db, &other.db), d2b: avg(&self.d2b, &other.d2b) }
    }
}

/// Unshifted free energy `∫σ log σ + ∫(W∗σ)σ`.
pub fn free_energy<S: Scalar>(grid: &Grid<S>, w: &InteractionPotential<S>, sigma: &[S]) -> Result<S> {
    check_density(grid, sigma)?;
    let conv = convolve(grid, |z| w.w(z), sigma);
    Ok(sigma.iter().zip(&conv).zip(grid.quad()).map(|((&s, &c), &q)| (xlogx(s) + c * s) * q).sum())
}

#[derive(Debug, Clone)]
pub struct FreeEnergyMinimum<S> {
    pub value: S,
    pub minimizer: Vec<S>,
    pub iterations: usize,
    pub residual: S,
}

const MIRROR_TOL: f64 = 1e-12;
const MIRROR_MAX_ITER: usize = 10_000;

/// Minimizes the free energy over densities with barycenter `bary` by
/// entropic mirror descent: `log σ ← (1−η) log σ − 2η W∗σ − λx`, with the
/// multiplier `λ` solved by Newton to keep the barycenter fixed.
pub fn min_free_energy<S: Scalar>(
    grid: &Grid<S>,
    w: &InteractionPotential<S>,
    bary: S,
) -> Result<FreeEnergyMinimum<S>> {
    w.validate(grid.b() - grid.a())?;
    let xs = grid.points();
    let q = grid.quad();
    let kappa = w.kappa();
    let mut log_s: Vec<S> = xs.iter().map(|&x| -kappa * (x - bary) * (x - bary) / S::of(2.0)).collect();
    let mut sigma = project_barycenter(grid, &log_s, bary)?.1;
    let mut eta = S::one();
    let mut last = S::infinity();
    for it in 1..=MIRROR_MAX_ITER {
        let conv = convolve(grid, |z| w.w(z), &sigma);
        let trial: Vec<S> =
            log_s.iter().zip(&conv).map(|(&l, &c)| (S::one() - eta) * l - S::of(2.0) * eta * c).collect();
        let (log_new, new) = project_barycenter(grid, &trial, bary)?;
        let residual: S = new.iter().zip(&sigma).zip(q).map(|((&a, &b), &w)| (a - b).abs() * w).sum();
        if residual > last && eta > S::of(1.0 / 64.0) {
            eta = eta / S::of(2.0);
        }
        last = residual;
        log_s = log_new;
        sigma = new;
        if residual <= S::of(MIRROR_TOL) {
            return Ok(FreeEnergyMinimum {
                value: free_energy(grid, w, &sigma)?,
                minimizer: sigma,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence { residual: last.f64(), history: vec![] })
}

/// `σ ∝ exp(h − λx)` with `λ` chosen so the barycenter is `bary`.
fn project_barycenter<S: Scalar>(grid: &Grid<S>, h: &[S], bary: S) -> Result<(Vec<S>, Vec<S>)> {
    let xs = grid.points();
    let q = grid.quad();
    let mut lambda = S::zero();
    for _ in 0..100 {
        let logs: Vec<S> = h.iter().zip(xs).map(|(&v, &x)| v - lambda * x).collect();
        let lz = log_sum_exp(logs.iter().zip(q).map(|(&l, &w)| l + w.ln()));
        let p: Vec<S> = logs.iter().map(|&l| (l - lz).exp()).collect();
        let mean: S = p.iter().zip(xs).zip(q).map(|((&a, &x), &w)| a * x * w).sum();
        let var: S = p.iter().zip(xs).zip(q).map(|((&a, &x), &w)| a * (x - mean) * (x - mean) * w).sum();
        let r = mean - bary;
        if r.abs() <= S::of(1e-14) * (S::one() + bary.abs()) {
            let log_p = logs.iter().map(|&l| l - lz).collect();
            return Ok((log_p, p));
        }
        if !(var > S::zero()) {
            break;
        }
        lambda = lambda + r / var;
    }
    Err(Error::IllConditioned("barycenter constraint cannot be met on this grid".into()))
}

/// Free energy shifted so its minimum over densities with the same
/// barycenter is zero.
pub fn free_energy_shifted<S: Scalar>(grid: &Grid<S>, w: &InteractionPotential<S>, sigma: &[S]) -> Result<S> {
    let min = min_free_energy(grid, w, barycenter(grid, sigma))?;
    Ok(free_energy(grid, w, sigma)? - min.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfConfig<S> {
    pub steps: usize,
    pub damping: S,
    pub tol: S,
    pub max_iter: usize,
}

impl<S: Scalar> Default for MfConfig<S> {
    fn default() -> Self {
        Self { steps: 64, damping: S::of(0.5), tol: S::of(1e-9), max_iter: 400 }
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldSolution<S> {
    pub horizon: S,
    /// Lebesgue densities at `t_k = kT/K`, `k = 0..=K`.
    pub flow: Vec<Vec<S>>,
    /// Drift used on each step `[t_k, t_{k+1}]`.
    pub drift: Vec<GridFunction<S>>,
    /// `H(π | μ⊗K_{0T})`.
    pub coupling_entropy: S,
    /// Shifted free energy of `μ`.
    pub free_energy_mu: S,
    pub mf_cost: S,
    pub fixed_point_residual: S,
    pub history: Vec<S>,
    pub damping: S,
    /// `max_k |bary(ρ_k) − bary(μ)|`.
    pub barycenter_deviation: S,
}

const MIN_DAMPING: f64 = 1.0 / 16.0;

/// One-step transition matrix (rows sum to one) for `dZ = b dt + dB` over
/// `dt`, Gaussian with locally linearized moments:
/// mean `x + b (e^{J dt} − 1)/J + b'' dt²/4`, variance `(e^{2J dt} − 1)/(2J)`,
/// `J = b'(x)`. The `b''` term is the Itô correction that makes the step
/// second order in `dt`.
fn step_kernel<S: Scalar>(grid: &Grid<S>, jet: &DriftJet<S>, dt: S) -> Vec<S> {
    let (b, slope) = (&jet.b, &jet.db);
    let xs = grid.points();
    let q = grid.quad();
    let n = xs.len();
    let mut out = vec![S::zero(); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let j = slope[i];
        let jd = j * dt;
        let (shift, var) = if jd.abs() < S::of(1e-12) {
            (dt, dt)
        } else {
            (jd.exp_m1() / j, (S::of(2.0) * jd).exp_m1() / (S::of(2.0) * j))
        };
        let mean = xs[i] + b[i] * shift + jet.d2b[i] * dt * dt / S::of(4.0);
        let logs: Vec<S> = xs.iter().map(|&y| -(y - mean) * (y - mean) / (S::of(2.0) * var)).collect();
        let top = logs.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for ((o, &l), &w) in row.iter_mut().zip(&logs).zip(q) {
            *o = (l - top).exp() * w;
            total = total + *o;
        }
        row.iter_mut().for_each(|o| *o = *o / total);
    });
    out
}

/// `log(Aᵀ e^{f})` for a row-major `n×n` matrix `A`.
fn log_apply_transpose<S: Scalar>(a: &[S], log_f: &[S], n: usize) -> Vec<S> {
    let top = log_f.iter().copied().fold(S::neg_infinity(), S::max);
    let f: Vec<S> = log_f.iter().map(|&l| (l - top).exp()).collect();
    let mut out = vec![S::zero(); n];
    for (i, &fi) in f.iter().enumerate() {
        if fi == S::zero() {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(&a[i * n..(i + 1) * n]) {
            *o = *o + fi * aij;
        }
    }
    out.into_iter().map(|v| v.ln() + top).collect()
}

/// `log(A e^{g})`.
fn log_apply<S: Scalar>(a: &[S], log_g: &[S], n: usize) -> Vec<S> {
    let top = log_g.iter().copied().fold(S::neg_infinity(), S::max);
    let g: Vec<S> = log_g.iter().map(|&l| (l - top).exp()).collect();
    (0..n)
        .into_par_iter()
        .map(|i| a[i * n..(i + 1) * n].iter().zip(&g).map(|(&x, &y)| x * y).sum::<S>().ln() + top)
        .collect()
}

const SINKHORN_TOL: f64 = 1e-12;
const SINKHORN_MAX_ITER: usize = 100_000;

struct Potentials<S> {
    log_u: Vec<S>,
    log_v: Vec<S>,
}

struct StaticSolve<S> {
    flow: Vec<Vec<S>>,
    coupling_entropy: S,
}

fn static_solve<S: Scalar>(grid: &Grid<S>, kernels: &[Vec<S>], mu_mass: &[S], nu_mass: &[S]) -> Result<StaticSolve<S>> {
    let n = grid.len();
    let q = grid.quad();
    let chain = |log_v: &[S]| kernels.iter().rev().fold(log_v.to_vec(), |acc, a| log_apply(a, &acc, n));
    let chain_t = |log_u: &[S]| kernels.iter().fold(log_u.to_vec(), |acc, a| log_apply_transpose(a, &acc, n));
    let log_mu: Vec<S> = mu_mass.iter().map(|v| v.ln()).collect();
    let log_nu: Vec<S> = nu_mass.iter().map(|v| v.ln()).collect();
    let diff = |a: &[S], b: &[S]| -> Vec<S> {
        a.iter().zip(b).map(|(&x, &y)| if x == S::neg_infinity() { x } else { x - y }).collect()
    };
    let mut log_u: Vec<S> = log_mu.iter().map(|&l| if l == S::neg_infinity() { l } else { S::zero() }).collect();
    let mut log_v = diff(&log_nu, &chain_t(&log_u));
    let mut residual = S::infinity();
    let mut iterations = 0;
    while iterations < SINKHORN_MAX_ITER {
        iterations += 1;
        let kv = chain(&log_v);
        residual = log_u
            .iter()
            .zip(&kv)
            .zip(mu_mass)
            .map(|((&lu, &k), &mm)| if lu == S::neg_infinity() { mm } else { ((lu + k).exp() - mm).abs() })
            .sum();
        if residual <= S::of(SINKHORN_TOL) {
            break;
        }
        log_u = diff(&log_mu, &kv);
        log_v = diff(&log_nu, &chain_t(&log_u));
    }
    if !(residual <= S::of(SINKHORN_TOL)) {
        return Err(Error::MaxIterExceeded { iterations, residual: residual.f64() });
    }
    let sc = Potentials { log_u, log_v };
    let mut forward = vec![sc.log_u.clone()];
    for a in kernels {
        let next = log_apply_transpose(a, forward.last().expect("nonempty"), n);
        forward.push(next);
    }
    let mut backward = vec![sc.log_v.clone()];
    for a in kernels.iter().rev() {
        let next = log_apply(a, backward.last().expect("nonempty"), n);
        backward.push(next);
    }
    backward.reverse();
    let mut flow = Vec::with_capacity(kernels.len() + 1);
    for (f, g) in forward.iter().zip(&backward) {
        let mass: Vec<S> = f
            .iter()
            .zip(g)
            .zip(q)
            .map(
                |((&a, &b), &w)| {
                    if a == S::neg_infinity() || b == S::neg_infinity() {
                        S::zero()
                    } else {
                        (a + b).exp() / w
                    }
                },
            )
            .collect();
        flow.push(normalize_density(grid, mass)?);
    }
    let mut entropy = S::zero();
    for (&lu, &mm) in sc.log_u.iter().zip(mu_mass) {
        if mm > S::zero() {
            entropy = entropy + mm * (lu - mm.ln());
        }
    }
    for (&lv, &nm) in sc.log_v.iter().zip(nu_mass) {
        if nm > S::zero() {
            entropy = entropy + nm * lv;
        }
    }
    Ok(StaticSolve { flow, coupling_entropy: entropy })
}

fn l1<S: Scalar>(grid: &Grid<S>, a: &[S], b: &[S]) -> S {
    a.iter().zip(b).zip(grid.quad()).map(|((&x, &y), &w)| (x - y).abs() * w).sum()
}

/// Damped fixed point over the marginal flow: drifts from the flow, step
/// kernels chained into `K_{0T}`, static Schrödinger system against it,
/// new flow from the forward and backward propagated potentials.
pub fn mfsp_solve<S: Scalar>(
    grid: &Grid<S>,
    mu: &[S],
    nu: &[S],
    horizon: S,
    w: &InteractionPotential<S>,
    cfg: &MfConfig<S>,
) -> Result<MeanFieldSolution<S>> {
    check_density(grid, mu)?;
    check_density(grid, nu)?;
    w.validate(grid.b() - grid.a())?;
    if !(horizon > S::zero()) {
        return Err(Error::NonPositiveTime(horizon.f64()));
    }
    if cfg.steps < 16 {
        return Err(Error::InvalidArgument("need at least 16 time steps".into()));
    }
    if !(cfg.damping > S::zero() && cfg.damping <= S::one()) {
        return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
    }
    let (bm, bn) = (barycenter(grid, mu), barycenter(grid, nu));
    if (bm - bn).abs() > S::of(1e-6) {
        return Err(Error::BarycenterMismatch(bm.f64(), bn.f64()));
    }
    let q = grid.quad();
    let mu_mass: Vec<S> = mu.iter().zip(q).map(|(&a, &b)| a * b).collect();
    let nu_mass: Vec<S> = nu.iter().zip(q).map(|(&a, &b)| a * b).collect();
    let k_steps = cfg.steps;
    let dt = horizon / S::of_usize(k_steps);
    let mut flow: Vec<Vec<S>> = (0..=k_steps)
        .map(|k| {
            let t = S::of_usize(k) / S::of_usize(k_steps);
            mu.iter().zip(nu).map(|(&a, &b)| (S::one() - t) * a + t * b).collect()
        })
        .collect();
    let mut damping = cfg.damping;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let jets: Vec<DriftJet<S>> = flow.iter().map(|rho| DriftJet::of(grid, w, rho)).collect();
        let drifts: Vec<DriftJet<S>> = jets.windows(2).map(|p| p[0].midpoint(&p[1])).collect();
        let kernels: Vec<Vec<S>> = drifts.iter().map(|jet| step_kernel(grid, jet, dt)).collect();
        let solved = static_solve(grid, &kernels, &mu_mass, &nu_mass)?;
        let residual = flow.iter().zip(&solved.flow).map(|(a, b)| l1(grid, a, b)).fold(S::zero(), S::max);
        if let Some(&prev) = history.last() {
            if residual > prev && damping > S::of(MIN_DAMPING) {
                damping = (damping / S::of(2.0)).max(S::of(MIN_DAMPING));
            }
        }
        history.push(residual);
        if residual <= cfg.tol {
            let free_energy_mu = free_energy_shifted(grid, w, mu)?;
            let barycenter_deviation =
                solved.flow.iter().map(|rho| (barycenter(grid, rho) - bm).abs()).fold(S::zero(), S::max);
            return Ok(MeanFieldSolution {
                horizon,
                flow: solved.flow,
                drift: drifts.into_iter().map(|jet| GridFunction(jet.b)).collect(),
                coupling_entropy: solved.coupling_entropy,
                free_energy_mu,
                mf_cost: free_energy_mu + solved.coupling_entropy,
                fixed_point_residual: residual,
                history,
                damping,
                barycenter_deviation,
            });
        }
        for (old, new) in flow.iter_mut().zip(&solved.flow) {
            for (o, &v) in old.iter_mut().zip(new) {
                *o = (S::one() - damping) * *o + damping * v;
            }
        }
    }
    Err(Error::NoConvergence {
        residual: history.last().map_or(f64::NAN, |r| r.f64()),
        history: history.iter().map(|r| r.f64()).collect(),
    })
}

pub const MAX_REFINED_STEPS: usize = 1024;

/// Doubles the number of time steps, starting from `cfg.steps`, until the
/// cost changes by less than `change_tol` or [`MAX_REFINED_STEPS`] is reached.
pub fn mfsp_solve_refined<S: Scalar>(
    grid: &Grid<S>,
    mu: &[S],
    nu: &[S],
    horizon: S,
    w: &InteractionPotential<S>,
    cfg: &MfConfig<S>,
    change_tol: S,
) -> Result<MeanFieldSolution<S>> {
    let mut sol = mfsp_solve(grid, mu, nu, horizon, w, cfg)?;
    let mut steps = cfg.steps;
    while steps * 2 <= MAX_REFINED_STEPS {
        steps *= 2;
        let next = mfsp_solve(grid, mu, nu, horizon, w, &MfConfig { steps, ..*cfg })?;
        let change = (next.mf_cost - sol.mf_cost).abs();
        sol = next;
        if change < change_tol {
            break;
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct MfLongTimeReport<S> {
    pub ts: Vec<S>,
    pub costs: Vec<S>,
    /// `|C_T^{mf} − F(μ) − F(ν)|`.
    pub gaps: Vec<S>,
    /// `F(μ) + F(ν)`.
    pub limit: S,
    /// Fitted slope of `log gap` against `T`, gaps below `1e-10` excluded.
    pub slope: S,
    /// `(C_T^{mf}, F(μ)/(1−e^{−κT/2}) + F(ν)/(1−e^{−κT/2}))` per horizon.
    pub talagrand: Vec<(S, S)>,
}

impl<S: Scalar> MfLongTimeReport<S> {
    pub fn gaps_decrease(&self) -> bool {
        self.gaps.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn check_mf_longtime<S: Scalar>(
    grid: &Grid<S>,
    mu: &[S],
    nu: &[S],
    w: &InteractionPotential<S>,
    ts: &[S],
    cfg: &MfConfig<S>,
) -> Result<MfLongTimeReport<S>> {
    let kappa = w.kappa();
    let f_mu = free_energy_shifted(grid, w, mu)?;
    let f_nu = free_energy_shifted(grid, w, nu)?;
    let limit = f_mu + f_nu;
    let costs = ts.par_iter().map(|&t| Ok(mfsp_solve(grid, mu, nu, t, w, cfg)?.mf_cost)).collect::<Result<Vec<S>>>()?;
    let gaps: Vec<S> = costs.iter().map(|&c| (c - limit).abs()).collect();
    let pts: Vec<(S, S)> =
        ts.iter().zip(&gaps).filter(|(_, &g)| g > S::of(1e-10)).map(|(&t, &g)| (t, g.ln())).collect();
    let slope = fit_slope(&pts)?;
    let talagrand = ts
        .iter()
        .zip(&costs)
        .map(|(&t, &c)| {
            let coef = -S::one() / (-kappa * t / S::of(2.0)).exp_m1();
            (c, coef * (f_mu + f_nu))
        })
        .collect();
    Ok(MfLongTimeReport { ts: ts.to_vec(), costs, gaps, limit, slope, talagrand })
}
