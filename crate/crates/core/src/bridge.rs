//! Schrödinger system, entropic cost and the entropic interpolation.
//!
//! With `R_{0,T} = p_T(x, y) m(dx) m(dy)` the optimal coupling is
//! `π = f(x) g(y) R_{0,T}`, where `μ = f P_T g m`, `ν = g P_T f m`. Everything
//! else (interpolation `ρ_t = P_{Tt} f · P_{T(1−t)} g`, velocity, energy,
//! Fisher integral, action) is evaluated from the pair `(log f, log g)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{fisher_from_log, grad_log, integrate_m, relative_entropy, GridFunction, MDensity};
use crate::reference::ReferenceProcess;
use crate::scalar::{log_sum_exp, Scalar};
use crate::sinkhorn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<S> {
    /// Stop when the L¹(m) marginal residual drops below this.
    pub tol: S,
    pub max_iter: usize,
    /// Number of uniform nodes on `[0, 1]` for time integrals and energy samples.
    pub time_nodes: usize,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self { tol: S::of(1e-10), max_iter: 100_000, time_nodes: 33 }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn with_tol(mut self, tol: S) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_time_nodes(mut self, nodes: usize) -> Self {
        self.time_nodes = nodes;
        self
    }
}

/// Solution `(f, g)` of the Schrödinger system, gauged by `‖g‖_{L¹(m)} = 1`.
#[derive(Clone)]
pub struct SchrodingerPair<'a, S> {
    reference: &'a ReferenceProcess<S>,
    horizon: S,
    mu: MDensity<S>,
    nu: MDensity<S>,
    log_f: Vec<S>,
    log_g: Vec<S>,
    residual: S,
    iterations: usize,
    history: Vec<S>,
}

impl<S: fmt::Debug> fmt::Debug for SchrodingerPair<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchrodingerPair")
            .field("horizon", &self.horizon)
            .field("residual", &self.residual)
            .field("iterations", &self.iterations)
            .finish_non_exhaustive()
    }
}

/// Sinkhorn failure. `MaxIterExceeded` carries the best iterate.
#[derive(Debug, Clone)]
pub enum SinkhornError<'a, S> {
    MaxIterExceeded(Box<SchrodingerPair<'a, S>>),
    Other(Error),
}

impl<S: Scalar> From<SinkhornError<'_, S>> for Error {
    fn from(e: SinkhornError<'_, S>) -> Self {
        match e {
            SinkhornError::MaxIterExceeded(p) => {
                Error::MaxIterExceeded { iterations: p.iterations, residual: p.residual.f64() }
            }
            SinkhornError::Other(e) => e,
        }
    }
}

impl<S> From<Error> for SinkhornError<'_, S> {
    fn from(e: Error) -> Self {
        SinkhornError::Other(e)
    }
}

/// Solves `μ = f P_T g m`, `ν = g P_T f m` by log-stabilized Sinkhorn.
pub fn sinkhorn_solve<'a, S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    horizon: S,
    reference: &'a ReferenceProcess<S>,
    tol: S,
    max_iter: usize,
) -> std::result::Result<SchrodingerPair<'a, S>, SinkhornError<'a, S>> {
    let n = reference.len();
    let m = reference.m();
    if mu.len() != n || nu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mu.len().min(nu.len()) }.into());
    }
    MDensity::new(mu.values().to_vec(), m)?;
    MDensity::new(nu.values().to_vec(), m)?;
    if !(horizon > S::zero()) {
        return Err(Error::NonPositiveTime(horizon.f64()).into());
    }
    if !(tol > S::zero()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()).into());
    }
    let log_m = reference.log_m();
    let mut log_k = reference.log_kernel_matrix(horizon)?;
    for i in 0..n {
        for j in 0..n {
            log_k[i * n + j] = log_k[i * n + j] + log_m[i] + log_m[j];
        }
    }
    let a: Vec<S> = mu.values().iter().zip(m).map(|(&r, &w)| r * w).collect();
    let b: Vec<S> = nu.values().iter().zip(m).map(|(&r, &w)| r * w).collect();
    let sc = sinkhorn::scale(&log_k, n, n, &a, &b, tol, max_iter)?;

    // Gauge: ‖g‖_{L¹(m)} = 1.
    let log_norm = log_sum_exp(sc.log_v.iter().zip(log_m).map(|(&l, &w)| l + w));
    if !log_norm.is_finite() {
        return Err(Error::DegenerateKernel.into());
    }
    let log_g: Vec<S> = sc.log_v.iter().map(|&l| l - log_norm).collect();
    let log_f: Vec<S> = sc.log_u.iter().map(|&l| l + log_norm).collect();
    let pair = SchrodingerPair {
        reference,
        horizon,
        mu: mu.clone(),
        nu: nu.clone(),
        log_f,
        log_g,
        residual: sc.residual,
        iterations: sc.iterations,
        history: sc.history,
    };
    if sc.converged {
        Ok(pair)
    } else {
        Err(SinkhornError::MaxIterExceeded(Box::new(pair)))
    }
}

/// One time slice of the entropic interpolation.
#[derive(Debug, Clone)]
pub struct Slice<S> {
    pub t: S,
    /// `log ρ_t` as computed (not renormalized).
    pub log_rho: Vec<S>,
    /// `∫ρ_t dm`; equals 1 up to quadrature error.
    pub mass: S,
    /// `∇ log P_{Tt} f`.
    pub grad_log_f: Vec<S>,
    /// `∇ log P_{T(1−t)} g`.
    pub grad_log_g: Vec<S>,
}

impl<S: Scalar> Slice<S> {
    fn weighted(&self, m: &[S], h: impl Fn(S, S) -> S) -> S {
        self.log_rho
            .iter()
            .zip(&self.grad_log_f)
            .zip(&self.grad_log_g)
            .zip(m)
            .map(|(((&l, &a), &b), &w)| if l == S::neg_infinity() { S::zero() } else { h(a, b) * l.exp() * w })
            .sum::<S>()
            / self.mass
    }

    /// `∫|∇ log ρ_t|² ρ_t dm` with `∇ log ρ_t = ∇log P_{Tt}f + ∇log P_{T(1−t)}g`.
    pub fn fisher(&self, m: &[S]) -> S {
        self.weighted(m, |a, b| (a + b) * (a + b))
    }

    /// `E = −½ ∫ ∇log P_{T(1−t)}g · ∇log P_{Tt}f ρ_t dm`.
    pub fn energy(&self, m: &[S]) -> S {
        -self.weighted(m, |a, b| a * b) / S::of(2.0)
    }

    /// `∫|v_t|² ρ_t dm` for the velocity `v = (T/2)(∇log P_{T(1−t)}g − ∇log P_{Tt}f)`.
    pub fn kinetic(&self, m: &[S], horizon: S) -> S {
        let c = horizon / S::of(2.0);
        self.weighted(m, |a, b| c * c * (b - a) * (b - a))
    }

    /// `∫|∇log P_{Tt} f|² ρ_t dm`.
    pub fn grad_f_sq(&self, m: &[S]) -> S {
        self.weighted(m, |a, _| a * a)
    }

    /// `∫|∇log P_{T(1−t)} g|² ρ_t dm`.
    pub fn grad_g_sq(&self, m: &[S]) -> S {
        self.weighted(m, |_, b| b * b)
    }

    pub fn velocity(&self, horizon: S) -> Vec<S> {
        let c = horizon / S::of(2.0);
        self.grad_log_g.iter().zip(&self.grad_log_f).map(|(&b, &a)| c * (b - a)).collect()
    }
}

impl<'a, S: Scalar> SchrodingerPair<'a, S> {
    pub fn reference(&self) -> &'a ReferenceProcess<S> {
        self.reference
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn mu(&self) -> &MDensity<S> {
        &self.mu
    }

    pub fn nu(&self) -> &MDensity<S> {
        &self.nu
    }

    pub fn log_f(&self) -> &[S] {
        &self.log_f
    }

    pub fn log_g(&self) -> &[S] {
        &self.log_g
    }

    pub fn f(&self) -> GridFunction<S> {
        GridFunction(self.log_f.iter().map(|l| l.exp()).collect())
    }

    pub fn g(&self) -> GridFunction<S> {
        GridFunction(self.log_g.iter().map(|l| l.exp()).collect())
    }

    /// L¹(m) mismatch of the first marginal at the last iterate (the second is
    /// matched exactly by the final half-step).
    pub fn residual(&self) -> S {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual_history(&self) -> &[S] {
        &self.history
    }

    /// `‖f P_T g − ρ‖_{L¹(m)} + ‖g P_T f − σ‖_{L¹(m)}`, recomputed from scratch.
    pub fn marginal_residual(&self) -> Result<S> {
        let t = self.horizon;
        let lpg = self.reference.log_apply(t, &self.log_g)?;
        let lpf = self.reference.log_apply(t, &self.log_f)?;
        let m = self.reference.m();
        let mis = |lf: &[S], lp: &[S], target: &[S]| -> S {
            lf.iter()
                .zip(lp)
                .zip(target)
                .zip(m)
                .map(|(((&a, &b), &r), &w)| {
                    let v = if a == S::neg_infinity() { S::zero() } else { (a + b).exp() };
                    (v - r).abs() * w
                })
                .sum()
        };
        Ok(mis(&self.log_f, &lpg, self.mu.values()) + mis(&self.log_g, &lpf, self.nu.values()))
    }

    /// Same pair with `(f, g)` replaced by `(c f, g / c)`.
    pub fn rescaled(&self, c: S) -> Self {
        let lc = c.ln();
        let mut out = self.clone();
        out.log_f.iter_mut().for_each(|l| *l = *l + lc);
        out.log_g.iter_mut().for_each(|l| *l = *l - lc);
        out
    }

    /// Restores the gauge `‖g‖_{L¹(m)} = 1`.
    pub fn regauged(&self) -> Self {
        let norm = log_sum_exp(self.log_g.iter().zip(self.reference.log_m()).map(|(&l, &w)| l + w));
        self.rescaled(norm.exp())
    }

    /// `‖g‖_{L¹(m)}`.
    pub fn gauge(&self) -> S {
        self.log_g.iter().zip(self.reference.m()).map(|(&l, &w)| l.exp() * w).sum()
    }

    /// `C_T = ∫ log f dμ + ∫ log g dν`.
    pub fn entropic_cost(&self) -> S {
        let m = self.reference.m();
        let part = |lf: &[S], rho: &[S]| -> S {
            lf.iter().zip(rho).zip(m).map(|((&l, &r), &w)| if r > S::zero() { l * r * w } else { S::zero() }).sum()
        };
        part(&self.log_f, self.mu.values()) + part(&self.log_g, self.nu.values())
    }

    /// `∫ (f log f) P_T g dm + ∫ (g log g) P_T f dm`.
    pub fn entropic_cost_product_form(&self) -> Result<S> {
        let t = self.horizon;
        let lpg = self.reference.log_apply(t, &self.log_g)?;
        let lpf = self.reference.log_apply(t, &self.log_f)?;
        let m = self.reference.m();
        let part = |lf: &[S], lp: &[S]| -> S {
            lf.iter()
                .zip(lp)
                .zip(m)
                .map(|((&l, &p), &w)| if l == S::neg_infinity() { S::zero() } else { l * (l + p).exp() * w })
                .sum()
        };
        Ok(part(&self.log_f, &lpg) + part(&self.log_g, &lpf))
    }

    /// `π(x_i, y_j) = f_i g_j p_T(x_i, y_j)` as a row-major density w.r.t. `m ⊗ m`.
    pub fn coupling(&self) -> Result<Vec<S>> {
        let n = self.reference.len();
        let mut log_k = self.reference.log_kernel_matrix(self.horizon)?;
        for i in 0..n {
            for j in 0..n {
                let l = self.log_f[i] + self.log_g[j];
                log_k[i * n + j] = if l == S::neg_infinity() { S::zero() } else { (log_k[i * n + j] + l).exp() };
            }
        }
        Ok(log_k)
    }

    /// `H(π | R_{0,T})` evaluated directly on the coupling matrix.
    pub fn coupling_entropy(&self) -> Result<S> {
        let n = self.reference.len();
        let m = self.reference.m();
        let log_k = self.reference.log_kernel_matrix(self.horizon)?;
        let mut acc = S::zero();
        for i in 0..n {
            for j in 0..n {
                let l = self.log_f[i] + self.log_g[j];
                if l == S::neg_infinity() {
                    continue;
                }
                let pi = (log_k[i * n + j] + l).exp() * m[i] * m[j];
                acc = acc + pi * l;
            }
        }
        Ok(acc)
    }

    /// Interpolation data at `t ∈ [0, 1]`.
    pub fn slice(&self, t: S) -> Result<Slice<S>> {
        if !(t >= S::zero() && t <= S::one()) {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
        }
        let big_t = self.horizon;
        let (lf, df) = self.reference.log_apply_with_grad(big_t * t, &self.log_f)?;
        let (lg, dg) = self.reference.log_apply_with_grad(big_t * (S::one() - t), &self.log_g)?;
        let log_rho: Vec<S> = lf.iter().zip(&lg).map(|(&a, &b)| a + b).collect();
        let mass = log_rho
            .iter()
            .zip(self.reference.m())
            .map(|(&l, &w)| if l == S::neg_infinity() { S::zero() } else { l.exp() * w })
            .sum();
        Ok(Slice { t, log_rho, mass, grad_log_f: df, grad_log_g: dg })
    }

    /// `ρ_t`, renormalized to unit mass (removes quadrature drift ~1e−12).
    pub fn interpolation(&self, t: S) -> Result<MDensity<S>> {
        let s = self.slice(t)?;
        MDensity::normalized(s.log_rho.iter().map(|l| l.exp()).collect(), self.reference.m())
    }

    pub fn velocity(&self, t: S) -> Result<GridFunction<S>> {
        Ok(GridFunction(self.slice(t)?.velocity(self.horizon)))
    }

    /// `E_T` evaluated at time `t` in the product form.
    pub fn energy(&self, t: S) -> Result<S> {
        Ok(self.slice(t)?.energy(self.reference.m()))
    }

    /// `E_T = (1/2T²)∫|v|²ρ − ⅛∫|∇log ρ|²ρ` at time `t`, with `∇ log ρ_t`
    /// taken by finite differences of `log ρ_t`.
    pub fn energy_kinetic_form(&self, t: S) -> Result<S> {
        let s = self.slice(t)?;
        let m = self.reference.m();
        let big_t = self.horizon;
        let kinetic = s.kinetic(m, big_t) / (S::of(2.0) * big_t * big_t);
        let fisher = fisher_from_log(self.reference.grid(), &s.log_rho, m)?;
        Ok(kinetic - fisher / S::of(8.0))
    }

    /// Samples the interpolation on `nodes` uniform times in `[0, 1]`.
    pub fn profile(&self, nodes: usize) -> Result<BridgeProfile<S>> {
        if nodes < 3 {
            return Err(Error::InvalidArgument("time grid needs at least 3 nodes".into()));
        }
        let m = self.reference.m();
        let big_t = self.horizon;
        let mut prof = BridgeProfile::default();
        for k in 0..nodes {
            let t = S::of_usize(k) / S::of_usize(nodes - 1);
            let s = self.slice(t)?;
            let rho = MDensity::normalized(s.log_rho.iter().map(|l| l.exp()).collect(), m)?;
            prof.t.push(t);
            prof.mass.push(s.mass);
            prof.entropy.push(relative_entropy(&rho, m)?);
            prof.fisher.push(s.fisher(m));
            prof.energy.push(s.energy(m));
            prof.kinetic.push(s.kinetic(m, big_t));
            prof.grad_f_sq.push(s.grad_f_sq(m));
            prof.grad_g_sq.push(s.grad_g_sq(m));
        }
        Ok(prof)
    }

    /// Fisher integral `∫₀¹ ∫|∇log ρ_t|² ρ_t dm dt`.
    pub fn fisher_integral(&self, nodes: usize) -> Result<S> {
        Ok(time_integral(&self.profile(nodes)?.fisher))
    }

    /// Full solution summary on a `nodes`-point time grid.
    pub fn solution(self, nodes: usize) -> Result<BridgeSolution<'a, S>> {
        let prof = self.profile(nodes)?;
        let m = self.reference.m();
        let big_t = self.horizon;
        let half = S::of(0.5);
        let h_mu = relative_entropy(&self.mu, m)?;
        let h_nu = relative_entropy(&self.nu, m)?;
        let fisher_integral = time_integral(&prof.fisher);
        let kinetic_integral = time_integral(&prof.kinetic);
        let action = half * kinetic_integral + big_t * big_t / S::of(8.0) * fisher_integral;
        let cost = self.entropic_cost();
        let last = prof.t.len() - 1;
        let energy_samples: Vec<(S, S)> = (1..last).map(|k| (prof.t[k], prof.energy[k])).collect();
        let energy = energy_samples.iter().map(|e| e.1).sum::<S>() / S::of_usize(energy_samples.len());
        Ok(BridgeSolution {
            cost,
            energy,
            energy_samples,
            fisher_integral,
            kinetic_integral,
            action,
            entropy_mu: h_mu,
            entropy_nu: h_nu,
            cost_via_mu: h_mu + half * big_t * time_integral(&prof.grad_g_sq),
            cost_via_nu: h_nu + half * big_t * time_integral(&prof.grad_f_sq),
            profile: prof,
            pair: self,
        })
    }
}

/// Per-node quantities along the entropic interpolation.
#[derive(Debug, Clone, Default)]
pub struct BridgeProfile<S> {
    pub t: Vec<S>,
    pub mass: Vec<S>,
    pub entropy: Vec<S>,
    pub fisher: Vec<S>,
    pub energy: Vec<S>,
    pub kinetic: Vec<S>,
    pub grad_f_sq: Vec<S>,
    pub grad_g_sq: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct BridgeSolution<'a, S> {
    pub pair: SchrodingerPair<'a, S>,
    pub cost: S,
    /// Mean of the interior energy samples.
    pub energy: S,
    /// `(t, E_T(t))` at the interior time nodes.
    pub energy_samples: Vec<(S, S)>,
    pub fisher_integral: S,
    /// `∫₀¹∫|v_t|²ρ_t dm dt`.
    pub kinetic_integral: S,
    /// `∫₀¹∫(½|v|² + (T²/8)|∇log ρ|²)ρ dm dt`.
    pub action: S,
    pub entropy_mu: S,
    pub entropy_nu: S,
    /// `H(μ|m) + (T/2)∫₀¹∫|∇log P_{T(1−t)}g|²ρ_t dm dt`.
    pub cost_via_mu: S,
    /// `H(ν|m) + (T/2)∫₀¹∫|∇log P_{Tt}f|²ρ_t dm dt`.
    pub cost_via_nu: S,
    pub profile: BridgeProfile<S>,
}

impl<S: Scalar> BridgeSolution<'_, S> {
    pub fn horizon(&self) -> S {
        self.pair.horizon()
    }

    /// `max_t |E(t) − Ē|`.
    pub fn energy_spread(&self) -> S {
        self.energy_samples.iter().map(|e| (e.1 - self.energy).abs()).fold(S::zero(), |a, b| a.max(b))
    }
}

/// Sinkhorn followed by the profile evaluation.
pub fn solve_bridge<'a, S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    horizon: S,
    reference: &'a ReferenceProcess<S>,
    cfg: &SolverConfig<S>,
) -> Result<BridgeSolution<'a, S>> {
    let pair = sinkhorn_solve(mu, nu, horizon, reference, cfg.tol, cfg.max_iter)?;
    let nodes = time_nodes_for(horizon, reference.kappa(), cfg.time_nodes);
    pair.solution(nodes)
}

/// Time-grid size used by [`solve_bridge`]: at least `min_nodes`, and at least
/// `16κT + 1`, rounded up to `4k + 1`, so the endpoint layers of width `~1/(κT)` are resolved.
pub fn time_nodes_for<S: Scalar>(horizon: S, kappa: S, min_nodes: usize) -> usize {
    let layer = (S::of(16.0) * kappa * horizon).ceil().to_usize().unwrap_or(0) + 1;
    let n = min_nodes.max(layer).max(5);
    (n - 1).div_ceil(4) * 4 + 1
}

/// `∫₀¹ y dt` for samples on a uniform grid: composite Boole when the node
/// count is `4k + 1`, composite Simpson for other odd counts, trapezoid
/// otherwise.
pub fn time_integral<S: Scalar>(y: &[S]) -> S {
    let n = y.len();
    if n < 2 {
        return S::zero();
    }
    if n % 4 == 1 {
        // Simpson on all nodes and on every other node, Richardson-combined.
        let fine = simpson(y);
        let coarse: Vec<S> = y.iter().step_by(2).copied().collect();
        return fine + (fine - simpson(&coarse)) / S::of(15.0);
    }
    if n % 2 == 1 {
        return simpson(y);
    }
    let dt = S::one() / S::of_usize(n - 1);
    let inner: S = y[1..n - 1].iter().copied().sum();
    (inner + (y[0] + y[n - 1]) / S::of(2.0)) * dt
}

fn simpson<S: Scalar>(y: &[S]) -> S {
    let n = y.len();
    let dt = S::one() / S::of_usize(n - 1);
    let (two, four) = (S::of(2.0), S::of(4.0));
    let inner: S = (1..n - 1).map(|k| if k % 2 == 1 { four * y[k] } else { two * y[k] }).sum();
    (y[0] + y[n - 1] + inner) * dt / S::of(3.0)
}

/// Benamou-Brenier action `∫₀¹∫(½|v|² + (T²/8)|∇log ρ|²)ρ dm dt` of a curve
/// sampled on a uniform time grid; Fisher information by finite differences.
pub fn action<S: Scalar>(
    reference: &ReferenceProcess<S>,
    curve: &[(MDensity<S>, GridFunction<S>)],
    horizon: S,
) -> Result<S> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument("curve needs at least 2 samples".into()));
    }
    let m = reference.m();
    let grid = reference.grid();
    let mut integrand = Vec::with_capacity(curve.len());
    for (rho, v) in curve {
        let kin: Vec<S> = v.values().iter().zip(rho.values()).map(|(&x, &r)| x * x * r).collect();
        let kin = integrate_m(&kin, m)?;
        let log_rho: Vec<S> = rho.values().iter().map(|r| r.ln()).collect();
        let fisher = fisher_from_log(grid, &log_rho, m)?;
        integrand.push(kin / S::of(2.0) + horizon * horizon / S::of(8.0) * fisher);
    }
    Ok(time_integral(&integrand))
}

/// `∇ log` of a strictly positive density on the reference grid.
pub fn score<S: Scalar>(reference: &ReferenceProcess<S>, rho: &MDensity<S>) -> Result<GridFunction<S>> {
    let log_rho: Vec<S> = rho.values().iter().map(|r| r.ln()).collect();
    grad_log(reference.grid(), &log_rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Backend;

    #[test]
    fn simpson_and_trapezoid_weights() {
        let ys: Vec<f64> = (0..33).map(|k| (k as f64 / 32.0).powi(3)).collect();
        assert!((time_integral(&ys) - 0.25).abs() < 1e-15);
        let lin: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
        assert!((time_integral(&lin) - 0.5).abs() < 1e-15);
        assert_eq!(time_integral::<f64>(&[1.0]), 0.0);
    }

    #[test]
    fn node_count_grows_with_horizon() {
        assert_eq!(time_nodes_for(1.0, 1.0, 33), 33);
        assert_eq!(time_nodes_for(12.0, 1.0, 33), 193);
        assert_eq!(time_nodes_for(0.5, 1.0, 10), 13);
    }

    #[test]
    fn invariant_marginals_are_a_fixed_point() {
        let r = ReferenceProcess::ou(1.0f64, 201, Backend::Spectral).unwrap();
        let m = MDensity::uniform(201);
        let pair = sinkhorn_solve(&m, &m, 0.7, &r, 1e-12, 1000).unwrap();
        // Eigenvector roundoff is amplified by 1/√m in the far tails.
        for i in r.grid().bulk(4.0) {
            assert!(pair.log_f()[i].abs() < 1e-10 && pair.log_g()[i].abs() < 1e-10);
        }
        assert!(pair.log_f().iter().chain(pair.log_g()).all(|l| l.abs() < 1e-7));
        assert!(pair.residual() < 1e-12);
        assert!(pair.entropic_cost().abs() < 1e-10);
        let sol = pair.solution(9).unwrap();
        assert!(sol.energy.abs() < 1e-10);
        assert!(sol.fisher_integral.abs() < 1e-10);
        assert!(sol.action.abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let r = ReferenceProcess::ou(1.0, 51, Backend::OuExact).unwrap();
        let m = MDensity::uniform(51);
        assert!(matches!(
            sinkhorn_solve(&m, &m, 0.0, &r, 1e-10, 10),
            Err(SinkhornError::Other(Error::NonPositiveTime(_)))
        ));
        assert!(matches!(sinkhorn_solve(&m, &m, 1.0, &r, 0.0, 10), Err(SinkhornError::Other(_))));
        let short = MDensity::uniform(50);
        assert!(sinkhorn_solve(&short, &m, 1.0, &r, 1e-10, 10).is_err());
    }

    #[test]
    fn max_iter_returns_best_iterate() {
        let r = ReferenceProcess::ou(1.0, 101, Backend::OuExact).unwrap();
        let x = r.grid().points();
        let mu =
            r.density_from_lebesgue(&x.iter().map(|&v: &f64| (-(v - 1.5).powi(2)).exp()).collect::<Vec<_>>()).unwrap();
        let nu =
            r.density_from_lebesgue(&x.iter().map(|&v: &f64| (-(v + 1.5).powi(2)).exp()).collect::<Vec<_>>()).unwrap();
        match sinkhorn_solve(&mu, &nu, 0.1, &r, 1e-14, 2) {
            Err(SinkhornError::MaxIterExceeded(p)) => {
                assert_eq!(p.iterations(), 2);
                assert!(p.residual() > 1e-14);
                let e: Error = SinkhornError::MaxIterExceeded(p).into();
                assert!(matches!(e, Error::MaxIterExceeded { iterations: 2, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
