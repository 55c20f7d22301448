//! Numeric checks of the functional inequalities and long-time bounds. Every
//! check returns both sides; [`InequalityReport`] aggregates instances.

use rayon::prelude::*;

use crate::bridge::{sinkhorn_solve, BridgeSolution, SchrodingerPair, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{fisher_information, relative_entropy, MDensity};
use crate::marginals::bump_with_moments;
use crate::reference::ReferenceProcess;
use crate::scalar::Scalar;

/// Default slack `max(1e-6, 1e-3·|rhs|)`.
pub fn default_slack<S: Scalar>(rhs: S) -> S {
    S::of(1e-6).max(S::of(1e-3) * rhs.abs())
}

#[derive(Debug, Clone)]
pub struct InequalityReport<S> {
    pub name: String,
    pub instances: usize,
    /// `max(lhs − rhs − slack)`; positive means violated beyond slack.
    pub max_violation: S,
    /// Largest slack used.
    pub slack: S,
    pub details: Vec<(S, S)>,
}

impl<S: Scalar> InequalityReport<S> {
    pub fn new(name: impl Into<String>, details: Vec<(S, S)>, slack: impl Fn(S) -> S) -> Self {
        let mut max_violation = S::neg_infinity();
        let mut max_slack = S::zero();
        for &(l, r) in &details {
            let s = slack(r);
            max_slack = max_slack.max(s);
            max_violation = max_violation.max(l - r - s);
        }
        Self { name: name.into(), instances: details.len(), max_violation, slack: max_slack, details }
    }

    pub fn with_default_slack(name: impl Into<String>, details: Vec<(S, S)>) -> Self {
        Self::new(name, details, default_slack)
    }

    pub fn passed(&self) -> bool {
        !(self.max_violation > S::zero()) && self.details.iter().all(|(l, r)| l.is_finite() && r.is_finite())
    }

    /// `max(lhs − rhs)` without slack.
    pub fn raw_excess(&self) -> S {
        self.details.iter().map(|&(l, r)| l - r).fold(S::neg_infinity(), |a, b| a.max(b))
    }
}

fn require_positive_kappa<S: Scalar>(kappa: S) -> Result<()> {
    if kappa > S::zero() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("this inequality needs κ > 0".into()))
    }
}

/// `C_T ≤ H(μ)/(1−e^{−κTt}) + H(ν)/(1−e^{−κT(1−t)})`.
pub fn talagrand<S: Scalar>(sol: &BridgeSolution<'_, S>, t: S) -> Result<(S, S)> {
    let kappa = sol.pair.reference().kappa();
    require_positive_kappa(kappa)?;
    if !(t > S::zero() && t < S::one()) {
        return Err(Error::InvalidArgument("t must lie in (0, 1)".into()));
    }
    let horizon = sol.horizon();
    let rhs = talagrand_coefficient(kappa, horizon * t) * sol.entropy_mu
        + talagrand_coefficient(kappa, horizon * (S::one() - t)) * sol.entropy_nu;
    Ok((sol.cost, rhs))
}

/// `1/(1 − e^{−κs})`.
pub fn talagrand_coefficient<S: Scalar>(kappa: S, s: S) -> S {
    -S::one() / (-kappa * s).exp_m1()
}

/// `|E_T| ≤ κ/(e^{κT/2}−1)·√((C−H(μ))(C−H(ν)))`, or `1/T·√(…)` when `κ = 0`.
pub fn energy_transport<S: Scalar>(sol: &BridgeSolution<'_, S>) -> (S, S) {
    let kappa = sol.pair.reference().kappa();
    let horizon = sol.horizon();
    let root = ((sol.cost - sol.entropy_mu).max(S::zero()) * (sol.cost - sol.entropy_nu).max(S::zero())).sqrt();
    let coef = if kappa == S::zero() { S::one() / horizon } else { kappa / (kappa * horizon / S::of(2.0)).exp_m1() };
    (sol.energy.abs(), coef * root)
}

/// `T|E_T| ≤ C_T − ½(H(μ) + H(ν))`.
pub fn cost_energy_bound<S: Scalar>(sol: &BridgeSolution<'_, S>) -> (S, S) {
    (sol.horizon() * sol.energy.abs(), sol.cost - (sol.entropy_mu + sol.entropy_nu) / S::of(2.0))
}

/// Both sides of the four long-time bounds at one horizon.
///
/// The energy bounds are kept in two forms. `simple_energy` and
/// `stronger_energy` use the entropy factors `(H(μ)+H(ν))²` and
/// `H(μ)H(ν) + δe^{−κT/2}` as they are usually displayed. Combining the
/// energy-transport inequality with the Talagrand bound at `t = ½` actually
/// gives `√(H(μ)H(ν) + δe^{−κT/2}) ≤ H(μ)+H(ν)`, which is what the `derived_*`
/// fields hold. The displayed forms fail for marginals close to `m`, where
/// `|E_T|` is quadratic in the perturbation but the displayed bounds are quartic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTimeBounds<S> {
    pub horizon: S,
    /// `|C_T − H(μ) − H(ν)|`.
    pub cost_gap: S,
    pub energy: S,
    pub simple_cost: S,
    pub simple_energy: S,
    pub stronger_cost: S,
    pub stronger_energy: S,
    pub derived_simple_energy: S,
    pub derived_stronger_energy: S,
}

impl<S: Scalar> LongTimeBounds<S> {
    pub fn evaluate(kappa: S, horizon: S, h_mu: S, h_nu: S, cost: S, energy: S) -> Self {
        let two = S::of(2.0);
        let e = (-kappa * horizon / two).exp();
        let sum = h_mu + h_nu;
        let delta = h_mu * h_mu + e * h_mu * h_nu + h_nu * h_nu;
        let denom = (kappa * horizon / two).exp_m1();
        let energy_pref = kappa * e / ((-kappa * horizon / two).exp_m1() * (-kappa * horizon / two).exp_m1());
        let mixed = h_mu * h_nu + delta * e;
        Self {
            horizon,
            cost_gap: (cost - sum).abs(),
            energy: energy.abs(),
            simple_cost: two * sum / denom,
            simple_energy: energy_pref * sum * sum,
            stronger_cost: two * mixed.sqrt() / denom,
            stronger_energy: energy_pref * mixed,
            derived_simple_energy: energy_pref * sum,
            derived_stronger_energy: energy_pref * mixed.sqrt(),
        }
    }

    pub fn from_solution(sol: &BridgeSolution<'_, S>) -> Result<Self> {
        let kappa = sol.pair.reference().kappa();
        require_positive_kappa(kappa)?;
        Ok(Self::evaluate(kappa, sol.horizon(), sol.entropy_mu, sol.entropy_nu, sol.cost, sol.energy))
    }

    /// `(lhs, rhs)` for simple cost, simple energy, stronger cost, stronger
    /// energy, energy bounds in the displayed form.
    pub fn pairs(&self) -> [(S, S); 4] {
        [
            (self.cost_gap, self.simple_cost),
            (self.energy, self.simple_energy),
            (self.cost_gap, self.stronger_cost),
            (self.energy, self.stronger_energy),
        ]
    }

    /// As [`pairs`](Self::pairs) with the derived energy bounds.
    pub fn derived_pairs(&self) -> [(S, S); 4] {
        [
            (self.cost_gap, self.simple_cost),
            (self.energy, self.derived_simple_energy),
            (self.cost_gap, self.stronger_cost),
            (self.energy, self.derived_stronger_energy),
        ]
    }

    pub fn stronger_is_tighter(&self) -> bool {
        self.stronger_cost <= self.simple_cost
            && self.stronger_energy <= self.simple_energy
            && self.derived_stronger_energy <= self.derived_simple_energy
    }
}

/// Long-time limits at the last horizon of a solved ladder.
#[derive(Debug, Clone)]
pub struct LimitReport<S> {
    pub ts: Vec<S>,
    pub gaps: Vec<S>,
    /// `‖f − ρ‖_{L¹(m)}` at the largest horizon.
    pub f_distance: S,
    /// `‖g − σ‖_{L¹(m)}`.
    pub g_distance: S,
    /// `‖P_T f − 1‖_{L¹(m)}`.
    pub pf_distance: S,
    /// `‖π − μ⊗ν‖_{L¹(m⊗m)}`.
    pub coupling_distance: S,
}

impl<S: Scalar> LimitReport<S> {
    pub fn passed(&self, tol: S) -> bool {
        let last = *self.gaps.last().unwrap_or(&S::infinity());
        let decreasing = self.gaps.windows(2).all(|w| w[1] <= w[0] + S::of(1e-12));
        decreasing
            && last <= tol
            && self.f_distance <= tol
            && self.g_distance <= tol
            && self.pf_distance <= tol
            && self.coupling_distance <= tol
    }
}

pub fn limit_longtime<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    ts: &[S],
) -> Result<LimitReport<S>> {
    let last = *ts.last().ok_or_else(|| Error::InvalidArgument("empty horizon ladder".into()))?;
    let m = reference.m();
    let h = relative_entropy(mu, m)? + relative_entropy(nu, m)?;
    let cfg = SolverConfig::<S>::default();
    let pairs: Vec<Result<SchrodingerPair<'_, S>>> =
        ts.par_iter().map(|&t| Ok(sinkhorn_solve(mu, nu, t, reference, cfg.tol, cfg.max_iter)?)).collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let gaps = pairs.iter().map(|p| (p.entropic_cost() - h).abs()).collect();
    let pair = pairs.last().expect("non-empty");
    let l1 = |a: &[S], b: &[S]| a.iter().zip(b).zip(m).map(|((&x, &y), &w)| (x - y).abs() * w).sum::<S>();
    let f = pair.f();
    let g = pair.g();
    let pf = reference.apply(last, f.values())?;
    let ones = vec![S::one(); m.len()];
    let coupling = pair.coupling()?;
    let n = m.len();
    let mut coupling_distance = S::zero();
    for i in 0..n {
        for j in 0..n {
            let prod = mu.values()[i] * nu.values()[j];
            coupling_distance = coupling_distance + (coupling[i * n + j] - prod).abs() * m[i] * m[j];
        }
    }
    Ok(LimitReport {
        ts: ts.to_vec(),
        gaps,
        f_distance: l1(f.values(), mu.values()),
        g_distance: l1(g.values(), nu.values()),
        pf_distance: l1(pf.values(), &ones),
        coupling_distance,
    })
}

/// Distorted κ-convexity of the entropy along the interpolation: `(lhs, rhs)`
/// at each `t` of `ts`.
pub fn kconvexity<S: Scalar>(sol: &BridgeSolution<'_, S>, ts: &[S]) -> Result<Vec<(S, S)>> {
    let reference = sol.pair.reference();
    let kappa = reference.kappa();
    require_positive_kappa(kappa)?;
    let horizon = sol.horizon();
    let kt = kappa * horizon;
    let half = S::of(0.5);
    let denom = -(-kt).exp_m1();
    ts.iter()
        .map(|&t| {
            let rho = sol.pair.interpolation(t)?;
            let lhs = relative_entropy(&rho, reference.m())?;
            let wa = -(-kt * (S::one() - t)).exp_m1() / denom;
            let wb = -(-kt * t).exp_m1() / denom;
            let c = ((kt * half).cosh() - (kt * (t - half)).cosh()) / (kt * half).sinh();
            Ok((lhs, wa * sol.entropy_mu + wb * sol.entropy_nu - c * sol.cost))
        })
        .collect()
}

/// `H(ρ m | m) ≤ (1/2κ) ∫|∇log ρ|²ρ dm`.
pub fn logsob<S: Scalar>(rho: &MDensity<S>, reference: &ReferenceProcess<S>) -> Result<(S, S)> {
    let kappa = reference.kappa();
    require_positive_kappa(kappa)?;
    let m = reference.m();
    let lhs = relative_entropy(rho, m)?;
    let fisher = fisher_information(reference.grid(), rho, m)?;
    Ok((lhs, fisher / (S::of(2.0) * kappa)))
}

/// `β(T) = κσ²/(e^{κT}−1) + ½log(1−e^{−κT})`.
pub fn beta<S: Scalar>(kappa: S, second_moment: S, horizon: S) -> S {
    kappa * second_moment / (kappa * horizon).exp_m1() + (-(-kappa * horizon).exp_m1()).ln() / S::of(2.0)
}

#[derive(Debug, Clone)]
pub struct SharpnessReport<S> {
    pub ts: Vec<S>,
    pub gaps: Vec<S>,
    /// Least-squares slope of `log gap` against `T` (gaps below `1e-12` dropped).
    pub slope: S,
    pub betas: Vec<S>,
}

/// Compactly supported marginals with means `±mean` (`mean_mu`, `mean_nu`) and
/// second moments `second_mu`, `second_nu`; fits the decay rate of the
/// long-time gap `|C_T − H(μ) − H(ν)|`.
pub fn sharpness_experiment<S: Scalar>(
    reference: &ReferenceProcess<S>,
    ts: &[S],
    (mean_mu, second_mu): (S, S),
    (mean_nu, second_nu): (S, S),
) -> Result<SharpnessReport<S>> {
    let mu = bump_with_moments(reference, mean_mu, second_mu)?;
    let nu = bump_with_moments(reference, mean_nu, second_nu)?;
    let m = reference.m();
    let h = relative_entropy(&mu, m)? + relative_entropy(&nu, m)?;
    let costs: Vec<Result<S>> = ts
        .par_iter()
        .map(|&t| Ok(sinkhorn_solve(&mu, &nu, t, reference, S::of(1e-13), 100_000)?.entropic_cost()))
        .collect();
    let gaps = costs.into_iter().map(|c| c.map(|c| (c - h).abs())).collect::<Result<Vec<S>>>()?;
    let points: Vec<(S, S)> =
        ts.iter().zip(&gaps).filter(|(_, &g)| g > S::of(1e-12)).map(|(&t, &g)| (t, g.ln())).collect();
    let slope = fit_slope(&points)?;
    let kappa = reference.kappa();
    let second = if second_mu == second_nu { second_mu } else { (second_mu + second_nu) / S::of(2.0) };
    let betas = ts.iter().map(|&t| beta(kappa, second, t)).collect();
    Ok(SharpnessReport { ts: ts.to_vec(), gaps, slope, betas })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope<S: Scalar>(points: &[(S, S)]) -> Result<S> {
    if points.len() < 2 {
        return Err(Error::IllConditioned("need at least two points above the floor".into()));
    }
    let n = S::of_usize(points.len());
    let mx = points.iter().map(|p| p.0).sum::<S>() / n;
    let my = points.iter().map(|p| p.1).sum::<S>() / n;
    let sxx: S = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: S = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > S::zero()) {
        return Err(Error::IllConditioned("abscissae coincide".into()));
    }
    Ok(sxy / sxx)
}
