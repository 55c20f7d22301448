//! The cost as a function of the horizon: sweeps, the first-derivative
//! identities, Fisher monotonicity and the second-derivative formula.

use rayon::prelude::*;

use crate::bridge::{sinkhorn_solve, solve_bridge, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::MDensity;
use crate::reference::ReferenceProcess;
use crate::scalar::Scalar;

/// Relative step for the central differences in `T`.
pub const REL_STEP: f64 = 1e-3;
/// Solver tolerance used for every differenced solve.
pub const DERIV_TOL: f64 = 1e-12;

/// One row per horizon. Entries whose solve failed carry `NaN` and the error
/// message in `failures`.
#[derive(Debug, Clone)]
pub struct SweepReport<S> {
    pub ts: Vec<S>,
    pub costs: Vec<S>,
    pub energies: Vec<S>,
    pub fisher_integrals: Vec<S>,
    /// `|dC/dT + E_T|`, central differences with `h = 1e-3·T`.
    pub deriv_residuals: Vec<S>,
    /// Relative residual of `d(T C_T)/dT = C_T − T E_T`.
    pub rescaled_deriv_residuals: Vec<S>,
    pub failures: Vec<Option<String>>,
}

impl<S: Scalar> SweepReport<S> {
    pub fn all_ok(&self) -> bool {
        self.failures.iter().all(Option::is_none)
    }
}

fn cost_at<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    horizon: S,
    reference: &ReferenceProcess<S>,
    cfg: &SolverConfig<S>,
) -> Result<S> {
    Ok(sinkhorn_solve(mu, nu, horizon, reference, cfg.tol, cfg.max_iter)?.entropic_cost())
}

fn derivative_cfg<S: Scalar>(cfg: &SolverConfig<S>) -> SolverConfig<S> {
    let tol = if cfg.tol < S::of(DERIV_TOL) { cfg.tol } else { S::of(DERIV_TOL) };
    (*cfg).with_tol(tol)
}

/// Everything the derivative checks need at one horizon.
#[derive(Debug, Clone)]
pub struct DerivativeSample<S> {
    pub horizon: S,
    pub step: S,
    pub cost: S,
    pub cost_plus: S,
    pub cost_minus: S,
    pub energy: S,
    pub fisher_integral: S,
    pub entropy_mu: S,
    pub entropy_nu: S,
}

impl<S: Scalar> DerivativeSample<S> {
    pub fn measure(
        mu: &MDensity<S>,
        nu: &MDensity<S>,
        reference: &ReferenceProcess<S>,
        horizon: S,
        step: S,
        cfg: &SolverConfig<S>,
    ) -> Result<Self> {
        if !(step > S::zero() && horizon > step) {
            return Err(Error::InvalidArgument("need T > h > 0".into()));
        }
        let cfg = derivative_cfg(cfg);
        let sol = solve_bridge(mu, nu, horizon, reference, &cfg)?;
        Ok(Self {
            horizon,
            step,
            cost: sol.cost,
            cost_plus: cost_at(mu, nu, horizon + step, reference, &cfg)?,
            cost_minus: cost_at(mu, nu, horizon - step, reference, &cfg)?,
            energy: sol.energy,
            fisher_integral: sol.fisher_integral,
            entropy_mu: sol.entropy_mu,
            entropy_nu: sol.entropy_nu,
        })
    }

    pub fn cost_slope(&self) -> S {
        (self.cost_plus - self.cost_minus) / (S::of(2.0) * self.step)
    }

    pub fn rescaled_slope(&self) -> S {
        let (t, h) = (self.horizon, self.step);
        ((t + h) * self.cost_plus - (t - h) * self.cost_minus) / (S::of(2.0) * h)
    }

    /// `|dC/dT + E_T|`.
    pub fn first_residual(&self) -> S {
        (self.cost_slope() + self.energy).abs()
    }

    /// `C_T − T E_T`.
    pub fn rescaled_via_energy(&self) -> S {
        self.cost - self.horizon * self.energy
    }

    /// `½(H(μ) + H(ν)) + (T/4)∫∫|∇log ρ_t|²ρ_t`.
    pub fn rescaled_via_fisher(&self) -> S {
        (self.entropy_mu + self.entropy_nu) / S::of(2.0) + self.horizon / S::of(4.0) * self.fisher_integral
    }

    /// Relative residuals of both forms of `d(T C_T)/dT`.
    pub fn rescaled_residuals(&self) -> (S, S) {
        let d = self.rescaled_slope();
        let scale = d.abs().max(S::of(1e-12));
        ((d - self.rescaled_via_energy()).abs() / scale, (d - self.rescaled_via_fisher()).abs() / scale)
    }
}

/// `|(C_{T+h} − C_{T−h})/(2h) + E_T|`.
pub fn check_first_derivative<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    horizon: S,
    step: S,
) -> Result<S> {
    Ok(DerivativeSample::measure(mu, nu, reference, horizon, step, &SolverConfig::default())?.first_residual())
}

/// Relative residuals of `d(T C_T)/dT = C_T − T E_T` and
/// `d(T C_T)/dT = ½(H(μ)+H(ν)) + (T/4)∫∫|∇log ρ_t|²ρ_t`.
pub fn check_rescaled_derivative<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    horizon: S,
    step: S,
) -> Result<(S, S)> {
    Ok(DerivativeSample::measure(mu, nu, reference, horizon, step, &SolverConfig::default())?.rescaled_residuals())
}

/// Solves at every horizon (concurrently) and differences at `T ± 1e-3·T`.
pub fn sweep<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    ts: &[S],
    cfg: &SolverConfig<S>,
) -> Result<SweepReport<S>> {
    if ts.iter().any(|&t| !(t > S::zero())) {
        return Err(Error::InvalidArgument("horizons must be positive".into()));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
    }
    let rows: Vec<Result<DerivativeSample<S>>> =
        ts.par_iter().map(|&t| DerivativeSample::measure(mu, nu, reference, t, S::of(REL_STEP) * t, cfg)).collect();
    let nan = S::nan();
    let mut report = SweepReport {
        ts: ts.to_vec(),
        costs: Vec::new(),
        energies: Vec::new(),
        fisher_integrals: Vec::new(),
        deriv_residuals: Vec::new(),
        rescaled_deriv_residuals: Vec::new(),
        failures: Vec::new(),
    };
    for row in rows {
        match row {
            Ok(s) => {
                report.costs.push(s.cost);
                report.energies.push(s.energy);
                report.fisher_integrals.push(s.fisher_integral);
                report.deriv_residuals.push(s.first_residual());
                report.rescaled_deriv_residuals.push(s.rescaled_residuals().0);
                report.failures.push(None);
            }
            Err(e) => {
                for v in [
                    &mut report.costs,
                    &mut report.energies,
                    &mut report.fisher_integrals,
                    &mut report.deriv_residuals,
                    &mut report.rescaled_deriv_residuals,
                ] {
                    v.push(nan);
                }
                report.failures.push(Some(e.to_string()));
            }
        }
    }
    Ok(report)
}

/// Fisher integrals along increasing horizons, optionally preceded by the
/// geodesic value standing in for `T = 0`.
#[derive(Debug, Clone)]
pub struct MonotoneReport<S> {
    pub ts: Vec<S>,
    pub values: Vec<S>,
    /// Largest `value[k+1] − value[k] − 1e-6·(1 + value[k])`; `≤ 0` means monotone.
    pub max_increase: S,
}

impl<S: Scalar> MonotoneReport<S> {
    pub fn from_values(ts: Vec<S>, values: Vec<S>) -> Self {
        let max_increase = values
            .windows(2)
            .map(|w| w[1] - w[0] - S::of(1e-6) * (S::one() + w[0].abs()))
            .fold(S::neg_infinity(), |a, b| a.max(b));
        Self { ts, values, max_increase }
    }

    pub fn passed(&self) -> bool {
        !(self.max_increase > S::zero())
    }
}

pub fn check_fisher_monotone<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    ts: &[S],
    geodesic_fisher: Option<S>,
) -> Result<MonotoneReport<S>> {
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
    }
    let cfg = SolverConfig::default();
    let fishers: Vec<Result<S>> =
        ts.par_iter().map(|&t| solve_bridge(mu, nu, t, reference, &cfg).map(|s| s.fisher_integral)).collect();
    let mut out_ts = Vec::new();
    let mut values = Vec::new();
    if let Some(g) = geodesic_fisher {
        out_ts.push(S::zero());
        values.push(g);
    }
    for (&t, f) in ts.iter().zip(fishers) {
        out_ts.push(t);
        values.push(f?);
    }
    Ok(MonotoneReport::from_values(out_ts, values))
}

/// Second differences of `T ↦ T C_T` on a ladder; all should be `≥ 0` near 0.
pub fn rescaled_cost_second_differences<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    ts: &[S],
) -> Result<Vec<S>> {
    if ts.len() < 3 {
        return Err(Error::InvalidArgument("need at least three horizons".into()));
    }
    let cfg = derivative_cfg(&SolverConfig::default());
    let tc: Vec<Result<S>> = ts.par_iter().map(|&t| cost_at(mu, nu, t, reference, &cfg).map(|c| t * c)).collect();
    let tc = tc.into_iter().collect::<Result<Vec<S>>>()?;
    Ok((1..ts.len() - 1)
        .map(|k| {
            let (h0, h1) = (ts[k] - ts[k - 1], ts[k + 1] - ts[k]);
            let s0 = (tc[k] - tc[k - 1]) / h0;
            let s1 = (tc[k + 1] - tc[k]) / h1;
            S::of(2.0) * (s1 - s0) / (h0 + h1)
        })
        .collect())
}

/// Second derivative of `T C_T` two ways: the central second difference, and
/// `−2E_T − T dE/dT` with `dE/dT` by central difference. Both differences use
/// steps `h = 0.01·T` and `2h` combined by Richardson extrapolation. Returns
/// `(direct, via_energy)`.
pub fn second_derivative<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    horizon: S,
) -> Result<(S, S)> {
    let cfg = derivative_cfg(&SolverConfig::default());
    let h = S::of(0.01) * horizon;
    let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let samples: Vec<Result<(S, S)>> = offsets
        .par_iter()
        .map(|&o| {
            let t = horizon + S::of(o) * h;
            solve_bridge(mu, nu, t, reference, &cfg).map(|s| (t * s.cost, s.energy))
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<(S, S)>>>()?;
    let (tc, e): (Vec<S>, Vec<S>) = samples.into_iter().unzip();
    let richardson = |fine: S, coarse: S| (S::of(4.0) * fine - coarse) / S::of(3.0);
    let two = S::of(2.0);
    let d_h = (tc[3] - two * tc[2] + tc[1]) / (h * h);
    let d_2h = (tc[4] - two * tc[2] + tc[0]) / (S::of(4.0) * h * h);
    let de_h = (e[3] - e[1]) / (two * h);
    let de_2h = (e[4] - e[0]) / (S::of(4.0) * h);
    Ok((richardson(d_h, d_2h), -two * e[2] - horizon * richardson(de_h, de_2h)))
}
