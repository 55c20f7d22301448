//! Dual side of the problem: the Hopf operator `Q_t^T φ = −T log P_{Tt} e^{−φ/T}`,
//! weak and strong duality, and the exponential form of the entropic
//! Talagrand inequality with its sharp constant.

use rand::Rng;

use crate::bridge::SchrodingerPair;
use crate::error::{Error, Result};
use crate::grid::{relative_entropy, GridFunction, MDensity};
use crate::reference::ReferenceProcess;
use crate::scalar::{log_sum_exp, Scalar};

fn check_finite<S: Scalar>(phi: &[S]) -> Result<()> {
    match phi.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// `Q_t^T φ = −T log P_{Tt}(e^{−φ/T})`, evaluated in the log domain.
pub fn hopf_operator<S: Scalar>(
    reference: &ReferenceProcess<S>,
    horizon: S,
    t: S,
    phi: &[S],
) -> Result<GridFunction<S>> {
    if !(horizon > S::zero()) {
        return Err(Error::NonPositiveTime(horizon.f64()));
    }
    if !(t > S::zero() && t <= S::one()) {
        return Err(Error::InvalidArgument("t must lie in (0, 1]".into()));
    }
    check_finite(phi)?;
    let log_u: Vec<S> = phi.iter().map(|&p| -p / horizon).collect();
    let lp = reference.log_apply(horizon * t, &log_u)?;
    Ok(GridFunction(lp.into_iter().map(|v| -horizon * v).collect()))
}

/// Closed form of `Q_1^T` applied to `φ(x) = αx` for the OU reference.
pub fn hopf_linear_ou<S: Scalar>(kappa: S, horizon: S, alpha: S, x: S) -> S {
    x * alpha * (-kappa * horizon / S::of(2.0)).exp()
        + alpha * alpha * (-kappa * horizon).exp_m1() / (S::of(2.0) * kappa * horizon)
}

fn integrate<S: Scalar>(f: &[S], rho: &MDensity<S>, m: &[S]) -> S {
    f.iter().zip(rho.values()).zip(m).filter(|((_, &r), _)| r > S::zero()).map(|((&a, &r), &w)| a * r * w).sum()
}

/// `T H(μ|m) + ∫Q_1^T φ dμ − ∫φ dν`; never exceeds `T C_T`.
pub fn dual_value<S: Scalar>(
    mu: &MDensity<S>,
    nu: &MDensity<S>,
    reference: &ReferenceProcess<S>,
    horizon: S,
    phi: &[S],
) -> Result<S> {
    let m = reference.m();
    let q = hopf_operator(reference, horizon, S::one(), phi)?;
    Ok(horizon * relative_entropy(mu, m)? + integrate(q.values(), mu, m) - integrate(phi, nu, m))
}

/// Dual value at `φ* = −T log g`. Computed from `log g` directly so that
/// `φ* = +∞` off the support of `ν` is allowed.
pub fn dual_at_optimum<S: Scalar>(pair: &SchrodingerPair<'_, S>) -> Result<S> {
    let reference = pair.reference();
    let horizon = pair.horizon();
    let m = reference.m();
    let log_pg = reference.log_apply(horizon, pair.log_g())?;
    let q: Vec<S> = log_pg.iter().map(|&v| -horizon * v).collect();
    let phi: Vec<S> = pair.log_g().iter().map(|&v| -horizon * v).collect();
    Ok(horizon * relative_entropy(pair.mu(), m)? + integrate(&q, pair.mu(), m) - integrate(&phi, pair.nu(), m))
}

#[derive(Debug, Clone)]
pub struct DualReport<S> {
    /// `T C_T`.
    pub primal: S,
    pub dual_at_star: S,
    /// `primal − dual_value(φ)` per test function.
    pub gaps: Vec<S>,
}

impl<S: Scalar> DualReport<S> {
    pub fn compute(pair: &SchrodingerPair<'_, S>, test_functions: &[Vec<S>]) -> Result<Self> {
        let primal = pair.horizon() * pair.entropic_cost();
        let gaps = test_functions
            .iter()
            .map(|phi| Ok(primal - dual_value(pair.mu(), pair.nu(), pair.reference(), pair.horizon(), phi)?))
            .collect::<Result<Vec<S>>>()?;
        Ok(Self { primal, dual_at_star: dual_at_optimum(pair)?, gaps })
    }

    pub fn min_gap(&self) -> S {
        self.gaps.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn strong_gap(&self) -> S {
        (self.primal - self.dual_at_star).abs() / self.primal.abs().max(S::one())
    }

    pub fn passed(&self, weak_slack: S, strong_tol: S) -> bool {
        self.min_gap() >= -weak_slack && self.strong_gap() <= strong_tol
    }
}

/// Bounded random test function `T Σ_k (a_k cos(kx/2) + b_k sin(kx/2)) + c tanh x`
/// with coefficients uniform in `[-1, 1]`.
pub fn random_test_function<S: Scalar, R: Rng>(rng: &mut R, reference: &ReferenceProcess<S>, horizon: S) -> Vec<S> {
    let coeffs: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let c = S::of(rng.gen_range(-1.0..1.0));
    reference
        .grid()
        .points()
        .iter()
        .map(|&x| {
            let trig: S = coeffs
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| {
                    let w = S::of_usize(k + 1) * x / S::of(2.0);
                    S::of(a) * w.cos() + S::of(b) * w.sin()
                })
                .sum();
            horizon * trig + c * x.tanh()
        })
        .collect()
}

/// `(∫e^{−φ/(TC)} dm, exp(−(1/(TC)) ∫Q_1^T φ dm))`. The first never exceeds
/// the second for every `φ` iff `C ≥ 1/(1 − e^{−κT})`.
pub fn exp_exp_check<S: Scalar>(reference: &ReferenceProcess<S>, horizon: S, c: S, phi: &[S]) -> Result<(S, S)> {
    if !(reference.kappa() > S::zero()) {
        return Err(Error::InvalidArgument("needs κ > 0".into()));
    }
    if !(c > S::zero()) {
        return Err(Error::InvalidArgument("constant must be positive".into()));
    }
    let (log_lhs, log_rhs) = exp_exp_logs(reference, horizon, c, phi)?;
    Ok((log_lhs.exp(), log_rhs.exp()))
}

/// Logarithms of both sides of [`exp_exp_check`].
pub fn exp_exp_logs<S: Scalar>(reference: &ReferenceProcess<S>, horizon: S, c: S, phi: &[S]) -> Result<(S, S)> {
    let mean_q = mean_hopf(reference, horizon, phi)?;
    Ok(exp_exp_from_mean(reference, horizon, c, phi, mean_q))
}

fn mean_hopf<S: Scalar>(reference: &ReferenceProcess<S>, horizon: S, phi: &[S]) -> Result<S> {
    let m = reference.m();
    let q = hopf_operator(reference, horizon, S::one(), phi)?;
    Ok(q.values().iter().zip(m).map(|(&a, &w)| a * w).sum::<S>() / m.iter().copied().sum::<S>())
}

fn exp_exp_from_mean<S: Scalar>(reference: &ReferenceProcess<S>, horizon: S, c: S, phi: &[S], mean_q: S) -> (S, S) {
    let scale = horizon * c;
    let log_lhs = log_sum_exp(phi.iter().zip(reference.log_m()).map(|(&p, &lm)| lm - p / scale));
    let log_mass = reference.m().iter().copied().sum::<S>().ln();
    (log_lhs - log_mass, -mean_q / scale)
}

#[derive(Debug, Clone)]
pub struct SharpnessScan<S> {
    pub horizon: S,
    pub constants: Vec<S>,
    /// Per constant: whether some `α` violates the inequality.
    pub violated: Vec<bool>,
    /// Smallest scanned constant above which no violation occurs.
    pub threshold: S,
    /// `1/(1 − e^{−κT})`.
    pub expected: S,
}

impl<S: Scalar> SharpnessScan<S> {
    pub fn relative_error(&self) -> S {
        (self.threshold / self.expected - S::one()).abs()
    }
}

pub const SCAN_SLOPES: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

/// Scans `C` over `constants` (ascending) with `φ(x) = αx`, `α` in
/// [`SCAN_SLOPES`].
pub fn talagrand_sharpness_scan<S: Scalar>(
    reference: &ReferenceProcess<S>,
    horizon: S,
    constants: &[S],
) -> Result<SharpnessScan<S>> {
    let kappa = reference.kappa();
    if !(kappa > S::zero()) {
        return Err(Error::InvalidArgument("needs κ > 0".into()));
    }
    if constants.is_empty() || constants.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("constants must be strictly increasing".into()));
    }
    let xs = reference.grid().points();
    let phis: Vec<Vec<S>> = SCAN_SLOPES.iter().map(|&a| xs.iter().map(|&x| S::of(a) * x).collect()).collect();
    let means = phis.iter().map(|phi| mean_hopf(reference, horizon, phi)).collect::<Result<Vec<S>>>()?;
    let mut violated = Vec::with_capacity(constants.len());
    for &c in constants {
        let mut bad = false;
        for (phi, &mean_q) in phis.iter().zip(&means) {
            let (l, r) = exp_exp_from_mean(reference, horizon, c, phi, mean_q);
            bad |= l > r + S::of(1e-12) * r.abs().max(S::one());
        }
        violated.push(bad);
    }
    let first_ok = violated.iter().rposition(|&v| v).map_or(0, |k| k + 1);
    let threshold = constants.get(first_ok).copied().unwrap_or(S::infinity());
    Ok(SharpnessScan {
        horizon,
        constants: constants.to_vec(),
        violated,
        threshold,
        expected: -S::one() / (-kappa * horizon).exp_m1(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::sinkhorn_solve;
    use crate::marginals::GaussianMixture;
    use crate::reference::Backend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ou() -> ReferenceProcess<f64> {
        ReferenceProcess::ou(1.0, 801, Backend::OuExact).unwrap()
    }

    #[test]
    fn hopf_of_linear_function() {
        let r = ou();
        let xs = r.grid().points();
        let phi: Vec<f64> = xs.to_vec();
        let q = hopf_operator(&r, 1.0, 1.0, &phi).unwrap();
        assert!((hopf_linear_ou(1.0f64, 1.0, 1.0, 0.0) + 0.316060).abs() < 1e-6);
        assert!((hopf_linear_ou(1.0f64, 1.0, 1.0, 1.0) - 0.290471).abs() < 1e-6);
        for i in r.grid().bulk(4.0) {
            assert!((q.values()[i] - hopf_linear_ou(1.0, 1.0, 1.0, xs[i])).abs() < 1e-8, "x = {}", xs[i]);
        }
    }

    #[test]
    fn hopf_constants_and_shifts() {
        let r = ou();
        let phi = vec![0.7; r.len()];
        let q = hopf_operator(&r, 2.0, 0.5, &phi).unwrap();
        for i in r.grid().bulk(3.0) {
            assert!((q.values()[i] - 0.7).abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_test_function(&mut rng, &r, 1.0);
        let shifted: Vec<f64> = phi.iter().map(|v| v + 3.0).collect();
        let (a, b) = (hopf_operator(&r, 1.0, 1.0, &phi).unwrap(), hopf_operator(&r, 1.0, 1.0, &shifted).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - x - 3.0).abs() < 1e-10);
        }
        assert!(hopf_operator(&r, 1.0, 0.0, &phi).is_err());
        let mut bad = phi.clone();
        bad[3] = f64::NAN;
        assert!(hopf_operator(&r, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn weak_and_strong_duality() {
        let r = ou();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
        let nu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
        let pair = sinkhorn_solve(&mu, &nu, 1.0, &r, 1e-12, 100_000).map_err(Error::from).unwrap();
        let phis: Vec<Vec<f64>> = (0..5).map(|_| random_test_function(&mut rng, &r, 1.0)).collect();
        let rep = DualReport::compute(&pair, &phis).unwrap();
        assert!(rep.passed(1e-6, 1e-6), "{rep:?}");
        assert!(rep.gaps.iter().all(|&g| g > 1e-4));
    }

    #[test]
    fn exp_exp_equality_case() {
        let r = ou();
        let phi: Vec<f64> = r.grid().points().to_vec();
        let c_star = 1.0 / (1.0 - (-1.0f64).exp());
        assert!((c_star - 1.581977).abs() < 1e-6);
        let (l, rr) = exp_exp_logs(&r, 1.0, c_star, &phi).unwrap();
        assert!((l - rr).abs() < 1e-6);
        let (l, rr) = exp_exp_check(&r, 1.0, 0.9 * c_star, &phi).unwrap();
        assert!(l > rr);
        let flat = vec![2.0; r.len()];
        let (l, rr) = exp_exp_check(&r, 1.0, 1.3, &flat).unwrap();
        assert!((l / rr - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scan_thresholds() {
        let r = ou();
        let cs: Vec<f64> = (0..=300).map(|k| 1.0 + k as f64 * 0.005).collect();
        for (t, want) in [(1.0, 1.582), (3.0, 1.052)] {
            let scan = talagrand_sharpness_scan(&r, t, &cs).unwrap();
            assert!((scan.threshold / want - 1.0).abs() < 0.02, "{} vs {want}", scan.threshold);
            assert!(scan.relative_error() < 0.02);
        }
    }
}
