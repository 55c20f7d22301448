//! Marginal families used by the experiments: Gaussian mixtures and smooth
//! compactly supported bumps with prescribed first two moments.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::MDensity;
use crate::reference::ReferenceProcess;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Component<S> {
    pub weight: S,
    pub mean: S,
    pub var: S,
}

/// Finite Gaussian mixture, evaluated on the grid as a Lebesgue density and
/// renormalized by quadrature (the tails beyond the grid are negligible for the
/// parameter ranges used here).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<S> {
    pub components: Vec<Component<S>>,
}

impl<S: Scalar> GaussianMixture<S> {
    pub fn gaussian(mean: S, var: S) -> Self {
        Self { components: vec![Component { weight: S::one(), mean, var }] }
    }

    pub fn new(components: Vec<Component<S>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > S::zero() && c.var > S::zero()) || !c.mean.is_finite() {
                return Err(Error::InvalidArgument("mixture weights and variances must be positive".into()));
            }
        }
        Ok(Self { components })
    }

    /// Random mixture with 1-3 components, means in `[-1.5, 1.5]/√κ` and
    /// variances in `[0.15, 0.6]/κ`. Variances below `1/κ` keep `dμ/dm`
    /// bounded.
    pub fn random<R: Rng>(rng: &mut R, kappa: S) -> Self {
        let k = rng.gen_range(1..=3usize);
        let scale = S::one() / kappa.sqrt();
        let components = (0..k)
            .map(|_| Component {
                weight: S::of(rng.gen_range(0.2..1.0)),
                mean: S::of(rng.gen_range(-1.5..1.5)) * scale,
                var: S::of(rng.gen_range(0.15..0.6)) * scale * scale,
            })
            .collect();
        Self { components }
    }

    pub fn lebesgue(&self, x: S) -> S {
        let two_pi = S::of(2.0 * std::f64::consts::PI);
        let total: S = self.components.iter().map(|c| c.weight).sum();
        self.components
            .iter()
            .map(|c| {
                let d = x - c.mean;
                c.weight * (-(d * d) / (S::of(2.0) * c.var)).exp() / (two_pi * c.var).sqrt()
            })
            .sum::<S>()
            / total
    }

    pub fn mean(&self) -> S {
        let total: S = self.components.iter().map(|c| c.weight).sum();
        self.components.iter().map(|c| c.weight * c.mean).sum::<S>() / total
    }

    /// Density with respect to the reference measure.
    pub fn density(&self, reference: &ReferenceProcess<S>) -> Result<MDensity<S>> {
        let vals: Vec<S> = reference.grid().points().iter().map(|&x| self.lebesgue(x)).collect();
        reference.density_from_lebesgue(&vals)
    }
}

/// Smooth plateau cutoff: 1 on `|x| ≤ inner`, 0 on `|x| ≥ outer`, C^∞ between.
pub fn plateau<S: Scalar>(x: S, inner: S, outer: S) -> S {
    let ax = x.abs();
    if ax <= inner {
        return S::one();
    }
    if ax >= outer {
        return S::zero();
    }
    let s = (ax - inner) / (outer - inner);
    let bump = |u: S| if u > S::zero() { (-S::one() / u).exp() } else { S::zero() };
    let a = bump(S::one() - s);
    a / (a + bump(s))
}

/// Compactly supported Lipschitz marginal with mean `mean` and second moment
/// `second_moment`: a Gaussian `N(c, s²)` multiplied by a plateau cutoff on
/// `[-4, 4]/√κ`; `(c, s²)` found by 2-parameter Newton shooting.
pub fn bump_with_moments<S: Scalar>(reference: &ReferenceProcess<S>, mean: S, second_moment: S) -> Result<MDensity<S>> {
    let kappa = reference.kappa();
    let scale = if kappa > S::zero() { S::one() / kappa.sqrt() } else { S::one() };
    let (inner, outer) = (S::of(3.0) * scale, S::of(4.0) * scale);
    let xs = reference.grid().points();
    let quad = reference.grid().quad();
    let var_target = second_moment - mean * mean;
    if !(var_target > S::zero()) {
        return Err(Error::InvalidArgument("second moment must exceed the squared mean".into()));
    }
    let eval = |c: S, v: S| -> (Vec<S>, S, S) {
        let vals: Vec<S> = xs
            .iter()
            .map(|&x| {
                let d = x - c;
                (-(d * d) / (S::of(2.0) * v)).exp() * plateau(x, inner, outer)
            })
            .collect();
        let mass: S = vals.iter().zip(quad).map(|(&a, &w)| a * w).sum();
        let m1: S = vals.iter().zip(quad).zip(xs).map(|((&a, &w), &x)| a * w * x).sum::<S>() / mass;
        let m2: S = vals.iter().zip(quad).zip(xs).map(|((&a, &w), &x)| a * w * x * x).sum::<S>() / mass;
        (vals, m1, m2 - m1 * m1)
    };
    let (mut c, mut v) = (mean, var_target);
    for _ in 0..100 {
        let (_, m1, var) = eval(c, v);
        let (r1, r2) = (m1 - mean, var - var_target);
        if r1.abs() < S::of(1e-13) && r2.abs() < S::of(1e-13) {
            let (vals, _, _) = eval(c, v);
            return reference.density_from_lebesgue(&vals);
        }
        let (ec, ev) = (S::of(1e-6), S::of(1e-6) * v);
        let (_, m1c, varc) = eval(c + ec, v);
        let (_, m1v, varv) = eval(c, v + ev);
        let j = [(m1c - m1) / ec, (m1v - m1) / ev, (varc - var) / ec, (varv - var) / ev];
        let det = j[0] * j[3] - j[1] * j[2];
        if det == S::zero() || !det.is_finite() {
            break;
        }
        let dc = (j[3] * r1 - j[1] * r2) / det;
        let dv = (-j[2] * r1 + j[0] * r2) / det;
        c = c - dc;
        v = (v - dv).max(v / S::of(4.0));
    }
    Err(Error::IllConditioned("moment shooting did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Backend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixture_density_is_normalized() {
        let r = ReferenceProcess::ou(1.0, 401, Backend::OuExact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let mix = GaussianMixture::random(&mut rng, 1.0);
            let rho = mix.density(&r).unwrap();
            let mass: f64 = rho.values().iter().zip(r.m()).map(|(a, b)| a * b).sum();
            assert!((mass - 1.0).abs() < 1e-12);
            let grid_mean: f64 =
                r.grid().points().iter().zip(rho.values()).zip(r.m()).map(|((x, a), b)| x * a * b).sum();
            assert!((grid_mean - mix.mean()).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_moments() {
        let g = GaussianMixture::gaussian(1.0, 0.25);
        assert!((g.lebesgue(1.0) - 1.0 / (2.0 * std::f64::consts::PI * 0.25).sqrt()).abs() < 1e-14);
        assert!(GaussianMixture::<f64>::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![Component { weight: 1.0, mean: 0.0, var: -1.0 }]).is_err());
    }

    #[test]
    fn plateau_shape() {
        assert_eq!(plateau(0.5, 1.0, 2.0), 1.0);
        assert_eq!(plateau(2.5, 1.0, 2.0), 0.0);
        assert!((plateau(1.5f64, 1.0, 2.0) - 0.5).abs() < 1e-14);
        assert!(plateau(1.2, 1.0, 2.0) > plateau(1.8, 1.0, 2.0));
    }

    #[test]
    fn bump_hits_its_moments() {
        let r = ReferenceProcess::ou(1.0f64, 801, Backend::OuExact).unwrap();
        let rho = bump_with_moments(&r, 1.0, 1.5).unwrap();
        let x = r.grid().points();
        let mom = |k: i32| -> f64 { x.iter().zip(rho.values()).zip(r.m()).map(|((x, a), b)| x.powi(k) * a * b).sum() };
        assert!((mom(1) - 1.0).abs() < 1e-10);
        assert!((mom(2) - 1.5).abs() < 1e-10);
        for (xi, v) in x.iter().zip(rho.values()) {
            if xi.abs() >= 4.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }
}
