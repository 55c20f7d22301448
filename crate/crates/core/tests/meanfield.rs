use bridgelab::meanfield::*;
use bridgelab::*;
use proptest::prelude::*;

fn grid() -> Grid64 {
    Grid64::symmetric(8.0, 241).unwrap()
}

fn lebesgue(g: &Grid64, mix: &GaussianMixture<f64>) -> Vec<f64> {
    normalize_density(g, g.points().iter().map(|&x| mix.lebesgue(x)).collect()).unwrap()
}

fn symmetric_pair() -> (GaussianMixture<f64>, GaussianMixture<f64>) {
    let comp = |w, m, v| marginals::Component { weight: w, mean: m, var: v };
    (
        GaussianMixture::gaussian(0.0, 0.5),
        GaussianMixture::new(vec![comp(0.5, -1.0, 0.3), comp(0.5, 1.0, 0.3)]).unwrap(),
    )
}

#[test]
fn quadratic_reduction_to_the_classical_cost() {
    let g = grid();
    let r = Reference64::new(g.clone(), 1.0, &Potential::Ou { kappa: 1.0 }, Backend::OuExact).unwrap();
    let (a, b) = symmetric_pair();
    let w = Interaction64::Quadratic { kappa: 1.0 };
    for t in [1.0, 2.0] {
        let sol = mfsp_solve(&g, &lebesgue(&g, &a), &lebesgue(&g, &b), t, &w, &MfConfig::default()).unwrap();
        let classical =
            solve_bridge(&a.density(&r).unwrap(), &b.density(&r).unwrap(), t, &r, &SolverConfig::default()).unwrap();
        assert!((sol.mf_cost - classical.cost).abs() < 1e-3);
        assert!(sol.barycenter_deviation < 1e-6);
        assert!(sol.fixed_point_residual <= 1e-9);
        assert_eq!(sol.flow.len(), 65);
        assert_eq!(sol.drift.len(), 64);
    }
}

#[test]
fn free_energy_of_quadratic_interaction_is_relative_entropy() {
    let g = grid();
    let r = Reference64::new(g.clone(), 1.0, &Potential::Ou { kappa: 1.0 }, Backend::OuExact).unwrap();
    let w = Interaction64::Quadratic { kappa: 1.0 };
    let (_, b) = symmetric_pair();
    let f = free_energy_shifted(&g, &w, &lebesgue(&g, &b)).unwrap();
    let h = grid::relative_entropy(&b.density(&r).unwrap(), r.m()).unwrap();
    assert!((f - h).abs() < 1e-4);
}

#[test]
fn equilibrium_is_stationary() {
    let g = grid();
    for w in [Interaction64::Quadratic { kappa: 1.0 }, Interaction64::QuadraticQuartic { kappa: 1.0, eps: 0.05 }] {
        let eq = min_free_energy(&g, &w, 0.0).unwrap().minimizer;
        let sol = mfsp_solve(&g, &eq, &eq, 8.0, &w, &MfConfig::default()).unwrap();
        assert!(sol.mf_cost.abs() <= 1e-3, "{}", sol.mf_cost);
    }
}

#[test]
fn quartic_interaction_converges_and_costs_more() {
    let g = grid();
    let r = Reference64::new(g.clone(), 1.0, &Potential::Ou { kappa: 1.0 }, Backend::OuExact).unwrap();
    let (a, b) = symmetric_pair();
    let w = Interaction64::QuadraticQuartic { kappa: 1.0, eps: 0.05 };
    let cfg = MfConfig::default();
    let sol = mfsp_solve_refined(&g, &lebesgue(&g, &a), &lebesgue(&g, &b), 2.0, &w, &cfg, 1e-3).unwrap();
    assert!(sol.fixed_point_residual <= cfg.tol);
    let classical =
        solve_bridge(&a.density(&r).unwrap(), &b.density(&r).unwrap(), 2.0, &r, &SolverConfig::default()).unwrap();
    assert!(sol.mf_cost >= classical.cost - 1e-3);
}

#[test]
fn rejects_bad_inputs() {
    let g = grid();
    let w = Interaction64::Quadratic { kappa: 1.0 };
    let a = lebesgue(&g, &GaussianMixture::gaussian(0.0, 0.5));
    let cfg = MfConfig { steps: 8, ..MfConfig::default() };
    assert!(mfsp_solve(&g, &a, &a, 1.0, &w, &cfg).is_err());
    let cfg = MfConfig { damping: 0.0, ..MfConfig::default() };
    assert!(mfsp_solve(&g, &a, &a, 1.0, &w, &cfg).is_err());
    assert!(mfsp_solve(&g, &a, &a, 1.0, &Interaction64::Quadratic { kappa: 0.0 }, &MfConfig::default()).is_err());
    let unnormalized: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    assert!(free_energy(&g, &w, &unnormalized).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn drift_parity_and_translation(m in -1.0f64..1.0, v in 0.2f64..0.8, eps in 0.0f64..0.1, k in -10i64..10) {
        let g = Grid64::symmetric(8.0, 161).unwrap();
        let w = Interaction64::QuadraticQuartic { kappa: 1.0, eps };
        let comp = |mean| marginals::Component { weight: 1.0, mean, var: v };
        let sym = lebesgue(&g, &GaussianMixture::new(vec![comp(m), comp(-m)]).unwrap());
        let b = interaction_drift(&g, &w, &sym).unwrap();
        let n = g.len();
        for i in 0..n {
            prop_assert!((b.values()[i] + b.values()[n - 1 - i]).abs() < 1e-9 * (1.0 + b.values()[i].abs()));
        }
        // Shifting ρ by a whole number of cells shifts the drift with it.
        let h = g.spacing();
        let centered = interaction_drift(&g, &w, &lebesgue(&g, &GaussianMixture::gaussian(0.0, v))).unwrap();
        let shifted = interaction_drift(&g, &w, &lebesgue(&g, &GaussianMixture::gaussian(k as f64 * h, v))).unwrap();
        for i in g.bulk(4.0) {
            let j = (i as i64 + k) as usize;
            prop_assert!((shifted.values()[j] - centered.values()[i]).abs() < 1e-8 * (1.0 + centered.values()[i].abs()));
        }
    }

    #[test]
    fn shifted_free_energy_is_nonnegative(m in -0.5f64..0.5, v in 0.2f64..1.5) {
        let g = Grid64::symmetric(8.0, 161).unwrap();
        let w = Interaction64::QuadraticQuartic { kappa: 1.0, eps: 0.02 };
        let rho = lebesgue(&g, &GaussianMixture::gaussian(m, v));
        prop_assert!(free_energy_shifted(&g, &w, &rho).unwrap() >= -1e-9);
    }
}
