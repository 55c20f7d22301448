use bridgelab::duality::*;
use bridgelab::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ou(n: usize) -> Reference64 {
    Reference64::ou(1.0, n, Backend::OuExact).unwrap()
}

#[test]
fn trivial_dual_value() {
    let r = ou(201);
    let m = MDensity64::uniform(r.len());
    let zero = vec![0.0; r.len()];
    assert!(dual_value(&m, &m, &r, 1.0, &zero).unwrap().abs() < 1e-9);
}

#[test]
fn duality_on_random_instances() {
    let r = ou(401);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in [0.5, 2.0] {
        let mu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
        let nu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
        let pair = sinkhorn_solve(&mu, &nu, t, &r, 1e-12, 100_000).map_err(Error::from).unwrap();
        let phis: Vec<Vec<f64>> = (0..20).map(|_| random_test_function(&mut rng, &r, t)).collect();
        let rep = DualReport::compute(&pair, &phis).unwrap();
        assert!(rep.min_gap() >= -1e-6, "{rep:?}");
        assert!(rep.strong_gap() <= 1e-6, "{rep:?}");
    }
}

#[test]
fn optimum_beats_every_test_function() {
    let r = ou(401);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
    let nu = GaussianMixture::random(&mut rng, 1.0).density(&r).unwrap();
    let pair = sinkhorn_solve(&mu, &nu, 1.0, &r, 1e-12, 100_000).map_err(Error::from).unwrap();
    let star = dual_at_optimum(&pair).unwrap();
    for _ in 0..5 {
        let phi = random_test_function(&mut rng, &r, 1.0);
        assert!(dual_value(&mu, &nu, &r, 1.0, &phi).unwrap() <= star + 1e-9);
    }
}

#[test]
fn threshold_tends_to_one() {
    let r = ou(401);
    let cs: Vec<f64> = (0..=200).map(|k| 1.0 + k as f64 * 0.0025).collect();
    let scan = talagrand_sharpness_scan(&r, 6.0, &cs).unwrap();
    assert!(scan.threshold < 1.01);
    assert!(talagrand_sharpness_scan(&r, 1.0, &[1.2, 1.1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hopf_is_monotone_and_shift_covariant(seed in 0u64..1000, shift in -3.0f64..3.0, bump in 0.0f64..1.0, t in 0.2f64..1.0) {
        let r = ou(201);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_test_function(&mut rng, &r, 1.0);
        let larger: Vec<f64> = phi.iter().zip(r.grid().points()).map(|(p, x)| p + bump * (-x * x).exp()).collect();
        let shifted: Vec<f64> = phi.iter().map(|p| p + shift).collect();
        let q = hopf_operator(&r, 1.5, t, &phi).unwrap();
        let ql = hopf_operator(&r, 1.5, t, &larger).unwrap();
        let qs = hopf_operator(&r, 1.5, t, &shifted).unwrap();
        for ((a, b), c) in q.values().iter().zip(ql.values()).zip(qs.values()) {
            prop_assert!(*b >= a - 1e-12);
            prop_assert!((c - a - shift).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_exp_holds_above_the_sharp_constant(alpha in -2.0f64..2.0, t in 0.5f64..3.0, extra in 0.0f64..0.5) {
        let r = ou(201);
        let phi: Vec<f64> = r.grid().points().iter().map(|x| alpha * x).collect();
        let c = (1.0 + extra) / (1.0 - (-t).exp());
        let (l, rr) = exp_exp_logs(&r, t, c, &phi).unwrap();
        prop_assert!(l <= rr + 1e-9);
    }
}
