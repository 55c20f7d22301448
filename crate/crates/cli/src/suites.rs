//! Built-in invariant suites behind `bridgelab check <suite>`.

use bridgelab::bridge::{sinkhorn_solve, solve_bridge};
use bridgelab::duality::{random_test_function, DualReport};
use bridgelab::grid::MDensity;
use bridgelab::inequalities::{
    cost_energy_bound, default_slack, energy_transport, kconvexity, logsob, talagrand, LongTimeBounds,
};
use bridgelab::meanfield::{mfsp_solve, normalize_density};
use bridgelab::oracle::min_relative_entropy;
use bridgelab::reference::{bakry_emery_check, kernel_lower_bound_check};
use bridgelab::tcalculus::{check_fisher_monotone, DerivativeSample};
use bridgelab::{
    Backend, GaussianMixture, Grid, InteractionPotential, MfConfig, Potential, ReferenceProcess, SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Suite;
use crate::experiments::{
    longtime_row, scan_at, shorttime_tables, RunError, LONGTIME_COLUMNS, SHORT_HORIZONS, TAYLOR_HORIZONS,
};
use crate::report::{Assertion, Outcome, Table};

type Reference = ReferenceProcess<f64>;

const ALL: [Suite; 7] = [
    Suite::Semigroup,
    Suite::Bridge,
    Suite::Derivatives,
    Suite::Inequalities,
    Suite::Shorttime,
    Suite::Duality,
    Suite::Meanfield,
];

/// Runs `suite`; a numerical failure is recorded in `out.error`.
pub fn run(suite: Suite, seed: u64, out: &mut Outcome) {
    if suite == Suite::All {
        for s in ALL {
            let mut sub = Outcome::default();
            run(s, seed, &mut sub);
            out.absorb(s.name(), sub);
        }
        return;
    }
    // Each suite gets its own stream so suites are reproducible in isolation.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (suite as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let res = match suite {
        Suite::Semigroup => semigroup(&mut rng, out),
        Suite::Bridge => bridge(&mut rng, out),
        Suite::Derivatives => derivatives(&mut rng, out),
        Suite::Inequalities => inequalities(&mut rng, out),
        Suite::Shorttime => shorttime(out),
        Suite::Duality => duality(&mut rng, out),
        Suite::Meanfield => meanfield(out),
        Suite::All => unreachable!(),
    };
    if let Err(e) = res {
        out.error = Some(match e {
            RunError::Config(c) => c.to_string(),
            RunError::Numerical(n) => n.to_string(),
        });
    }
}

fn ou(n: usize, backend: Backend) -> Result<Reference, RunError> {
    Ok(ReferenceProcess::ou(1.0, n, backend)?)
}

fn random_pair(rng: &mut ChaCha8Rng, r: &Reference) -> Result<(MDensity<f64>, MDensity<f64>), RunError> {
    let mu = GaussianMixture::random(rng, r.kappa()).density(r)?;
    let nu = GaussianMixture::random(rng, r.kappa()).density(r)?;
    Ok((mu, nu))
}

fn bulk_max(r: &Reference, v: &[f64]) -> f64 {
    let radius = (r.grid().b() - r.grid().a()) / 4.0;
    r.grid().bulk(radius).map(|i| v[i].abs()).fold(0.0, f64::max)
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::OuExact => "ou_exact",
        Backend::Spectral => "spectral",
    }
}

fn semigroup(rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<(), RunError> {
    let mut table = Table::new("semigroup", &["check", "backend", "t", "value", "tolerance", "passed"]);
    let mut record = |table: &mut Table, check: &str, backend: Backend, t: f64, value: f64, tol: f64| {
        let a = Assertion::at_most(format!("{check}[{}, t={t}]", backend_name(backend)), value, tol);
        table.push(vec![
            check.into(),
            backend_name(backend).into(),
            t.into(),
            value.into(),
            tol.into(),
            a.passed.into(),
        ]);
        out.assertions.push(a);
    };
    for backend in [Backend::OuExact, Backend::Spectral] {
        let r = ou(401, backend)?;
        let mut draw = || {
            let (a, b, c): (f64, f64, f64) =
                (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0), rng.gen_range(0.0..6.0));
            r.grid().points().iter().map(|&x| 1.0 + a * (b * x + c).sin() * (-x * x / 20.0).exp()).collect::<Vec<f64>>()
        };
        let mass = |f: &[f64]| f.iter().zip(r.m()).map(|(a, b)| a * b).sum::<f64>();
        for t in [0.1, 1.0, 10.0] {
            let u = draw();
            let pu = r.apply(t, &u)?;
            record(&mut table, "mass", backend, t, (mass(pu.values()) - mass(&u)).abs(), 1e-8);
        }
        let u = draw();
        let two = r.apply(0.3, r.apply(0.5, &u)?.values())?;
        let one = r.apply(0.8, &u)?;
        let diff: Vec<f64> = two.values().iter().zip(one.values()).map(|(a, b)| a - b).collect();
        record(&mut table, "semigroup", backend, 0.8, bulk_max(&r, &diff), 1e-7);
        let pos: Vec<f64> = u.iter().map(|v| (v - 1.0).max(0.0)).collect();
        let p = r.apply(0.2, &pos)?;
        let neg = p.values().iter().fold(0.0f64, |a, &v| a.max(-v));
        record(&mut table, "positivity", backend, 0.2, neg, 1e-12);
        let s: Vec<f64> = r.grid().points().iter().map(|v| v.sin()).collect();
        let be = bakry_emery_check(&r, 0.5, &s)?;
        record(&mut table, "bakry_emery_sin", backend, 0.5, be.max_violation, 0.0);
    }
    let exact = ou(801, Backend::OuExact)?;
    let spec = ou(801, Backend::Spectral)?;
    let mut worst: f64 = 0.0;
    for i in (200..=600).step_by(20) {
        for j in (200..=600).step_by(20) {
            let a = exact.log_kernel(1.0, i, j)?.exp();
            let b = spec.log_kernel(1.0, i, j)?.exp();
            worst = worst.max((a - b).abs() * exact.lebesgue_density()[j]);
        }
    }
    record(&mut table, "backend_agreement", Backend::Spectral, 1.0, worst, 1e-4);
    let x = exact.grid().points().to_vec();
    let eq = bakry_emery_check(&exact, 1.0, &x)?;
    record(&mut table, "bakry_emery_linear", Backend::OuExact, 1.0, (eq.max_violation + eq.slack).abs(), 1e-4);
    let lb = kernel_lower_bound_check(&ou(161, Backend::OuExact)?, 1.0)?;
    record(&mut table, "kernel_lower_bound", Backend::OuExact, 1.0, lb.max_violation, 0.0);
    out.tables.push(table);
    Ok(())
}

fn bridge(rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<(), RunError> {
    let grid = Grid::new(-2.0, 2.0, 5)?;
    let r5 = ReferenceProcess::new(grid, 1.0, &Potential::Ou { kappa: 1.0 }, Backend::OuExact)?;
    let m = r5.m();
    let lk: Vec<f64> = r5.log_kernel_matrix(1.0)?;
    let rmat: Vec<f64> = (0..25).map(|k| lk[k].exp() * m[k / 5] * m[k % 5]).collect();
    let mut oracle = Table::new("bridge_oracle", &["instance", "sinkhorn", "oracle", "difference"]);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let mut draw = || MDensity::normalized((0..5).map(|_| rng.gen_range(0.5..5.0)).collect(), m);
        let (mu, nu) = (draw()?, draw()?);
        let c = sinkhorn_solve(&mu, &nu, 1.0f64, &r5, 1e-13, 100_000)?.entropic_cost();
        let a: Vec<f64> = mu.values().iter().zip(m).map(|(x, w)| x * w).collect();
        let b: Vec<f64> = nu.values().iter().zip(m).map(|(x, w)| x * w).collect();
        let o = min_relative_entropy(&rmat, &a, &b, 1e-13, 200)?.value;
        worst = worst.max((c - o).abs());
        oracle.push(vec![k.into(), c.into(), o.into(), (c - o).into()]);
    }
    out.assertions.push(Assertion::at_most("sinkhorn_vs_oracle", worst, 1e-6));
    out.tables.push(oracle);

    let r = ou(401, Backend::OuExact)?;
    let cfg = SolverConfig::default();
    let mut table =
        Table::new("bridge", &["instance", "T", "cost", "energy", "energy_spread", "representation_residual"]);
    for k in 0..3 {
        let (mu, nu) = random_pair(rng, &r)?;
        for t in [0.5, 1.0, 2.0, 4.0] {
            let sol = solve_bridge(&mu, &nu, t, &r, &cfg)?;
            let rep = (sol.cost_via_mu - sol.cost).abs().max((sol.cost_via_nu - sol.cost).abs());
            table.push(vec![
                k.into(),
                t.into(),
                sol.cost.into(),
                sol.energy.into(),
                sol.energy_spread().into(),
                rep.into(),
            ]);
            let tag = format!("[{k}, T={t}]");
            out.assertions.push(Assertion::at_most(
                format!("energy_conservation{tag}"),
                sol.energy_spread(),
                1e-5 * (1.0 + sol.energy.abs()),
            ));
            out.assertions.push(Assertion::at_most(
                format!("cost_representations{tag}"),
                rep,
                1e-3 * sol.cost.abs() + 1e-9,
            ));
        }
    }
    out.tables.push(table);
    Ok(())
}

fn derivatives(rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<(), RunError> {
    let r = ou(401, Backend::OuExact)?;
    let cfg = SolverConfig::default();
    let mut table = Table::new(
        "derivatives",
        &["instance", "T", "cost", "energy", "deriv_residual", "rescaled_residual_energy", "rescaled_residual_fisher"],
    );
    let mut fisher = Table::new("derivatives_fisher", &["instance", "T", "fisher"]);
    for k in 0..3 {
        let (mu, nu) = random_pair(rng, &r)?;
        for t in [0.5, 1.0, 2.0] {
            let s = DerivativeSample::measure(&mu, &nu, &r, t, 1e-3, &cfg)?;
            let (a, b) = s.rescaled_residuals();
            table.push(vec![
                k.into(),
                t.into(),
                s.cost.into(),
                s.energy.into(),
                s.first_residual().into(),
                a.into(),
                b.into(),
            ]);
            let tag = format!("[{k}, T={t}]");
            out.assertions.push(Assertion::at_most(format!("first_derivative{tag}"), s.first_residual(), 1e-4));
            out.assertions.push(Assertion::at_most(format!("rescaled_via_energy{tag}"), a, 1e-3));
            out.assertions.push(Assertion::at_most(format!("rescaled_via_fisher{tag}"), b, 1e-3));
        }
        let mono = check_fisher_monotone(&mu, &nu, &r, &[0.25, 0.5, 1.0, 2.0, 4.0], None)?;
        for (t, v) in mono.ts.iter().zip(&mono.values) {
            fisher.push(vec![k.into(), (*t).into(), (*v).into()]);
        }
        out.assertions.push(Assertion::at_most(format!("fisher_monotone[{k}]"), mono.max_increase, 0.0));
    }
    out.tables.push(table);
    out.tables.push(fisher);
    Ok(())
}

const INSTANCE_HORIZONS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

fn inequalities(rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<(), RunError> {
    let r = ou(401, Backend::OuExact)?;
    let cfg = SolverConfig::default();
    let ts: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut table = Table::new("inequalities", &["inequality", "instance", "T", "t", "lhs", "rhs", "passed"]);
    let mut worst = std::collections::BTreeMap::<&str, f64>::new();
    let mut push = |table: &mut Table, name: &'static str, k: usize, horizon: f64, t: f64, (l, rhs): (f64, f64)| {
        let excess = l - rhs - default_slack(rhs);
        let w = worst.entry(name).or_insert(f64::NEG_INFINITY);
        *w = w.max(excess);
        table.push(vec![name.into(), k.into(), horizon.into(), t.into(), l.into(), rhs.into(), (excess <= 0.0).into()]);
    };
    let mut header = vec!["instance"];
    header.extend(LONGTIME_COLUMNS);
    let mut long = Table::new("inequalities_longtime", &header);
    for k in 0..20 {
        let (mu, nu) = random_pair(rng, &r)?;
        let horizon = INSTANCE_HORIZONS[k % INSTANCE_HORIZONS.len()];
        let sol = solve_bridge(&mu, &nu, horizon, &r, &cfg)?;
        for t in [0.25, 0.5, 0.75] {
            push(&mut table, "talagrand", k, horizon, t, talagrand(&sol, t)?);
        }
        push(&mut table, "energy_transport", k, horizon, f64::NAN, energy_transport(&sol));
        push(&mut table, "cost_energy", k, horizon, f64::NAN, cost_energy_bound(&sol));
        for (&t, pair) in ts.iter().zip(kconvexity(&sol, &ts)?) {
            push(&mut table, "k_convexity", k, horizon, t, pair);
        }
        push(&mut table, "log_sobolev", k, horizon, f64::NAN, logsob(&mu, &r)?);
        if k < 3 {
            for t in [1.0, 2.0, 4.0, 8.0] {
                let s = solve_bridge(&mu, &nu, t, &r, &cfg)?;
                let b = LongTimeBounds::from_solution(&s)?;
                longtime_row(&b, s.cost, &format!("[{k}, T={t}]"), vec![k.into()], &mut long, out);
            }
        }
    }
    for (name, w) in worst {
        out.assertions.push(Assertion::at_most(name, w, 0.0));
    }
    out.tables.push(table);
    out.tables.push(long);
    Ok(())
}

fn shorttime(out: &mut Outcome) -> Result<(), RunError> {
    let r = ou(801, Backend::OuExact)?;
    let mu = GaussianMixture::gaussian(-0.5, 0.3).density(&r)?;
    let nu = GaussianMixture::gaussian(0.7, 0.4).density(&r)?;
    shorttime_tables(&r, &mu, &nu, &SHORT_HORIZONS, &TAYLOR_HORIZONS, "shorttime_", out)
}

fn duality(rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<(), RunError> {
    let r = ou(401, Backend::OuExact)?;
    let (mu, nu) = random_pair(rng, &r)?;
    let mut table = Table::new("duality", &["T", "primal", "dual_at_star", "strong_gap", "min_gap"]);
    for t in [0.5, 2.0] {
        let pair = sinkhorn_solve(&mu, &nu, t, &r, 1e-12, 100_000)?;
        let phis: Vec<Vec<f64>> = (0..20).map(|_| random_test_function(rng, &r, t)).collect();
        let rep = DualReport::compute(&pair, &phis)?;
        table.push(vec![
            t.into(),
            rep.primal.into(),
            rep.dual_at_star.into(),
            rep.strong_gap().into(),
            rep.min_gap().into(),
        ]);
        out.assertions.push(Assertion::at_most(format!("weak_duality[T={t}]"), -rep.min_gap(), 1e-6));
        out.assertions.push(Assertion::at_most(format!("strong_duality[T={t}]"), rep.strong_gap(), 1e-6));
    }
    out.tables.push(table);
    let mut scan = Table::new("duality_scan", &["T", "constant", "violated"]);
    for t in [1.0, 3.0] {
        let (_, rel) = scan_at(&r, t, &mut scan)?;
        out.assertions.push(Assertion::at_most(format!("sharp_constant[T={t}]"), rel, 0.02));
    }
    out.tables.push(scan);
    Ok(())
}

fn meanfield(out: &mut Outcome) -> Result<(), RunError> {
    let grid = Grid::symmetric(8.0, 241)?;
    let r = ReferenceProcess::new(grid.clone(), 1.0, &Potential::Ou { kappa: 1.0 }, Backend::OuExact)?;
    let w = InteractionPotential::Quadratic { kappa: 1.0 };
    let a = GaussianMixture::gaussian(0.0, 0.5);
    let b = GaussianMixture::new(vec![
        bridgelab::marginals::Component { weight: 0.5, mean: -1.0, var: 0.3 },
        bridgelab::marginals::Component { weight: 0.5, mean: 1.0, var: 0.3 },
    ])?;
    let leb =
        |m: &GaussianMixture<f64>| normalize_density(&grid, grid.points().iter().map(|&x| m.lebesgue(x)).collect());
    let (la, lb) = (leb(&a)?, leb(&b)?);
    let cfg = MfConfig::default();
    let mut table = Table::new("meanfield", &["T", "mf_cost", "classical_cost", "difference", "fixed_point_residual"]);
    for t in [1.0, 2.0] {
        let sol = mfsp_solve(&grid, &la, &lb, t, &w, &cfg)?;
        let classical = solve_bridge(&a.density(&r)?, &b.density(&r)?, t, &r, &SolverConfig::default())?;
        let d = (sol.mf_cost - classical.cost).abs();
        table.push(vec![
            t.into(),
            sol.mf_cost.into(),
            classical.cost.into(),
            d.into(),
            sol.fixed_point_residual.into(),
        ]);
        out.assertions.push(Assertion::at_most(format!("quadratic_reduction[T={t}]"), d, 1e-3));
        out.assertions.push(Assertion::at_most(format!("fixed_point[T={t}]"), sol.fixed_point_residual, cfg.tol));
    }
    out.tables.push(table);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semigroup_suite_passes() {
        let mut out = Outcome::default();
        run(Suite::Semigroup, 0, &mut out);
        assert!(out.passed(), "{:?}", out.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>());
    }
}
