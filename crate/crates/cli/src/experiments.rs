//! Config-driven experiments.

use bridgelab::bridge::{sinkhorn_solve, solve_bridge};
use bridgelab::duality::{random_test_function, talagrand_sharpness_scan, DualReport};
use bridgelab::inequalities::{default_slack, limit_longtime, LongTimeBounds};
use bridgelab::meanfield::{free_energy_shifted, mfsp_solve};
use bridgelab::shorttime::{taylor_fit, ShortTimeData};
use bridgelab::tcalculus::{sweep, MonotoneReport};
use bridgelab::ReferenceProcess;
use serde_json::Value;

use crate::config::{ConfigError, ExperimentKind, LoadedConfig};
use crate::report::{num, Assertion, Cell, Outcome, Table};

/// Why an experiment stopped.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(bridgelab::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<bridgelab::bridge::SinkhornError<'_, f64>> for RunError {
    fn from(e: bridgelab::bridge::SinkhornError<'_, f64>) -> Self {
        RunError::Numerical(e.into())
    }
}

impl From<bridgelab::Error> for RunError {
    fn from(e: bridgelab::Error) -> Self {
        RunError::Numerical(e)
    }
}

pub const SHORT_HORIZONS: [f64; 3] = [0.05, 0.1, 0.2];
pub const TAYLOR_HORIZONS: [f64; 7] = [0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1];
pub const DEFAULT_TEST_FUNCTIONS: usize = 20;

pub fn run(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    match cfg.kind {
        ExperimentKind::Solve => solve(cfg, out),
        ExperimentKind::Sweep => run_sweep(cfg, out),
        ExperimentKind::Shorttime => shorttime(cfg, out),
        ExperimentKind::Longtime => longtime(cfg, out),
        ExperimentKind::Duality => duality(cfg, out),
        ExperimentKind::Mfsp => mfsp(cfg, out),
        ExperimentKind::Check => {
            let suite = cfg.config.suite.ok_or_else(|| ConfigError("missing 'suite'".into()))?;
            crate::suites::run(suite, cfg.seed.unwrap_or(0), out);
            Ok(())
        }
    }
}

fn horizons(cfg: &LoadedConfig) -> Vec<f64> {
    cfg.config.horizons.clone().unwrap_or_default()
}

fn solve(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = cfg.reference()?;
    let (mu, nu) = cfg.marginals(&r, &mut cfg.rng())?;
    let horizon = cfg.config.horizon.unwrap_or(1.0);
    let solver = cfg.solver();
    let sol = solve_bridge(&mu, &nu, horizon, &r, &solver)?;

    let mut summary = Table::new(
        "solve",
        &[
            "T",
            "cost",
            "energy",
            "energy_spread",
            "fisher_integral",
            "entropy_mu",
            "entropy_nu",
            "cost_via_mu",
            "cost_via_nu",
        ],
    );
    summary.push(vec![
        horizon.into(),
        sol.cost.into(),
        sol.energy.into(),
        sol.energy_spread().into(),
        sol.fisher_integral.into(),
        sol.entropy_mu.into(),
        sol.entropy_nu.into(),
        sol.cost_via_mu.into(),
        sol.cost_via_nu.into(),
    ]);
    let p = &sol.profile;
    let mut profile = Table::new("profile", &["t", "mass", "entropy", "fisher", "energy", "kinetic"]);
    for k in 0..p.t.len() {
        profile.push(vec![
            p.t[k].into(),
            p.mass[k].into(),
            p.entropy[k].into(),
            p.fisher[k].into(),
            p.energy[k].into(),
            p.kinetic[k].into(),
        ]);
    }
    out.tables.push(summary);
    out.tables.push(profile);

    out.note("cost", num(sol.cost));
    out.note("energy", num(sol.energy));
    out.note("iterations", sol.pair.iterations());
    out.note("marginal_residual", num(sol.pair.residual()));
    out.assertions.push(Assertion::at_most("sinkhorn_converged", sol.pair.residual(), solver.tol));
    out.assertions.push(Assertion::at_most(
        "energy_conservation",
        sol.energy_spread(),
        1e-5 * (1.0 + sol.energy.abs()),
    ));
    let rep = (sol.cost_via_mu - sol.cost).abs().max((sol.cost_via_nu - sol.cost).abs());
    out.assertions.push(Assertion::at_most("cost_representations", rep, 1e-3 * sol.cost.abs() + 1e-9));
    Ok(())
}

fn run_sweep(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = cfg.reference()?;
    let (mu, nu) = cfg.marginals(&r, &mut cfg.rng())?;
    let ts = horizons(cfg);
    let rep = sweep(&mu, &nu, &r, &ts, &cfg.solver())?;
    let mut table = Table::new("sweep", &["T", "cost", "energy", "fisher", "deriv_residual"]);
    for k in 0..ts.len() {
        table.push(vec![
            rep.ts[k].into(),
            rep.costs[k].into(),
            rep.energies[k].into(),
            rep.fisher_integrals[k].into(),
            rep.deriv_residuals[k].into(),
        ]);
        out.assertions.push(Assertion::at_most(
            format!("deriv_residual[T={}]", rep.ts[k]),
            rep.deriv_residuals[k],
            1e-4,
        ));
    }
    out.tables.push(table);
    let failures: Vec<String> = rep.failures.iter().flatten().cloned().collect();
    if !failures.is_empty() {
        out.error = Some(failures.join("; "));
    }
    let mut sorted: Vec<(f64, f64)> = rep.ts.iter().copied().zip(rep.fisher_integrals.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (sts, sfs) = sorted.into_iter().unzip();
    let mono = MonotoneReport::from_values(sts, sfs);
    out.assertions.push(Assertion::at_most("fisher_monotone", mono.max_increase, 0.0));
    Ok(())
}

fn shorttime(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = cfg.reference()?;
    let (mu, nu) = cfg.marginals(&r, &mut cfg.rng())?;
    let ts = cfg.config.horizons.clone().unwrap_or_else(|| SHORT_HORIZONS.to_vec());
    let taylor_ts = cfg.config.taylor_horizons.clone().unwrap_or_else(|| TAYLOR_HORIZONS.to_vec());
    shorttime_tables(&r, &mu, &nu, &ts, &taylor_ts, "", out)
}

/// Sandwich and Taylor tables for one pair; `prefix` namespaces tables and
/// assertions.
pub fn shorttime_tables(
    r: &ReferenceProcess<f64>,
    mu: &bridgelab::MDensity64,
    nu: &bridgelab::MDensity64,
    ts: &[f64],
    taylor_ts: &[f64],
    prefix: &str,
    out: &mut Outcome,
) -> Result<(), RunError> {
    let data = ShortTimeData::compute(mu, nu, r)?;
    let mut sandwich = Table::new(format!("{prefix}sandwich"), &["T", "cost", "low", "mid", "high", "holds"]);
    for &t in ts {
        let cost = sinkhorn_solve(mu, nu, t, r, 1e-12, 100_000)?.entropic_cost();
        let s = data.sandwich(t, cost);
        let slack = default_slack(s.high);
        let holds = s.holds(slack);
        sandwich.push(vec![t.into(), cost.into(), s.low.into(), s.mid.into(), s.high.into(), holds.into()]);
        out.assertions.push(Assertion::flag(format!("{prefix}sandwich[T={t}]"), holds));
    }
    out.tables.push(sandwich);

    let fit = taylor_fit(mu, nu, r, taylor_ts)?;
    let mut taylor =
        Table::new(format!("{prefix}taylor"), &["coefficient", "fitted", "expected", "relative_error", "tolerance"]);
    let rows = [
        ("a", fit.a, data.w2sq / 2.0, 0.02),
        ("b", fit.b, (data.entropy_mu + data.entropy_nu) / 2.0, 0.02),
        ("c", fit.c, data.geodesic_fisher / 8.0, 0.10),
    ];
    for (name, fitted, expected, tol) in rows {
        let rel = (fitted - expected).abs() / expected.abs().max(1e-12);
        taylor.push(vec![name.into(), fitted.into(), expected.into(), rel.into(), tol.into()]);
        out.assertions.push(Assertion::at_most(format!("{prefix}taylor_{name}"), rel, tol));
    }
    out.tables.push(taylor);
    Ok(())
}

pub const LONGTIME_COLUMNS: [&str; 11] = [
    "T",
    "cost",
    "cost_gap",
    "energy",
    "simple_cost_bound",
    "stronger_cost_bound",
    "simple_energy_bound",
    "stronger_energy_bound",
    "derived_simple_energy_bound",
    "derived_stronger_energy_bound",
    "displayed_energy_bounds_hold",
];

/// One row of [`LONGTIME_COLUMNS`], after the `lead` cells, plus the
/// assertions on it. The displayed energy bounds are reported, the derived
/// ones are asserted.
pub fn longtime_row(
    b: &LongTimeBounds<f64>,
    cost: f64,
    tag: &str,
    lead: Vec<Cell>,
    table: &mut Table,
    out: &mut Outcome,
) {
    let holds = |(l, r): (f64, f64)| l <= r + default_slack(r);
    let displayed = b.pairs();
    let derived = b.derived_pairs();
    let mut row = lead;
    row.extend([
        b.horizon.into(),
        cost.into(),
        b.cost_gap.into(),
        b.energy.into(),
        b.simple_cost.into(),
        b.stronger_cost.into(),
        b.simple_energy.into(),
        b.stronger_energy.into(),
        b.derived_simple_energy.into(),
        b.derived_stronger_energy.into(),
        (holds(displayed[1]) && holds(displayed[3])).into(),
    ]);
    table.push(row);
    let names = ["simple_cost", "derived_simple_energy", "stronger_cost", "derived_stronger_energy"];
    for (name, pair) in names.iter().zip(derived) {
        out.assertions.push(Assertion::at_most(format!("{name}{tag}"), pair.0 - pair.1, default_slack(pair.1)));
    }
    out.assertions.push(Assertion::flag(format!("stronger_is_tighter{tag}"), b.stronger_is_tighter()));
}

fn longtime(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = cfg.reference()?;
    let (mu, nu) = cfg.marginals(&r, &mut cfg.rng())?;
    let mut ts = horizons(cfg);
    ts.sort_by(f64::total_cmp);
    let solver = cfg.solver();
    let mut table = Table::new("longtime", &LONGTIME_COLUMNS);
    for &t in &ts {
        let sol = solve_bridge(&mu, &nu, t, &r, &solver)?;
        let b = LongTimeBounds::from_solution(&sol)?;
        longtime_row(&b, sol.cost, &format!("[T={t}]"), Vec::new(), &mut table, out);
    }
    out.tables.push(table);

    let lim = limit_longtime(&mu, &nu, &r, &ts)?;
    let mut limits = Table::new("limits", &["quantity", "value"]);
    let last_gap = *lim.gaps.last().unwrap_or(&f64::NAN);
    for (name, v) in [
        ("cost_gap", last_gap),
        ("f_distance", lim.f_distance),
        ("g_distance", lim.g_distance),
        ("pf_distance", lim.pf_distance),
        ("coupling_distance", lim.coupling_distance),
    ] {
        limits.push(vec![name.into(), v.into()]);
    }
    out.tables.push(limits);
    let t_max = *ts.last().unwrap_or(&0.0);
    if r.kappa() * t_max >= 12.0 {
        out.assertions.push(Assertion::flag("long_time_limits", lim.passed(1e-3)));
    }
    Ok(())
}

fn duality(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let r = cfg.reference()?;
    let mut rng = cfg.rng();
    let (mu, nu) = cfg.marginals(&r, &mut rng)?;
    let count = cfg.config.test_functions.unwrap_or(DEFAULT_TEST_FUNCTIONS);
    let solver = cfg.solver();
    let mut gaps = Table::new("duality", &["T", "test_function", "gap"]);
    let mut summary = Table::new("duality_summary", &["T", "primal", "dual_at_star", "strong_gap", "min_gap"]);
    let mut scan = Table::new("scan", &["T", "constant", "violated"]);
    let do_scan = cfg.config.scan.unwrap_or(true);
    for t in horizons(cfg) {
        let pair = sinkhorn_solve(&mu, &nu, t, &r, solver.tol.min(1e-12), solver.max_iter)?;
        let phis: Vec<Vec<f64>> = (0..count).map(|_| random_test_function(&mut rng, &r, t)).collect();
        let rep = DualReport::compute(&pair, &phis)?;
        for (k, g) in rep.gaps.iter().enumerate() {
            gaps.push(vec![t.into(), k.into(), (*g).into()]);
        }
        summary.push(vec![
            t.into(),
            rep.primal.into(),
            rep.dual_at_star.into(),
            rep.strong_gap().into(),
            rep.min_gap().into(),
        ]);
        out.assertions.push(Assertion::at_most(format!("weak_duality[T={t}]"), -rep.min_gap(), 1e-6));
        out.assertions.push(Assertion::at_most(format!("strong_duality[T={t}]"), rep.strong_gap(), 1e-6));
        if do_scan {
            let s = scan_at(&r, t, &mut scan)?;
            out.note(&format!("scan_threshold[T={t}]"), num(s.0));
            out.assertions.push(Assertion::at_most(format!("sharp_constant[T={t}]"), s.1, 0.02));
        }
    }
    out.tables.push(gaps);
    out.tables.push(summary);
    if do_scan {
        out.tables.push(scan);
    }
    Ok(())
}

/// Threshold scan over `C = 1 + 0.005k` up to twice the sharp constant;
/// returns `(threshold, relative error)`.
pub fn scan_at(r: &ReferenceProcess<f64>, t: f64, table: &mut Table) -> Result<(f64, f64), RunError> {
    let expected = -1.0 / (-r.kappa() * t).exp_m1();
    let constants: Vec<f64> =
        (0..4000).map(|k| 1.0 + 0.005 * k as f64).take_while(|&c| c <= 2.0 * expected + 0.01).collect();
    let s = talagrand_sharpness_scan(r, t, &constants)?;
    for (c, v) in s.constants.iter().zip(&s.violated) {
        table.push(vec![t.into(), (*c).into(), (*v).into()]);
    }
    Ok((s.threshold, s.relative_error()))
}

pub const MFSP_COLUMNS: [&str; 9] = [
    "T",
    "mf_cost",
    "coupling_entropy",
    "free_energy_mu",
    "free_energy_nu",
    "gap",
    "talagrand_rhs",
    "fixed_point_residual",
    "iterations",
];

fn mfsp(cfg: &LoadedConfig, out: &mut Outcome) -> Result<(), RunError> {
    let grid = cfg.mf_grid()?;
    let w = cfg.interaction()?;
    w.validate(grid.b() - grid.a()).map_err(|e| ConfigError(e.to_string()))?;
    let (mu, nu) = cfg.mf_marginals(&grid, &mut cfg.rng())?;
    let mf = cfg.mf_config();
    let f_nu = free_energy_shifted(&grid, &w, &nu)?;
    let mut table = Table::new("mfsp", &MFSP_COLUMNS);
    let mut history = Table::new("mfsp_history", &["T", "iteration", "residual"]);
    let mut points = Vec::new();
    let mut ts = horizons(cfg);
    ts.sort_by(f64::total_cmp);
    for &t in &ts {
        let sol = match mfsp_solve(&grid, &mu, &nu, t, &w, &mf) {
            Ok(s) => s,
            Err(e) => {
                out.tables.push(table);
                out.tables.push(history);
                return Err(e.into());
            }
        };
        let limit = sol.free_energy_mu + f_nu;
        let gap = (sol.mf_cost - limit).abs();
        let rhs = -limit / (-w.kappa() * t / 2.0).exp_m1();
        table.push(vec![
            t.into(),
            sol.mf_cost.into(),
            sol.coupling_entropy.into(),
            sol.free_energy_mu.into(),
            f_nu.into(),
            gap.into(),
            rhs.into(),
            sol.fixed_point_residual.into(),
            sol.history.len().into(),
        ]);
        for (k, h) in sol.history.iter().enumerate() {
            history.push(vec![t.into(), k.into(), (*h).into()]);
        }
        if gap > 1e-10 {
            points.push((t, gap.ln()));
        }
        out.assertions.push(Assertion::at_most(format!("fixed_point[T={t}]"), sol.fixed_point_residual, mf.tol));
        out.assertions.push(Assertion::at_most(format!("mf_talagrand[T={t}]"), sol.mf_cost - rhs, default_slack(rhs)));
    }
    out.tables.push(table);
    out.tables.push(history);
    if let Ok(slope) = bridgelab::inequalities::fit_slope(&points) {
        out.note("gap_slope", num(slope));
    } else {
        out.note("gap_slope", Value::Null);
    }
    Ok(())
}
