//! Experiment configuration: JSON schema, validation and construction of the
//! numerical objects it describes.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use bridgelab::grid::MDensity;
use bridgelab::marginals::Component;
use bridgelab::meanfield::normalize_density;
use bridgelab::{
    Backend, GaussianMixture, Grid, InteractionPotential, MfConfig, Potential, ReferenceProcess, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Rejected configuration; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    Sweep,
    Shorttime,
    Longtime,
    Duality,
    Mfsp,
    Check,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Sweep => "sweep",
            Self::Shorttime => "shorttime",
            Self::Longtime => "longtime",
            Self::Duality => "duality",
            Self::Mfsp => "mfsp",
            Self::Check => "check",
        }
    }

    /// Top-level keys the experiment reads besides `experiment` and `seed`.
    fn allowed(self) -> &'static [&'static str] {
        const BRIDGE: &[&str] = &["grid", "reference", "mu", "nu", "horizons", "solver"];
        match self {
            Self::Solve => &["grid", "reference", "mu", "nu", "horizon", "solver"],
            Self::Sweep | Self::Longtime => BRIDGE,
            Self::Shorttime => &["grid", "reference", "mu", "nu", "horizons", "taylor_horizons"],
            Self::Duality => &["grid", "reference", "mu", "nu", "horizons", "solver", "test_functions", "scan"],
            Self::Mfsp => &["grid", "interaction", "mu", "nu", "horizons", "mf"],
            Self::Check => &["suite"],
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Self::Solve => &["reference", "mu", "nu", "horizon"],
            Self::Sweep | Self::Longtime | Self::Duality => &["reference", "mu", "nu", "horizons"],
            Self::Shorttime => &["reference", "mu", "nu"],
            Self::Mfsp => &["interaction", "mu", "nu", "horizons"],
            Self::Check => &["suite"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Semigroup,
    Bridge,
    Derivatives,
    Inequalities,
    Shorttime,
    Duality,
    Meanfield,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Semigroup => "semigroup",
            Self::Bridge => "bridge",
            Self::Derivatives => "derivatives",
            Self::Inequalities => "inequalities",
            Self::Shorttime => "shorttime",
            Self::Duality => "duality",
            Self::Meanfield => "meanfield",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    OuExact,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Ou { kappa: f64 },
    Tabulated { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub backend: Option<BackendSpec>,
    /// Curvature constant; required for tabulated potentials.
    #[serde(default)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Gaussian {
        mean: f64,
        var: f64,
    },
    Mixture {
        components: Vec<ComponentSpec>,
    },
    /// CSV with header `x,density` (Lebesgue density, renormalized).
    Tabulated {
        file: PathBuf,
    },
    /// The invariant measure itself.
    Invariant,
    /// Random Gaussian mixture drawn from the run seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub time_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    Quadratic { kappa: f64 },
    QuadraticQuartic { kappa: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfSpec {
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub mu: Option<MarginalSpec>,
    #[serde(default)]
    pub nu: Option<MarginalSpec>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub taylor_horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub test_functions: Option<usize>,
    #[serde(default)]
    pub scan: Option<bool>,
    #[serde(default)]
    pub interaction: Option<InteractionSpec>,
    #[serde(default)]
    pub mf: Option<MfSpec>,
    #[serde(default)]
    pub suite: Option<Suite>,
}

/// Parsed configuration plus what is needed to resolve and identify it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub kind: ExperimentKind,
    pub hash: String,
    pub base_dir: PathBuf,
    pub seed: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    fn present_keys(&self) -> BTreeSet<&'static str> {
        let mut keys = BTreeSet::new();
        let fields: [(&'static str, bool); 14] = [
            ("grid", self.grid.is_some()),
            ("reference", self.reference.is_some()),
            ("mu", self.mu.is_some()),
            ("nu", self.nu.is_some()),
            ("horizon", self.horizon.is_some()),
            ("horizons", self.horizons.is_some()),
            ("taylor_horizons", self.taylor_horizons.is_some()),
            ("solver", self.solver.is_some()),
            ("test_functions", self.test_functions.is_some()),
            ("scan", self.scan.is_some()),
            ("interaction", self.interaction.is_some()),
            ("mf", self.mf.is_some()),
            ("suite", self.suite.is_some()),
            ("seed", self.seed.is_some()),
        ];
        for (k, p) in fields {
            if p {
                keys.insert(k);
            }
        }
        keys
    }

    /// Key-level validation against the experiment's schema.
    pub fn validate(&self, kind: ExperimentKind, seed: Option<u64>) -> Result<(), ConfigError> {
        if let Some(k) = self.experiment {
            if k != kind {
                return err(format!("config is for experiment '{}', not '{}'", k.name(), kind.name()));
            }
        }
        let present = self.present_keys();
        let allowed = kind.allowed();
        for key in &present {
            if *key != "seed" && !allowed.contains(key) {
                return err(format!("key '{key}' is not used by experiment '{}'", kind.name()));
            }
        }
        for key in kind.required() {
            if !present.contains(key) {
                return err(format!("experiment '{}' requires key '{key}'", kind.name()));
            }
        }
        let randomized = matches!(self.mu, Some(MarginalSpec::Random))
            || matches!(self.nu, Some(MarginalSpec::Random))
            || kind == ExperimentKind::Duality;
        if randomized && seed.is_none() {
            return err("randomized experiments need a seed (config 'seed' or --seed)");
        }
        if let Some(t) = self.horizon {
            positive("horizon", t)?;
        }
        for list in [&self.horizons, &self.taylor_horizons].into_iter().flatten() {
            if list.is_empty() {
                return err("horizon lists must not be empty");
            }
            for &t in list {
                positive("horizons", t)?;
            }
        }
        if let Some(g) = &self.grid {
            if !(g.a.is_finite() && g.b.is_finite() && g.a < g.b) || g.n < 3 {
                return err("grid needs finite a < b and n >= 3");
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        err(format!("'{name}' must be positive and finite, got {v}"))
    }
}

pub fn load(path: &Path, kind: ExperimentKind, cli_seed: Option<u64>) -> Result<LoadedConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_slice(&bytes).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let seed = cli_seed.or(config.seed);
    config.validate(kind, seed)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, kind, hash: sha256_hex(&bytes), base_dir, seed })
}

/// Reads a two-column CSV with the given header names.
pub fn read_table(path: &Path, columns: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| ConfigError(format!("{}: {e}", path.display())))?.clone();
    if headers.len() != 2 || headers.get(0) != Some(columns[0]) || headers.get(1) != Some(columns[1]) {
        return err(format!("{}: expected header '{},{}'", path.display(), columns[0], columns[1]));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<(f64, f64)>() {
        let (x, y) = row.map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return err(format!("{}: need at least two rows with increasing x", path.display()));
    }
    Ok((xs, ys))
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let k = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}

impl LoadedConfig {
    fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.base_dir.join(file)
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0))
    }

    pub fn reference(&self) -> Result<ReferenceProcess<f64>, ConfigError> {
        let spec = self.config.reference.as_ref().ok_or_else(|| ConfigError("missing 'reference'".into()))?;
        let (potential, kappa, default_backend) = match &spec.potential {
            PotentialSpec::Ou { kappa } => {
                positive("kappa", *kappa)?;
                if let Some(k) = spec.kappa {
                    if k != *kappa {
                        return err("reference kappa differs from the OU potential's kappa");
                    }
                }
                (Potential::Ou { kappa: *kappa }, *kappa, BackendSpec::OuExact)
            }
            PotentialSpec::Tabulated { file } => {
                let (x, u) = read_table(&self.resolve(file), ["x", "U"])?;
                let kappa =
                    spec.kappa.ok_or_else(|| ConfigError("tabulated potentials need 'kappa' in 'reference'".into()))?;
                (Potential::Tabulated { x, u }, kappa, BackendSpec::Spectral)
            }
        };
        let grid = match &self.config.grid {
            Some(g) => Grid::new(g.a, g.b, g.n),
            None => Grid::symmetric(8.0 / kappa.max(1e-12).sqrt(), 401),
        }
        .map_err(|e| ConfigError(e.to_string()))?;
        let backend = match spec.backend.unwrap_or(default_backend) {
            BackendSpec::OuExact => Backend::OuExact,
            BackendSpec::Spectral => Backend::Spectral,
        };
        ReferenceProcess::new(grid, kappa, &potential, backend).map_err(|e| ConfigError(e.to_string()))
    }

    /// Lebesgue values of a marginal on the grid (unnormalized for mixtures).
    fn lebesgue_values(
        &self,
        spec: &MarginalSpec,
        xs: &[f64],
        rng: &mut ChaCha8Rng,
        kappa: f64,
    ) -> Result<Vec<f64>, ConfigError> {
        let mixture = match spec {
            MarginalSpec::Gaussian { mean, var } => {
                positive("var", *var)?;
                GaussianMixture::gaussian(*mean, *var)
            }
            MarginalSpec::Mixture { components } => GaussianMixture::new(
                components.iter().map(|c| Component { weight: c.weight, mean: c.mean, var: c.var }).collect(),
            )
            .map_err(|e| ConfigError(e.to_string()))?,
            MarginalSpec::Random => GaussianMixture::random(rng, kappa),
            MarginalSpec::Tabulated { file } => {
                let (tx, ty) = read_table(&self.resolve(file), ["x", "density"])?;
                if ty.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return err(format!("{}: densities must be finite and non-negative", file.display()));
                }
                return Ok(xs.iter().map(|&x| interpolate(&tx, &ty, x)).collect());
            }
            MarginalSpec::Invariant => return err("'invariant' marginals need a reference process"),
        };
        Ok(xs.iter().map(|&x| mixture.lebesgue(x)).collect())
    }

    /// `(μ, ν)` as densities with respect to `m`. Random marginals are drawn
    /// in the order `μ`, `ν` from the run generator.
    pub fn marginals(
        &self,
        reference: &ReferenceProcess<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(MDensity<f64>, MDensity<f64>), ConfigError> {
        let mut one = |spec: &Option<MarginalSpec>, name: &str| -> Result<MDensity<f64>, ConfigError> {
            let spec = spec.as_ref().ok_or_else(|| ConfigError(format!("missing '{name}'")))?;
            if let MarginalSpec::Invariant = spec {
                return Ok(MDensity::uniform(reference.len()));
            }
            let vals = self.lebesgue_values(spec, reference.grid().points(), rng, reference.kappa())?;
            reference.density_from_lebesgue(&vals).map_err(|e| ConfigError(format!("'{name}': {e}")))
        };
        let mu = one(&self.config.mu, "mu")?;
        let nu = one(&self.config.nu, "nu")?;
        Ok((mu, nu))
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        let mut cfg = SolverConfig::default();
        if let Some(s) = &self.config.solver {
            cfg.tol = s.tol.unwrap_or(cfg.tol);
            cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
            cfg.time_nodes = s.time_nodes.unwrap_or(cfg.time_nodes);
        }
        cfg
    }

    pub fn interaction(&self) -> Result<InteractionPotential<f64>, ConfigError> {
        match self.config.interaction {
            Some(InteractionSpec::Quadratic { kappa }) => Ok(InteractionPotential::Quadratic { kappa }),
            Some(InteractionSpec::QuadraticQuartic { kappa, eps }) => {
                Ok(InteractionPotential::QuadraticQuartic { kappa, eps })
            }
            None => err("missing 'interaction'"),
        }
    }

    pub fn mf_grid(&self) -> Result<Grid<f64>, ConfigError> {
        match &self.config.grid {
            Some(g) => Grid::new(g.a, g.b, g.n),
            None => Grid::symmetric(8.0, 241),
        }
        .map_err(|e| ConfigError(e.to_string()))
    }

    /// `(μ, ν)` as normalized Lebesgue densities on `grid`.
    pub fn mf_marginals(&self, grid: &Grid<f64>, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        let kappa = self.interaction()?.kappa();
        let mut one = |spec: &Option<MarginalSpec>, name: &str| -> Result<Vec<f64>, ConfigError> {
            let spec = spec.as_ref().ok_or_else(|| ConfigError(format!("missing '{name}'")))?;
            let vals = self.lebesgue_values(spec, grid.points(), rng, kappa)?;
            normalize_density(grid, vals).map_err(|e| ConfigError(format!("'{name}': {e}")))
        };
        let mu = one(&self.config.mu, "mu")?;
        let nu = one(&self.config.nu, "nu")?;
        Ok((mu, nu))
    }

    pub fn mf_config(&self) -> MfConfig<f64> {
        let mut cfg = MfConfig::default();
        if let Some(s) = &self.config.mf {
            cfg.steps = s.steps.unwrap_or(cfg.steps);
            cfg.damping = s.damping.unwrap_or(cfg.damping);
            cfg.tol = s.tol.unwrap_or(cfg.tol);
            cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"horizon": 1.0, "colour": 3}"#).is_err());
        assert!(parse(r#"{"reference": {"potential": {"type": "ou", "kappa": 1, "x": 0}}}"#).is_err());
        assert!(parse(r#"{"mu": {"type": "gaussian", "mean": 0, "var": 1, "w": 1}}"#).is_err());
    }

    #[test]
    fn keys_are_checked_against_the_experiment() {
        let c = parse(
            r#"{"reference": {"potential": {"type": "ou", "kappa": 1}}, "mu": {"type": "invariant"},
            "nu": {"type": "invariant"}, "horizon": 1.0}"#,
        )
        .unwrap();
        assert!(c.validate(ExperimentKind::Solve, None).is_ok());
        assert!(c.validate(ExperimentKind::Sweep, None).is_err());
        let mut d = c.clone();
        d.experiment = Some(ExperimentKind::Sweep);
        assert!(d.validate(ExperimentKind::Solve, None).is_err());
        d.experiment = None;
        d.mu = Some(MarginalSpec::Random);
        assert!(d.validate(ExperimentKind::Solve, None).is_err());
        assert!(d.validate(ExperimentKind::Solve, Some(3)).is_ok());
    }

    #[test]
    fn linear_interpolation_vanishes_outside() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 2.0, 0.0];
        assert_eq!(interpolate(&xs, &ys, 0.5), 1.0);
        assert_eq!(interpolate(&xs, &ys, 1.5), 1.0);
        assert_eq!(interpolate(&xs, &ys, -0.1), 0.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 0.0);
    }
}
