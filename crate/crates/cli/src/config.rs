//! Experiment configuration files (TOML). Unknown keys are rejected.

use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyInequality,
    Simulate,
    CompareKernels,
    GrazingLimit,
    FokkerPlanck,
    BakryEmery,
    LowerBoundProbe,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::VerifyInequality => "verify-inequality",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::CompareKernels => "compare-kernels",
            ExperimentKind::GrazingLimit => "grazing-limit",
            ExperimentKind::FokkerPlanck => "fokker-planck",
            ExperimentKind::BakryEmery => "bakry-emery",
            ExperimentKind::LowerBoundProbe => "lower-bound-probe",
        }
    }

    /// Whether the experiment draws random numbers and so needs a seed.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, ExperimentKind::LowerBoundProbe)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    #[default]
    Jump,
    Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentKind,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kernel: Option<String>,
    pub reference_kernel: Option<String>,
    pub suite: Option<String>,
    #[serde(default)]
    pub maxwellian: MaxwellianConfig,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxwellianConfig {
    pub dim: usize,
    pub theta: f64,
    pub u0: Option<Vec<f64>>,
}

impl Default for MaxwellianConfig {
    fn default() -> Self {
        MaxwellianConfig { dim: 3, theta: 1.0, u0: None }
    }
}

/// Sizes and horizons; unset values take per-experiment defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    pub mc_samples: Option<u64>,
    pub particles: Option<usize>,
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// Temperatures to sweep (verify-inequality); defaults to `maxwellian.theta`.
    pub thetas: Option<Vec<f64>>,
    pub epsilons: Vec<f64>,
    pub rho0: f64,
    pub pairs: usize,
    pub initial_shift: f64,
    pub initial_ratio: f64,
    pub method: SimMethod,
    pub random_v: usize,
    pub moment_draws: usize,
    pub c: f64,
    pub p: f64,
    pub t: f64,
    pub r_max: f64,
    pub n_radii: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            thetas: None,
            epsilons: vec![1.0, 0.5, 0.25],
            rho0: 1.0,
            pairs: 1000,
            initial_shift: 0.0,
            initial_ratio: 2.0,
            method: SimMethod::Jump,
            random_v: 20,
            moment_draws: 5,
            c: 0.2,
            p: 3.0,
            t: 1.0,
            r_max: 40.0,
            n_radii: 200,
        }
    }
}

/// A rejected configuration, pointing at the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { key: key.into(), message: message.into() })
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError { key: String::new(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: String::new(), message: format!("cannot read {}: {e}", path.display()) })?;
        Config::parse(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mx = &self.maxwellian;
        if !(2..=3).contains(&mx.dim) {
            return err("maxwellian.dim", format!("must be 2 or 3, got {}", mx.dim));
        }
        if !(mx.theta > 0.0 && mx.theta.is_finite()) {
            return err("maxwellian.theta", format!("must be positive, got {}", mx.theta));
        }
        if let Some(u0) = &mx.u0 {
            if u0.len() != mx.dim || u0.iter().any(|x| !x.is_finite()) {
                return err("maxwellian.u0", format!("must have {} finite entries", mx.dim));
            }
        }
        let b = &self.budget;
        if b.mc_samples == Some(0) {
            return err("budget.mc_samples", "must be positive");
        }
        if b.particles == Some(0) {
            return err("budget.particles", "must be positive");
        }
        if matches!(b.grid_n, Some(n) if n < 3) {
            return err("budget.grid_n", "must be at least 3");
        }
        if matches!(b.points, Some(n) if n < 2) {
            return err("budget.points", "must be at least 2");
        }
        for (key, v) in [("budget.dt", b.dt), ("budget.t_end", b.t_end)] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return err(key, format!("must be positive, got {x}"));
                }
            }
        }
        let o = &self.options;
        if let Some(ts) = &o.thetas {
            if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return err("options.thetas", "must be a nonempty list of positive temperatures");
            }
        }
        if o.epsilons.is_empty() || o.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return err("options.epsilons", "must be a nonempty list of values in (0, 1]");
        }
        if !(o.rho0 > 0.0 && o.rho0.is_finite()) {
            return err("options.rho0", "must be positive");
        }
        if o.pairs == 0 {
            return err("options.pairs", "must be positive");
        }
        if !(o.initial_ratio > 0.0 && o.initial_ratio.is_finite()) || !o.initial_shift.is_finite() {
            return err("options.initial_ratio", "must be positive (and initial_shift finite)");
        }
        if o.random_v == 0 {
            return err("options.random_v", "must be positive");
        }
        if o.moment_draws == 0 {
            return err("options.moment_draws", "must be positive");
        }
        if !(o.p >= 1.0) {
            return err("options.p", "must be at least 1");
        }
        if !(o.t >= 0.0 && o.t.is_finite()) {
            return err("options.t", "must be nonnegative");
        }
        if !(o.r_max > 0.0 && o.r_max.is_finite()) {
            return err("options.r_max", "must be positive");
        }
        if o.n_radii < 2 {
            return err("options.n_radii", "must be at least 2");
        }
        if !(o.c > 0.0 && o.c.is_finite()) {
            return err("options.c", "must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = Config::parse("experiment = \"bakry-emery\"\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::BakryEmery);
        assert_eq!(c.maxwellian.dim, 3);
        assert_eq!(c.options.epsilons, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = Config::parse("experiment = \"simulate\"\n[budget]\nparticle = 10\n").unwrap_err();
        assert!(e.message.contains("particle"), "{e}");
        assert!(Config::parse("experiment = \"simulate\"\ncolour = 1\n").is_err());
        assert!(Config::parse("experiment = \"nope\"\n").is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let e = Config::parse("experiment = \"simulate\"\n[maxwellian]\ntheta = -1.0\n").unwrap_err();
        assert_eq!(e.key, "maxwellian.theta");
        let e = Config::parse("experiment = \"grazing-limit\"\n[options]\nepsilons = [0.5, 2.0]\n").unwrap_err();
        assert_eq!(e.key, "options.epsilons");
        let e = Config::parse("experiment = \"simulate\"\n[budget]\nmc_samples = 0\n").unwrap_err();
        assert_eq!(e.key, "budget.mc_samples");
    }
}
