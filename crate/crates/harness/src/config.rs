//! Run configuration: built-in profiles overlaid with an optional TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stochms::grid::Grid1D;
use stochms::nls::stepper_registry;
use stochms::noise::{truncation_bound, Truncation};
use stochms::solver::{solver_registry, SolverConfig};
use stochms::system::{system_registry, NlsParams};
use stochms::tableau::tableau_registry;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown profile `{0}` (available: ci, paper)")]
    Profile(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] stochms::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub kappa: f64,
    pub xi: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x0: f64,
    pub length: f64,
    pub dx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: String,
    pub tol: f64,
    pub max_iter: usize,
    pub newton_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    pub truncation: bool,
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub stepper: String,
    pub tableau: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub t1: f64,
    pub dts: Vec<f64>,
    pub members: usize,
    /// Noise amplitude of the stochastic series.
    pub xi: f64,
    pub x0: f64,
    pub length: f64,
    pub dx: f64,
    /// Adds a `ξ = 0` series on its own grid; it needs a single member.
    pub deterministic: bool,
    pub deterministic_x0: f64,
    pub deterministic_length: f64,
    pub deterministic_dx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub solver: SolverSection,
    pub noise: NoiseConfig,
    pub output: OutputConfig,
    pub scheme: SchemeConfig,
    pub ensemble: EnsembleConfig,
    pub converge: ConvergeConfig,
}

impl Config {
    /// The full experiment: transport noise on `[0, 40]` up to `t = 80`.
    pub fn paper() -> Self {
        Self {
            model: ModelConfig {
                name: "nls-transport".into(),
                kappa: -1.0,
                xi: 0.1,
                epsilon: 0.02,
            },
            grid: GridConfig {
                x0: 0.0,
                length: 40.0,
                dx: 0.1,
            },
            time: TimeConfig {
                t0: 0.0,
                t1: 80.0,
                dt: 0.02,
            },
            solver: SolverSection {
                method: "fixed-point".into(),
                tol: 1e-6,
                max_iter: 100,
                newton_fallback: true,
            },
            noise: NoiseConfig {
                seed: 20_240_601,
                truncation: true,
                k: 1.0,
            },
            output: OutputConfig { snapshot_stride: 50 },
            scheme: SchemeConfig {
                stepper: "reduced".into(),
                tableau: "midpoint".into(),
            },
            ensemble: EnsembleConfig { members: 32 },
            converge: ConvergeConfig {
                t1: 5.0,
                dts: vec![0.04, 0.02, 0.01, 0.005],
                members: 16,
                xi: 1.0,
                x0: -20.0,
                length: 70.0,
                dx: 0.0125,
                deterministic: true,
                deterministic_x0: -10.0,
                deterministic_length: 50.0,
                deterministic_dx: 0.001,
            },
        }
    }

    /// The full setup shortened to `t = 20`.
    pub fn ci() -> Self {
        let mut c = Self::paper();
        c.time.t1 = 20.0;
        c
    }

    pub fn profile(name: &str) -> Result<Self, ConfigError> {
        match name {
            "paper" => Ok(Self::paper()),
            "ci" => Ok(Self::ci()),
            other => Err(ConfigError::Profile(other.to_string())),
        }
    }

    /// Overlays `text` on the profile. Keys missing from `text` keep their
    /// profile value; unknown keys are errors.
    pub fn overlay(self, text: &str) -> Result<Self, ConfigError> {
        let mut base = toml::Table::try_from(&self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let user: toml::Table = text.parse()?;
        merge(&mut base, user);
        let cfg: Config = toml::Value::Table(base).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(profile: &str, path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = Self::profile(profile)?;
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                base.overlay(&text)?
            }
            None => base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn params(&self) -> NlsParams {
        NlsParams {
            kappa: self.model.kappa,
            xi: self.model.xi,
            epsilon: self.model.epsilon,
        }
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Ok(Grid1D::from_length(self.grid.x0, self.grid.length, self.grid.dx)?)
    }

    pub fn steps(&self) -> usize {
        ((self.time.t1 - self.time.t0) / self.time.dt).round() as usize
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver.method.clone(),
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            newton_fallback: self.solver.newton_fallback,
        }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            enabled: self.noise.truncation,
            k: self.noise.k,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        system_registry().get(&self.model.name)?;
        stepper_registry().get(&self.scheme.stepper)?;
        tableau_registry().get(&self.scheme.tableau)?;
        solver_registry().get(&self.solver.method)?;
        let t = &self.time;
        if !(t.t1 > t.t0) {
            return bad(format!("time.t1 = {} must exceed time.t0 = {}", t.t1, t.t0));
        }
        if !divides(t.dt, t.t1 - t.t0) {
            return bad(format!("time.dt = {} does not divide [{}, {}]", t.dt, t.t0, t.t1));
        }
        if !divides(self.grid.dx, self.grid.length) {
            return bad(format!("grid.dx = {} does not divide grid.length = {}", self.grid.dx, self.grid.length));
        }
        self.grid()?;
        truncation_bound(t.dt, self.noise.k)?;
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver.tol must be positive and solver.max_iter at least 1".into());
        }
        if self.output.snapshot_stride == 0 {
            return bad("output.snapshot_stride must be at least 1".into());
        }
        if self.ensemble.members == 0 || self.converge.members == 0 {
            return bad("member counts must be at least 1".into());
        }
        self.validate_converge()
    }

    fn validate_converge(&self) -> Result<(), ConfigError> {
        let c = &self.converge;
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if c.dts.is_empty() {
            return bad("converge.dts is empty".into());
        }
        if !(c.t1 > 0.0) || !divides(c.dx, c.length) || !divides(c.deterministic_dx, c.deterministic_length) {
            return bad("converge grid or horizon is invalid".into());
        }
        let finest = c.dts.iter().copied().fold(f64::INFINITY, f64::min);
        for &dt in &c.dts {
            if !divides(finest, dt) || !divides(dt, c.t1) {
                return bad(format!("converge.dts must be nested integer multiples dividing t1; {dt} is not"));
            }
            truncation_bound(dt, self.noise.k)?;
        }
        Ok(())
    }
}

fn divides(step: f64, span: f64) -> bool {
    if !(step > 0.0) || !(span > 0.0) {
        return false;
    }
    let n = (span / step).round();
    n >= 1.0 && (n * step - span).abs() <= 1e-9 * span
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
