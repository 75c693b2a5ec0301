use std::path::{Path, PathBuf};
use std::sync::Arc;

use cforge_core::perceptron::{DEFAULT_ETA, STEP_GRID};
use cforge_core::{DomainSpec, PopulationSpec, QueryStrategy, SessionConfig, Solver};
use serde::{Deserialize, Serialize};

use crate::clock::MonotonicClock;
use crate::error::{Error, Result};
use crate::io::{read_json, DomainDescriptor};
use crate::lp::ExternalBackend;

pub const DEFAULT_TIMEOUT_S: f64 = 20.0;
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    /// Exhaustive when the domain is enumerable, branch and bound otherwise.
    #[default]
    Auto,
    Exhaustive,
    Bnb,
    External,
}

impl std::str::FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(BackendChoice::Auto),
            "exhaustive" => Ok(BackendChoice::Exhaustive),
            "bnb" => Ok(BackendChoice::Bnb),
            "external" => Ok(BackendChoice::External),
            other => Err(format!("unknown solver backend `{other}`")),
        }
    }
}

fn default_timeout() -> Option<f64> {
    Some(DEFAULT_TIMEOUT_S)
}

fn default_limit() -> u64 {
    DEFAULT_ENUMERATION_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub backend: BackendChoice,
    /// Per-solve wall-clock budget; `null` disables it.
    #[serde(default = "default_timeout")]
    pub timeout_s: Option<f64>,
    #[serde(default = "default_limit")]
    pub enumeration_limit: u64,
    /// Command line of the external backend, with `{lp}`, `{sol}` and
    /// `{timeout}` placeholders.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: BackendChoice::Auto,
            timeout_s: default_timeout(),
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
            command: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn build(&self, domain: &DomainSpec) -> Result<Solver> {
        if let Some(t) = self.timeout_s {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!("solver timeout must be non-negative, got {t}")));
            }
        }
        let base = match self.backend {
            BackendChoice::Exhaustive => Solver::exhaustive(),
            BackendChoice::Bnb => Solver::branch_and_bound(),
            BackendChoice::Auto => {
                if product_size(domain).is_some_and(|n| n <= self.enumeration_limit) {
                    Solver::exhaustive()
                } else {
                    Solver::branch_and_bound()
                }
            }
            BackendChoice::External => {
                let backend = ExternalBackend::new(&self.command)?;
                Solver::new(Arc::new(backend), Arc::new(MonotonicClock::new()))
            }
        };
        Ok(base
            .with_clock(Arc::new(MonotonicClock::new()))
            .with_time_budget(self.timeout_s)
            .with_enumeration_limit(self.enumeration_limit))
    }
}

/// Size of the unconstrained attribute product, if finite and below 2^64.
pub fn product_size(domain: &DomainSpec) -> Option<u64> {
    domain
        .attributes()
        .iter()
        .try_fold(1u64, |acc, a| acc.checked_mul(a.kind.cardinality()?))
}

fn yes() -> bool {
    true
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_grid() -> Vec<f64> {
    STEP_GRID.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeConfig {
    #[serde(default = "yes")]
    pub adapt: bool,
    /// Step size when not adapting.
    #[serde(default = "default_eta")]
    pub fixed: f64,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
}

impl Default for StepSizeConfig {
    fn default() -> Self {
        StepSizeConfig {
            adapt: true,
            fixed: DEFAULT_ETA,
            grid: default_grid(),
        }
    }
}

fn default_lanes() -> usize {
    0
}

/// A complete, re-runnable experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub domain: DomainDescriptor,
    pub k: usize,
    /// Maximum iterations per user.
    pub iterations: usize,
    #[serde(default)]
    pub early_stop: bool,
    pub population: PopulationSpec,
    #[serde(default)]
    pub strategy: QueryStrategy,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub step_size: StepSizeConfig,
    /// Seed of the per-user session streams (random strategy tie breaks).
    #[serde(default)]
    pub seed: u64,
    /// Parallel lanes; 0 uses one per core.
    #[serde(default = "default_lanes")]
    pub lanes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".to_string()));
        }
        if self.population.n == 0 {
            return Err(Error::Config("population must contain at least one user".to_string()));
        }
        self.population.distribution.validate()?;
        self.session_config(0).validate()?;
        Ok(())
    }

    /// Session settings for user `user`.
    pub fn session_config(&self, user: usize) -> SessionConfig {
        let mut s = SessionConfig::new(self.k, self.iterations);
        s.strategy = self.strategy;
        s.adapt_eta = self.step_size.adapt;
        s.eta = self.step_size.fixed;
        s.eta_grid = self.step_size.grid.clone();
        s.early_stop = self.early_stop;
        s.seed = self.seed.wrapping_add(user as u64);
        s
    }
}
