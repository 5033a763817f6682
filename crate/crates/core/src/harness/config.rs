use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::csvio::read_actions_csv;
use crate::design::ActionSet;
use crate::environment::{Family, PopulationModel};
use crate::error::HarnessError;
use crate::policies::{epsilon_net, LogArgVariant, PolicyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cppe,
    Fedpe,
    Indpe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Cppe, Algorithm::Fedpe, Algorithm::Indpe];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Cppe => "cppe",
            Algorithm::Fedpe => "fedpe",
            Algorithm::Indpe => "indpe",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cppe" => Ok(Algorithm::Cppe),
            "fedpe" => Ok(Algorithm::Fedpe),
            "indpe" => Ok(Algorithm::Indpe),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    /// `k` equally spaced points on the unit circle (d = 2).
    #[default]
    UniformCircle,
    /// Covering net of the unit ball with radius `net_eps` (default `1/sqrt(m n)`).
    EpsilonNet,
    /// Rows of `actions_file`, resolved relative to the config file.
    CsvFile,
}

fn default_sigma0() -> f64 {
    1.0
}

fn default_reps() -> usize {
    1
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn yes() -> bool {
    true
}

/// One experiment, read from a flat JSON object. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub mu: Vec<f64>,
    /// Isotropic heterogeneity, `C = sigma^2 I`. Leave at 0 when `cov` is given.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    pub delta: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub action_source: ActionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_eps: Option<f64>,
    #[serde(default)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pull_constant_collab: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pull_constant_local: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_arg_variant: Option<LogArgVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_phases: Option<u32>,
    /// Divide summary curves by `m`.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Persist per-replication traces (large for long horizons).
    #[serde(default = "yes")]
    pub write_traces: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// A config with the given shape and every optional field at its default.
    pub fn new(m: usize, n: usize, mu: Vec<f64>, sigma: f64, delta: f64) -> Self {
        Self {
            m,
            n,
            d: mu.len(),
            k: None,
            mu,
            sigma,
            cov: None,
            sigma0: default_sigma0(),
            delta,
            reps: default_reps(),
            seed: 0,
            algorithms: default_algorithms(),
            action_source: ActionSource::UniformCircle,
            actions_file: None,
            net_eps: None,
            family: Family::Gaussian,
            pull_constant_collab: None,
            pull_constant_local: None,
            log_arg_variant: None,
            design_tol: None,
            design_max_iter: None,
            max_phases: None,
            normalize: true,
            write_traces: true,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; `actions_file` is resolved against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.actions_file, path.parent()) {
            if file.is_relative() {
                cfg.actions_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.m == 0 || self.n == 0 || self.d == 0 {
            return bad("m, n and d must all be at least 1".into());
        }
        if self.mu.len() != self.d {
            return bad(format!("mu has length {}, expected d = {}", self.mu.len(), self.d));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return bad("mu must be finite".into());
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if let Some(cov) = &self.cov {
            if self.sigma != 0.0 {
                return bad("give either sigma or cov, not both".into());
            }
            if cov.len() != self.d || cov.iter().any(|r| r.len() != self.d) {
                return bad(format!("cov must be {0}x{0}", self.d));
            }
        }
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return bad(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty".into());
        }
        let mut algs = self.algorithms.clone();
        algs.sort();
        algs.dedup();
        if algs.len() != self.algorithms.len() {
            return bad("algorithms contains duplicates".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        match self.action_source {
            ActionSource::UniformCircle => {
                if self.d != 2 {
                    return bad("uniform_circle needs d = 2".into());
                }
                if !matches!(self.k, Some(k) if k >= 1) {
                    return bad("uniform_circle needs k >= 1".into());
                }
            }
            ActionSource::EpsilonNet => {
                if self.k.is_some() {
                    return bad("k is determined by the net; leave it out for epsilon_net".into());
                }
                if let Some(eps) = self.net_eps {
                    if !(eps > 0.0 && eps <= 1.0) {
                        return bad(format!("net_eps must lie in (0, 1], got {eps}"));
                    }
                }
            }
            ActionSource::CsvFile => {
                if self.actions_file.is_none() {
                    return bad("csv_file needs actions_file".into());
                }
            }
        }
        self.policy()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        // covariance must factor
        self.population()?;
        Ok(())
    }

    pub fn policy(&self) -> PolicyConfig {
        let mut p = PolicyConfig::new(self.delta, self.n);
        if let Some(v) = self.pull_constant_collab {
            p.pull_constant_collab = v;
        }
        if let Some(v) = self.pull_constant_local {
            p.pull_constant_local = v;
        }
        if let Some(v) = self.log_arg_variant {
            p.log_arg_variant = v;
        }
        if let Some(v) = self.design_tol {
            p.design_tol = v;
        }
        if let Some(v) = self.design_max_iter {
            p.design_max_iter = v;
        }
        if let Some(v) = self.max_phases {
            p.max_phases = v;
        }
        p
    }

    pub fn population(&self) -> Result<PopulationModel, HarnessError> {
        let model = match &self.cov {
            Some(rows) => {
                let cov = DMatrix::from_fn(self.d, self.d, |i, j| rows[i][j]);
                PopulationModel::new(DVector::from_vec(self.mu.clone()), cov, self.sigma0, self.family)
            }
            None => PopulationModel::isotropic(self.mu.clone(), self.sigma, self.sigma0),
        };
        model
            .map(|m| m.with_family(self.family))
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Net radius used by `epsilon_net` sources.
    pub fn net_radius(&self) -> f64 {
        self.net_eps
            .unwrap_or_else(|| (1.0 / ((self.m * self.n) as f64).sqrt()).min(1.0))
    }

    pub fn action_set(&self) -> Result<ActionSet, HarnessError> {
        let set = match self.action_source {
            ActionSource::UniformCircle => {
                ActionSet::unit_circle(self.k.unwrap_or(0)).map_err(|e| HarnessError::Config(e.to_string()))?
            }
            ActionSource::EpsilonNet => {
                epsilon_net(self.d, self.net_radius()).map_err(|e| HarnessError::Config(e.to_string()))?
            }
            ActionSource::CsvFile => {
                let path = self.actions_file.as_ref().expect("validated");
                let set = read_actions_csv(path)?;
                if let Some(k) = self.k {
                    if k != set.len() {
                        return Err(HarnessError::Config(format!(
                            "k = {k} but {} holds {} actions",
                            path.display(),
                            set.len()
                        )));
                    }
                }
                set
            }
        };
        if set.dim() != self.d {
            return Err(HarnessError::Config(format!(
                "actions have dimension {}, config says d = {}",
                set.dim(),
                self.d
            )));
        }
        Ok(set)
    }
}
