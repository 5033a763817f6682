//! Phased-elimination policies: the collaborative-then-personal algorithm
//! (CP-PE) and its two baselines, Fed-PE (always collaborative) and Ind-PE
//! (always personal).

mod engine;
mod net;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design::{dot, ActionSet, Design, DEFAULT_DESIGN_MAX_ITER, DEFAULT_DESIGN_TOL};
use crate::error::PolicyError;

pub use engine::{
    run_cppe, run_cppe_with_h, run_fedpe, run_indpe, run_single_agent, EventLog, PhaseEvent,
    PhaseObserver, PhaseRecord, PolicyRun, Scope,
};
pub use net::{epsilon_net, NET_SIZE_CAP};

/// Which form of the pull-count formulas to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogArgVariant {
    /// Constants 8 / 2 and log arguments `2 k l(l+1) / delta` (with `m` for local plans).
    #[default]
    Proof,
    /// No leading constants, log arguments `k l(l+1) / (2 delta)` (with `m` for local plans).
    Maintext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub delta: f64,
    /// Round budget per agent.
    pub n: usize,
    pub pull_constant_collab: f64,
    pub pull_constant_local: f64,
    pub log_arg_variant: LogArgVariant,
    pub design_tol: f64,
    pub design_max_iter: usize,
    /// After this many phases the empirical best action is played until the budget runs out.
    pub max_phases: u32,
}

impl PolicyConfig {
    pub const DEFAULT_COLLAB_CONSTANT: f64 = 8.0;
    pub const DEFAULT_LOCAL_CONSTANT: f64 = 2.0;
    pub const DEFAULT_MAX_PHASES: u32 = 40;

    pub fn new(delta: f64, n: usize) -> Self {
        Self {
            delta,
            n,
            pull_constant_collab: Self::DEFAULT_COLLAB_CONSTANT,
            pull_constant_local: Self::DEFAULT_LOCAL_CONSTANT,
            log_arg_variant: LogArgVariant::Proof,
            design_tol: DEFAULT_DESIGN_TOL,
            design_max_iter: DEFAULT_DESIGN_MAX_ITER,
            max_phases: Self::DEFAULT_MAX_PHASES,
        }
    }

    pub fn with_variant(mut self, variant: LogArgVariant) -> Self {
        self.log_arg_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |msg: String| Err(PolicyError::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        for (name, c) in [
            ("pull_constant_collab", self.pull_constant_collab),
            ("pull_constant_local", self.pull_constant_local),
        ] {
            if !(c > 0.0) || !c.is_finite() {
                return bad(format!("{name} must be positive, got {c}"));
            }
        }
        if !(self.design_tol > 0.0) || !self.design_tol.is_finite() {
            return bad(format!("design_tol must be positive, got {}", self.design_tol));
        }
        if self.design_max_iter == 0 {
            return bad("design_max_iter must be at least 1".into());
        }
        if !(1..=1000).contains(&self.max_phases) {
            return bad(format!("max_phases must lie in 1..=1000, got {}", self.max_phases));
        }
        Ok(())
    }
}

/// Stage of a run. Collaborative can move to personal, never the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Collaborative,
    Personal,
    Exhausted,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Collaborative => "collaborative",
            Stage::Personal => "personal",
            Stage::Exhausted => "exhausted",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "collaborative" => Ok(Stage::Collaborative),
            "personal" => Ok(Stage::Personal),
            "exhausted" => Ok(Stage::Exhausted),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

/// `eps_l = 2^-l`.
pub fn phase_eps(ell: u32) -> f64 {
    (-(ell as f64)).exp2()
}

/// Per-action pull counts of one phase for one agent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PullPlan {
    counts: BTreeMap<usize, u64>,
    total: u64,
}

impl PullPlan {
    fn from_counts(counts: BTreeMap<usize, u64>) -> Self {
        let total = counts.values().fold(0u64, |a, &c| a.saturating_add(c));
        Self { counts, total }
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// `n_bar`, the number of rounds the plan occupies.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Execution order: decreasing design weight, ties by increasing id.
    pub fn schedule(&self, design: &Design) -> Vec<(usize, u64)> {
        let mut order: Vec<(usize, u64)> = self.iter().collect();
        order.sort_by(|a, b| {
            design
                .weight(b.0)
                .total_cmp(&design.weight(a.0))
                .then(a.0.cmp(&b.0))
        });
        order
    }
}

fn plan(design: &Design, scale: f64) -> PullPlan {
    PullPlan::from_counts(
        design
            .iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(id, w)| (id, (w * scale).ceil() as u64))
            .collect(),
    )
}

fn log_term(k: usize, m: usize, ell: u32, delta: f64, variant: LogArgVariant) -> f64 {
    let ll = ell as f64 * (ell as f64 + 1.0);
    let km = k as f64 * m as f64;
    match variant {
        LogArgVariant::Proof => (2.0 * km * ll / delta).ln(),
        LogArgVariant::Maintext => (km * ll / (2.0 * delta)).ln(),
    }
}

/// Per-agent plan of a collaborative phase:
/// `ceil(c pi(x) g / (m eps^2) log(...))`, the log argument free of `m`.
#[allow(clippy::too_many_arguments)]
pub fn collaborative_pull_counts(
    design: &Design,
    g: f64,
    eps: f64,
    m: usize,
    k: usize,
    ell: u32,
    delta: f64,
    cfg: &PolicyConfig,
) -> PullPlan {
    let c = match cfg.log_arg_variant {
        LogArgVariant::Proof => cfg.pull_constant_collab,
        LogArgVariant::Maintext => 1.0,
    };
    let scale = c * g / (m as f64 * eps * eps) * log_term(k, 1, ell, delta, cfg.log_arg_variant);
    plan(design, scale)
}

/// Per-agent plan of a personal phase:
/// `ceil(c pi(x) g / eps^2 log(...))`, the log argument including `m`.
#[allow(clippy::too_many_arguments)]
pub fn local_pull_counts(
    design: &Design,
    g: f64,
    eps: f64,
    m: usize,
    k: usize,
    ell: u32,
    delta: f64,
    cfg: &PolicyConfig,
) -> PullPlan {
    let c = match cfg.log_arg_variant {
        LogArgVariant::Proof => cfg.pull_constant_local,
        LogArgVariant::Maintext => 1.0,
    };
    let scale = c * g / (eps * eps) * log_term(k, m, ell, delta, cfg.log_arg_variant);
    plan(design, scale)
}

/// Keeps every `x` with `max_x' <theta_hat, x' - x> <= 2 eps`.
pub fn eliminate(active: &ActionSet, theta_hat: &[f64], eps: f64) -> ActionSet {
    let (_, best) = active.argmax(theta_hat);
    let keep: Vec<usize> = (0..active.len())
        .filter(|&pos| best - dot(active.row(pos), theta_hat) <= 2.0 * eps)
        .collect();
    active.subset(&keep)
}
