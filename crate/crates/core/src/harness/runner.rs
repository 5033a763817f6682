use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use super::csvio::{write_events, write_failures, write_summary, write_traces, EventRow, FailureRow};
use super::stats::{aggregate, RegretTrace, SummaryStats};
use crate::design::ActionSet;
use crate::environment::{sample_instance, Instance, PopulationModel};
use crate::error::{EnvError, HarnessError};
use crate::policies::{run_cppe, run_fedpe, run_indpe, EventLog, PolicyConfig, PolicyRun};
use crate::rng::{derive_seed, rng_from_seed, TAG_INSTANCE, TAG_NOISE_CPPE, TAG_NOISE_FEDPE, TAG_NOISE_INDPE};

pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub traces: Vec<RegretTrace>,
    pub summary: SummaryStats,
    pub events: Vec<EventRow>,
    /// `(rep, completed collaborative phases)` for every successful CP-PE run.
    pub collaborative_phases: Vec<(usize, u32)>,
    pub failures: Vec<FailureRow>,
}

/// Seed of replication `rep`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, rep as u64)
}

/// Reward-noise seed of `algorithm` within a replication.
pub fn noise_seed(rep_seed: u64, algorithm: Algorithm) -> u64 {
    let tag = match algorithm {
        Algorithm::Cppe => TAG_NOISE_CPPE,
        Algorithm::Fedpe => TAG_NOISE_FEDPE,
        Algorithm::Indpe => TAG_NOISE_INDPE,
    };
    derive_seed(rep_seed, tag)
}

/// The instance every algorithm of replication `rep` is evaluated on.
pub fn replication_instance(
    cfg: &ExperimentConfig,
    rep: usize,
    actions: &ActionSet,
    model: &PopulationModel,
) -> Result<Instance, EnvError> {
    let seed = derive_seed(replication_seed(cfg.seed, rep), TAG_INSTANCE);
    sample_instance(model, cfg.m, actions, &mut rng_from_seed(seed))
}

/// Runs one algorithm on one replication, returning the run and its phase events.
pub fn run_algorithm(
    algorithm: Algorithm,
    policy: &PolicyConfig,
    actions: &ActionSet,
    model: &PopulationModel,
    instance: &Instance,
    noise_seed: u64,
) -> Result<(PolicyRun, EventLog), HarnessError> {
    let mut log = EventLog::new();
    let run = match algorithm {
        Algorithm::Cppe => run_cppe(policy, actions, model, instance, noise_seed, &mut log),
        Algorithm::Fedpe => run_fedpe(policy, actions, model, instance, noise_seed, &mut log),
        Algorithm::Indpe => run_indpe(policy, actions, model, instance, noise_seed, &mut log),
    }?;
    Ok((run, log))
}

type AlgOutcome = (Algorithm, Result<(PolicyRun, EventLog), String>);

fn replicate(
    cfg: &ExperimentConfig,
    rep: usize,
    actions: &ActionSet,
    model: &PopulationModel,
    policy: &PolicyConfig,
) -> Vec<AlgOutcome> {
    let instance = match replication_instance(cfg, rep, actions, model) {
        Ok(i) => i,
        Err(e) => {
            return cfg
                .algorithms
                .iter()
                .map(|&a| (a, Err(format!("instance sampling failed: {e}"))))
                .collect()
        }
    };
    let rep_seed = replication_seed(cfg.seed, rep);
    cfg.algorithms
        .iter()
        .map(|&alg| {
            let seed = noise_seed(rep_seed, alg);
            let result = catch_unwind(AssertUnwindSafe(|| {
                run_algorithm(alg, policy, actions, model, &instance, seed)
            }));
            let outcome = match result {
                Ok(Ok(r)) => Ok(r),
                Ok(Err(e)) => Err(e.to_string()),
                Err(panic) => Err(format!("panicked: {}", panic_message(&panic))),
            };
            (alg, outcome)
        })
        .collect()
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs every replication, aggregates, and persists CSVs under `out` when given.
///
/// Replications run on up to `workers` threads (default: `cfg.workers`, then
/// the number of CPUs). Results do not depend on the worker count.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    workers: Option<usize>,
) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let actions = cfg.action_set()?;
    let model = cfg.population()?;
    let policy = cfg.policy();

    let threads = workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(HarnessError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Vec<AlgOutcome>> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| replicate(cfg, rep, &actions, &model, &policy))
            .collect()
    });

    let mut traces = Vec::new();
    let mut events = Vec::new();
    let mut collaborative_phases = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcomes) in results.into_iter().enumerate() {
        for (alg, outcome) in outcomes {
            let checked = outcome.and_then(|(run, log)| {
                RegretTrace::new(alg, rep, run.cumulative)
                    .map(|t| (t, run.collaborative_phases, log))
                    .map_err(|e| e.to_string())
            });
            match checked {
                Ok((trace, l_c, log)) => {
                    if alg == Algorithm::Cppe {
                        collaborative_phases.push((rep, l_c));
                    }
                    events.extend(log.into_events().into_iter().map(|e| EventRow {
                        algorithm: alg,
                        rep,
                        phase: e.phase,
                        stage: e.stage,
                        eps: e.eps,
                        pulls_total: e.pulls_total,
                        min_active: e.min_active,
                        max_active: e.max_active,
                    }));
                    traces.push(trace);
                }
                Err(error) => failures.push(FailureRow {
                    algorithm: alg,
                    rep,
                    error,
                }),
            }
        }
    }
    events.sort_by_key(|e| (e.algorithm, e.rep, e.phase, e.stage));

    if traces.is_empty() {
        if let Some(dir) = out {
            persist_failures(dir, &failures)?;
        }
        return Err(HarnessError::AllFailed(cfg.reps));
    }
    let summary = aggregate(&traces, cfg.m, cfg.normalize)?;
    let output = ExperimentOutput {
        traces,
        summary,
        events,
        collaborative_phases,
        failures,
    };
    if let Some(dir) = out {
        persist(dir, cfg, &output)?;
    }
    Ok(output)
}

fn persist_failures(dir: &Path, failures: &[FailureRow]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_failures(dir.join(FAILURES_FILE), failures)
}

fn persist(dir: &Path, cfg: &ExperimentConfig, output: &ExperimentOutput) -> Result<(), HarnessError> {
    persist_failures(dir, &output.failures)?;
    if cfg.write_traces {
        write_traces(dir.join(TRACES_FILE), &output.traces)?;
    }
    write_summary(dir.join(SUMMARY_FILE), &output.summary)?;
    write_events(dir.join(EVENTS_FILE), &output.events)?;
    let path = dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(cfg).map_err(|e| HarnessError::Validation(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}
