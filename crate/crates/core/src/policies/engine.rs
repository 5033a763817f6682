use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{collaborative_pull_counts, eliminate, local_pull_counts, phase_eps, PolicyConfig, Stage};
use crate::design::{solve_g_optimal_detailed, ActionSet, Design, OptimalDesign, PseudoInverse};
use crate::environment::{h_threshold, reward, Instance, PopulationModel};
use crate::error::PolicyError;
use crate::rng::{agent_rng, SimRng};

/// Which agents a phase record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// A collaborative phase shared by every agent.
    All,
    Agent(usize),
}

/// Everything known about one phase once it ends.
#[derive(Debug)]
pub struct PhaseRecord<'a> {
    pub ell: u32,
    pub eps: f64,
    pub stage: Stage,
    pub scope: Scope,
    /// Number of agents covered by the record.
    pub agents: usize,
    pub active: &'a ActionSet,
    pub design: &'a Design,
    pub g: f64,
    /// Rounds the plan asked for, per agent.
    pub planned: u64,
    /// Rounds actually played, per agent.
    pub pulls: u64,
    /// Per-agent least-squares estimates, in agent order. Empty for truncated phases.
    pub agent_estimates: &'a [Vec<f64>],
    /// The estimate used for elimination (the average in collaborative phases).
    pub estimate: Option<&'a [f64]>,
    pub survivors: Option<&'a ActionSet>,
}

impl PhaseRecord<'_> {
    pub fn truncated(&self) -> bool {
        self.survivors.is_none()
    }

    /// Agents covered by the record, given the total number of agents.
    pub fn agent_ids(&self) -> std::ops::Range<usize> {
        match self.scope {
            Scope::All => 0..self.agents,
            Scope::Agent(i) => i..i + 1,
        }
    }
}

pub trait PhaseObserver {
    fn on_phase(&mut self, record: &PhaseRecord<'_>);
}

impl PhaseObserver for () {
    fn on_phase(&mut self, _: &PhaseRecord<'_>) {}
}

impl<F: FnMut(&PhaseRecord<'_>)> PhaseObserver for F {
    fn on_phase(&mut self, record: &PhaseRecord<'_>) {
        self(record)
    }
}

/// One row of the phase event log: a phase index and stage, summed over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEvent {
    pub phase: u32,
    pub stage: Stage,
    pub eps: f64,
    pub pulls_total: u64,
    pub min_active: usize,
    pub max_active: usize,
}

/// Observer that folds phase records into per-phase events.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    events: BTreeMap<(u32, Stage), PhaseEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_events(self) -> Vec<PhaseEvent> {
        self.events.into_values().collect()
    }
}

impl PhaseObserver for EventLog {
    fn on_phase(&mut self, r: &PhaseRecord<'_>) {
        let size = r.active.len();
        let pulls = r.pulls * r.agent_ids().len() as u64;
        self.events
            .entry((r.ell, r.stage))
            .and_modify(|e| {
                e.pulls_total += pulls;
                e.min_active = e.min_active.min(size);
                e.max_active = e.max_active.max(size);
            })
            .or_insert(PhaseEvent {
                phase: r.ell,
                stage: r.stage,
                eps: r.eps,
                pulls_total: pulls,
                min_active: size,
                max_active: size,
            });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    /// Cumulative joint pseudo-regret after each synchronized round (length `n`).
    pub cumulative: Vec<f64>,
    /// Number of completed collaborative phases.
    pub collaborative_phases: u32,
    /// Phase index at which the personal stage began, if it did.
    pub switch_phase: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Threshold(f64),
    AlwaysCollaborative,
    AlwaysPersonal,
}

struct Ctx<'a> {
    cfg: &'a PolicyConfig,
    instance: &'a Instance,
    sigma0: f64,
    /// Size of the original action set, used in every log term.
    k: usize,
    /// Number of agents in the union bound of personal plans.
    m_local: usize,
}

/// CP-PE with the switch threshold computed from the population covariance.
pub fn run_cppe(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    model: &PopulationModel,
    instance: &Instance,
    noise_seed: u64,
    observer: &mut dyn PhaseObserver,
) -> Result<PolicyRun, PolicyError> {
    let h = h_threshold(actions, model.cov(), instance.m(), actions.len(), cfg.delta)?;
    run_cppe_with_h(cfg, actions, h, model.sigma0(), instance, noise_seed, observer)
}

/// CP-PE with an explicit switch threshold `h`: collaborative while `h <= eps_l / 2`.
pub fn run_cppe_with_h(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    h: f64,
    sigma0: f64,
    instance: &Instance,
    noise_seed: u64,
    observer: &mut dyn PhaseObserver,
) -> Result<PolicyRun, PolicyError> {
    if !(h >= 0.0) {
        return Err(PolicyError::Config(format!("threshold must be non-negative, got {h}")));
    }
    run_engine(cfg, actions, instance, sigma0, Mode::Threshold(h), noise_seed, observer)
}

/// Fed-PE: every phase is collaborative.
pub fn run_fedpe(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    model: &PopulationModel,
    instance: &Instance,
    noise_seed: u64,
    observer: &mut dyn PhaseObserver,
) -> Result<PolicyRun, PolicyError> {
    run_engine(
        cfg,
        actions,
        instance,
        model.sigma0(),
        Mode::AlwaysCollaborative,
        noise_seed,
        observer,
    )
}

/// Ind-PE: each agent runs phased elimination on its own.
pub fn run_indpe(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    model: &PopulationModel,
    instance: &Instance,
    noise_seed: u64,
    observer: &mut dyn PhaseObserver,
) -> Result<PolicyRun, PolicyError> {
    run_engine(
        cfg,
        actions,
        instance,
        model.sigma0(),
        Mode::AlwaysPersonal,
        noise_seed,
        observer,
    )
}

/// Single-agent phased elimination on `theta`, with `m_union` agents in the
/// log term of the pull counts. Returns the cumulative pseudo-regret.
pub fn run_single_agent(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    theta: &[f64],
    sigma0: f64,
    m_union: usize,
    rng: &mut SimRng,
    observer: &mut dyn PhaseObserver,
) -> Result<Vec<f64>, PolicyError> {
    cfg.validate()?;
    check_noise(sigma0)?;
    if m_union == 0 {
        return Err(PolicyError::Config("m_union must be at least 1".into()));
    }
    let instance = Instance::from_thetas(vec![theta.to_vec()], actions)?;
    let ctx = Ctx {
        cfg,
        instance: &instance,
        sigma0,
        k: actions.len(),
        m_local: m_union,
    };
    let mut inc = vec![0.0; cfg.n];
    let start = vec![0.0; actions.dim()];
    personal_agent(&ctx, 0, actions.clone(), 1, 0, start, rng, &mut inc, observer)?;
    Ok(cumsum(&inc))
}

fn check_noise(sigma0: f64) -> Result<(), PolicyError> {
    if sigma0 >= 0.0 && sigma0.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::Config(format!("sigma0 must be finite and non-negative, got {sigma0}")))
    }
}

fn cumsum(inc: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    inc.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn solve(ctx: &Ctx, set: &ActionSet, ell: u32) -> Result<OptimalDesign, PolicyError> {
    solve_g_optimal_detailed(set, ctx.cfg.design_tol, ctx.cfg.design_max_iter)
        .map_err(|source| PolicyError::Design { phase: ell, source })
}

/// Plan in execution order, as (position in `set`, count).
fn positions(set: &ActionSet, order: Vec<(usize, u64)>) -> Vec<(usize, u64)> {
    order
        .into_iter()
        .map(|(id, c)| (set.position_of(id).expect("design ids come from the set"), c))
        .collect()
}

/// Plays the schedule for one agent until it ends or `inc` (the remaining
/// budget) is full. Returns rounds played and the reward sum per entry.
fn execute(
    set: &ActionSet,
    schedule: &[(usize, u64)],
    instance: &Instance,
    agent: usize,
    sigma0: f64,
    rng: &mut SimRng,
    inc: &mut [f64],
) -> (usize, Vec<f64>) {
    let theta = instance.theta(agent);
    let budget = inc.len();
    let mut t = 0;
    let mut sums = vec![0.0; schedule.len()];
    for (j, &(pos, count)) in schedule.iter().enumerate() {
        let x = set.row(pos);
        let gap = instance.gap(agent, x);
        let c = count.min((budget - t) as u64) as usize;
        for _ in 0..c {
            sums[j] += reward(theta, x, sigma0, rng);
            inc[t] += gap;
            t += 1;
        }
        if t == budget {
            break;
        }
    }
    (t, sums)
}

fn gram(set: &ActionSet, schedule: &[(usize, u64)]) -> DMatrix<f64> {
    let d = set.dim();
    let mut g = DMatrix::zeros(d, d);
    for &(pos, count) in schedule {
        let x = DVector::from_column_slice(set.row(pos));
        g += (count as f64) * &x * x.transpose();
    }
    g
}

/// `(X^T X)^+ X^T y` from the per-entry reward sums.
fn estimate(pinv: &DMatrix<f64>, set: &ActionSet, schedule: &[(usize, u64)], sums: &[f64]) -> Vec<f64> {
    let mut xty = DVector::zeros(set.dim());
    for (&(pos, _), &s) in schedule.iter().zip(sums) {
        xty += DVector::from_column_slice(set.row(pos)) * s;
    }
    (pinv * xty).iter().copied().collect()
}

/// Plays the empirical best action of `set` under `theta_hat` for the rest of the budget.
fn commit(set: &ActionSet, theta_hat: &[f64], instance: &Instance, agent: usize, inc: &mut [f64]) {
    let (pos, _) = set.argmax(theta_hat);
    let gap = instance.gap(agent, set.row(pos));
    inc.iter_mut().for_each(|v| *v += gap);
}

fn run_engine(
    cfg: &PolicyConfig,
    actions: &ActionSet,
    instance: &Instance,
    sigma0: f64,
    mode: Mode,
    noise_seed: u64,
    observer: &mut dyn PhaseObserver,
) -> Result<PolicyRun, PolicyError> {
    cfg.validate()?;
    check_noise(sigma0)?;
    if instance.dim() != actions.dim() {
        return Err(PolicyError::Config(format!(
            "instance has dimension {}, actions have {}",
            instance.dim(),
            actions.dim()
        )));
    }
    let m = instance.m();
    let n = cfg.n;
    let ctx = Ctx {
        cfg,
        instance,
        sigma0,
        k: actions.len(),
        m_local: m,
    };
    let mut rngs: Vec<SimRng> = (0..m).map(|i| agent_rng(noise_seed, i)).collect();
    let mut inc = vec![0.0; n];

    let mut shared = actions.clone();
    let mut ell = 1u32;
    let mut used = 0usize;
    let mut last = vec![0.0; actions.dim()];
    let mut l_c = 0u32;

    // collaborative stage: one plan shared by all agents, all in lockstep
    loop {
        if used >= n {
            return Ok(PolicyRun {
                cumulative: cumsum(&inc),
                collaborative_phases: l_c,
                switch_phase: None,
            });
        }
        let eps = phase_eps(ell);
        let collaborate = match mode {
            Mode::Threshold(h) => h <= eps / 2.0,
            Mode::AlwaysCollaborative => true,
            Mode::AlwaysPersonal => false,
        };
        if !collaborate {
            break;
        }
        if ell > cfg.max_phases {
            for i in 0..m {
                commit(&shared, &last, instance, i, &mut inc[used..]);
            }
            return Ok(PolicyRun {
                cumulative: cumsum(&inc),
                collaborative_phases: l_c,
                switch_phase: None,
            });
        }

        let opt = solve(&ctx, &shared, ell)?;
        let plan = collaborative_pull_counts(&opt.design, opt.g_value, eps, m, ctx.k, ell, cfg.delta, cfg);
        let schedule = positions(&shared, plan.schedule(&opt.design));
        let budget = n - used;
        let truncated = plan.total() > budget as u64;

        let mut all_sums = Vec::with_capacity(m);
        let mut played = 0;
        for (i, rng) in rngs.iter_mut().enumerate() {
            let (t, sums) = execute(&shared, &schedule, instance, i, sigma0, rng, &mut inc[used..]);
            played = t;
            all_sums.push(sums);
        }

        let mut record = PhaseRecord {
            ell,
            eps,
            stage: Stage::Collaborative,
            scope: Scope::All,
            agents: m,
            active: &shared,
            design: &opt.design,
            g: opt.g_value,
            planned: plan.total(),
            pulls: played as u64,
            agent_estimates: &[],
            estimate: None,
            survivors: None,
        };
        if truncated {
            observer.on_phase(&record);
            return Ok(PolicyRun {
                cumulative: cumsum(&inc),
                collaborative_phases: l_c,
                switch_phase: None,
            });
        }

        let pinv = PseudoInverse::of(&gram(&shared, &schedule)).matrix;
        let estimates: Vec<Vec<f64>> = all_sums
            .iter()
            .map(|sums| estimate(&pinv, &shared, &schedule, sums))
            .collect();
        let mut mu_hat = vec![0.0; actions.dim()];
        for e in &estimates {
            mu_hat.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
        mu_hat.iter_mut().for_each(|a| *a /= m as f64);
        let survivors = eliminate(&shared, &mu_hat, eps);

        record.agent_estimates = &estimates;
        record.estimate = Some(&mu_hat);
        record.survivors = Some(&survivors);
        observer.on_phase(&record);

        shared = survivors;
        last = mu_hat;
        used += played;
        ell += 1;
        l_c += 1;
    }

    // personal stage: agents no longer interact, so each runs to the end of its budget in turn
    for (i, rng) in rngs.iter_mut().enumerate() {
        personal_agent(
            &ctx,
            i,
            shared.clone(),
            ell,
            used,
            last.clone(),
            rng,
            &mut inc,
            observer,
        )?;
    }
    Ok(PolicyRun {
        cumulative: cumsum(&inc),
        collaborative_phases: l_c,
        switch_phase: Some(ell),
    })
}

#[allow(clippy::too_many_arguments)]
fn personal_agent(
    ctx: &Ctx,
    agent: usize,
    mut set: ActionSet,
    mut ell: u32,
    mut used: usize,
    mut last: Vec<f64>,
    rng: &mut SimRng,
    inc: &mut [f64],
    observer: &mut dyn PhaseObserver,
) -> Result<(), PolicyError> {
    let cfg = ctx.cfg;
    let n = inc.len();
    while used < n {
        if ell > cfg.max_phases {
            commit(&set, &last, ctx.instance, agent, &mut inc[used..]);
            return Ok(());
        }
        let eps = phase_eps(ell);
        let opt = solve(ctx, &set, ell)?;
        let plan = local_pull_counts(&opt.design, opt.g_value, eps, ctx.m_local, ctx.k, ell, cfg.delta, cfg);
        let schedule = positions(&set, plan.schedule(&opt.design));
        let budget = n - used;
        let truncated = plan.total() > budget as u64;
        let (played, sums) = execute(&set, &schedule, ctx.instance, agent, ctx.sigma0, rng, &mut inc[used..]);

        let mut record = PhaseRecord {
            ell,
            eps,
            stage: Stage::Personal,
            scope: Scope::Agent(agent),
            agents: 1,
            active: &set,
            design: &opt.design,
            g: opt.g_value,
            planned: plan.total(),
            pulls: played as u64,
            agent_estimates: &[],
            estimate: None,
            survivors: None,
        };
        if truncated {
            observer.on_phase(&record);
            return Ok(());
        }

        let pinv = PseudoInverse::of(&gram(&set, &schedule)).matrix;
        let theta_hat = vec![estimate(&pinv, &set, &schedule, &sums)];
        let survivors = eliminate(&set, &theta_hat[0], eps);
        record.agent_estimates = &theta_hat;
        record.estimate = Some(&theta_hat[0]);
        record.survivors = Some(&survivors);
        observer.on_phase(&record);

        set = survivors;
        last = theta_hat.into_iter().next().expect("one estimate");
        used += played;
        ell += 1;
    }
    Ok(())
}
