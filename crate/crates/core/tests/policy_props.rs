use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use cppe::design::{dot, solve_g_optimal_detailed, ActionSet, Design};
use cppe::environment::{sample_instance, Instance, PopulationModel};
use cppe::policies::{
    collaborative_pull_counts, eliminate, epsilon_net, local_pull_counts, run_cppe, run_cppe_with_h, run_fedpe,
    run_indpe, run_single_agent, LogArgVariant, PhaseRecord, PolicyConfig, Scope, Stage,
};
use cppe::rng::{agent_rng, rng_from_seed};

fn small_world(m: usize, k: usize, sigma: f64, seed: u64) -> (ActionSet, PopulationModel, Instance) {
    let actions = ActionSet::unit_circle(k).unwrap();
    let model = PopulationModel::isotropic(vec![1.0, 0.0], sigma, 1.0).unwrap();
    let instance = sample_instance(&model, m, &actions, &mut rng_from_seed(seed)).unwrap();
    (actions, model, instance)
}

#[test]
fn zero_threshold_cppe_is_fedpe() {
    let (actions, model, instance) = small_world(6, 8, 0.2, 1);
    let cfg = PolicyConfig::new(0.05, 3000);
    for seed in [3, 4, 5] {
        let a = run_cppe_with_h(&cfg, &actions, 0.0, 1.0, &instance, seed, &mut ()).unwrap();
        let b = run_fedpe(&cfg, &actions, &model, &instance, seed, &mut ()).unwrap();
        assert_eq!(a.cumulative, b.cumulative);
        assert_eq!(a.collaborative_phases, b.collaborative_phases);
    }
}

#[test]
fn threshold_above_a_quarter_is_indpe() {
    let (actions, model, instance) = small_world(6, 8, 0.2, 2);
    let cfg = PolicyConfig::new(0.05, 3000);
    let h = 0.25_f64.next_up();
    let a = run_cppe_with_h(&cfg, &actions, h, 1.0, &instance, 9, &mut ()).unwrap();
    let b = run_indpe(&cfg, &actions, &model, &instance, 9, &mut ()).unwrap();
    assert_eq!(a.cumulative, b.cumulative);
    assert_eq!(a.collaborative_phases, 0);
    assert_eq!(a.switch_phase, Some(1));
}

#[test]
fn threshold_tie_stays_collaborative() {
    let (actions, _, instance) = small_world(6, 8, 0.2, 2);
    let cfg = PolicyConfig::new(0.05, 20_000);
    let run = run_cppe_with_h(&cfg, &actions, 0.25, 1.0, &instance, 9, &mut ()).unwrap();
    assert_eq!(run.collaborative_phases, 1);
    assert_eq!(run.switch_phase, Some(2));
}

#[test]
fn run_cppe_uses_the_population_threshold() {
    // sigma = 0.3, k = 10, delta = 0.01 gives h > 1/4, so no collaborative phase
    let (actions, model, instance) = small_world(10, 10, 0.3, 4);
    let cfg = PolicyConfig::new(0.01, 2000);
    let run = run_cppe(&cfg, &actions, &model, &instance, 1, &mut ()).unwrap();
    assert_eq!(run.collaborative_phases, 0);
    // sigma = 0 gives h = 0, so every phase collaborates
    let (actions, model, instance) = small_world(10, 10, 0.0, 4);
    let run = run_cppe(&cfg, &actions, &model, &instance, 1, &mut ()).unwrap();
    assert!(run.collaborative_phases >= 1);
    assert_eq!(run.switch_phase, None);
}

#[test]
fn single_agent_fedpe_is_indpe_under_maintext_counts() {
    let (actions, model, instance) = small_world(1, 7, 0.3, 5);
    let cfg = PolicyConfig::new(0.1, 5000).with_variant(LogArgVariant::Maintext);
    for seed in 0..4 {
        let a = run_fedpe(&cfg, &actions, &model, &instance, seed, &mut ()).unwrap();
        let b = run_indpe(&cfg, &actions, &model, &instance, seed, &mut ()).unwrap();
        assert_eq!(a.cumulative, b.cumulative);
    }
}

#[test]
fn single_agent_proof_counts_differ_by_the_constant_ratio() {
    let design = Design::new(BTreeMap::from([(0, 0.5), (1, 0.5)])).unwrap();
    let cfg = PolicyConfig::new(0.1, 1000);
    let collab = collaborative_pull_counts(&design, 2.0, 0.125, 1, 5, 3, 0.1, &cfg).total() as f64;
    let local = local_pull_counts(&design, 2.0, 0.125, 1, 5, 3, 0.1, &cfg).total() as f64;
    let ratio = collab / local;
    assert!((ratio - 4.0).abs() < 0.02, "ratio {ratio}");
}

#[test]
fn indpe_is_the_sum_of_independent_single_agent_runs() {
    let (actions, model, instance) = small_world(4, 6, 0.4, 6);
    let cfg = PolicyConfig::new(0.1, 4000);
    let seed = 77;
    let joint = run_indpe(&cfg, &actions, &model, &instance, seed, &mut ()).unwrap();
    let mut total = vec![0.0; cfg.n];
    for i in 0..instance.m() {
        let mut rng = agent_rng(seed, i);
        let trace = run_single_agent(&cfg, &actions, instance.theta(i), 1.0, instance.m(), &mut rng, &mut ()).unwrap();
        total.iter_mut().zip(&trace).for_each(|(a, b)| *a += b);
    }
    for (a, b) in joint.cumulative.iter().zip(&total) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn noiseless_collaboration_keeps_the_optimal_action() {
    // all agents share theta, no noise: the optimal action is never eliminated
    let actions = ActionSet::unit_circle(12).unwrap();
    let theta = vec![0.9, 0.3];
    let instance = Instance::from_thetas(vec![theta; 3], &actions).unwrap();
    let cfg = PolicyConfig::new(0.1, 50_000);
    let best = instance.optimal_id(0);
    let mut seen = 0;
    let mut obs = |r: &PhaseRecord| {
        if let Some(s) = r.survivors {
            assert!(s.contains(best));
            seen += 1;
        }
    };
    // h = 0 keeps every phase collaborative, as in Fed-PE
    let run = run_cppe_with_h(&cfg, &actions, 0.0, 0.0, &instance, 0, &mut obs).unwrap();
    assert!(seen >= 2);
    // only the best action survives eventually, so the regret flattens
    let n = run.cumulative.len();
    assert_eq!(run.cumulative[n - 1], run.cumulative[n - 1000]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phase_records_are_consistent(
        m in 1usize..=5,
        k in 2usize..=9,
        sigma in 0.0f64..0.4,
        n in 200usize..6000,
        seed in any::<u64>(),
    ) {
        let (actions, model, instance) = small_world(m, k, sigma, seed);
        let cfg = PolicyConfig::new(0.1, n);
        let mut records: Vec<(u32, Stage, Scope, u64, usize, Option<Vec<usize>>, Vec<usize>)> = Vec::new();
        let mut obs = |r: &PhaseRecord| {
            records.push((
                r.ell,
                r.stage,
                r.scope,
                r.pulls,
                r.agents,
                r.survivors.map(|s| s.ids().to_vec()),
                r.active.ids().to_vec(),
            ));
        };
        let run = run_cppe(&cfg, &actions, &model, &instance, seed ^ 5, &mut obs).unwrap();
        prop_assert_eq!(run.cumulative.len(), n);
        prop_assert!(run.cumulative.windows(2).all(|w| w[1] >= w[0]));

        let mut per_agent = vec![0u64; m];
        let mut personal_seen = false;
        let mut collab_active: Option<Vec<usize>> = None;
        for (ell, stage, scope, pulls, agents, survivors, active) in &records {
            match stage {
                Stage::Collaborative => {
                    prop_assert!(!personal_seen, "collaborative phase after personal");
                    prop_assert_eq!(*scope, Scope::All);
                    prop_assert_eq!(*agents, m);
                    per_agent.iter_mut().for_each(|c| *c += pulls);
                    if let Some(prev) = &collab_active {
                        prop_assert_eq!(prev, active);
                    }
                    collab_active = survivors.clone();
                    prop_assert!(*ell <= run.collaborative_phases + 1);
                }
                Stage::Personal => {
                    personal_seen = true;
                    if let Scope::Agent(i) = scope {
                        per_agent[*i] += pulls;
                    } else {
                        prop_assert!(false, "personal phase with shared scope");
                    }
                }
                Stage::Exhausted => {}
            }
            if let Some(s) = survivors {
                prop_assert!(!s.is_empty());
                prop_assert!(s.iter().all(|id| active.contains(id)));
            }
        }
        for c in per_agent {
            prop_assert!(c <= n as u64);
        }
    }

    #[test]
    fn elimination_keeps_the_argmax_and_only_near_optimal_actions(
        k in 1usize..40,
        d in 1usize..5,
        eps in 0.001f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let set = ActionSet::from_rows(rows).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kept = eliminate(&set, &theta, eps);
        let (best, best_val) = set.argmax(&theta);
        prop_assert!(kept.contains(set.id(best)));
        for (id, x) in set.iter() {
            let close = best_val - dot(x, &theta) <= 2.0 * eps;
            prop_assert_eq!(kept.contains(id), close);
        }
    }

    #[test]
    fn pull_counts_scale_as_expected(
        d in 2usize..5,
        extra in 1usize..20,
        m in 1usize..64,
        ell in 1u32..8,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..d + extra).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let set = ActionSet::from_rows(rows).unwrap();
        let opt = solve_g_optimal_detailed(&set, 0.01, 100_000).unwrap();
        let k = set.len();
        let cfg = PolicyConfig::new(0.05, 1000);
        let eps = 2f64.powi(-(ell as i32));
        let collab = |m: usize, eps: f64| collaborative_pull_counts(&opt.design, opt.g_value, eps, m, k, ell, 0.05, &cfg);
        let local = |m: usize, eps: f64| local_pull_counts(&opt.design, opt.g_value, eps, m, k, ell, 0.05, &cfg);

        // more agents never raise the collaborative per-agent plan
        for (id, _) in opt.design.iter() {
            prop_assert!(collab(2 * m, eps).count(id) <= collab(m, eps).count(id));
        }
        // halving eps multiplies each count by about four
        for (id, _) in opt.design.iter() {
            let a = collab(m, eps).count(id) as f64;
            let b = collab(m, eps / 2.0).count(id) as f64;
            prop_assert!(b <= 4.0 * a + 1.0 && b >= 4.0 * (a - 1.0));
            let a = local(m, eps).count(id) as f64;
            let b = local(m, eps / 2.0).count(id) as f64;
            prop_assert!(b <= 4.0 * a + 1.0 && b >= 4.0 * (a - 1.0));
        }
        if m >= 8 {
            prop_assert!(local(m, eps).total() >= collab(m, eps).total());
        }
        // every design point gets at least one pull
        for (id, _) in opt.design.iter() {
            prop_assert!(collab(m, eps).count(id) >= 1);
        }
    }
}

#[test]
fn single_action_counts_are_positive() {
    let design = Design::point_mass(0);
    let cfg = PolicyConfig::new(0.1, 100);
    assert!(collaborative_pull_counts(&design, 1.0, 0.5, 10, 1, 1, 0.1, &cfg).total() >= 1);
    assert!(local_pull_counts(&design, 1.0, 0.5, 10, 1, 1, 0.1, &cfg).total() >= 1);
}

fn covering_radius(net: &ActionSet, d: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        // uniform in the ball: gaussian direction, radius U^(1/d)
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dot(&g, &g).sqrt();
        let r = rng.random::<f64>().powf(1.0 / d as f64);
        let y: Vec<f64> = g.iter().map(|v| v / norm * r).collect();
        let nearest = net
            .iter()
            .map(|(_, x)| x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        worst = worst.max(nearest);
    }
    worst
}

#[test]
fn epsilon_nets_cover_the_ball_and_respect_the_volume_bound() {
    for (d, eps) in [(1, 0.1), (2, 0.5), (2, 0.2), (2, 0.05), (3, 0.4), (3, 0.25), (4, 0.5)] {
        let net = epsilon_net(d, eps).unwrap();
        assert_eq!(net.dim(), d);
        assert!(net.iter().all(|(_, x)| dot(x, x).sqrt() <= 1.0 + 1e-12), "d={d} eps={eps}");
        let bound = (1.0 + 2.0 / eps).powi(d as i32);
        assert!((net.len() as f64) <= bound, "d={d} eps={eps}: {} > {bound}", net.len());
        let r = covering_radius(&net, d, 10_000, d as u64 * 1000 + (1.0 / eps) as u64);
        assert!(r <= eps, "d={d} eps={eps}: covering radius {r}");
    }
    assert!(epsilon_net(2, 0.5).unwrap().len() <= 25);
}
