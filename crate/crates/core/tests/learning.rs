mod common;

use common::{scene, straight_road, uniform};
use jointplan::costing::{idx, CostVector, WeightScheme, NUM_FEATURES};
use jointplan::harness::synthetic::{corpus, expert_demo, expert_weights};
use jointplan::learning::{
    max_margin_example, prepare_all, train_prepared, DemoExample, LearnConfig, PreparedDemo,
    ScoredCandidate,
};
use jointplan::planner::PlannerConfig;
use jointplan::sampler::SampleGrid;
use jointplan::world::{allowed_behaviors, BehaviorKind, PathConfig};
use proptest::prelude::*;

fn hand_demo() -> DemoExample {
    let sc = scene(&straight_road(1, 15.0), 0, 50.0, 10.0, vec![]);
    DemoExample {
        id: "hand".into(),
        human_trajectory: uniform(&sc),
        scenario: sc,
        human_behavior: BehaviorKind::KeepLane,
        human_controls: None,
    }
}

fn path_cost(v: f64) -> CostVector {
    let mut row = [0.0; NUM_FEATURES];
    row[idx::PATH] = v;
    CostVector { rows: vec![row] }
}

/// Human path cost 3; candidates `(path cost, task loss)`.
fn hand_prepared<'a>(demo: &'a DemoExample, cands: &[(f64, f64)]) -> PreparedDemo<'a> {
    let behavior = allowed_behaviors(&demo.scenario, &PathConfig::default())
        .unwrap()
        .remove(0);
    PreparedDemo {
        demo,
        human_behavior: behavior,
        human_cost: path_cost(3.0),
        candidates: cands
            .iter()
            .map(|&(c, delta)| ScoredCandidate {
                behavior: 0,
                cost: path_cost(c),
                delta,
            })
            .collect(),
        side: jointplan::costing::SideAssignment { sides: vec![] },
        human_controls: vec![[0.0, 0.0]; demo.scenario.steps()],
    }
}

fn ones() -> WeightScheme {
    WeightScheme::shared(&[1.0; NUM_FEATURES])
}

#[test]
fn two_candidates_by_hand() {
    let demo = hand_demo();
    let p = hand_prepared(&demo, &[(1.0, 5.0), (4.0, 0.0)]);
    // Scores: candidate 0 is 5 - 1 = 4, human is -3, candidate 1 is -4.
    let mut g = vec![0.0; NUM_FEATURES];
    let l = max_margin_example(&p, &ones(), 1, &mut g);
    assert!((l - 7.0).abs() < 1e-12);
    assert!((g[idx::PATH] - 2.0).abs() < 1e-12);
    assert!(g
        .iter()
        .enumerate()
        .all(|(k, v)| k == idx::PATH || *v == 0.0));

    let mut g = vec![0.0; NUM_FEATURES];
    let l = max_margin_example(&p, &ones(), 2, &mut g);
    assert!((l - 7.0).abs() < 1e-12);
    assert!((g[idx::PATH] - 1.0).abs() < 1e-12);
}

#[test]
fn top_k_beyond_the_set_is_clamped() {
    let demo = hand_demo();
    let p = hand_prepared(&demo, &[(1.0, 5.0), (4.0, 0.0)]);
    let mut g3 = vec![0.0; NUM_FEATURES];
    let mut g50 = vec![0.0; NUM_FEATURES];
    max_margin_example(&p, &ones(), 3, &mut g3);
    max_margin_example(&p, &ones(), 50, &mut g50);
    assert_eq!(g3, g50);
    assert!((g3[idx::PATH] - 1.0 / 3.0).abs() < 1e-12);
    let mut g0 = vec![0.0; NUM_FEATURES];
    let mut g1 = vec![0.0; NUM_FEATURES];
    max_margin_example(&p, &ones(), 0, &mut g0);
    max_margin_example(&p, &ones(), 1, &mut g1);
    assert_eq!(g0, g1);
}

#[test]
fn human_on_top_gives_zero_loss_and_gradient() {
    let demo = hand_demo();
    let p = hand_prepared(&demo, &[(10.0, 1.0), (20.0, 2.0)]);
    let mut g = vec![0.0; NUM_FEATURES];
    let l = max_margin_example(&p, &ones(), 1, &mut g);
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|v| *v == 0.0));
}

fn small_planner() -> PlannerConfig {
    PlannerConfig {
        grid: SampleGrid {
            t1: vec![2.5],
            speed_count: 3,
            d1: vec![-1.0, 0.0, 1.0],
            s1_offsets: vec![25.0],
            ..SampleGrid::default()
        },
        ..PlannerConfig::default()
    }
}

fn small_demos(n: usize) -> Vec<DemoExample> {
    let planner = small_planner();
    corpus(40, n)
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            expert_demo(s, &format!("d{i}"), &expert_weights(), &planner)
                .ok()
                .map(|d| d.0)
        })
        .collect()
}

#[test]
fn regularizer_alone_decays_weights_in_closed_form() {
    let demos = small_demos(3);
    let planner = small_planner();
    let cfg = LearnConfig {
        lambda_m: 0.0,
        lambda_i: 0.0,
        lambda_w: 0.5,
        alpha: 0.1,
        pretrain_steps: 0,
        total_steps: 20,
        validate_every: 0,
        ..LearnConfig::default()
    };
    let init = WeightScheme::default_shared();
    let prepared = prepare_all(&demos, &planner, &cfg.task_loss, init.variant).unwrap();
    let r = train_prepared(&prepared[1..], &prepared[..1], &init, &cfg, &planner).unwrap();
    let mut want = init.weights.clone();
    for _ in 0..cfg.total_steps {
        for w in &mut want {
            *w *= (-cfg.alpha * cfg.lambda_w * *w).exp();
        }
    }
    for (a, b) in r.final_weights.weights.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
    assert!(r
        .final_weights
        .weights
        .iter()
        .zip(&init.weights)
        .all(|(a, b)| a < b));
}

#[test]
fn training_log_is_deterministic() {
    let demos = small_demos(4);
    let planner = small_planner();
    let cfg = LearnConfig {
        pretrain_steps: 6,
        total_steps: 8,
        batch_margin: 2,
        batch_imitation: 1,
        validate_every: 3,
        seed: 9,
        ..LearnConfig::default()
    };
    let init = WeightScheme::default_shared();
    let prepared = prepare_all(&demos, &planner, &cfg.task_loss, init.variant).unwrap();
    let run = || train_prepared(&prepared[1..], &prepared[..1], &init, &cfg, &planner).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.log.len(), b.log.len());
    for (x, y) in a.log.iter().zip(&b.log) {
        assert_eq!(x.loss_margin.to_bits(), y.loss_margin.to_bits());
        assert_eq!(x.loss_imitation.to_bits(), y.loss_imitation.to_bits());
        assert_eq!(
            x.validation.map(f64::to_bits),
            y.validation.map(f64::to_bits)
        );
    }
    assert_eq!(a.final_weights, b.final_weights);
    assert_eq!(a.best.weights, b.best.weights);
    assert!(a.log.iter().skip(6).any(|r| r.loss_imitation > 0.0));
}

proptest! {
    #[test]
    fn max_margin_loss_is_never_negative(
        cands in prop::collection::vec((0.0f64..50.0, 0.0f64..20.0), 0..12),
        w in prop::collection::vec(1e-3f64..1e3, NUM_FEATURES),
        k in 0usize..20,
    ) {
        let demo = hand_demo();
        let p = hand_prepared(&demo, &cands);
        let mut arr = [0.0; NUM_FEATURES];
        arr.copy_from_slice(&w);
        let mut g = vec![0.0; NUM_FEATURES];
        let l = max_margin_example(&p, &WeightScheme::shared(&arr), k, &mut g);
        prop_assert!(l >= 0.0);
        prop_assert!(g.iter().all(|v| v.is_finite()));
    }
}
