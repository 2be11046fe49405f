//! Cross-module pipeline properties: detection oracles, curriculum
//! effects, and critical-state coverage.

use msviper::cart::PairSet;
use msviper::distill::{msviper, sample_trajectories, BetaSchedule, DistillConfig};
use msviper::envs::{
    run_episode, EnvParams, GridParams, OccupancyConfig, RewardConfig, ScenarioSpec, UnicycleParams,
};
use msviper::expert::{scripted_expert, QLearningParams, QTrainer, ScriptedKind, ScriptedParams};
use msviper::metrics::empirical_critical_coverage;
use msviper::seed;
use msviper::state::StateVector;
use msviper::treemod::{detect_freezing, FreezingDetectConfig};
use msviper::Expert;

/// Flagged freezing leaves are exactly the stop-action leaves reached by
/// the states the scripted expert froze on during dataset generation.
#[test]
fn freezing_detection_matches_rollout_routing() {
    let spec = ScenarioSpec {
        stage: 0,
        horizon: 80,
        rng_seed: 31,
        occupancy: OccupancyConfig::desk(vec![0.2, 0.9, 1.8, 3.0]),
        reward: RewardConfig::default(),
        params: EnvParams::Unicycle(UnicycleParams {
            n_obstacles: 7,
            ..UnicycleParams::default()
        }),
    };
    let expert = scripted_expert(
        ScriptedKind::FreezingFlawed,
        &spec,
        ScriptedParams {
            repulsion_gain: 0.15,
            ..ScriptedParams::default()
        },
    )
    .unwrap();
    // Pure-expert sampling with the sample cap above |D| trains on the
    // entire accumulated dataset, so every stop leaf holds at least one
    // recorded freeze state.
    let cfg = DistillConfig {
        trajectories_per_iteration: 10,
        iterations_per_scenario: 2,
        trajectory_length: 80,
        sample_size: 1_000_000,
        cv_trials: 2,
        beta_schedule: BetaSchedule::PureExpert,
        rng_seed: 1234,
        ..DistillConfig::default()
    };
    let run = msviper(&expert, std::slice::from_ref(&spec), &cfg, 2).unwrap();
    let tree = run.selected_tree();

    // Replay the exact sampling streams to reconstruct the dataset.
    let mut dataset = PairSet::new(spec.layout().total_dim());
    for iteration in 0..cfg.iterations_per_scenario {
        let pairs = sample_trajectories(
            None,
            &expert,
            &spec,
            cfg.trajectories_per_iteration,
            cfg.trajectory_length,
            1.0,
            cfg.rng_seed,
            &[0, iteration as u64],
        )
        .unwrap();
        dataset.merge(&pairs).unwrap();
    }
    assert_eq!(dataset.len(), run.final_dataset_size);

    let mut routed: Vec<u32> = Vec::new();
    let mut freeze_states = 0usize;
    for (state, action, _) in dataset.iter() {
        if action == 3 {
            freeze_states += 1;
            let leaf = tree.leaf_for(state).unwrap();
            if tree.node(leaf).unwrap().action() == Some(3) && !routed.contains(&leaf) {
                routed.push(leaf);
            }
        }
    }
    assert!(freeze_states > 0, "the flawed expert must freeze in training data");
    routed.sort_unstable();

    let detect_cfg = FreezingDetectConfig {
        stop_actions: vec![3],
        movement_cell_tolerance: spec.layout().cells_per_snapshot(),
    };
    let detected = detect_freezing(tree, &detect_cfg).unwrap();
    assert_eq!(detected, routed, "flagged leaves must equal the leaves reached by logged freeze states");
}

/// With a small training budget, warming up on an easy stage before the
/// hard stage beats spending the whole budget on the hard stage.
#[test]
fn curriculum_outperforms_single_stage_at_small_budgets() {
    let occ = OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5]);
    let sparse = RewardConfig {
        progress_scale: 0.0,
        collision_penalty: 2.0,
        ..RewardConfig::default()
    };
    let stage = |idx: u32, obstacles: usize, seed: u64| ScenarioSpec {
        stage: idx,
        horizon: 60,
        rng_seed: seed,
        occupancy: occ.clone(),
        reward: sparse,
        params: EnvParams::Grid(GridParams {
            width: 9,
            height: 9,
            static_obstacles: obstacles,
            min_start_goal_distance: 4.0,
            ..GridParams::default()
        }),
    };
    let easy = stage(1, 0, 101);
    let hard = stage(2, 12, 202);
    let qp = QLearningParams {
        episodes_per_stage: 250,
        ..QLearningParams::default()
    };
    let mut curriculum_total = 0.0;
    let mut single_total = 0.0;
    for s in 0..10u64 {
        let train_seed = 7000 + s;
        let mut trainer = QTrainer::new(qp.clone(), 15);
        trainer.run_stage(&easy, 0, train_seed).unwrap();
        trainer.run_stage(&hard, 1, train_seed).unwrap();
        let curriculum_expert = trainer.into_expert(easy.layout());

        let mut single = QTrainer::new(
            QLearningParams {
                episodes_per_stage: 2 * qp.episodes_per_stage,
                ..qp.clone()
            },
            15,
        );
        single.run_stage(&hard, 0, train_seed).unwrap();
        let single_expert = single.into_expert(hard.layout());

        let final_stage = std::slice::from_ref(&hard);
        curriculum_total += msviper::distill::evaluate(&curriculum_expert, final_stage, 60, 99, 2)
            .unwrap()
            .mean_reward_per_timestep;
        single_total += msviper::distill::evaluate(&single_expert, final_stage, 60, 99, 2)
            .unwrap()
            .mean_reward_per_timestep;
    }
    assert!(
        curriculum_total >= single_total,
        "mean final-stage reward: curriculum {:.4} vs single-stage {:.4}",
        curriculum_total / 10.0,
        single_total / 10.0
    );
}

/// Multi-scenario sampling covers imminent-contact states of the task
/// family at least as well as final-stage-only sampling with the same
/// budget, when the warm-up stage concentrates near-obstacle states.
#[test]
fn msviper_covers_critical_states_at_least_as_well_as_ssviper() {
    let occ = OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5]);
    let stage = |idx: u32, size: i64, seed: u64| ScenarioSpec {
        stage: idx,
        horizon: 40,
        rng_seed: seed,
        occupancy: occ.clone(),
        reward: RewardConfig::default(),
        params: EnvParams::Grid(GridParams {
            width: size,
            height: size,
            static_obstacles: 2,
            declared_max_goal_distance: Some(72f64.sqrt()),
            ..GridParams::default()
        }),
    };
    // A cramped warm-up map concentrates near-obstacle encounters.
    let cramped = stage(1, 4, 303);
    let open = stage(2, 6, 404);
    let qp = QLearningParams {
        episodes_per_stage: 6000,
        epsilon_end: 0.03,
        ..QLearningParams::default()
    };
    let expert = msviper::expert::train_q_expert(&[cramped.clone(), open.clone()], &qp, 11).unwrap();

    // Critical set: deduplicated near-contact states from greedy rollouts
    // across both stage families.
    let layout = open.layout();
    let mut critical: Vec<StateVector> = Vec::new();
    for (family, family_idx) in [(&cramped, 0u64), (&open, 1u64)] {
        let mut found = 0usize;
        for trial in 0..60u64 {
            let ep = family.with_seed(seed::derive(9090, &[family_idx, trial]));
            let log = run_episode(&ep, &expert, 40).unwrap();
            for step in &log.steps {
                let near_contact = (0..layout.occupancy_columns)
                    .any(|c| step.state.get(layout.occ_index(0, 0, c)) > 0.5);
                if near_contact && !critical.iter().any(|s| s.bits_eq(&step.state)) {
                    critical.push(step.state.clone());
                    found += 1;
                }
            }
            if found >= 30 {
                break;
            }
        }
    }
    assert!(critical.len() >= 40);

    let sample = |scenario: &ScenarioSpec, run_seed: u64, path: &[u64]| {
        sample_trajectories(None, expert_ref(&expert), scenario, 120, 40, 1.0, run_seed, path).unwrap()
    };
    fn expert_ref(e: &msviper::expert::QExpert) -> &dyn Expert {
        e
    }
    let mut multi_total = 0.0;
    let mut single_total = 0.0;
    for s in 0..10u64 {
        let run_seed = seed::derive(2000, &[s]);
        let mut multi = PairSet::new(layout.total_dim());
        multi.merge(&sample(&cramped, run_seed, &[0, 0])).unwrap();
        multi.merge(&sample(&open, run_seed, &[1, 0])).unwrap();
        let mut single = PairSet::new(layout.total_dim());
        single.merge(&sample(&open, run_seed, &[0, 0])).unwrap();
        single.merge(&sample(&open, run_seed, &[1, 0])).unwrap();
        multi_total += empirical_critical_coverage(&multi, &critical, 0.9);
        single_total += empirical_critical_coverage(&single, &critical, 0.9);
    }
    assert!(
        multi_total >= single_total,
        "mean critical coverage: multi {:.3} vs single {:.3}",
        multi_total / 10.0,
        single_total / 10.0
    );
}
