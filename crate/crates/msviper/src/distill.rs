//! Imitation-learning distillation of an expert policy into a decision
//! tree, across an ordered list of scenarios.
//!
//! Each iteration samples trajectories (executing the expert's action
//! with probability beta, the latest candidate tree's otherwise, while
//! always labeling with the expert), accumulates the pairs into one
//! monotonically growing dataset, draws a training sample from it, and
//! fits a tree. After all scenarios, every candidate is evaluated for a
//! fixed number of trials and the best mean per-timestep reward wins
//! (ties go to the earliest candidate).
//!
//! The single-scenario baseline is the same loop on a one-element
//! scenario list, so the two are identical by construction when the
//! curriculum has one stage.

use serde::{Deserialize, Serialize};

use crate::cart::{self, CartConfig, PairSet};
use crate::envs::{Env, Environment, ScenarioSpec};
use crate::seed::{self, stream};
use crate::state::ActionCatalog;
use crate::tree::{DecisionTreePolicy, TreeStats};
use crate::{Error, Expert, Policy, Result};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Uniform,
    LossWeighted,
}

/// Probability of executing the expert (rather than the current tree)
/// while generating trajectories. The recorded label is always the
/// expert's action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// 1 until the first tree exists, 0 afterwards.
    Dagger,
    /// Always 1: trajectories come purely from the expert.
    PureExpert,
    /// Explicit per-iteration values; the last entry repeats. Forced to 1
    /// while no tree exists yet.
    PerIteration(Vec<f64>),
}

impl BetaSchedule {
    pub fn beta_for(&self, global_iteration: usize, tree_exists: bool) -> f64 {
        if !tree_exists {
            return 1.0;
        }
        match self {
            BetaSchedule::Dagger => 0.0,
            BetaSchedule::PureExpert => 1.0,
            BetaSchedule::PerIteration(values) => values
                .get(global_iteration)
                .or(values.last())
                .copied()
                .unwrap_or(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// Trajectories sampled per iteration (M).
    pub trajectories_per_iteration: usize,
    /// Iterations per scenario (N).
    pub iterations_per_scenario: usize,
    /// Maximum trajectory length (l_t).
    pub trajectory_length: usize,
    /// Pairs drawn from the accumulated dataset per training round (n_s).
    pub sample_size: usize,
    /// Evaluation episodes per scenario when scoring candidates (n_cv).
    pub cv_trials: usize,
    pub sampling_mode: SamplingMode,
    pub beta_schedule: BetaSchedule,
    pub cart: CartConfig,
    pub rng_seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            trajectories_per_iteration: 10,
            iterations_per_scenario: 3,
            trajectory_length: 60,
            sample_size: 2000,
            cv_trials: 5,
            sampling_mode: SamplingMode::Uniform,
            beta_schedule: BetaSchedule::Dagger,
            cart: CartConfig::default(),
            rng_seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trajectories_per_iteration", self.trajectories_per_iteration),
            ("iterations_per_scenario", self.iterations_per_scenario),
            ("trajectory_length", self.trajectory_length),
            ("sample_size", self.sample_size),
            ("cv_trials", self.cv_trials),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        self.cart.validate()
    }
}

/// Provenance of one training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub scenario_index: usize,
    pub iteration: usize,
    pub beta: f64,
    pub dataset_size: usize,
    pub sample_size: usize,
    pub stats: TreeStats,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub tree: DecisionTreePolicy,
    pub scenario_index: usize,
    pub iteration: usize,
    pub mean_reward_per_timestep: f64,
}

/// Output of one distillation run.
#[derive(Debug, Clone)]
pub struct DistillRun {
    pub config: DistillConfig,
    pub iterations: Vec<IterationRecord>,
    pub candidates: Vec<Candidate>,
    pub selected: usize,
    pub final_dataset_size: usize,
}

impl DistillRun {
    pub fn selected_tree(&self) -> &DecisionTreePolicy {
        &self.candidates[self.selected].tree
    }
}

/// Rolls `trajectories` episodes, executing the expert's action with
/// probability `beta` and the mixing tree's otherwise; records
/// (state, expert action) for every visited state.
pub fn sample_trajectories(
    mix_policy: Option<&DecisionTreePolicy>,
    expert: &dyn Expert,
    scenario: &ScenarioSpec,
    trajectories: usize,
    max_length: usize,
    beta: f64,
    seed: u64,
    stream_path: &[u64],
) -> Result<PairSet> {
    let layout = scenario.layout();
    let mut out = PairSet::new(layout.total_dim());
    for rollout in 0..trajectories {
        let mut path = vec![stream::ROLLOUT];
        path.extend_from_slice(stream_path);
        path.push(rollout as u64);
        let ep_spec = scenario.with_seed(seed::derive(seed, &path));
        path.push(u64::MAX); // distinct stream for the mixing coin
        let mut coin = seed::rng(seed, &path);
        let mut env = Env::new(&ep_spec)?;
        let mut state = env.reset()?;
        for _ in 0..max_length {
            if env.is_done() {
                break;
            }
            let label = expert.act(&state);
            let executed = match mix_policy {
                None => label,
                Some(tree) => {
                    if beta >= 1.0 {
                        label
                    } else if beta <= 0.0 || coin.gen::<f64>() >= beta {
                        tree.act(&state)
                    } else {
                        label
                    }
                }
            };
            out.push(state.clone(), label)?;
            state = env.step(executed)?.next_state;
        }
    }
    Ok(out)
}

/// Draws a training sample from the accumulated dataset.
///
/// Uniform mode draws `min(n_s, |D|)` pairs without replacement. The
/// loss-weighted mode draws without replacement with probability
/// proportional to the expert's value gap `max_a Q - min_a Q` at each
/// state, records that gap as the pair weight, and falls back to uniform
/// when Q-values are unavailable or all gaps vanish.
pub fn sample_dataset(
    dataset: &PairSet,
    sample_size: usize,
    mode: SamplingMode,
    expert: &dyn Expert,
    rng: &mut ChaCha8Rng,
) -> Result<PairSet> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let uniform = |rng: &mut ChaCha8Rng| -> PairSet {
        let amount = sample_size.min(dataset.len());
        let indices = rand::seq::index::sample(rng, dataset.len(), amount).into_vec();
        dataset.subset(&indices)
    };
    match mode {
        SamplingMode::Uniform => Ok(uniform(rng)),
        SamplingMode::LossWeighted => {
            let mut gaps = Vec::with_capacity(dataset.len());
            for (state, _, _) in dataset.iter() {
                match expert.q_values(state) {
                    None => return Ok(uniform(rng)),
                    Some(q) => {
                        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
                        let gap = max - min;
                        if !gap.is_finite() || gap < 0.0 {
                            return Err(Error::Training("non-finite Q-value gap".into()));
                        }
                        gaps.push(gap);
                    }
                }
            }
            if gaps.iter().all(|&g| g == 0.0) {
                return Ok(uniform(rng));
            }
            // Exponential-race sampling without replacement: smaller
            // exp(1)/weight keys win; zero-weight pairs are never drawn.
            let mut keyed: Vec<(f64, usize)> = gaps
                .iter()
                .enumerate()
                .filter(|(_, &g)| g > 0.0)
                .map(|(i, &g)| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    (-u.ln() / g, i)
                })
                .collect();
            keyed.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            keyed.truncate(sample_size);
            let mut out = PairSet::new(dataset.dim());
            for (_, i) in keyed {
                out.push_weighted(dataset.state(i).clone(), dataset.action(i), Some(gaps[i]))?;
            }
            Ok(out)
        }
    }
}

/// Aggregate evaluation of a policy over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_reward_per_timestep: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub episodes: usize,
    pub total_steps: usize,
}

/// Runs `trials` greedy episodes per scenario on seed-derived variants.
/// `jobs` caps concurrent rollouts; results are independent of it.
pub fn evaluate(
    policy: &dyn Policy,
    scenarios: &[ScenarioSpec],
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    if scenarios.is_empty() {
        return Err(Error::Config("evaluate needs at least one scenario".into()));
    }
    let units: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..trials).map(move |t| (s, t)))
        .collect();
    let logs = parallel_map(units.len(), jobs, |u| {
        let (s_idx, trial) = units[u];
        let spec = &scenarios[s_idx];
        let ep_spec = spec.with_seed(seed::derive(seed, &[stream::EVAL, s_idx as u64, trial as u64]));
        crate::envs::run_episode(&ep_spec, policy, spec.horizon)
    });
    let mut reward = 0.0;
    let mut steps = 0usize;
    let mut successes = 0usize;
    let mut collisions = 0usize;
    let mut episodes = 0usize;
    for log in logs {
        let log = log?;
        reward += log.total_reward();
        steps += log.steps.len();
        successes += usize::from(log.goal_reached());
        collisions += usize::from(log.collided());
        episodes += 1;
    }
    Ok(EvalReport {
        mean_reward_per_timestep: if steps > 0 { reward / steps as f64 } else { 0.0 },
        success_rate: successes as f64 / episodes as f64,
        collision_rate: collisions as f64 / episodes as f64,
        episodes,
        total_steps: steps,
    })
}

/// Order-preserving parallel map over indices.
pub(crate) fn parallel_map<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(n.max(1));
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk_size = n.div_ceil(jobs);
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (c_idx, chunk) in results.chunks_mut(chunk_size).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(c_idx * chunk_size + k));
                }
            });
        }
    });
    results.into_iter().map(|o| o.expect("all slots filled")).collect()
}

fn distill_inner(
    expert: &dyn Expert,
    scenarios: &[ScenarioSpec],
    cfg: &DistillConfig,
    jobs: usize,
) -> Result<DistillRun> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::Config("scenario list must be nonempty".into()));
    }
    let layout = scenarios[0].layout();
    for s in scenarios {
        s.validate()?;
        if s.layout() != layout {
            return Err(Error::Config("all scenarios must share one state layout".into()));
        }
    }
    let actions = ActionCatalog::default_table();
    let mut dataset = PairSet::new(layout.total_dim());
    let mut iterations = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut global_iteration = 0usize;
    for (s_idx, scenario) in scenarios.iter().enumerate() {
        for iteration in 0..cfg.iterations_per_scenario {
            let mix = candidates.last().map(|c| &c.tree);
            let beta = cfg.beta_schedule.beta_for(global_iteration, mix.is_some());
            let pairs = sample_trajectories(
                mix,
                expert,
                scenario,
                cfg.trajectories_per_iteration,
                cfg.trajectory_length,
                beta,
                cfg.rng_seed,
                &[s_idx as u64, iteration as u64],
            )?;
            dataset.merge(&pairs)?;
            let mut rng = seed::rng(cfg.rng_seed, &[stream::DATASET, s_idx as u64, iteration as u64]);
            let sample = sample_dataset(&dataset, cfg.sample_size, cfg.sampling_mode, expert, &mut rng)?;
            let tree = cart::train(&sample, &cfg.cart, &layout, &actions)?;
            iterations.push(IterationRecord {
                scenario_index: s_idx,
                iteration,
                beta,
                dataset_size: dataset.len(),
                sample_size: sample.len(),
                stats: tree.stats(),
            });
            candidates.push(Candidate {
                tree,
                scenario_index: s_idx,
                iteration,
                mean_reward_per_timestep: 0.0,
            });
            global_iteration += 1;
        }
    }
    // Cross-validate every candidate on the full scenario list with one
    // shared seed set.
    let eval_seed = seed::derive(cfg.rng_seed, &[stream::CV_EVAL]);
    for candidate in &mut candidates {
        let report = evaluate(&candidate.tree, scenarios, cfg.cv_trials, eval_seed, jobs)?;
        candidate.mean_reward_per_timestep = report.mean_reward_per_timestep;
    }
    let mut selected = 0usize;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean_reward_per_timestep > candidates[selected].mean_reward_per_timestep {
            selected = i;
        }
    }
    Ok(DistillRun {
        config: cfg.clone(),
        iterations,
        candidates,
        selected,
        final_dataset_size: dataset.len(),
    })
}

/// Multi-scenario distillation over an ordered scenario list.
pub fn msviper(
    expert: &dyn Expert,
    scenarios: &[ScenarioSpec],
    cfg: &DistillConfig,
    jobs: usize,
) -> Result<DistillRun> {
    distill_inner(expert, scenarios, cfg, jobs)
}

/// Single-scenario baseline: the identical loop restricted to one
/// scenario (typically the final, hardest stage) for all iterations.
pub fn ssviper(
    expert: &dyn Expert,
    scenario: &ScenarioSpec,
    cfg: &DistillConfig,
    jobs: usize,
) -> Result<DistillRun> {
    distill_inner(expert, std::slice::from_ref(scenario), cfg, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvParams, GridParams, OccupancyConfig, RewardConfig};
    use crate::expert::{train_q_expert, QLearningParams};
    use crate::state::{ActionId, StateVector};
    use crate::tree::TreeNode;

    fn grid_spec(obstacles: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            stage: 0,
            horizon: 40,
            rng_seed: seed,
            occupancy: OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5]),
            reward: RewardConfig::default(),
            params: EnvParams::Grid(GridParams {
                static_obstacles: obstacles,
                ..GridParams::default()
            }),
        }
    }

    fn quick_expert(spec: &ScenarioSpec) -> crate::expert::QExpert {
        let params = QLearningParams {
            episodes_per_stage: 300,
            ..QLearningParams::default()
        };
        train_q_expert(std::slice::from_ref(spec), &params, 11).unwrap()
    }

    #[test]
    fn pure_expert_sampling_labels_match_execution() {
        let spec = grid_spec(1, 3);
        let expert = quick_expert(&spec);
        // With beta = 1 the executed actions are the labels, so replaying
        // the expert greedily over derived seeds reproduces the pairs.
        let pairs = sample_trajectories(None, &expert, &spec, 3, 50, 1.0, 21, &[0, 0]).unwrap();
        let mut replay = PairSet::new(pairs.dim());
        for rollout in 0..3u64 {
            let ep_spec = spec.with_seed(seed::derive(21, &[stream::ROLLOUT, 0, 0, rollout]));
            let log = crate::envs::run_episode(&ep_spec, &expert, 50).unwrap();
            for step in &log.steps {
                replay.push(step.state.clone(), step.action).unwrap();
            }
        }
        assert_eq!(pairs.len(), replay.len());
        for i in 0..pairs.len() {
            assert!(pairs.state(i).bits_eq(replay.state(i)));
            assert_eq!(pairs.action(i), replay.action(i));
        }
    }

    #[test]
    fn single_trajectory_single_step_yields_one_pair() {
        let spec = grid_spec(0, 4);
        let expert = quick_expert(&spec);
        let pairs = sample_trajectories(None, &expert, &spec, 1, 1, 1.0, 5, &[0, 0]).unwrap();
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn sampling_is_deterministic_for_a_fixed_seed() {
        let spec = grid_spec(2, 5);
        let expert = quick_expert(&spec);
        let a = sample_trajectories(None, &expert, &spec, 3, 50, 1.0, 9, &[1, 2]).unwrap();
        let b = sample_trajectories(None, &expert, &spec, 3, 50, 1.0, 9, &[1, 2]).unwrap();
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert!(a.state(i).bits_eq(b.state(i)));
            assert_eq!(a.action(i), b.action(i));
        }
    }

    #[test]
    fn uniform_sample_of_full_size_returns_whole_dataset() {
        let spec = grid_spec(0, 6);
        let expert = quick_expert(&spec);
        let mut d = PairSet::new(3);
        for i in 0..10 {
            d.push(StateVector::new(vec![i as f64, 0.0, 0.0]), (i % 4) as ActionId).unwrap();
        }
        let mut rng = seed::rng(1, &[1]);
        let sample = sample_dataset(&d, 10, SamplingMode::Uniform, &expert, &mut rng).unwrap();
        assert_eq!(sample.len(), 10);
        // Same multiset: sort both index sets by feature 0.
        let mut got: Vec<i64> = (0..10).map(|i| sample.state(i).get(0) as i64).collect();
        got.sort_unstable();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn empty_dataset_errors() {
        let spec = grid_spec(0, 7);
        let expert = quick_expert(&spec);
        let d = PairSet::new(2);
        let mut rng = seed::rng(1, &[2]);
        assert!(matches!(
            sample_dataset(&d, 5, SamplingMode::Uniform, &expert, &mut rng),
            Err(Error::EmptyDataset)
        ));
    }

    struct FakeQ {
        gaps: Vec<f64>,
    }

    impl Policy for FakeQ {
        fn act(&self, _s: &StateVector) -> ActionId {
            0
        }
    }

    impl Expert for FakeQ {
        fn q_values(&self, s: &StateVector) -> Option<Vec<f64>> {
            // State feature 0 indexes the gap table.
            let gap = self.gaps[s.get(0) as usize];
            Some(vec![0.0, gap])
        }
    }

    #[test]
    fn loss_weighted_draw_ratio_matches_gap_ratio() {
        let expert = FakeQ { gaps: vec![3.0, 1.0] };
        let mut d = PairSet::new(1);
        d.push(StateVector::new(vec![0.0]), 0).unwrap();
        d.push(StateVector::new(vec![1.0]), 1).unwrap();
        let mut first = 0usize;
        let draws = 100_000;
        for i in 0..draws {
            let mut rng = seed::rng(33, &[i as u64]);
            let s = sample_dataset(&d, 1, SamplingMode::LossWeighted, &expert, &mut rng).unwrap();
            assert_eq!(s.len(), 1);
            if s.state(0).get(0) == 0.0 {
                first += 1;
            }
            assert!(s.has_weights());
        }
        let ratio = first as f64 / draws as f64;
        assert!((ratio - 0.75).abs() < 0.75 * 0.05, "P(gap-3 state) = {ratio}");
    }

    #[test]
    fn equal_gaps_draw_uniformly_by_chi_square() {
        let k = 10usize;
        let expert = FakeQ { gaps: vec![2.0; k] };
        let mut d = PairSet::new(1);
        for i in 0..k {
            d.push(StateVector::new(vec![i as f64]), 0).unwrap();
        }
        let draws = 10_000usize;
        let mut counts = vec![0usize; k];
        for i in 0..draws {
            let mut rng = seed::rng(44, &[i as u64]);
            let s = sample_dataset(&d, 1, SamplingMode::LossWeighted, &expert, &mut rng).unwrap();
            counts[s.state(0).get(0) as usize] += 1;
        }
        let expected = draws as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Critical value of chi-square with 9 degrees of freedom at p = 0.01.
        assert!(chi2 < 21.666, "chi-square statistic {chi2}");
    }

    #[test]
    fn zero_gaps_fall_back_to_uniform_unweighted() {
        let expert = FakeQ { gaps: vec![0.0, 0.0] };
        let mut d = PairSet::new(1);
        d.push(StateVector::new(vec![0.0]), 0).unwrap();
        d.push(StateVector::new(vec![1.0]), 1).unwrap();
        let mut rng = seed::rng(5, &[3]);
        let s = sample_dataset(&d, 2, SamplingMode::LossWeighted, &expert, &mut rng).unwrap();
        assert_eq!(s.len(), 2);
        assert!(!s.has_weights());
    }

    #[test]
    fn msviper_single_easy_scenario_smoke() {
        let spec = grid_spec(0, 8);
        let expert = quick_expert(&spec);
        let cfg = DistillConfig {
            trajectories_per_iteration: 4,
            iterations_per_scenario: 1,
            trajectory_length: 40,
            sample_size: 400,
            cv_trials: 3,
            rng_seed: 13,
            ..DistillConfig::default()
        };
        let run = msviper(&expert, &[spec], &cfg, 1).unwrap();
        assert_eq!(run.candidates.len(), 1);
        assert_eq!(run.selected, 0);
        assert_eq!(run.iterations[0].beta, 1.0);
    }

    #[test]
    fn dataset_grows_monotonically_and_selection_is_optimal() {
        let spec_easy = grid_spec(0, 9);
        let spec_hard = grid_spec(2, 10);
        let expert = quick_expert(&spec_hard);
        let cfg = DistillConfig {
            trajectories_per_iteration: 3,
            iterations_per_scenario: 2,
            trajectory_length: 30,
            sample_size: 300,
            cv_trials: 2,
            rng_seed: 17,
            ..DistillConfig::default()
        };
        let run = msviper(&expert, &[spec_easy, spec_hard], &cfg, 1).unwrap();
        assert_eq!(run.candidates.len(), 4);
        for w in run.iterations.windows(2) {
            assert!(w[1].dataset_size >= w[0].dataset_size);
        }
        let best = run
            .candidates
            .iter()
            .map(|c| c.mean_reward_per_timestep)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(run.candidates[run.selected].mean_reward_per_timestep, best);
        // Ties break to the earliest candidate.
        let first_best = run
            .candidates
            .iter()
            .position(|c| c.mean_reward_per_timestep == best)
            .unwrap();
        assert_eq!(run.selected, first_best);
    }

    #[test]
    fn msviper_on_one_scenario_equals_ssviper_exactly() {
        let spec = grid_spec(1, 11);
        let expert = quick_expert(&spec);
        let cfg = DistillConfig {
            trajectories_per_iteration: 3,
            iterations_per_scenario: 2,
            trajectory_length: 30,
            sample_size: 250,
            cv_trials: 2,
            rng_seed: 23,
            ..DistillConfig::default()
        };
        let a = msviper(&expert, std::slice::from_ref(&spec), &cfg, 1).unwrap();
        let b = ssviper(&expert, &spec, &cfg, 1).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.final_dataset_size, b.final_dataset_size);
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            assert_eq!(x.tree.to_json_string(), y.tree.to_json_string());
            assert_eq!(x.mean_reward_per_timestep, y.mean_reward_per_timestep);
        }
    }

    #[test]
    fn label_purity_under_dagger_mixing() {
        let spec = grid_spec(1, 12);
        let expert = quick_expert(&spec);
        // A deliberately bad mixing tree: always stop.
        let stop_tree = DecisionTreePolicy::new(
            spec.layout(),
            ActionCatalog::default_table(),
            0,
            vec![TreeNode::leaf(0, 3)],
        )
        .unwrap();
        let pairs =
            sample_trajectories(Some(&stop_tree), &expert, &spec, 2, 25, 0.0, 31, &[0, 0]).unwrap();
        for (s, a, _) in pairs.iter() {
            assert_eq!(a, expert.act(s), "labels must come from the expert");
        }
    }

    #[test]
    fn evaluate_stop_tree_never_succeeds_and_reruns_identically() {
        let spec = grid_spec(0, 13);
        let stop_tree = DecisionTreePolicy::new(
            spec.layout(),
            ActionCatalog::default_table(),
            0,
            vec![TreeNode::leaf(0, 3)],
        )
        .unwrap();
        let a = evaluate(&stop_tree, std::slice::from_ref(&spec), 10, 3, 1).unwrap();
        assert_eq!(a.success_rate, 0.0);
        let b = evaluate(&stop_tree, std::slice::from_ref(&spec), 10, 3, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_is_independent_of_jobs() {
        let spec = grid_spec(1, 14);
        let expert = quick_expert(&spec);
        let a = evaluate(&expert, std::slice::from_ref(&spec), 12, 5, 1).unwrap();
        let b = evaluate(&expert, std::slice::from_ref(&spec), 12, 5, 4).unwrap();
        assert_eq!(a, b);
    }
}
