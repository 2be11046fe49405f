//! Tabular Q-learning expert for the grid environment.
//!
//! States are discretized into buckets of (rounded relative goal offset,
//! near-ring occupancy bitmask). The offset is recovered from the polar
//! goal features, so the bucket is a pure function of the state vector
//! and the greedy policy is exactly representable by a decision tree over
//! the same features. The Q-table is carried across curriculum stages:
//! the final table of one stage initializes the next.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, Environment, ScenarioSpec};
use crate::seed::{self, stream};
use crate::state::{ActionId, StateLayout, StateVector};
use crate::{Error, Expert, Policy, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub episodes_per_stage: usize,
    /// Per-visit learning-rate decay: the effective step size for a
    /// bucket's k-th update is `alpha / (1 + alpha_decay * k)`.
    pub alpha_decay: f64,
    /// Width of one radial goal-distance bin.
    pub distance_bin: f64,
    /// Distance bins at or beyond this index collapse together.
    pub distance_bin_cap: i64,
    /// Number of central occupancy columns feeding the bucket mask.
    pub mask_columns: usize,
    /// Occupancy cells above this value count as occupied in the bucket mask.
    pub occupancy_threshold: f64,
}

impl Default for QLearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            episodes_per_stage: 3000,
            alpha_decay: 0.01,
            distance_bin: 1.0,
            distance_bin_cap: 24,
            mask_columns: 3,
            occupancy_threshold: 0.5,
        }
    }
}

impl QLearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("alpha and gamma must be in [0,1]".into()));
        }
        if self.episodes_per_stage == 0 {
            return Err(Error::Config("episodes_per_stage must be >= 1".into()));
        }
        if !(self.distance_bin > 0.0) || self.distance_bin_cap < 1 {
            return Err(Error::Config("distance binning must be positive".into()));
        }
        if !(self.alpha_decay >= 0.0) || self.mask_columns == 0 {
            return Err(Error::Config("alpha_decay must be >= 0 and mask_columns >= 1".into()));
        }
        Ok(())
    }
}

/// Discrete bucket key: (radial goal-distance bin, goal-bearing octant,
/// nearest-ring occupancy bitmask of the current snapshot).
///
/// Every bucket boundary is a threshold on a single state feature, so the
/// greedy bucket policy is exactly representable by an axis-aligned
/// decision tree over the same features.
pub type BucketKey = (i64, i64, u32);

pub fn discretize(layout: &StateLayout, params: &QLearningParams, s: &StateVector) -> BucketKey {
    let d = s.get(layout.goal_distance_index());
    let b = s.get(layout.goal_bearing_index());
    let d_bin = ((d / params.distance_bin) as i64).clamp(0, params.distance_bin_cap);
    // Octant 0 is straight ahead; boundaries sit at odd multiples of pi/8.
    let octant = ((b / std::f64::consts::FRAC_PI_4).round() as i64).rem_euclid(8);
    let mut mask = 0u32;
    let k = params.mask_columns.min(layout.occupancy_columns).min(32);
    let start = (layout.occupancy_columns - k) / 2;
    for (bit, col) in (start..start + k).enumerate() {
        if s.get(layout.occ_index(0, 0, col)) > params.occupancy_threshold {
            mask |= 1 << bit;
        }
    }
    (d_bin, octant, mask)
}

/// Incrementally trainable Q-table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTrainer {
    pub params: QLearningParams,
    pub table: BTreeMap<BucketKey, Vec<f64>>,
    visits: BTreeMap<BucketKey, u64>,
    n_actions: usize,
}

impl QTrainer {
    pub fn new(params: QLearningParams, n_actions: usize) -> Self {
        Self {
            params,
            table: BTreeMap::new(),
            visits: BTreeMap::new(),
            n_actions,
        }
    }

    fn values(&self, key: &BucketKey) -> Vec<f64> {
        self.table.get(key).cloned().unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    fn greedy(&self, key: &BucketKey) -> ActionId {
        argmax_lowest(&self.values(key))
    }

    /// Runs `episodes_per_stage` episodes of epsilon-greedy learning on one
    /// scenario, mutating the table in place. Episode placements derive
    /// from `(seed, stage_index, episode)` so consecutive stages explore
    /// fresh layouts deterministically.
    pub fn run_stage(&mut self, spec: &ScenarioSpec, stage_index: usize, seed: u64) -> Result<()> {
        let p = self.params.clone();
        p.validate()?;
        // The carried table is the stage's starting policy; the
        // learning-rate schedule restarts so later stages can still
        // overwrite earlier lessons.
        self.visits.clear();
        let episodes = p.episodes_per_stage;
        let layout = spec.layout();
        for episode in 0..episodes {
            let mut rng = seed::rng(seed, &[stream::Q_TRAIN, stage_index as u64, episode as u64]);
            let ep_spec = spec.with_seed(seed::derive(seed, &[
                stream::Q_TRAIN,
                0xA11C,
                stage_index as u64,
                episode as u64,
            ]));
            let mut env = Env::new(&ep_spec)?;
            let mut state = env.reset()?;
            let frac = episode as f64 / episodes.max(1) as f64;
            let epsilon = p.epsilon_start + (p.epsilon_end - p.epsilon_start) * frac;
            let mut key = discretize(&layout, &p, &state);
            while !env.is_done() {
                let action = if rng.gen::<f64>() < epsilon {
                    rng.gen_range(0..self.n_actions) as ActionId
                } else {
                    self.greedy(&key)
                };
                let out = env.step(action)?;
                let next_key = discretize(&layout, &p, &out.next_state);
                let target = if out.done {
                    out.reward
                } else {
                    let next_best = self.values(&next_key).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    out.reward + p.gamma * next_best
                };
                let visits = self.visits.entry(key).or_insert(0);
                *visits += 1;
                let alpha = p.alpha / (1.0 + p.alpha_decay * (*visits - 1) as f64);
                let entry = self.table.entry(key).or_insert_with(|| vec![0.0; self.n_actions]);
                let q = &mut entry[action as usize];
                *q += alpha * (target - *q);
                if !q.is_finite() {
                    return Err(Error::Training(format!("Q-value diverged in bucket {key:?}")));
                }
                state = out.next_state;
                key = next_key;
            }
            let _ = state;
        }
        Ok(())
    }

    pub fn into_expert(self, layout: StateLayout) -> QExpert {
        QExpert {
            params: self.params,
            table: self.table,
            n_actions: self.n_actions,
            layout,
        }
    }
}

fn argmax_lowest(values: &[f64]) -> ActionId {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best as ActionId
}

/// Greedy policy over a learned Q-table, with Q-values exposed.
#[derive(Debug, Clone, PartialEq)]
pub struct QExpert {
    pub params: QLearningParams,
    pub table: BTreeMap<BucketKey, Vec<f64>>,
    n_actions: usize,
    layout: StateLayout,
}

impl QExpert {
    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Persists the table as sorted `forward<TAB>lateral<TAB>mask<TAB>action<TAB>value`
    /// lines; values use 17 significant digits.
    pub fn save_table(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (key, values) in &self.table {
            for (a, v) in values.iter().enumerate() {
                writeln!(f, "{}\t{}\t{}\t{}\t{v:.16e}", key.0, key.1, key.2, a)?;
            }
        }
        Ok(())
    }

    pub fn load(
        path: &Path,
        params: QLearningParams,
        layout: StateLayout,
        n_actions: usize,
    ) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut table: BTreeMap<BucketKey, Vec<f64>> = BTreeMap::new();
        for (lineno, line) in f.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 5 {
                return Err(Error::Format(format!("q-table line {}: expected 5 fields", lineno + 1)));
            }
            let key: BucketKey = (
                parts[0].parse().map_err(|_| Error::Format("bad bucket".into()))?,
                parts[1].parse().map_err(|_| Error::Format("bad bucket".into()))?,
                parts[2].parse().map_err(|_| Error::Format("bad bucket".into()))?,
            );
            let action: usize = parts[3].parse().map_err(|_| Error::Format("bad action".into()))?;
            let value: f64 = parts[4].parse().map_err(|_| Error::Format("bad value".into()))?;
            let entry = table.entry(key).or_insert_with(|| vec![0.0; n_actions]);
            if action >= n_actions {
                return Err(Error::Format(format!("action {action} out of range")));
            }
            entry[action] = value;
        }
        Ok(Self {
            params,
            table,
            n_actions,
            layout,
        })
    }
}

impl Policy for QExpert {
    fn act(&self, state: &StateVector) -> ActionId {
        let key = discretize(&self.layout, &self.params, state);
        let values = self
            .table
            .get(&key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions]);
        argmax_lowest(&values)
    }
}

impl Expert for QExpert {
    fn q_values(&self, state: &StateVector) -> Option<Vec<f64>> {
        let key = discretize(&self.layout, &self.params, state);
        Some(
            self.table
                .get(&key)
                .cloned()
                .unwrap_or_else(|| vec![0.0; self.n_actions]),
        )
    }
}

/// Trains a Q-expert over an ordered curriculum, carrying the table from
/// each stage into the next, and returns the greedy policy.
pub fn train_q_expert(
    curriculum: &[ScenarioSpec],
    params: &QLearningParams,
    seed: u64,
) -> Result<QExpert> {
    if curriculum.is_empty() {
        return Err(Error::Config("curriculum must be nonempty".into()));
    }
    let kind = curriculum[0].env_kind();
    let layout = curriculum[0].layout();
    for spec in curriculum {
        if spec.env_kind() != kind || spec.layout() != layout {
            return Err(Error::Config(
                "all curriculum scenarios must share one env kind and layout".into(),
            ));
        }
    }
    let mut trainer = QTrainer::new(params.clone(), crate::state::ActionCatalog::default_table().len());
    for (stage_index, spec) in curriculum.iter().enumerate() {
        trainer.run_stage(spec, stage_index, seed)?;
    }
    Ok(trainer.into_expert(layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvParams, GridParams, OccupancyConfig, RewardConfig};

    fn grid_spec(params: GridParams, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            stage: 0,
            horizon: 40,
            rng_seed: seed,
            occupancy: OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5]),
            reward: RewardConfig::default(),
            params: EnvParams::Grid(params),
        }
    }

    #[test]
    fn empty_grid_expert_reaches_goal_reliably() {
        let spec = grid_spec(
            GridParams {
                width: 5,
                height: 5,
                ..GridParams::default()
            },
            0,
        );
        let params = QLearningParams {
            episodes_per_stage: 2000,
            ..QLearningParams::default()
        };
        let expert = train_q_expert(&[spec.clone()], &params, 77).unwrap();
        let mut successes = 0;
        for trial in 0..100 {
            let eval_spec = spec.with_seed(crate::seed::derive(77, &[stream::EVAL, trial]));
            let log = crate::envs::run_episode(&eval_spec, &expert, 40).unwrap();
            if log.goal_reached() {
                successes += 1;
            }
        }
        assert!(successes >= 95, "goal rate {successes}/100");
    }

    #[test]
    fn stage_table_carries_over_between_stages() {
        let spec = grid_spec(GridParams::default(), 1);
        let params = QLearningParams {
            episodes_per_stage: 50,
            ..QLearningParams::default()
        };
        let mut trainer = QTrainer::new(params.clone(), 15);
        trainer.run_stage(&spec, 0, 9).unwrap();
        let after_stage1 = trainer.table.clone();
        // A fresh trainer replaying stage 1 then starting stage 2 must see
        // exactly the stage-1 table as its starting point.
        let mut replay = QTrainer::new(params, 15);
        replay.run_stage(&spec, 0, 9).unwrap();
        assert_eq!(replay.table, after_stage1);
    }

    #[test]
    fn greedy_act_is_argmax_of_exposed_q_values() {
        let spec = grid_spec(GridParams::default(), 2);
        let params = QLearningParams {
            episodes_per_stage: 200,
            ..QLearningParams::default()
        };
        let expert = train_q_expert(&[spec.clone()], &params, 3).unwrap();
        let log = crate::envs::run_episode(&spec, &expert, 40).unwrap();
        for step in &log.steps {
            let q = expert.q_values(&step.state).unwrap();
            assert_eq!(q.len(), 15);
            let a = expert.act(&step.state);
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(q[a as usize], best);
        }
    }

    #[test]
    fn degenerate_single_cell_env_returns_bucket_argmax() {
        // 1x2 grid: the robot can only be at one free cell after placing
        // the goal; the greedy action is the argmax of that bucket.
        let spec = grid_spec(
            GridParams {
                width: 2,
                height: 1,
                min_start_goal_distance: 0.0,
                ..GridParams::default()
            },
            4,
        );
        let params = QLearningParams {
            episodes_per_stage: 100,
            ..QLearningParams::default()
        };
        let expert = train_q_expert(&[spec.clone()], &params, 5).unwrap();
        let mut env = Env::new(&spec).unwrap();
        let s = env.reset().unwrap();
        let key = discretize(&spec.layout(), &expert.params, &s);
        let expected = argmax_lowest(&expert.table.get(&key).cloned().unwrap_or_else(|| vec![0.0; 15]));
        assert_eq!(expert.act(&s), expected);
    }

    #[test]
    fn table_round_trips_through_file() {
        let spec = grid_spec(GridParams::default(), 6);
        let params = QLearningParams {
            episodes_per_stage: 60,
            ..QLearningParams::default()
        };
        let expert = train_q_expert(&[spec.clone()], &params, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.tsv");
        expert.save_table(&path).unwrap();
        let back = QExpert::load(&path, expert.params.clone(), spec.layout(), 15).unwrap();
        assert_eq!(back.table, expert.table);
    }
}
