//! Run-configuration schemas. One human-editable JSON document per run;
//! unknown keys are rejected. Distillation hyperparameters keep their
//! customary symbol names (M, N, l_t, n_s, n_cv).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use msviper::cart::CartConfig;
use msviper::distill::{BetaSchedule, SamplingMode};
use msviper::envs::ScenarioSpec;
use msviper::expert::{QLearningParams, ScriptedKind, ScriptedParams};
use msviper::metrics::{BehaviorConfig, CoverageMethod};
use msviper::state::ActionId;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainExpertConfig {
    QLearning {
        seed: u64,
        curriculum: Vec<ScenarioSpec>,
        #[serde(default)]
        q_params: QLearningParams,
    },
    Scripted {
        seed: u64,
        scripted_kind: ScriptedKind,
        /// Scenario supplying the state layout and sensor geometry.
        scenario: ScenarioSpec,
        #[serde(default)]
        params: ScriptedParams,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillCommandConfig {
    pub seed: u64,
    /// Path to an expert manifest produced by `train-expert`.
    pub expert: String,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(rename = "M")]
    pub trajectories_per_iteration: usize,
    #[serde(rename = "N")]
    pub iterations_per_scenario: usize,
    #[serde(rename = "l_t")]
    pub trajectory_length: usize,
    #[serde(rename = "n_s")]
    pub sample_size: usize,
    #[serde(rename = "n_cv")]
    pub cv_trials: usize,
    #[serde(default = "default_sampling_mode")]
    pub sampling_mode: SamplingMode,
    #[serde(default = "default_beta_schedule")]
    pub beta_schedule: BetaSchedule,
    #[serde(default)]
    pub cart: CartConfig,
}

fn default_sampling_mode() -> SamplingMode {
    SamplingMode::Uniform
}

fn default_beta_schedule() -> BetaSchedule {
    BetaSchedule::Dagger
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    #[serde(default)]
    pub tree: Option<String>,
    #[serde(default)]
    pub expert: Option<String>,
    pub scenario: ScenarioSpec,
    pub trials: usize,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    /// Also write per-step trajectory logs for the primary policy.
    #[serde(default)]
    pub write_trajectories: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezingRepairConfig {
    #[serde(default = "default_stop_actions")]
    pub stop_actions: Vec<ActionId>,
    /// `m_A`: occupancy cells allowed to violate the static-bounds check.
    pub movement_cell_tolerance: usize,
    #[serde(default = "default_rotate_right")]
    pub rotate_right: ActionId,
    #[serde(default = "default_rotate_left")]
    pub rotate_left: ActionId,
    #[serde(default = "default_occupancy_threshold")]
    pub occupancy_threshold: f64,
}

fn default_stop_actions() -> Vec<ActionId> {
    vec![3]
}

fn default_rotate_right() -> ActionId {
    1
}

fn default_rotate_left() -> ActionId {
    5
}

fn default_occupancy_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationRepairConfig {
    /// Scenario rolled out to observe oscillation.
    pub scenario: ScenarioSpec,
    #[serde(rename = "n_e")]
    pub episodes: usize,
    #[serde(rename = "L", default = "default_window")]
    pub window: usize,
    #[serde(default = "default_min_sign_flips")]
    pub min_sign_flips: usize,
    /// `z`: replace actions outright instead of splitting.
    #[serde(default)]
    pub force_replace: bool,
}

fn default_window() -> usize {
    6
}

fn default_min_sign_flips() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vibration1RepairConfig {
    /// Threshold increment `h`.
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vibration2RepairConfig {
    #[serde(rename = "V_b")]
    pub threshold: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Action contraction map `M_c`; the built-in default when absent.
    #[serde(default)]
    pub contraction_map: Option<BTreeMap<ActionId, ActionId>>,
}

fn default_gamma() -> f64 {
    0.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairConfig {
    pub seed: u64,
    pub tree: String,
    #[serde(default)]
    pub freezing: Option<FreezingRepairConfig>,
    #[serde(default)]
    pub oscillation: Option<OscillationRepairConfig>,
    #[serde(default)]
    pub vibration1: Option<Vibration1RepairConfig>,
    #[serde(default)]
    pub vibration2: Option<Vibration2RepairConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub method: CoverageMethod,
    #[serde(rename = "m")]
    pub trajectories: usize,
    pub epsilon: f64,
    /// `hit_probabilities[k][e]`, final environment last.
    pub hit_probabilities: Vec<Vec<f64>>,
}
