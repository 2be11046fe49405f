//! Desk-scale navigation simulators: a grid world, a continuous unicycle
//! world with disc obstacles, and an obstacle-free uneven-terrain world.
//!
//! All three share the occupancy-grid state encoder and the reward shape
//! (goal-progress shaping + arrival bonus - collision penalty - per-step
//! cost; the constants are configuration, not code). Environments are
//! deterministic: (spec, seed, action sequence) fully determines every
//! outcome, and `reset` reproduces the same start/goal/obstacle draw for
//! the same spec.

mod encode;
mod grid;
mod rollout;
mod scenario;
mod terrain;
mod unicycle;

pub use encode::{OccupancyConfig, OccupancyEncoder, OccupancyGrid, SnapshotHistory};
pub use grid::{GridEnv, GridParams};
pub use rollout::{run_episode, write_trajectory_csv, EpisodeLog, StepRecord};
pub use scenario::{
    load_curriculum, save_curriculum, validate_curriculum, EnvKind, EnvParams, RewardConfig,
    ScenarioSpec,
};
pub use terrain::{TerrainEnv, TerrainParams};
pub use unicycle::{UnicycleEnv, UnicycleParams};

use crate::state::{ActionCatalog, ActionId, StateLayout, StateVector};
use crate::Result;

/// Roll and pitch angular rates emitted by the terrain environment each
/// step and folded into the layout's extra features.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerrainSignals {
    pub omega_r: f64,
    pub omega_p: f64,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub goal_reached: bool,
    pub froze_this_step: bool,
    pub terrain_signals: Option<TerrainSignals>,
}

/// Common interface of the three simulators.
pub trait Environment {
    fn layout(&self) -> &StateLayout;
    fn actions(&self) -> &ActionCatalog;
    /// (Re)starts an episode; deterministic per spec.
    fn reset(&mut self) -> Result<StateVector>;
    fn step(&mut self, action: ActionId) -> Result<StepOutcome>;
    fn current_state(&self) -> &StateVector;
    fn is_done(&self) -> bool;
}

/// Closed dispatch over the environment kinds.
pub enum Env {
    Grid(GridEnv),
    Unicycle(UnicycleEnv),
    Terrain(TerrainEnv),
}

impl Env {
    pub fn new(spec: &ScenarioSpec) -> Result<Env> {
        spec.validate()?;
        Ok(match &spec.params {
            EnvParams::Grid(_) => Env::Grid(GridEnv::new(spec)?),
            EnvParams::Unicycle(_) => Env::Unicycle(UnicycleEnv::new(spec)?),
            EnvParams::Terrain(_) => Env::Terrain(TerrainEnv::new(spec)?),
        })
    }
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Env::Grid($e) => $body,
            Env::Unicycle($e) => $body,
            Env::Terrain($e) => $body,
        }
    };
}

impl Environment for Env {
    fn layout(&self) -> &StateLayout {
        dispatch!(self, e => e.layout())
    }

    fn actions(&self) -> &ActionCatalog {
        dispatch!(self, e => e.actions())
    }

    fn reset(&mut self) -> Result<StateVector> {
        dispatch!(self, e => e.reset())
    }

    fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        dispatch!(self, e => e.step(action))
    }

    fn current_state(&self) -> &StateVector {
        dispatch!(self, e => e.current_state())
    }

    fn is_done(&self) -> bool {
        dispatch!(self, e => e.is_done())
    }
}
