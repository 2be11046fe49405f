//! Scenario specifications and curriculum files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encode::OccupancyConfig;
use super::grid::GridParams;
use super::terrain::TerrainParams;
use super::unicycle::UnicycleParams;
use crate::state::StateLayout;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Grid,
    Unicycle,
    Terrain,
}

/// Reward constants. The shaping term is
/// `progress_scale * (previous_goal_distance - new_goal_distance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub arrival_bonus: f64,
    pub collision_penalty: f64,
    pub progress_scale: f64,
    pub step_cost: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            arrival_bonus: 1.0,
            collision_penalty: 1.0,
            progress_scale: 0.1,
            step_cost: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvParams {
    Grid(GridParams),
    Unicycle(UnicycleParams),
    Terrain(TerrainParams),
}

impl EnvParams {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvParams::Grid(_) => EnvKind::Grid,
            EnvParams::Unicycle(_) => EnvKind::Unicycle,
            EnvParams::Terrain(_) => EnvKind::Terrain,
        }
    }
}

/// One curriculum stage: an environment recipe plus episode horizon and
/// placement seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Curriculum index; stages ascend with declared difficulty.
    pub stage: u32,
    /// Episode horizon `T`; episodes always terminate within this many steps.
    pub horizon: usize,
    pub rng_seed: u64,
    pub occupancy: OccupancyConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    pub params: EnvParams,
}

impl ScenarioSpec {
    pub fn env_kind(&self) -> EnvKind {
        self.params.kind()
    }

    /// Same scenario with a different placement seed; used to derive
    /// per-rollout episode variety from a run seed.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("scenario horizon must be >= 1".into()));
        }
        self.occupancy.validate()?;
        match &self.params {
            EnvParams::Grid(p) => p.validate(),
            EnvParams::Unicycle(p) => p.validate(),
            EnvParams::Terrain(p) => p.validate(),
        }
    }

    /// State layout implied by the occupancy shape and environment kind.
    pub fn layout(&self) -> StateLayout {
        let extras = match &self.params {
            EnvParams::Terrain(_) => TerrainParams::EXTRA_FEATURES,
            _ => 0,
        };
        let mut layout = StateLayout::new(self.occupancy.columns, self.occupancy.rows, extras);
        let occ_len = layout.occupancy_len();
        let max_goal_distance = match &self.params {
            EnvParams::Grid(p) => p
                .declared_max_goal_distance
                .unwrap_or_else(|| ((p.width * p.width + p.height * p.height) as f64).sqrt()),
            EnvParams::Unicycle(p) => 2.0 * p.extent * std::f64::consts::SQRT_2,
            EnvParams::Terrain(p) => 2.0 * p.extent * std::f64::consts::SQRT_2,
        };
        layout = layout
            .with_range(0, occ_len, 0.0, 1.0)
            .with_range(occ_len, occ_len + 1, 0.0, max_goal_distance)
            .with_range(occ_len + 1, occ_len + 2, -std::f64::consts::PI, std::f64::consts::PI)
            .with_range(occ_len + 2, occ_len + 3, -1.0, 14.0);
        if let EnvParams::Terrain(p) = &self.params {
            let first = layout.extra_index(0);
            layout = layout
                .with_range(first, first + extras, -p.omega_cap, p.omega_cap)
                .with_group("angular_velocity", (first..first + extras).collect());
        }
        layout
    }

    pub fn max_range(&self) -> f64 {
        self.occupancy.max_range()
    }
}

/// Checks the curriculum ordering invariant: stages ascend and declared
/// difficulty (grid obstacle counts) never decreases.
pub fn validate_curriculum(scenarios: &[ScenarioSpec]) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::Config("curriculum must contain at least one scenario".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    for w in scenarios.windows(2) {
        if w[1].stage < w[0].stage {
            return Err(Error::Config(format!(
                "curriculum stages must ascend: {} then {}",
                w[0].stage, w[1].stage
            )));
        }
        if let (EnvParams::Grid(a), EnvParams::Grid(b)) = (&w[0].params, &w[1].params) {
            if b.static_obstacles + b.dynamic_obstacles < a.static_obstacles + a.dynamic_obstacles {
                return Err(Error::Config(
                    "grid curriculum obstacle count must be nondecreasing across stages".into(),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurriculumFile {
    scenarios: Vec<ScenarioSpec>,
}

pub fn save_curriculum(path: &Path, scenarios: &[ScenarioSpec]) -> Result<()> {
    let file = CurriculumFile {
        scenarios: scenarios.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_curriculum(path: &Path) -> Result<Vec<ScenarioSpec>> {
    let s = std::fs::read_to_string(path)?;
    let file: CurriculumFile =
        serde_json::from_str(&s).map_err(|e| Error::Format(format!("curriculum file: {e}")))?;
    validate_curriculum(&file.scenarios)?;
    Ok(file.scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::encode::OccupancyConfig;
    use crate::envs::grid::GridParams;

    fn grid_stage(stage: u32, obstacles: usize) -> ScenarioSpec {
        ScenarioSpec {
            stage,
            horizon: 30,
            rng_seed: 1,
            occupancy: OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5]),
            reward: RewardConfig::default(),
            params: EnvParams::Grid(GridParams {
                static_obstacles: obstacles,
                ..GridParams::default()
            }),
        }
    }

    #[test]
    fn curriculum_requires_ascending_stages_and_nondecreasing_obstacles() {
        assert!(validate_curriculum(&[]).is_err());
        let ok = vec![grid_stage(1, 0), grid_stage(2, 3)];
        validate_curriculum(&ok).unwrap();
        let bad_order = vec![grid_stage(2, 0), grid_stage(1, 3)];
        assert!(validate_curriculum(&bad_order).is_err());
        let easier_later = vec![grid_stage(1, 4), grid_stage(2, 1)];
        assert!(validate_curriculum(&easier_later).is_err());
    }

    #[test]
    fn curriculum_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curriculum.json");
        let stages = vec![grid_stage(1, 1), grid_stage(2, 2)];
        save_curriculum(&path, &stages).unwrap();
        let back = load_curriculum(&path).unwrap();
        assert_eq!(back, stages);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mut s = grid_stage(1, 0);
        s.horizon = 0;
        assert!(s.validate().is_err());
    }
}
