//! Action catalog, state-vector layout, and state values.
//!
//! The state vector is a flat numeric array: an occupancy-grid block
//! (`columns x rows` radial cells, stacked over `timesteps` snapshots,
//! newest snapshot first), two polar goal features (distance, bearing),
//! one previous-action feature, then any environment-specific extras
//! (e.g. roll/pitch angular rates on terrain).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discrete action identifier; ids are consecutive integers starting at 0.
pub type ActionId = u32;

/// A motion primitive: commanded forward speed and yaw rate for one
/// timestep. Angular sign is positive for left turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub id: ActionId,
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

/// An ordered catalog of motion primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCatalog {
    actions: Vec<ActionSpec>,
}

impl ActionCatalog {
    pub fn new(actions: Vec<ActionSpec>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("action catalog must be nonempty".into()));
        }
        for (i, a) in actions.iter().enumerate() {
            if a.id as usize != i {
                return Err(Error::Config(format!(
                    "action ids must be consecutive from 0; position {i} has id {}",
                    a.id
                )));
            }
            if !a.linear_velocity.is_finite() || !a.angular_velocity.is_finite() {
                return Err(Error::Config(format!("action {} has non-finite velocity", a.id)));
            }
        }
        Ok(Self { actions })
    }

    /// The 15-entry default catalog.
    ///
    /// | id | linear | angular |
    /// |----|--------|---------|
    /// | 0  | 1.0    | -1.0    |
    /// | 1  | 0.0    | -1.0    |
    /// | 2  | 1.0    |  0.0    |
    /// | 3  | 0.0    |  0.0    |
    /// | 4  | 1.0    |  1.0    |
    /// | 5  | 0.0    |  1.0    |
    /// | 6  | 0.4    |  0.0    |
    /// | 7  | 0.0    | -0.4    |
    /// | 8  | 0.0    |  0.4    |
    /// | 9  | 1.0    | -0.4    |
    /// | 10 | 1.0    |  0.4    |
    /// | 11 | 0.4    | -1.0    |
    /// | 12 | 0.4    |  1.0    |
    /// | 13 | 0.4    | -0.4    |
    /// | 14 | 0.4    |  0.4    |
    pub fn default_table() -> Self {
        const TABLE: [(f64, f64); 15] = [
            (1.0, -1.0),
            (0.0, -1.0),
            (1.0, 0.0),
            (0.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.4, 0.0),
            (0.0, -0.4),
            (0.0, 0.4),
            (1.0, -0.4),
            (1.0, 0.4),
            (0.4, -1.0),
            (0.4, 1.0),
            (0.4, -0.4),
            (0.4, 0.4),
        ];
        let actions = TABLE
            .iter()
            .enumerate()
            .map(|(i, &(linear_velocity, angular_velocity))| ActionSpec {
                id: i as ActionId,
                linear_velocity,
                angular_velocity,
            })
            .collect();
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn contains(&self, id: ActionId) -> bool {
        (id as usize) < self.actions.len()
    }

    pub fn get(&self, id: ActionId) -> Result<&ActionSpec> {
        self.actions
            .get(id as usize)
            .ok_or_else(|| Error::Config(format!("action id {id} not in catalog")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSpec> {
        self.actions.iter()
    }

    pub fn as_slice(&self) -> &[ActionSpec] {
        &self.actions
    }

    /// True for actions with zero linear and zero angular velocity.
    pub fn is_stop(&self, id: ActionId) -> bool {
        self.actions
            .get(id as usize)
            .map(|a| a.linear_velocity == 0.0 && a.angular_velocity == 0.0)
            .unwrap_or(false)
    }

    /// All zero-velocity actions (the default catalog has exactly one).
    pub fn stop_actions(&self) -> Vec<ActionId> {
        self.actions
            .iter()
            .filter(|a| a.linear_velocity == 0.0 && a.angular_velocity == 0.0)
            .map(|a| a.id)
            .collect()
    }

    /// Sign of the commanded angular velocity: -1, 0, or 1.
    pub fn angular_sign(&self, id: ActionId) -> i8 {
        match self.actions.get(id as usize) {
            Some(a) if a.angular_velocity > 0.0 => 1,
            Some(a) if a.angular_velocity < 0.0 => -1,
            _ => 0,
        }
    }

    /// The reduced-magnitude counterpart of an action: the catalog entry
    /// closest (Euclidean, ties to the lower id) to 0.4x the original
    /// velocity pair. Both velocity magnitudes of the result never exceed
    /// the original's.
    pub fn reduced_action(&self, id: ActionId) -> Result<ActionId> {
        let orig = self.get(id)?;
        let target = (0.4 * orig.linear_velocity, 0.4 * orig.angular_velocity);
        let mut best: Option<(f64, ActionId)> = None;
        for a in &self.actions {
            if a.linear_velocity.abs() > orig.linear_velocity.abs()
                || a.angular_velocity.abs() > orig.angular_velocity.abs()
            {
                continue;
            }
            let d = (a.linear_velocity - target.0).powi(2) + (a.angular_velocity - target.1).powi(2);
            let better = match best {
                None => true,
                Some((bd, _)) => d < bd,
            };
            if better {
                best = Some((d, a.id));
            }
        }
        best.map(|(_, id)| id)
            .ok_or_else(|| Error::Config(format!("no reduced-magnitude counterpart for action {id}")))
    }
}

/// The default action contraction map used by the vibration repair
/// (method 2): every entry replaces an action with one whose linear and
/// angular magnitudes are no larger. Total over the default catalog.
pub fn default_contraction_map() -> BTreeMap<ActionId, ActionId> {
    [
        (0, 13),
        (1, 7),
        (2, 6),
        (3, 3),
        (4, 14),
        (5, 8),
        (6, 6),
        (7, 8),
        (8, 7),
        (9, 13),
        (10, 14),
        (11, 13),
        (12, 14),
        (13, 13),
        (14, 14),
    ]
    .into_iter()
    .collect()
}

/// A contiguous block of features sharing one declared physical range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRange {
    /// First feature index covered (inclusive).
    pub start: usize,
    /// One past the last feature index covered.
    pub end: usize,
    pub min: f64,
    pub max: f64,
}

/// Shape of the flat state vector.
///
/// `total = occupancy_columns * occupancy_rows * timesteps + goal_features
/// + prev_action_features + extra_features`. Named index groups tag
/// feature subsets that repair algorithms need to find (e.g.
/// `"angular_velocity"` for the vibration features). Declared ranges are
/// optional physical bounds used to clip node subspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateLayout {
    pub occupancy_columns: usize,
    pub occupancy_rows: usize,
    pub timesteps: usize,
    pub goal_features: usize,
    pub prev_action_features: usize,
    pub extra_features: usize,
    #[serde(default)]
    pub named_index_groups: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub feature_ranges: Vec<FeatureRange>,
}

/// Which side of the robot an occupancy column covers. Column 0 is the
/// most negative bearing (rightmost); the middle column of an odd count
/// is straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnSide {
    Right,
    Center,
    Left,
}

impl StateLayout {
    /// Layout with 3 stacked occupancy snapshots, 2 polar goal features,
    /// and 1 previous-action feature.
    pub fn new(occupancy_columns: usize, occupancy_rows: usize, extra_features: usize) -> Self {
        Self {
            occupancy_columns,
            occupancy_rows,
            timesteps: 3,
            goal_features: 2,
            prev_action_features: 1,
            extra_features,
            named_index_groups: BTreeMap::new(),
            feature_ranges: Vec::new(),
        }
    }

    /// The full-scale layout: 10 columns x 7 rows x 3 timesteps + goal +
    /// previous action = 213 features.
    pub fn full_scale() -> Self {
        Self::new(10, 7, 0)
    }

    pub fn with_group(mut self, name: &str, indices: Vec<usize>) -> Self {
        self.named_index_groups.insert(name.to_string(), indices);
        self
    }

    pub fn with_range(mut self, start: usize, end: usize, min: f64, max: f64) -> Self {
        self.feature_ranges.push(FeatureRange { start, end, min, max });
        self
    }

    pub fn total_dim(&self) -> usize {
        self.occupancy_columns * self.occupancy_rows * self.timesteps
            + self.goal_features
            + self.prev_action_features
            + self.extra_features
    }

    pub fn occupancy_len(&self) -> usize {
        self.occupancy_columns * self.occupancy_rows * self.timesteps
    }

    pub fn cells_per_snapshot(&self) -> usize {
        self.occupancy_columns * self.occupancy_rows
    }

    /// Index of an occupancy cell. `timestep` 0 is the current snapshot;
    /// larger values are older.
    pub fn occ_index(&self, timestep: usize, row: usize, col: usize) -> usize {
        debug_assert!(timestep < self.timesteps && row < self.occupancy_rows && col < self.occupancy_columns);
        timestep * self.cells_per_snapshot() + row * self.occupancy_columns + col
    }

    pub fn goal_distance_index(&self) -> usize {
        self.occupancy_len()
    }

    pub fn goal_bearing_index(&self) -> usize {
        self.occupancy_len() + 1
    }

    pub fn prev_action_index(&self) -> usize {
        self.occupancy_len() + self.goal_features
    }

    pub fn extra_index(&self, i: usize) -> usize {
        debug_assert!(i < self.extra_features);
        self.occupancy_len() + self.goal_features + self.prev_action_features + i
    }

    pub fn group(&self, name: &str) -> Option<&[usize]> {
        self.named_index_groups.get(name).map(|v| v.as_slice())
    }

    pub fn column_side(&self, col: usize) -> ColumnSide {
        let c = self.occupancy_columns;
        if 2 * col + 1 == c {
            ColumnSide::Center
        } else if 2 * col + 1 < c {
            ColumnSide::Right
        } else {
            ColumnSide::Left
        }
    }

    /// Declared physical range of a feature; unbounded when undeclared.
    /// Later declarations win where blocks overlap.
    pub fn declared_range(&self, feature: usize) -> (f64, f64) {
        let mut range = (f64::NEG_INFINITY, f64::INFINITY);
        for r in &self.feature_ranges {
            if feature >= r.start && feature < r.end {
                range = (r.min, r.max);
            }
        }
        range
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.total_dim();
        if total == 0 {
            return Err(Error::Layout("layout has zero features".into()));
        }
        let reserved: Vec<usize> = (self.occupancy_len()..self.occupancy_len() + self.goal_features + self.prev_action_features).collect();
        for (name, indices) in &self.named_index_groups {
            for &i in indices {
                if i >= total {
                    return Err(Error::Layout(format!(
                        "group {name:?} index {i} out of range (total {total})"
                    )));
                }
                if reserved.contains(&i) {
                    return Err(Error::Layout(format!(
                        "group {name:?} overlaps goal/previous-action feature {i}"
                    )));
                }
            }
        }
        // groups must be pairwise disjoint
        let mut seen: BTreeMap<usize, &str> = BTreeMap::new();
        for (name, indices) in &self.named_index_groups {
            for &i in indices {
                if let Some(other) = seen.insert(i, name) {
                    return Err(Error::Layout(format!(
                        "groups {other:?} and {name:?} both claim feature {i}"
                    )));
                }
            }
        }
        for r in &self.feature_ranges {
            if r.start >= r.end || r.end > total || !(r.min <= r.max) {
                return Err(Error::Layout(format!(
                    "invalid feature range {}..{} [{}, {}]",
                    r.start, r.end, r.min, r.max
                )));
            }
        }
        Ok(())
    }

    /// Checks that a state conforms to this layout.
    pub fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.dim() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                got: state.dim(),
            });
        }
        Ok(())
    }
}

/// A flat numeric feature array conforming to some [`StateLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Exact bit-level equality, used to deduplicate observation sets.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
