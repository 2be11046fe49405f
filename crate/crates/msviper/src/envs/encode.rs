//! Radial occupancy-grid state encoding shared by all environments.
//!
//! Range readings are binned into `columns` equal-angle sectors spanning
//! `[-fov_half_angle, +fov_half_angle]` (column 0 is the rightmost) and
//! `rows` radial rings bounded by `ring_edges`. Cell values are occupied
//! fractions in [0, 1]. The encoder stacks the current snapshot with the
//! two prior ones (slot 0 = newest), then appends the polar goal, the
//! previous action id, and any extra features.

use serde::{Deserialize, Serialize};

use crate::state::{StateLayout, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyConfig {
    pub columns: usize,
    pub rows: usize,
    /// Sensor field of view extends this many radians to each side.
    pub fov_half_angle: f64,
    /// `rows + 1` ascending radial boundaries.
    pub ring_edges: Vec<f64>,
}

impl OccupancyConfig {
    /// Desk-scale default: 5 columns x 3 rows. Ring edges are in the
    /// caller's world units (grid cells or continuous meters).
    pub fn desk(ring_edges: Vec<f64>) -> Self {
        Self {
            columns: 5,
            rows: ring_edges.len() - 1,
            fov_half_angle: 2.0 * std::f64::consts::PI / 3.0,
            ring_edges,
        }
    }

    /// Full-scale configuration: 10 columns x 7 rows starting 0.1 from the
    /// robot with ring heights 0.2/0.2/0.2/0.3/1/1/1.
    pub fn full_scale() -> Self {
        Self {
            columns: 10,
            rows: 7,
            fov_half_angle: 2.0 * std::f64::consts::PI / 3.0,
            ring_edges: vec![0.1, 0.3, 0.5, 0.7, 1.0, 2.0, 3.0, 4.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns == 0 || self.rows == 0 {
            return Err(Error::Layout("occupancy grid needs at least one cell".into()));
        }
        if self.ring_edges.len() != self.rows + 1 {
            return Err(Error::Layout(format!(
                "ring_edges must have rows+1 = {} entries, got {}",
                self.rows + 1,
                self.ring_edges.len()
            )));
        }
        if !(self.fov_half_angle > 0.0) {
            return Err(Error::Layout("fov_half_angle must be positive".into()));
        }
        if self.ring_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Layout("ring_edges must ascend strictly".into()));
        }
        Ok(())
    }

    pub fn max_range(&self) -> f64 {
        *self.ring_edges.last().unwrap()
    }
}

/// One occupancy snapshot: `rows x columns` occupied fractions, row-major
/// (`ring * columns + column`).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub values: Vec<f64>,
}

impl OccupancyGrid {
    pub fn zeros(cfg: &OccupancyConfig) -> Self {
        Self {
            values: vec![0.0; cfg.rows * cfg.columns],
        }
    }

    pub fn cell(&self, cfg: &OccupancyConfig, row: usize, col: usize) -> f64 {
        self.values[row * cfg.columns + col]
    }

    pub fn add(&mut self, cfg: &OccupancyConfig, row: usize, col: usize, amount: f64) {
        let v = &mut self.values[row * cfg.columns + col];
        *v = (*v + amount).min(1.0);
    }
}

#[derive(Debug, Clone)]
pub struct OccupancyEncoder {
    pub cfg: OccupancyConfig,
}

impl OccupancyEncoder {
    pub fn new(cfg: OccupancyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    /// Sector index for a bearing, or `None` outside the field of view.
    /// The upper FOV edge maps into the last column.
    pub fn column_of(&self, bearing: f64) -> Option<usize> {
        let fov = self.cfg.fov_half_angle;
        if bearing < -fov || bearing > fov {
            return None;
        }
        let width = 2.0 * fov / self.cfg.columns as f64;
        let col = ((bearing + fov) / width) as usize;
        Some(col.min(self.cfg.columns - 1))
    }

    /// Ring index for a distance, or `None` beyond the sensor range.
    /// Returns closer than the innermost edge clamp into ring 0.
    pub fn ring_of(&self, distance: f64) -> Option<usize> {
        let edges = &self.cfg.ring_edges;
        if distance >= *edges.last().unwrap() {
            return None;
        }
        if distance < edges[0] {
            return Some(0);
        }
        Some(edges.windows(2).position(|w| distance >= w[0] && distance < w[1]).unwrap())
    }

    pub fn bin(&self, distance: f64, bearing: f64) -> Option<(usize, usize)> {
        Some((self.ring_of(distance)?, self.column_of(bearing)?))
    }

    /// Assembles the full state vector. `history` must hold the
    /// `timesteps - 1` prior snapshots, newest first.
    pub fn encode(
        &self,
        layout: &StateLayout,
        current: &OccupancyGrid,
        history: &[OccupancyGrid],
        goal_distance: f64,
        goal_bearing: f64,
        prev_action: f64,
        extras: &[f64],
    ) -> Result<StateVector> {
        if layout.occupancy_columns != self.cfg.columns || layout.occupancy_rows != self.cfg.rows {
            return Err(Error::Encoder("layout occupancy shape differs from encoder".into()));
        }
        if history.len() != layout.timesteps - 1 {
            return Err(Error::Encoder(format!(
                "history must hold {} snapshots, got {}",
                layout.timesteps - 1,
                history.len()
            )));
        }
        if extras.len() != layout.extra_features {
            return Err(Error::Encoder(format!(
                "expected {} extra features, got {}",
                layout.extra_features,
                extras.len()
            )));
        }
        let cells = layout.cells_per_snapshot();
        let mut values = Vec::with_capacity(layout.total_dim());
        for snapshot in std::iter::once(current).chain(history.iter()) {
            if snapshot.values.len() != cells {
                return Err(Error::Encoder("snapshot size differs from layout".into()));
            }
            values.extend_from_slice(&snapshot.values);
        }
        values.push(goal_distance);
        values.push(goal_bearing);
        values.push(prev_action);
        values.extend_from_slice(extras);
        Ok(StateVector::new(values))
    }
}

/// Rolling buffer of the prior encoded snapshots, newest first.
#[derive(Debug, Clone)]
pub struct SnapshotHistory {
    snapshots: Vec<OccupancyGrid>,
    capacity: usize,
}

impl SnapshotHistory {
    /// Initializes by replicating the first observation across all slots.
    pub fn filled_with(first: OccupancyGrid, capacity: usize) -> Self {
        Self {
            snapshots: vec![first; capacity],
            capacity,
        }
    }

    /// Shifts `newest` into slot 0, dropping the oldest snapshot.
    pub fn push(&mut self, newest: OccupancyGrid) {
        self.snapshots.insert(0, newest);
        self.snapshots.truncate(self.capacity);
    }

    pub fn as_slice(&self) -> &[OccupancyGrid] {
        &self.snapshots
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> OccupancyEncoder {
        OccupancyEncoder::new(OccupancyConfig::desk(vec![0.5, 1.5, 2.5, 3.5])).unwrap()
    }

    #[test]
    fn columns_partition_the_fov_with_column0_rightmost() {
        let e = enc();
        let fov = e.cfg.fov_half_angle;
        assert_eq!(e.column_of(-fov), Some(0));
        assert_eq!(e.column_of(fov), Some(4));
        assert_eq!(e.column_of(0.0), Some(2));
        assert_eq!(e.column_of(-fov - 0.01), None);
        assert_eq!(e.column_of(fov + 0.01), None);
    }

    #[test]
    fn rings_partition_the_range() {
        let e = enc();
        assert_eq!(e.ring_of(0.0), Some(0));
        assert_eq!(e.ring_of(0.6), Some(0));
        assert_eq!(e.ring_of(1.5), Some(1));
        assert_eq!(e.ring_of(3.49), Some(2));
        assert_eq!(e.ring_of(3.5), None);
    }

    #[test]
    fn encode_orders_snapshots_newest_first() {
        let e = enc();
        let layout = StateLayout::new(5, 3, 0);
        let mut current = OccupancyGrid::zeros(&e.cfg);
        current.add(&e.cfg, 0, 2, 1.0);
        let mut older = OccupancyGrid::zeros(&e.cfg);
        older.add(&e.cfg, 1, 0, 0.5);
        let history = vec![older.clone(), OccupancyGrid::zeros(&e.cfg)];
        let s = e.encode(&layout, &current, &history, 2.0, 0.25, -1.0, &[]).unwrap();
        assert_eq!(s.get(layout.occ_index(0, 0, 2)), 1.0);
        assert_eq!(s.get(layout.occ_index(1, 1, 0)), 0.5);
        assert_eq!(s.get(layout.occ_index(2, 1, 0)), 0.0);
        assert_eq!(s.get(layout.goal_distance_index()), 2.0);
        assert_eq!(s.get(layout.goal_bearing_index()), 0.25);
        assert_eq!(s.get(layout.prev_action_index()), -1.0);
    }

    #[test]
    fn encode_rejects_wrong_history_length() {
        let e = enc();
        let layout = StateLayout::new(5, 3, 0);
        let g = OccupancyGrid::zeros(&e.cfg);
        let err = e.encode(&layout, &g, &[g.clone()], 0.0, 0.0, -1.0, &[]);
        assert!(matches!(err, Err(Error::Encoder(_))));
    }

    #[test]
    fn history_push_shifts_slots_back() {
        let e = enc();
        let mut g1 = OccupancyGrid::zeros(&e.cfg);
        g1.add(&e.cfg, 0, 0, 1.0);
        let mut h = SnapshotHistory::filled_with(g1.clone(), 2);
        assert_eq!(h.as_slice()[0], g1);
        assert_eq!(h.as_slice()[1], g1);
        let g2 = OccupancyGrid::zeros(&e.cfg);
        h.push(g2.clone());
        assert_eq!(h.as_slice()[0], g2);
        assert_eq!(h.as_slice()[1], g1);
        let g3 = g1.clone();
        h.push(g3.clone());
        assert_eq!(h.as_slice()[0], g3);
        assert_eq!(h.as_slice()[1], g2);
    }

    #[test]
    fn wrap_angle_stays_in_half_open_pi_interval() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
    }
}
