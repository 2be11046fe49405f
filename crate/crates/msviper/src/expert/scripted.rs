//! Scripted controllers, including deliberately flawed ones.
//!
//! All variants share a potential-field core: steer toward the goal
//! bearing, pushed away from occupied occupancy columns. The turn action
//! is chosen by the size of the heading error; with the default bands and
//! the unicycle turn scale of 0.5 rad, the healthy controller's
//! correction per step never overshoots past the opposite deadband edge,
//! so it does not oscillate.
//!
//! Designed defects:
//! * `FreezingFlawed` emits Stop whenever any nearest-ring occupancy cell
//!   exceeds a threshold, reproducing the freezing-robot failure near
//!   static obstacles.
//! * `OscillatingFlawed` always corrects with full-magnitude turns. A
//!   full turn (0.5 rad) overshoots the 0.15 rad deadband from any error
//!   in (0.15, 0.35), so the commanded rotation direction alternates
//!   step after step.
//! * `TerrainSpeedy` always drives at full linear velocity and
//!   counter-steers hard whenever the current roll rate exceeds a
//!   trigger, maximizing vibration on rough ground.

use serde::{Deserialize, Serialize};

use crate::state::{ActionId, StateLayout, StateVector};
use crate::{Error, Expert, Policy, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedKind {
    PotentialField,
    FreezingFlawed,
    OscillatingFlawed,
    TerrainSpeedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedParams {
    /// Heading errors below this go straight.
    pub deadband: f64,
    /// Errors up to here use gentle turns (angular 0.4).
    pub gentle_band: f64,
    /// Errors up to here use full arcs (linear 1, angular 1); beyond,
    /// rotate in place.
    pub arc_band: f64,
    pub repulsion_gain: f64,
    /// Nearest-ring cell value that freezes the flawed controller.
    pub freeze_occupancy_threshold: f64,
    /// Current roll rate above this triggers the speedy counter-steer.
    pub terrain_trigger: f64,
    /// Bearing band for gentle steering in the terrain controller.
    pub terrain_gentle_band: f64,
}

impl Default for ScriptedParams {
    fn default() -> Self {
        Self {
            deadband: 0.15,
            gentle_band: 0.4,
            arc_band: 0.8,
            repulsion_gain: 0.6,
            freeze_occupancy_threshold: 0.5,
            terrain_trigger: 0.15,
            terrain_gentle_band: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    kind: ScriptedKind,
    layout: StateLayout,
    params: ScriptedParams,
    ring_mid_distances: Vec<f64>,
    column_bearings: Vec<f64>,
    fov_half_angle: f64,
}

impl ScriptedExpert {
    /// Builds a controller for a given layout. `ring_edges` and
    /// `fov_half_angle` must match the encoder that produces the states.
    pub fn new(
        kind: ScriptedKind,
        layout: StateLayout,
        ring_edges: &[f64],
        fov_half_angle: f64,
        params: ScriptedParams,
    ) -> Result<Self> {
        layout.validate()?;
        if ring_edges.len() != layout.occupancy_rows + 1 {
            return Err(Error::Config("ring_edges must match layout rows".into()));
        }
        if kind == ScriptedKind::TerrainSpeedy && layout.extra_features < 2 {
            return Err(Error::Config("terrain controller needs angular-rate extras".into()));
        }
        let ring_mid_distances = ring_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let cols = layout.occupancy_columns;
        let width = 2.0 * fov_half_angle / cols as f64;
        let column_bearings = (0..cols).map(|c| -fov_half_angle + (c as f64 + 0.5) * width).collect();
        Ok(Self {
            kind,
            layout,
            params,
            ring_mid_distances,
            column_bearings,
            fov_half_angle,
        })
    }

    pub fn kind(&self) -> ScriptedKind {
        self.kind
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    fn goal_bearing(&self, s: &StateVector) -> f64 {
        s.get(self.layout.goal_bearing_index())
    }

    /// Heading error after repulsion: positive means "turn left".
    fn heading_error(&self, s: &StateVector) -> f64 {
        let mut push = 0.0;
        for col in 0..self.layout.occupancy_columns {
            // Nearest occupied ring in the current snapshot.
            for ring in 0..self.layout.occupancy_rows {
                let v = s.get(self.layout.occ_index(0, ring, col));
                if v > 0.25 {
                    let side = if self.column_bearings[col] >= 0.0 { 1.0 } else { -1.0 };
                    let d2 = self.ring_mid_distances[ring].powi(2).max(0.01);
                    push -= side * self.params.repulsion_gain * v / d2;
                    break;
                }
            }
        }
        let e = self.goal_bearing(s) + push;
        e.clamp(-self.fov_half_angle, self.fov_half_angle)
    }

    fn steer(&self, e: f64) -> ActionId {
        let p = &self.params;
        let mag = e.abs();
        if mag <= p.deadband {
            2 // straight
        } else if mag <= p.gentle_band {
            if e > 0.0 {
                10
            } else {
                9
            } // (1, +-0.4)
        } else if mag <= p.arc_band {
            if e > 0.0 {
                4
            } else {
                0
            } // (1, +-1)
        } else if e > 0.0 {
            5
        } else {
            1
        } // rotate in place
    }

    fn steer_overshooting(&self, e: f64) -> ActionId {
        if e.abs() <= self.params.deadband {
            2
        } else if e > 0.0 {
            4
        } else {
            0
        }
    }

    fn near_ring_blocked(&self, s: &StateVector) -> bool {
        (0..self.layout.occupancy_columns)
            .any(|col| s.get(self.layout.occ_index(0, 0, col)) > self.params.freeze_occupancy_threshold)
    }

    fn steer_terrain(&self, s: &StateVector) -> ActionId {
        let roll_rate = s.get(self.layout.extra_index(0));
        if roll_rate > self.params.terrain_trigger {
            return 0; // hard counter-steer at full speed (1, -1)
        }
        let e = self.goal_bearing(s);
        let p = &self.params;
        if e.abs() <= p.deadband {
            2
        } else if e.abs() <= p.terrain_gentle_band {
            if e > 0.0 {
                10
            } else {
                9
            }
        } else if e > 0.0 {
            4
        } else {
            0
        }
    }
}

impl Policy for ScriptedExpert {
    fn act(&self, s: &StateVector) -> ActionId {
        match self.kind {
            ScriptedKind::PotentialField => self.steer(self.heading_error(s)),
            ScriptedKind::FreezingFlawed => {
                if self.near_ring_blocked(s) {
                    3
                } else {
                    self.steer(self.heading_error(s))
                }
            }
            ScriptedKind::OscillatingFlawed => self.steer_overshooting(self.heading_error(s)),
            ScriptedKind::TerrainSpeedy => self.steer_terrain(s),
        }
    }
}

impl Expert for ScriptedExpert {}

/// Convenience constructor matching a scenario's encoder geometry.
pub fn scripted_expert(
    kind: ScriptedKind,
    spec: &crate::envs::ScenarioSpec,
    params: ScriptedParams,
) -> Result<ScriptedExpert> {
    ScriptedExpert::new(
        kind,
        spec.layout(),
        &spec.occupancy.ring_edges,
        spec.occupancy.fov_half_angle,
        params,
    )
}
