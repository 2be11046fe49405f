//! Obstacle-free uneven-terrain world.
//!
//! The heightfield is a sum of three seeded sinusoid products; its
//! gradient is analytic. Each step the robot's roll and pitch angular
//! rates are proportional to the change in lateral/longitudinal slope
//! traversed this step, scaled by the distance actually moved, so faster
//! motion over rougher ground vibrates more and a stationary robot never
//! vibrates. The last four (roll, pitch) rate pairs are exposed in the
//! state's extra features, newest pair first.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encode::{wrap_angle, OccupancyEncoder, OccupancyGrid, SnapshotHistory};
use super::scenario::{EnvParams, ScenarioSpec};
use super::{Environment, StepOutcome, TerrainSignals};
use crate::state::{ActionCatalog, ActionId, StateLayout, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainParams {
    /// Half-size of the square world.
    pub extent: f64,
    /// Peak height of each sinusoid component; 0 means flat ground.
    pub roughness_amplitude: f64,
    /// Base spatial frequency of the undulations (radians per unit).
    pub roughness_frequency: f64,
    /// Scales slope change into angular rate.
    pub vibration_gain: f64,
    /// Angular rates are clamped into [-omega_cap, omega_cap].
    pub omega_cap: f64,
    pub goal_radius: f64,
    pub v_scale: f64,
    pub turn_scale: f64,
    pub start: Option<(f64, f64, f64)>,
    pub goal: Option<(f64, f64)>,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            extent: 5.0,
            roughness_amplitude: 0.25,
            roughness_frequency: 1.6,
            vibration_gain: 2.0,
            omega_cap: 0.8,
            goal_radius: 0.4,
            v_scale: 0.25,
            turn_scale: 0.5,
            start: None,
            goal: None,
        }
    }
}

impl TerrainParams {
    /// Four timesteps of (roll, pitch) rates.
    pub const EXTRA_FEATURES: usize = 8;
    pub const SIGNAL_TIMESTEPS: usize = 4;

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || !(self.v_scale > 0.0) || !(self.turn_scale > 0.0) {
            return Err(Error::Config("terrain scales must be positive".into()));
        }
        if !(self.roughness_amplitude >= 0.0) || !(self.omega_cap > 0.0) {
            return Err(Error::Config("terrain roughness/omega_cap invalid".into()));
        }
        Ok(())
    }
}

/// `z(x, y) = sum_i a_i sin(kx_i x + px_i) sin(ky_i y + py_i)`
#[derive(Debug, Clone)]
struct HeightField {
    components: Vec<(f64, f64, f64, f64, f64)>, // (a, kx, px, ky, py)
}

impl HeightField {
    fn from_seed(seed: u64, amplitude: f64, frequency: f64) -> Self {
        let mut rng = crate::seed::rng(seed, &[0xE2]);
        let components = (0..3)
            .map(|_| {
                let a = amplitude * rng.gen_range(0.6..1.0) / 3.0;
                let kx = frequency * rng.gen_range(0.5..1.5);
                let ky = frequency * rng.gen_range(0.5..1.5);
                let px = rng.gen_range(0.0..std::f64::consts::TAU);
                let py = rng.gen_range(0.0..std::f64::consts::TAU);
                (a, kx, px, ky, py)
            })
            .collect();
        Self { components }
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(a, kx, px, ky, py) in &self.components {
            gx += a * kx * (kx * x + px).cos() * (ky * y + py).sin();
            gy += a * ky * (kx * x + px).sin() * (ky * y + py).cos();
        }
        (gx, gy)
    }
}

pub struct TerrainEnv {
    spec: ScenarioSpec,
    params: TerrainParams,
    layout: StateLayout,
    actions: ActionCatalog,
    encoder: OccupancyEncoder,
    field: HeightField,
    pose: (f64, f64, f64),
    goal: (f64, f64),
    prev_slopes: (f64, f64), // (longitudinal, lateral)
    /// Newest first; length SIGNAL_TIMESTEPS.
    signals: Vec<TerrainSignals>,
    t: usize,
    done: bool,
    prev_action: f64,
    history: SnapshotHistory,
    state: StateVector,
}

impl TerrainEnv {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        let params = match &spec.params {
            EnvParams::Terrain(p) => p.clone(),
            _ => return Err(Error::Config("not a terrain scenario".into())),
        };
        let layout = spec.layout();
        layout.validate()?;
        let encoder = OccupancyEncoder::new(spec.occupancy.clone())?;
        let field = HeightField::from_seed(spec.rng_seed, params.roughness_amplitude, params.roughness_frequency);
        let mut env = Self {
            spec: spec.clone(),
            params,
            layout,
            actions: ActionCatalog::default_table(),
            encoder,
            field,
            pose: (0.0, 0.0, 0.0),
            goal: (0.0, 0.0),
            prev_slopes: (0.0, 0.0),
            signals: Vec::new(),
            t: 0,
            done: false,
            prev_action: -1.0,
            history: SnapshotHistory::filled_with(OccupancyGrid { values: vec![] }, 0),
            state: StateVector::new(vec![]),
        };
        env.reset()?;
        Ok(env)
    }

    /// Slope components at the current pose: along the heading and along
    /// its left perpendicular.
    fn slopes(&self) -> (f64, f64) {
        let (gx, gy) = self.field.gradient(self.pose.0, self.pose.1);
        let (c, s) = (self.pose.2.cos(), self.pose.2.sin());
        let longitudinal = gx * c + gy * s;
        let lateral = -gx * s + gy * c;
        (longitudinal, lateral)
    }

    fn goal_polar(&self) -> (f64, f64) {
        let dx = self.goal.0 - self.pose.0;
        let dy = self.goal.1 - self.pose.1;
        let d = dx.hypot(dy);
        let bearing = if d == 0.0 { 0.0 } else { wrap_angle(dy.atan2(dx) - self.pose.2) };
        (d, bearing)
    }

    fn extras(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(TerrainParams::EXTRA_FEATURES);
        for s in &self.signals {
            out.push(s.omega_r);
            out.push(s.omega_p);
        }
        out
    }

    fn encode_state(&self) -> Result<StateVector> {
        let (gd, gb) = self.goal_polar();
        self.encoder.encode(
            &self.layout,
            &OccupancyGrid::zeros(&self.encoder.cfg),
            self.history.as_slice(),
            gd,
            gb,
            self.prev_action,
            &self.extras(),
        )
    }
}

impl Environment for TerrainEnv {
    fn layout(&self) -> &StateLayout {
        &self.layout
    }

    fn actions(&self) -> &ActionCatalog {
        &self.actions
    }

    fn reset(&mut self) -> Result<StateVector> {
        let mut rng = crate::seed::rng(self.spec.rng_seed, &[0xE3]);
        let e = self.params.extent;
        let (start, heading) = match self.params.start {
            Some((x, y, th)) => ((x, y), th),
            None => (
                (rng.gen_range(-0.8 * e..0.8 * e), rng.gen_range(-0.8 * e..0.8 * e)),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ),
        };
        let goal = match self.params.goal {
            Some(g) => g,
            None => {
                let mut g = (rng.gen_range(-0.8 * e..0.8 * e), rng.gen_range(-0.8 * e..0.8 * e));
                for _ in 0..50 {
                    if (g.0 - start.0).hypot(g.1 - start.1) >= e {
                        break;
                    }
                    g = (rng.gen_range(-0.8 * e..0.8 * e), rng.gen_range(-0.8 * e..0.8 * e));
                }
                g
            }
        };
        self.pose = (start.0, start.1, heading);
        self.goal = goal;
        self.prev_slopes = self.slopes();
        self.signals = vec![TerrainSignals::default(); TerrainParams::SIGNAL_TIMESTEPS];
        self.t = 0;
        self.done = false;
        self.prev_action = -1.0;
        self.history = SnapshotHistory::filled_with(OccupancyGrid::zeros(&self.encoder.cfg), 2);
        self.state = self.encode_state()?;
        Ok(self.state.clone())
    }

    fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Lifecycle("step called after episode end".into()));
        }
        let spec = self.actions.get(action)?.to_owned();
        let (prev_gd, _) = self.goal_polar();
        let pre_move_snapshot = OccupancyGrid::zeros(&self.encoder.cfg);

        self.pose.2 = wrap_angle(self.pose.2 + spec.angular_velocity * self.params.turn_scale);
        let step_len = spec.linear_velocity * self.params.v_scale;
        let e = self.params.extent;
        self.pose.0 = (self.pose.0 + step_len * self.pose.2.cos()).clamp(-e, e);
        self.pose.1 = (self.pose.1 + step_len * self.pose.2.sin()).clamp(-e, e);

        let (lon, lat) = self.slopes();
        let cap = self.params.omega_cap;
        let gain = self.params.vibration_gain * step_len;
        let signal = TerrainSignals {
            omega_r: (gain * (lat - self.prev_slopes.1)).clamp(-cap, cap),
            omega_p: (gain * (lon - self.prev_slopes.0)).clamp(-cap, cap),
        };
        self.prev_slopes = (lon, lat);
        self.signals.insert(0, signal);
        self.signals.truncate(TerrainParams::SIGNAL_TIMESTEPS);

        let (new_gd, _) = self.goal_polar();
        let goal_reached = new_gd < self.params.goal_radius;
        self.t += 1;
        self.done = goal_reached || self.t >= self.spec.horizon;

        let r = &self.spec.reward;
        let mut reward = r.progress_scale * (prev_gd - new_gd) - r.step_cost;
        if goal_reached {
            reward += r.arrival_bonus;
        }

        self.history.push(pre_move_snapshot);
        self.prev_action = f64::from(action);
        self.state = self.encode_state()?;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward,
            done: self.done,
            collision: false,
            goal_reached,
            froze_this_step: self.actions.is_stop(action) && !goal_reached,
            terrain_signals: Some(signal),
        })
    }

    fn current_state(&self) -> &StateVector {
        &self.state
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
