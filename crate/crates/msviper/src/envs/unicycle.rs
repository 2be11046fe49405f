//! Continuous planar world with a unicycle robot and disc obstacles.
//!
//! Kinematics per step: heading turns by `angular * turn_scale` radians,
//! then the robot advances `linear * v_scale` along the new heading.
//! The world is a solid-walled square of half-extent `extent`; touching
//! a wall or an obstacle is a collision. Dynamic obstacles slide back and
//! forth between two fixed waypoints. Occupancy cells hold the fraction
//! of the column's angular span covered by obstacle discs (walls fill
//! rings beyond the boundary distance completely).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encode::{wrap_angle, OccupancyEncoder, OccupancyGrid, SnapshotHistory};
use super::scenario::{EnvParams, ScenarioSpec};
use super::{Environment, StepOutcome};
use crate::state::{ActionCatalog, ActionId, StateLayout, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnicycleParams {
    /// Half-size of the square world.
    pub extent: f64,
    pub n_obstacles: usize,
    /// Fraction of obstacles that patrol (rounded down).
    pub dynamic_fraction: f64,
    /// Patrol speed, world units per step.
    pub obstacle_speed: f64,
    pub obstacle_radius: f64,
    pub robot_radius: f64,
    pub goal_radius: f64,
    /// Distance travelled per step at linear velocity 1.
    pub v_scale: f64,
    /// Radians turned per step at angular velocity 1.
    pub turn_scale: f64,
    pub start: Option<(f64, f64, f64)>,
    pub goal: Option<(f64, f64)>,
    /// Clearance required between placed entities at reset.
    pub placement_margin: f64,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            extent: 4.0,
            n_obstacles: 0,
            dynamic_fraction: 0.0,
            obstacle_speed: 0.1,
            obstacle_radius: 0.45,
            robot_radius: 0.15,
            goal_radius: 0.4,
            v_scale: 0.25,
            turn_scale: 0.5,
            start: None,
            goal: None,
            placement_margin: 0.3,
        }
    }
}

impl UnicycleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || !(self.v_scale > 0.0) || !(self.turn_scale > 0.0) {
            return Err(Error::Config("unicycle scales must be positive".into()));
        }
        if !(self.goal_radius > 0.0) || !(self.obstacle_radius > 0.0) || !(self.robot_radius >= 0.0) {
            return Err(Error::Config("unicycle radii must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dynamic_fraction) {
            return Err(Error::Config("dynamic_fraction must be in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct DiscObstacle {
    a: (f64, f64),
    b: (f64, f64),
    speed: f64,
    /// Position along the a->b->a loop, in [0, 2*len).
    phase: f64,
}

impl DiscObstacle {
    fn fixed(p: (f64, f64)) -> Self {
        Self {
            a: p,
            b: p,
            speed: 0.0,
            phase: 0.0,
        }
    }

    fn position(&self) -> (f64, f64) {
        let len = ((self.b.0 - self.a.0).powi(2) + (self.b.1 - self.a.1).powi(2)).sqrt();
        if len == 0.0 || self.speed == 0.0 {
            return self.a;
        }
        let m = self.phase % (2.0 * len);
        let along = if m <= len { m } else { 2.0 * len - m };
        let t = along / len;
        (
            self.a.0 + t * (self.b.0 - self.a.0),
            self.a.1 + t * (self.b.1 - self.a.1),
        )
    }

    fn advance(&mut self) {
        let len = ((self.b.0 - self.a.0).powi(2) + (self.b.1 - self.a.1).powi(2)).sqrt();
        if len > 0.0 && self.speed > 0.0 {
            self.phase = (self.phase + self.speed) % (2.0 * len);
        }
    }
}

pub struct UnicycleEnv {
    spec: ScenarioSpec,
    params: UnicycleParams,
    layout: StateLayout,
    actions: ActionCatalog,
    encoder: OccupancyEncoder,
    pose: (f64, f64, f64),
    goal: (f64, f64),
    obstacles: Vec<DiscObstacle>,
    t: usize,
    done: bool,
    prev_action: f64,
    history: SnapshotHistory,
    state: StateVector,
}

impl UnicycleEnv {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        let params = match &spec.params {
            EnvParams::Unicycle(p) => p.clone(),
            _ => return Err(Error::Config("not a unicycle scenario".into())),
        };
        let layout = spec.layout();
        layout.validate()?;
        let encoder = OccupancyEncoder::new(spec.occupancy.clone())?;
        let mut env = Self {
            spec: spec.clone(),
            params,
            layout,
            actions: ActionCatalog::default_table(),
            encoder,
            pose: (0.0, 0.0, 0.0),
            goal: (0.0, 0.0),
            obstacles: Vec::new(),
            t: 0,
            done: false,
            prev_action: -1.0,
            history: SnapshotHistory::filled_with(OccupancyGrid { values: vec![] }, 0),
            state: StateVector::new(vec![]),
        };
        env.reset()?;
        Ok(env)
    }

    fn goal_polar(&self) -> (f64, f64) {
        let dx = self.goal.0 - self.pose.0;
        let dy = self.goal.1 - self.pose.1;
        let d = dx.hypot(dy);
        let bearing = if d == 0.0 { 0.0 } else { wrap_angle(dy.atan2(dx) - self.pose.2) };
        (d, bearing)
    }

    /// Distance from the robot to the wall along a world-frame direction.
    fn wall_distance(&self, direction: f64) -> f64 {
        let (x, y, _) = self.pose;
        let e = self.params.extent;
        let (c, s) = (direction.cos(), direction.sin());
        let mut best = f64::INFINITY;
        if c > 1e-12 {
            best = best.min((e - x) / c);
        }
        if c < -1e-12 {
            best = best.min((-e - x) / c);
        }
        if s > 1e-12 {
            best = best.min((e - y) / s);
        }
        if s < -1e-12 {
            best = best.min((-e - y) / s);
        }
        best.max(0.0)
    }

    fn snapshot(&self) -> OccupancyGrid {
        let cfg = &self.encoder.cfg;
        let mut grid = OccupancyGrid::zeros(cfg);
        let column_width = 2.0 * cfg.fov_half_angle / cfg.columns as f64;
        // Obstacle discs: angular overlap with each column, binned at the
        // ring containing the disc center.
        for obstacle in &self.obstacles {
            let p = obstacle.position();
            let dx = p.0 - self.pose.0;
            let dy = p.1 - self.pose.1;
            let d = dx.hypot(dy);
            let Some(ring) = self.encoder.ring_of(d) else { continue };
            let center = wrap_angle(dy.atan2(dx) - self.pose.2);
            let half = if d > self.params.obstacle_radius {
                (self.params.obstacle_radius / d).asin()
            } else {
                std::f64::consts::PI
            };
            for col in 0..cfg.columns {
                let lo = -cfg.fov_half_angle + col as f64 * column_width;
                let hi = lo + column_width;
                let overlap = (hi.min(center + half) - lo.max(center - half)).max(0.0);
                if overlap > 0.0 {
                    grid.add(cfg, ring, col, overlap / column_width);
                }
            }
        }
        // Walls are solid: every ring reaching past the boundary distance
        // along the column center is fully occupied.
        for col in 0..cfg.columns {
            let bearing = -cfg.fov_half_angle + (col as f64 + 0.5) * column_width;
            let wall = self.wall_distance(self.pose.2 + bearing);
            for ring in 0..cfg.rows {
                if cfg.ring_edges[ring + 1] > wall {
                    grid.add(cfg, ring, col, 1.0);
                }
            }
        }
        grid
    }

    fn encode_state(&self) -> Result<StateVector> {
        let (gd, gb) = self.goal_polar();
        self.encoder.encode(
            &self.layout,
            &self.snapshot(),
            self.history.as_slice(),
            gd,
            gb,
            self.prev_action,
            &[],
        )
    }

    fn hits_obstacle(&self, p: (f64, f64)) -> bool {
        let reach = self.params.robot_radius + self.params.obstacle_radius;
        self.obstacles.iter().any(|o| {
            let q = o.position();
            (q.0 - p.0).hypot(q.1 - p.1) < reach
        })
    }

    fn hits_wall(&self, p: (f64, f64)) -> bool {
        let e = self.params.extent - self.params.robot_radius;
        p.0.abs() > e || p.1.abs() > e
    }
}

impl Environment for UnicycleEnv {
    fn layout(&self) -> &StateLayout {
        &self.layout
    }

    fn actions(&self) -> &ActionCatalog {
        &self.actions
    }

    fn reset(&mut self) -> Result<StateVector> {
        let mut rng = crate::seed::rng(self.spec.rng_seed, &[0xE1]);
        let e = self.params.extent;
        let margin = self.params.placement_margin;
        let inner = e - self.params.obstacle_radius - margin;
        if inner <= 0.0 {
            return Err(Error::Placement("world too small for obstacles".into()));
        }

        let n_dynamic = (self.params.n_obstacles as f64 * self.params.dynamic_fraction) as usize;
        self.obstacles.clear();
        for i in 0..self.params.n_obstacles {
            let mut placed = false;
            for _ in 0..200 {
                let p = (rng.gen_range(-inner..inner), rng.gen_range(-inner..inner));
                let clear = self.obstacles.iter().all(|o| {
                    let q = o.a;
                    (q.0 - p.0).hypot(q.1 - p.1) > 2.0 * self.params.obstacle_radius + margin
                });
                if clear {
                    if i < n_dynamic {
                        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                        let span = rng.gen_range(0.8..1.6);
                        let b = (
                            (p.0 + span * angle.cos()).clamp(-inner, inner),
                            (p.1 + span * angle.sin()).clamp(-inner, inner),
                        );
                        self.obstacles.push(DiscObstacle {
                            a: p,
                            b,
                            speed: self.params.obstacle_speed,
                            phase: 0.0,
                        });
                    } else {
                        self.obstacles.push(DiscObstacle::fixed(p));
                    }
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Placement(format!(
                    "could not place obstacle {i} of {}",
                    self.params.n_obstacles
                )));
            }
        }

        let clearance = self.params.robot_radius + self.params.obstacle_radius + margin;
        let mut place_point = |fixed: Option<(f64, f64)>, obstacles: &[DiscObstacle]| -> Result<(f64, f64)> {
            if let Some(p) = fixed {
                return Ok(p);
            }
            for _ in 0..400 {
                let p = (
                    rng.gen_range(-(e - clearance)..(e - clearance)),
                    rng.gen_range(-(e - clearance)..(e - clearance)),
                );
                if obstacles.iter().all(|o| {
                    let q = o.position();
                    (q.0 - p.0).hypot(q.1 - p.1) > clearance
                }) {
                    return Ok(p);
                }
            }
            Err(Error::Placement("no clear pose found".into()))
        };
        let (start, goal, start_heading) = match (self.params.start, self.params.goal) {
            (Some((x, y, th)), g) => {
                let goal = place_point(g, &self.obstacles)?;
                ((x, y), goal, th)
            }
            (None, g) => {
                let start = place_point(None, &self.obstacles)?;
                let mut goal = place_point(g, &self.obstacles)?;
                for _ in 0..50 {
                    if (goal.0 - start.0).hypot(goal.1 - start.1) >= e {
                        break;
                    }
                    goal = place_point(g, &self.obstacles)?;
                    if g.is_some() {
                        break;
                    }
                }
                let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                (start, goal, heading)
            }
        };

        self.pose = (start.0, start.1, start_heading);
        self.goal = goal;
        self.t = 0;
        self.done = false;
        self.prev_action = -1.0;
        let first = self.snapshot();
        self.history = SnapshotHistory::filled_with(first, 2);
        self.state = self.encode_state()?;
        Ok(self.state.clone())
    }

    fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Lifecycle("step called after episode end".into()));
        }
        let spec = self.actions.get(action)?.to_owned();
        let (prev_gd, _) = self.goal_polar();
        let pre_move_snapshot = self.snapshot();

        for o in &mut self.obstacles {
            o.advance();
        }
        self.pose.2 = wrap_angle(self.pose.2 + spec.angular_velocity * self.params.turn_scale);
        let step_len = spec.linear_velocity * self.params.v_scale;
        let target = (
            self.pose.0 + step_len * self.pose.2.cos(),
            self.pose.1 + step_len * self.pose.2.sin(),
        );
        let mut collision = false;
        if self.hits_wall(target) || self.hits_obstacle(target) {
            collision = true;
        } else {
            self.pose.0 = target.0;
            self.pose.1 = target.1;
        }

        let (new_gd, _) = self.goal_polar();
        let goal_reached = !collision && new_gd < self.params.goal_radius;
        self.t += 1;
        self.done = collision || goal_reached || self.t >= self.spec.horizon;

        let r = &self.spec.reward;
        let mut reward = r.progress_scale * (prev_gd - new_gd) - r.step_cost;
        if goal_reached {
            reward += r.arrival_bonus;
        }
        if collision {
            reward -= r.collision_penalty;
        }

        self.history.push(pre_move_snapshot);
        self.prev_action = f64::from(action);
        self.state = self.encode_state()?;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward,
            done: self.done,
            collision,
            goal_reached,
            froze_this_step: self.actions.is_stop(action) && !goal_reached,
            terrain_signals: None,
        })
    }

    fn current_state(&self) -> &StateVector {
        &self.state
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::encode::OccupancyConfig;
    use crate::envs::RewardConfig;

    pub(crate) fn unicycle_spec(params: UnicycleParams, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            stage: 0,
            horizon: 80,
            rng_seed: seed,
            occupancy: OccupancyConfig::desk(vec![0.2, 0.9, 1.8, 3.0]),
            reward: RewardConfig::default(),
            params: EnvParams::Unicycle(params),
        }
    }

    #[test]
    fn deterministic_reset_and_rollout() {
        let spec = unicycle_spec(
            UnicycleParams {
                n_obstacles: 3,
                dynamic_fraction: 0.5,
                ..UnicycleParams::default()
            },
            17,
        );
        let run = |spec: &ScenarioSpec| {
            let mut env = UnicycleEnv::new(spec).unwrap();
            let mut trace = vec![env.reset().unwrap()];
            for a in [2, 4, 0, 2, 10, 9, 2, 3, 5, 1] {
                if env.is_done() {
                    break;
                }
                trace.push(env.step(a).unwrap().next_state);
            }
            trace
        };
        let t1 = run(&spec);
        let t2 = run(&spec);
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.iter().zip(&t2) {
            assert!(a.bits_eq(b));
        }
    }

    #[test]
    fn obstacle_dead_ahead_fills_center_column() {
        let spec = unicycle_spec(
            UnicycleParams {
                n_obstacles: 0,
                start: Some((0.0, 0.0, 0.0)),
                goal: Some((3.0, 0.0)),
                ..UnicycleParams::default()
            },
            5,
        );
        let mut env = UnicycleEnv::new(&spec).unwrap();
        env.obstacles = vec![DiscObstacle::fixed((0.6, 0.0))];
        env.reset_history_for_test();
        let layout = env.layout().clone();
        let s = env.current_state().clone();
        // Disc at distance 0.6 dead ahead: ring 0 spans [0.2, 0.9), column 2
        // is straight ahead, and the disc subtends more than the column.
        assert!(s.get(layout.occ_index(0, 0, 2)) > 0.9);
        assert_eq!(s.get(layout.occ_index(0, 1, 2)), 0.0);
    }

    impl UnicycleEnv {
        fn reset_history_for_test(&mut self) {
            let first = self.snapshot();
            self.history = SnapshotHistory::filled_with(first, 2);
            self.state = self.encode_state().unwrap();
        }
    }

    #[test]
    fn walls_appear_in_rings_reaching_past_the_boundary() {
        let spec = unicycle_spec(
            UnicycleParams {
                start: Some((2.9, 0.0, 0.0)), // facing +x, wall 1.1 ahead
                goal: Some((-3.0, 0.0)),
                ..UnicycleParams::default()
            },
            5,
        );
        let env = UnicycleEnv::new(&spec).unwrap();
        let layout = env.layout().clone();
        let s = env.current_state();
        // Wall at 1.1 along the center column: ring 0 ends at 0.9 (clear),
        // rings 1 and 2 reach past the wall (filled).
        assert_eq!(s.get(layout.occ_index(0, 0, 2)), 0.0);
        assert_eq!(s.get(layout.occ_index(0, 1, 2)), 1.0);
        assert_eq!(s.get(layout.occ_index(0, 2, 2)), 1.0);
    }

    #[test]
    fn driving_into_wall_collides() {
        let spec = unicycle_spec(
            UnicycleParams {
                start: Some((3.7, 0.0, 0.0)),
                goal: Some((-3.0, 0.0)),
                ..UnicycleParams::default()
            },
            6,
        );
        let mut env = UnicycleEnv::new(&spec).unwrap();
        let mut out = None;
        for _ in 0..4 {
            out = Some(env.step(2).unwrap());
            if env.is_done() {
                break;
            }
        }
        let out = out.unwrap();
        assert!(out.collision && out.done);
    }

    #[test]
    fn goal_straight_ahead_is_reachable_with_forward_steps() {
        let spec = unicycle_spec(
            UnicycleParams {
                start: Some((0.0, 0.0, 0.0)),
                goal: Some((1.5, 0.0)),
                ..UnicycleParams::default()
            },
            7,
        );
        let mut env = UnicycleEnv::new(&spec).unwrap();
        let mut reached = false;
        for _ in 0..10 {
            let out = env.step(2).unwrap();
            if out.goal_reached {
                reached = true;
                break;
            }
        }
        assert!(reached);
    }

    #[test]
    fn static_obstacle_snapshot_is_identical_across_timesteps_after_stops() {
        let spec = unicycle_spec(
            UnicycleParams {
                n_obstacles: 2,
                ..UnicycleParams::default()
            },
            8,
        );
        let mut env = UnicycleEnv::new(&spec).unwrap();
        env.reset().unwrap();
        env.step(3).unwrap();
        let s = env.step(3).unwrap().next_state;
        let layout = env.layout().clone();
        for row in 0..layout.occupancy_rows {
            for col in 0..layout.occupancy_columns {
                let v0 = s.get(layout.occ_index(0, row, col));
                assert_eq!(v0, s.get(layout.occ_index(1, row, col)));
                assert_eq!(v0, s.get(layout.occ_index(2, row, col)));
            }
        }
    }
}
