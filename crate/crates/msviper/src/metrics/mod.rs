//! Behavior metrics, modification-efficiency metrics, and critical-state
//! coverage probabilities.

mod coverage;

pub use coverage::{coverage_probability, poisson_binomial_tail, CoverageMethod, CoverageParams};

use serde::{Deserialize, Serialize};

use crate::cart::PairSet;
use crate::envs::{run_episode, EpisodeLog, ScenarioSpec};
use crate::seed::{self, stream};
use crate::state::{ActionCatalog, ActionId, StateVector};
use crate::treemod::RepairLog;
use crate::{Error, Policy, Result};

/// Discounted 4-step vibration: `sum over t' of gamma^(t-t') (|roll| + |pitch|)`.
/// `history` holds exactly the last four (roll, pitch) rate pairs, oldest
/// first.
pub fn vibration_vb(history: &[(f64, f64)], gamma: f64) -> Result<f64> {
    if history.len() != 4 {
        return Err(Error::Parameter(format!(
            "vibration needs exactly 4 timesteps of history, got {}",
            history.len()
        )));
    }
    Ok(history
        .iter()
        .rev() // newest gets gamma^0
        .enumerate()
        .map(|(k, (r, p))| gamma.powi(k as i32) * (r.abs() + p.abs()))
        .sum())
}

/// Window predicate for oscillation: fires when the commanded angular
/// velocity signs strictly alternate at least `min_sign_flips` times
/// within the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationPredicate {
    pub window: usize,
    pub min_sign_flips: usize,
}

impl Default for OscillationPredicate {
    fn default() -> Self {
        Self {
            window: 6,
            min_sign_flips: 4,
        }
    }
}

impl OscillationPredicate {
    pub fn fires(&self, actions: &[ActionId], catalog: &ActionCatalog) -> bool {
        if actions.len() < 2 {
            return false;
        }
        let signs: Vec<i8> = actions.iter().map(|&a| catalog.angular_sign(a)).collect();
        let flips = signs
            .windows(2)
            .filter(|w| w[0] != 0 && w[1] != 0 && w[0] == -w[1])
            .count();
        flips >= self.min_sign_flips
    }
}

/// Both oscillation definitions over one action log:
/// 1. fraction of steps belonging to any window where the predicate fires;
/// 2. mean absolute change of the commanded angular velocity.
pub fn oscillation_metrics(
    actions: &[ActionId],
    catalog: &ActionCatalog,
    predicate: &OscillationPredicate,
) -> (f64, f64) {
    if actions.len() < 2 {
        return (0.0, 0.0);
    }
    let n = actions.len();
    let mut marked = vec![false; n];
    let w = predicate.window.max(2);
    for start in 0..n {
        let end = (start + w).min(n);
        if end - start < 2 {
            break;
        }
        if predicate.fires(&actions[start..end], catalog) {
            for m in marked.iter_mut().take(end).skip(start) {
                *m = true;
            }
        }
    }
    let pct = marked.iter().filter(|&&m| m).count() as f64 / n as f64;
    let omegas: Vec<f64> = actions
        .iter()
        .map(|&a| catalog.get(a).map(|s| s.angular_velocity).unwrap_or(0.0))
        .collect();
    let delta: f64 = omegas.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    (pct, delta)
}

/// Per-episode parameters for behavior measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    /// A freeze event is at least this many consecutive Stop steps while
    /// not at the goal.
    pub freeze_consecutive_stops: usize,
    pub oscillation: OscillationPredicate,
    /// Discount for the vibration sum.
    pub vibration_gamma: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            freeze_consecutive_stops: 10,
            oscillation: OscillationPredicate::default(),
            vibration_gamma: 0.9,
        }
    }
}

/// Aggregated behavior metrics over a batch of evaluation rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    pub trials: usize,
    pub seed: u64,
    pub freezing_rate: f64,
    pub c_osc_pct: f64,
    pub c_osc_delta: f64,
    pub v_b_mean: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_reward_per_timestep: f64,
}

fn episode_has_freeze(log: &EpisodeLog, catalog: &ActionCatalog, k: usize) -> bool {
    let mut run = 0usize;
    for step in &log.steps {
        if catalog.is_stop(step.action) && !step.goal_reached {
            run += 1;
            if run >= k {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

fn episode_vb_mean(log: &EpisodeLog, gamma: f64) -> Option<f64> {
    if log.steps.iter().any(|s| s.omega.is_none()) || log.steps.is_empty() {
        return None;
    }
    let omegas: Vec<(f64, f64)> = log.steps.iter().map(|s| s.omega.unwrap()).collect();
    let mut total = 0.0;
    for t in 0..omegas.len() {
        // Zero-pad before the first step.
        let mut hist = [(0.0, 0.0); 4];
        for (j, slot) in hist.iter_mut().enumerate() {
            let idx = t as i64 - (3 - j as i64);
            if idx >= 0 {
                *slot = omegas[idx as usize];
            }
        }
        total += vibration_vb(&hist, gamma).expect("fixed-size history");
    }
    Some(total / omegas.len() as f64)
}

/// Rolls `trials` episodes of `policy` on seed-derived variants of the
/// scenario and aggregates every behavior metric from the logs.
pub fn behavior_report(
    policy: &dyn Policy,
    spec: &ScenarioSpec,
    trials: usize,
    seed: u64,
    cfg: &BehaviorConfig,
) -> Result<BehaviorReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    let catalog = ActionCatalog::default_table();
    let mut freezes = 0usize;
    let mut successes = 0usize;
    let mut collisions = 0usize;
    let mut pct_sum = 0.0;
    let mut delta_sum = 0.0;
    let mut vb_sum = 0.0;
    let mut vb_count = 0usize;
    let mut reward_total = 0.0;
    let mut step_total = 0usize;
    for trial in 0..trials {
        let ep_spec = spec.with_seed(seed::derive(seed, &[stream::METRICS, trial as u64]));
        let log = run_episode(&ep_spec, policy, spec.horizon)?;
        if episode_has_freeze(&log, &catalog, cfg.freeze_consecutive_stops) {
            freezes += 1;
        }
        if log.goal_reached() {
            successes += 1;
        }
        if log.collided() {
            collisions += 1;
        }
        let (pct, delta) = oscillation_metrics(&log.actions(), &catalog, &cfg.oscillation);
        pct_sum += pct;
        delta_sum += delta;
        if let Some(vb) = episode_vb_mean(&log, cfg.vibration_gamma) {
            vb_sum += vb;
            vb_count += 1;
        }
        reward_total += log.total_reward();
        step_total += log.steps.len();
    }
    let t = trials as f64;
    Ok(BehaviorReport {
        trials,
        seed,
        freezing_rate: freezes as f64 / t,
        c_osc_pct: pct_sum / t,
        c_osc_delta: delta_sum / t,
        v_b_mean: if vb_count > 0 { vb_sum / vb_count as f64 } else { 0.0 },
        success_rate: successes as f64 / t,
        collision_rate: collisions as f64 / t,
        mean_reward_per_timestep: if step_total > 0 {
            reward_total / step_total as f64
        } else {
            0.0
        },
    })
}

/// Fraction of episodes containing a freeze event.
pub fn freezing_rate(
    policy: &dyn Policy,
    spec: &ScenarioSpec,
    trials: usize,
    consecutive_stops: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = BehaviorConfig {
        freeze_consecutive_stops: consecutive_stops,
        ..BehaviorConfig::default()
    };
    Ok(behavior_report(policy, spec, trials, seed, &cfg)?.freezing_rate)
}

/// Before/after efficiency of a tree modification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    pub m_1: f64,
    pub m_2: f64,
    pub n_1: usize,
    pub n_plus: usize,
    pub e_o: f64,
    pub e_r: f64,
}

/// `e_O = (|M2 - M1| / M1) / N_plus`, `e_R = (|M2 - M1| / M1) / (N_plus / N_1)`.
pub fn efficiency_from_counts(m_1: f64, m_2: f64, n_plus: usize, n_1: usize) -> Result<EfficiencyResult> {
    if !(m_1 > 0.0) {
        return Err(Error::Domain(format!("M_1 must be positive, got {m_1}")));
    }
    if n_plus == 0 {
        return Err(Error::Domain("N_plus must be positive".into()));
    }
    if n_1 == 0 {
        return Err(Error::Domain("N_1 must be positive".into()));
    }
    let improvement = (m_2 - m_1).abs() / m_1;
    let e_o = improvement / n_plus as f64;
    let e_r = improvement / (n_plus as f64 / n_1 as f64);
    let result = EfficiencyResult {
        m_1,
        m_2,
        n_1,
        n_plus,
        e_o,
        e_r,
    };
    debug_assert!(
        (result.e_o * n_plus as f64 - result.e_r * (n_plus as f64 / n_1 as f64)).abs() <= 1e-12 * improvement.max(1.0)
    );
    Ok(result)
}

/// Efficiency of a logged repair against a target metric measured before
/// and after.
pub fn efficiency(m_1: f64, m_2: f64, log: &RepairLog) -> Result<EfficiencyResult> {
    efficiency_from_counts(m_1, m_2, log.n_plus, log.n_1)
}

/// Fraction of critical states matched by at least one dataset pair within
/// `tolerance` (L-infinity); zero tolerance means exact coordinates.
pub fn empirical_critical_coverage(
    dataset: &PairSet,
    critical_states: &[StateVector],
    tolerance: f64,
) -> f64 {
    if critical_states.is_empty() {
        return 1.0;
    }
    let hit = |c: &StateVector| {
        dataset.iter().any(|(s, _, _)| {
            s.dim() == c.dim()
                && s.values()
                    .iter()
                    .zip(c.values())
                    .all(|(a, b)| (a - b).abs() <= tolerance)
        })
    };
    critical_states.iter().filter(|c| hit(c)).count() as f64 / critical_states.len() as f64
}
