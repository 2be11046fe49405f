//! Episode driver and trajectory logging.

use std::io::Write;
use std::path::Path;

use super::{Env, Environment, ScenarioSpec};
use crate::state::{ActionId, StateVector};
use crate::{Policy, Result};

/// One logged step: the state the policy saw and what happened next.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub state: StateVector,
    pub action: ActionId,
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub goal_reached: bool,
    pub froze: bool,
    pub omega: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn goal_reached(&self) -> bool {
        self.steps.last().map(|s| s.goal_reached).unwrap_or(false)
    }

    pub fn collided(&self) -> bool {
        self.steps.iter().any(|s| s.collision)
    }

    pub fn actions(&self) -> Vec<ActionId> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Runs one episode of at most `max_steps` steps of `policy` on a fresh
/// environment built from `spec`.
pub fn run_episode(spec: &ScenarioSpec, policy: &dyn Policy, max_steps: usize) -> Result<EpisodeLog> {
    let mut env = Env::new(spec)?;
    let mut state = env.reset()?;
    let mut log = EpisodeLog::default();
    for t in 0..max_steps {
        if env.is_done() {
            break;
        }
        let action = policy.act(&state);
        let out = env.step(action)?;
        log.steps.push(StepRecord {
            t,
            state,
            action,
            reward: out.reward,
            done: out.done,
            collision: out.collision,
            goal_reached: out.goal_reached,
            froze: out.froze_this_step,
            omega: out.terrain_signals.map(|s| (s.omega_r, s.omega_p)),
        });
        state = out.next_state;
    }
    Ok(log)
}

/// Writes episodes as CSV rows
/// `episode,t,f0,...,f{d-1},action,reward,done,collision,froze`.
pub fn write_trajectory_csv(path: &Path, episodes: &[EpisodeLog], dim: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = vec!["episode".into(), "t".into()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    header.extend(["action", "reward", "done", "collision", "froze"].map(String::from));
    writeln!(f, "{}", header.join(","))?;
    for (e, log) in episodes.iter().enumerate() {
        for s in &log.steps {
            let mut row: Vec<String> = vec![e.to_string(), s.t.to_string()];
            row.extend(s.state.values().iter().map(|v| format!("{v:.16e}")));
            row.push(s.action.to_string());
            row.push(format!("{:.16e}", s.reward));
            row.push(u8::from(s.done).to_string());
            row.push(u8::from(s.collision).to_string());
            row.push(u8::from(s.froze).to_string());
            writeln!(f, "{}", row.join(","))?;
        }
    }
    Ok(())
}
