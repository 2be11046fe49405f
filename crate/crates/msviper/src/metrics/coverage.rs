//! Exact critical-state coverage probabilities.
//!
//! Given per-state per-environment hit probabilities for one sampled
//! trajectory, a state is covered when at least one of the `m` sampled
//! trajectories visits it. Single-source sampling draws all `m` from the
//! final environment; multi-scenario sampling spreads them evenly across
//! the `n_E` environments. Coverage indicators are independent across
//! states, so the count of covered states is Poisson-binomial; its tail
//! is computed by an exact O(K^2) dynamic program.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMethod {
    /// All trajectories from the final environment.
    Viper,
    /// Trajectories split evenly across environments.
    Msviper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageParams {
    /// Total trajectories sampled.
    pub trajectories: usize,
    /// `hit_probabilities[k][e]`: chance one trajectory from environment
    /// `e` visits critical state `k`. The last column is the final
    /// environment.
    pub hit_probabilities: Vec<Vec<f64>>,
    /// Required covered fraction of the critical states.
    pub epsilon: f64,
}

impl CoverageParams {
    pub fn critical_states(&self) -> usize {
        self.hit_probabilities.len()
    }

    pub fn environments(&self) -> usize {
        self.hit_probabilities.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hit_probabilities.is_empty() {
            return Err(Error::Parameter("need at least one critical state".into()));
        }
        let n_e = self.environments();
        if n_e == 0 {
            return Err(Error::Parameter("need at least one environment".into()));
        }
        for row in &self.hit_probabilities {
            if row.len() != n_e {
                return Err(Error::Parameter("ragged hit-probability matrix".into()));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Parameter("hit probabilities must be in [0,1]".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Parameter("epsilon must be in [0,1]".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::Parameter("trajectories must be >= 1".into()));
        }
        Ok(())
    }
}

/// Exact `P(#successes >= threshold)` for independent Bernoulli trials
/// with the given probabilities.
pub fn poisson_binomial_tail(probabilities: &[f64], threshold: usize) -> f64 {
    let k = probabilities.len();
    if threshold == 0 {
        return 1.0;
    }
    if threshold > k {
        return 0.0;
    }
    // dp[j] = P(j successes among the first i trials)
    let mut dp = vec![0.0f64; k + 1];
    dp[0] = 1.0;
    for (i, &q) in probabilities.iter().enumerate() {
        for j in (0..=i + 1).rev() {
            let stay = dp[j] * (1.0 - q);
            let up = if j > 0 { dp[j - 1] * q } else { 0.0 };
            dp[j] = stay + up;
        }
    }
    dp[threshold..].iter().sum()
}

/// Per-state coverage probability under a sampling method.
fn per_state_coverage(params: &CoverageParams, method: CoverageMethod, k: usize) -> f64 {
    let row = &params.hit_probabilities[k];
    let n_e = row.len();
    let m = params.trajectories;
    match method {
        CoverageMethod::Viper => {
            let p_final = row[n_e - 1];
            1.0 - (1.0 - p_final).powi(m as i32)
        }
        CoverageMethod::Msviper => {
            let per_env = (m / n_e) as i32;
            let miss: f64 = row.iter().map(|p| (1.0 - p).powi(per_env)).product();
            1.0 - miss
        }
    }
}

/// Exact probability that at least a fraction `epsilon` of the critical
/// states is covered, i.e. `P(covered count >= ceil(epsilon * K))`.
///
/// For the multi-scenario method, `trajectories` must divide evenly across
/// the environments.
pub fn coverage_probability(params: &CoverageParams, method: CoverageMethod) -> Result<f64> {
    params.validate()?;
    if method == CoverageMethod::Msviper && params.trajectories % params.environments() != 0 {
        return Err(Error::Parameter(format!(
            "{} trajectories do not divide evenly across {} environments",
            params.trajectories,
            params.environments()
        )));
    }
    let k = params.critical_states();
    let qs: Vec<f64> = (0..k).map(|i| per_state_coverage(params, method, i)).collect();
    let threshold = (params.epsilon * k as f64).ceil() as usize;
    Ok(poisson_binomial_tail(&qs, threshold))
}
