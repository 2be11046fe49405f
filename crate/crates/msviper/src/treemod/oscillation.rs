//! Oscillation detection and repair.
//!
//! Detection rolls the tree policy and slides a window of recent
//! (state, action) pairs. When the window predicate fires, the leaves
//! reached by every window state are flagged and those states recorded as
//! oscillating observations for their leaves; otherwise the current state
//! is recorded as a clean observation for its leaf.
//!
//! Repair, per flagged leaf: if the leaf has no clean observations (or
//! replacement is forced) its action is swapped for the reduced-magnitude
//! counterpart; otherwise the leaf becomes a branch whose split best
//! separates oscillating from clean observations by Gini, with the clean
//! side keeping the old action and the oscillating side taking the
//! reduced one. When no split separates the sets at all, the repair falls
//! back to a plain action swap and notes it.

use std::collections::{BTreeMap, BTreeSet};

use crate::envs::{Env, Environment, ScenarioSpec};
use crate::metrics::OscillationPredicate;
use crate::seed::{self, stream};
use crate::state::StateVector;
use crate::tree::{DecisionTreePolicy, NodeId};
use crate::{Error, Policy, Result};

use super::{describe_node, ChangeKind, NodeChange, RepairLog};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationDetectConfig {
    /// Episodes to roll (`n_e`).
    pub episodes: usize,
    /// Window length (`L`).
    pub window: usize,
    pub predicate: OscillationPredicate,
    pub seed: u64,
}

impl Default for OscillationDetectConfig {
    fn default() -> Self {
        let predicate = OscillationPredicate::default();
        Self {
            episodes: 20,
            window: predicate.window,
            predicate,
            seed: 0,
        }
    }
}

/// Observations gathered while rolling the tree policy.
#[derive(Debug, Clone, Default)]
pub struct OscillationObservations {
    /// Flagged leaf ids.
    pub detected: BTreeSet<NodeId>,
    /// Per-leaf states seen inside firing windows.
    pub oscillating: BTreeMap<NodeId, Vec<StateVector>>,
    /// Per-leaf states seen outside firing windows.
    pub clean: BTreeMap<NodeId, Vec<StateVector>>,
}

fn push_unique(bucket: &mut Vec<StateVector>, state: &StateVector) {
    if !bucket.iter().any(|s| s.bits_eq(state)) {
        bucket.push(state.clone());
    }
}

/// Rolls the tree for `episodes` episodes on seed-derived scenario
/// variants and collects oscillation observations.
pub fn detect_oscillation(
    tree: &DecisionTreePolicy,
    spec: &ScenarioSpec,
    cfg: &OscillationDetectConfig,
) -> Result<OscillationObservations> {
    if cfg.window < 2 {
        return Err(Error::Parameter("oscillation window must be >= 2".into()));
    }
    let mut obs = OscillationObservations::default();
    let catalog = tree.actions().clone();
    for episode in 0..cfg.episodes {
        let ep_spec = spec.with_seed(seed::derive(cfg.seed, &[stream::DETECT, episode as u64]));
        let mut env = Env::new(&ep_spec)?;
        let mut state = env.reset()?;
        let mut window: Vec<(StateVector, crate::state::ActionId)> = Vec::new();
        while !env.is_done() {
            let action = tree.act(&state);
            window.push((state.clone(), action));
            if window.len() > cfg.window {
                window.remove(0);
            }
            let actions: Vec<crate::state::ActionId> = window.iter().map(|(_, a)| *a).collect();
            if cfg.predicate.fires(&actions, &catalog) {
                for (s, _) in &window {
                    let leaf = tree.leaf_for(s)?;
                    obs.detected.insert(leaf);
                    push_unique(obs.oscillating.entry(leaf).or_default(), s);
                }
            } else {
                let leaf = tree.leaf_for(&state)?;
                push_unique(obs.clean.entry(leaf).or_default(), &state);
            }
            state = env.step(action)?.next_state;
        }
    }
    Ok(obs)
}

/// Best single-feature split separating two labeled state sets by Gini.
fn best_separating_split(osc: &[StateVector], clean: &[StateVector]) -> Option<(usize, f64, bool)> {
    if osc.is_empty() || clean.is_empty() {
        return None;
    }
    let dim = osc[0].dim();
    let total = (osc.len() + clean.len()) as f64;
    let gini = |o: f64, c: f64| -> f64 {
        let n = o + c;
        if n == 0.0 {
            return 0.0;
        }
        1.0 - (o / n).powi(2) - (c / n).powi(2)
    };
    let parent = gini(osc.len() as f64, clean.len() as f64);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..dim {
        let mut values: Vec<(f64, bool)> = osc
            .iter()
            .map(|s| (s.get(f), true))
            .chain(clean.iter().map(|s| (s.get(f), false)))
            .collect();
        values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let total_osc = osc.len() as f64;
        let mut left_osc = 0.0;
        let mut left_n = 0.0;
        for i in 0..values.len() - 1 {
            left_n += 1.0;
            if values[i].1 {
                left_osc += 1.0;
            }
            if values[i].0 == values[i + 1].0 {
                continue;
            }
            let mid = 0.5 * (values[i].0 + values[i + 1].0);
            let threshold = if mid >= values[i + 1].0 { values[i].0 } else { mid };
            let right_n = total - left_n;
            let right_osc = total_osc - left_osc;
            let decrease = parent
                - (left_n * gini(left_osc, left_n - left_osc) + right_n * gini(right_osc, right_n - right_osc))
                    / total;
            let better = match best {
                None => true,
                Some((bd, _, _)) => decrease > bd,
            };
            if better {
                best = Some((decrease, f, threshold));
            }
        }
    }
    match best {
        Some((decrease, f, t)) if decrease > 0.0 => {
            // Oscillating side = the side holding the majority of the
            // oscillating states.
            let osc_left = osc.iter().filter(|s| s.get(f) <= t).count() * 2 > osc.len();
            Some((f, t, osc_left))
        }
        _ => None,
    }
}

/// Repairs flagged leaves by action replacement or leaf splitting.
pub fn fix_oscillation(
    tree: &DecisionTreePolicy,
    obs: &OscillationObservations,
    force_replace: bool,
) -> Result<(DecisionTreePolicy, RepairLog)> {
    let detected: Vec<NodeId> = obs.detected.iter().copied().collect();
    let mut log = RepairLog::new("c_osc_pct", &detected, tree);
    let mut out = tree.clone();
    let catalog = tree.actions().clone();
    for &leaf in &detected {
        let node = out.node(leaf)?;
        let old_action = node
            .action()
            .ok_or_else(|| Error::Parameter(format!("flagged node {leaf} is not a leaf")))?;
        let reduced = catalog.reduced_action(old_action)?;
        let clean = obs.clean.get(&leaf).map(|v| v.as_slice()).unwrap_or(&[]);
        let osc = obs.oscillating.get(&leaf).map(|v| v.as_slice()).unwrap_or(&[]);
        if force_replace || clean.is_empty() {
            if reduced != old_action {
                let before = describe_node(&out, leaf);
                out = out.with_leaf_action(leaf, reduced)?;
                log.record(NodeChange {
                    node_id: leaf,
                    change_kind: ChangeKind::ActionChanged,
                    before,
                    after: describe_node(&out, leaf),
                });
            }
            continue;
        }
        match best_separating_split(osc, clean) {
            Some((feature, threshold, osc_left)) => {
                let (left_action, right_action) = if osc_left {
                    (reduced, old_action)
                } else {
                    (old_action, reduced)
                };
                let before = describe_node(&out, leaf);
                let (next, left_id, right_id) =
                    out.with_leaf_split(leaf, feature, threshold, left_action, right_action)?;
                out = next;
                log.record(NodeChange {
                    node_id: leaf,
                    change_kind: ChangeKind::NodeSplitAdded,
                    before,
                    after: describe_node(&out, leaf),
                });
                for id in [left_id, right_id] {
                    log.record(NodeChange {
                        node_id: id,
                        change_kind: ChangeKind::NodeSplitAdded,
                        before: "added".to_string(),
                        after: describe_node(&out, id),
                    });
                }
            }
            None => {
                // No separating feature: fall back to action replacement.
                log.notes.push(format!("leaf {leaf}: no separating split, action replaced"));
                if reduced != old_action {
                    let before = describe_node(&out, leaf);
                    out = out.with_leaf_action(leaf, reduced)?;
                    log.record(NodeChange {
                        node_id: leaf,
                        change_kind: ChangeKind::ActionChanged,
                        before,
                        after: describe_node(&out, leaf),
                    });
                }
            }
        }
    }
    Ok((out, log.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvParams, OccupancyConfig, RewardConfig, UnicycleParams};
    use crate::state::ActionCatalog;
    use crate::tree::TreeNode;
    use crate::treemod::node_diff_count;

    fn spec(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            stage: 0,
            horizon: 60,
            rng_seed: seed,
            occupancy: OccupancyConfig::desk(vec![0.2, 0.9, 1.8, 3.0]),
            reward: RewardConfig::default(),
            params: EnvParams::Unicycle(UnicycleParams::default()),
        }
    }

    fn leaf_tree(action: u32, spec: &ScenarioSpec) -> DecisionTreePolicy {
        DecisionTreePolicy::new(
            spec.layout(),
            ActionCatalog::default_table(),
            0,
            vec![TreeNode::leaf(0, action)],
        )
        .unwrap()
    }

    #[test]
    fn constant_action_rollout_detects_nothing() {
        let spec = spec(1);
        let tree = leaf_tree(2, &spec);
        let obs = detect_oscillation(&tree, &spec, &OscillationDetectConfig::default()).unwrap();
        assert!(obs.detected.is_empty());
        assert!(obs.oscillating.is_empty());
        // Clean observations route to the only leaf.
        assert!(obs.clean.contains_key(&0));
    }

    #[test]
    fn zero_episodes_yield_empty_observations() {
        let spec = spec(2);
        let tree = leaf_tree(4, &spec);
        let cfg = OscillationDetectConfig {
            episodes: 0,
            ..OscillationDetectConfig::default()
        };
        let obs = detect_oscillation(&tree, &spec, &cfg).unwrap();
        assert!(obs.detected.is_empty() && obs.clean.is_empty() && obs.oscillating.is_empty());
    }

    /// A tree that alternates turn direction on the goal-bearing sign
    /// oscillates by construction: every flagged leaf must be reachable by
    /// a logged window state.
    #[test]
    fn alternating_tree_flags_reached_leaves_only() {
        let spec = spec(3);
        let layout = spec.layout();
        let bearing = layout.goal_bearing_index();
        let tree = DecisionTreePolicy::new(
            layout,
            ActionCatalog::default_table(),
            0,
            vec![
                TreeNode::branch(0, bearing, 0.0, 1, 2),
                TreeNode::leaf(1, 0), // bearing <= 0: hard right
                TreeNode::leaf(2, 4), // bearing > 0: hard left
            ],
        )
        .unwrap();
        let cfg = OscillationDetectConfig {
            episodes: 8,
            seed: 5,
            ..OscillationDetectConfig::default()
        };
        let obs = detect_oscillation(&tree, &spec, &cfg).unwrap();
        assert!(!obs.detected.is_empty());
        for leaf in &obs.detected {
            let states = &obs.oscillating[leaf];
            assert!(!states.is_empty());
            for s in states {
                assert_eq!(tree.leaf_for(s).unwrap(), *leaf);
            }
        }
    }

    #[test]
    fn replacement_swaps_action_without_structural_change() {
        let spec = spec(4);
        let tree = leaf_tree(4, &spec);
        let mut obs = OscillationObservations::default();
        obs.detected.insert(0);
        obs.oscillating
            .entry(0)
            .or_default()
            .push(StateVector::zeros(tree.layout().total_dim()));
        let (fixed, log) = fix_oscillation(&tree, &obs, false).unwrap();
        assert_eq!(fixed.stats().node_count, 1);
        assert_eq!(fixed.node(0).unwrap().action(), Some(14)); // (1,1) -> (0.4,0.4)
        assert_eq!(log.n_plus, 1);
        assert_eq!(node_diff_count(&tree, &fixed), 1);
    }

    #[test]
    fn separable_observations_grow_the_tree_by_two_nodes() {
        let spec = spec(5);
        let tree = leaf_tree(4, &spec);
        let dim = tree.layout().total_dim();
        let bearing = tree.layout().goal_bearing_index();
        let mk = |b: f64| {
            let mut v = vec![0.0; dim];
            v[bearing] = b;
            StateVector::new(v)
        };
        let mut obs = OscillationObservations::default();
        obs.detected.insert(0);
        obs.oscillating.insert(0, vec![mk(0.2), mk(0.25), mk(0.3)]);
        obs.clean.insert(0, vec![mk(0.6), mk(0.8)]);
        let (fixed, log) = fix_oscillation(&tree, &obs, false).unwrap();
        assert_eq!(fixed.stats().node_count, tree.stats().node_count + 2);
        assert_eq!(log.n_plus, 3); // converted leaf + two added leaves
        assert_eq!(node_diff_count(&tree, &fixed), 3);
        // Oscillating states (bearing <= ~0.45) get the reduced action.
        assert_eq!(fixed.predict(&mk(0.25)).unwrap(), 14);
        assert_eq!(fixed.predict(&mk(0.7)).unwrap(), 4);
    }

    #[test]
    fn force_replace_skips_splitting() {
        let spec = spec(6);
        let tree = leaf_tree(0, &spec);
        let dim = tree.layout().total_dim();
        let mut obs = OscillationObservations::default();
        obs.detected.insert(0);
        obs.oscillating.insert(0, vec![StateVector::zeros(dim)]);
        obs.clean.insert(0, vec![StateVector::new(vec![1.0; dim])]);
        let (fixed, log) = fix_oscillation(&tree, &obs, true).unwrap();
        assert_eq!(fixed.stats().node_count, 1);
        assert_eq!(fixed.node(0).unwrap().action(), Some(13));
        assert_eq!(log.n_plus, 1);
    }

    #[test]
    fn identical_state_sets_fall_back_to_replacement() {
        let spec = spec(7);
        let tree = leaf_tree(4, &spec);
        let dim = tree.layout().total_dim();
        let s = StateVector::zeros(dim);
        let mut obs = OscillationObservations::default();
        obs.detected.insert(0);
        obs.oscillating.insert(0, vec![s.clone()]);
        obs.clean.insert(0, vec![s]);
        let (fixed, log) = fix_oscillation(&tree, &obs, false).unwrap();
        assert_eq!(fixed.stats().node_count, 1);
        assert_eq!(fixed.node(0).unwrap().action(), Some(14));
        assert!(!log.notes.is_empty());
        assert_eq!(log.n_plus, 1);
    }
}
