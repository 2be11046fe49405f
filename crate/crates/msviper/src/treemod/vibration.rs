//! Vibration detection and repair.
//!
//! Method 1 flags every branch splitting on an angular-velocity feature
//! and nudges those thresholds by an increment `h` (a hyperparameter
//! meant to be swept).
//!
//! Method 2 works geometrically. The vibration space is the region where
//! the discounted 4-step sum of |roll| + |pitch| rates stays at or below
//! a threshold `V_b`; its boundary is the level surface of the weighted
//! sum `W(x) = sum_j w_j |x_j|` over the angular-velocity features, with
//! weights `gamma^t` per timestep. For an axis-aligned node box, `W`
//! restricted to the box surface spans exactly
//! `[min over faces of W, max over box of W]` (the maximum of a convex
//! function sits at a vertex), so the box surface crosses the level
//! surface iff that interval contains `V_b`. Interval arithmetic gives
//! both ends exactly. The descent from the root stops at intersecting
//! nodes, so the result never contains both a node and its descendant.
//! Detected nodes have every descendant leaf's action remapped through a
//! contraction map.

use std::collections::BTreeMap;

use crate::state::ActionId;
use crate::tree::{DecisionTreePolicy, NodeId, NodeKind};
use crate::{Error, Result};

use super::{describe_node, ChangeKind, NodeChange, RepairLog};

/// Branch nodes splitting on any feature of the angular-velocity group.
pub fn detect_vibration_m1(tree: &DecisionTreePolicy, group: &[usize]) -> Result<Vec<NodeId>> {
    if group.is_empty() {
        return Err(Error::Layout("angular-velocity feature group is empty".into()));
    }
    let dim = tree.layout().total_dim();
    if group.iter().any(|&i| i >= dim) {
        return Err(Error::Layout("angular-velocity group index out of range".into()));
    }
    let mut out: Vec<NodeId> = tree
        .nodes()
        .filter(|n| match n.kind {
            NodeKind::Branch { feature, .. } => group.contains(&feature),
            NodeKind::Leaf { .. } => false,
        })
        .map(|n| n.id)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Adds `h` to each detected branch's threshold. `n_plus` counts only
/// thresholds that actually moved (`h = 0` changes nothing).
pub fn fix_vibration_m1(
    tree: &DecisionTreePolicy,
    detected: &[NodeId],
    h: f64,
) -> Result<(DecisionTreePolicy, RepairLog)> {
    if !h.is_finite() {
        return Err(Error::Parameter("threshold increment must be finite".into()));
    }
    let mut log = RepairLog::new("v_b_mean", detected, tree);
    let mut out = tree.clone();
    for &id in detected {
        match tree.node(id)?.kind {
            NodeKind::Leaf { .. } => {
                return Err(Error::Parameter(format!("detected node {id} is not a branch")))
            }
            NodeKind::Branch { threshold, .. } => {
                let new_threshold = threshold + h;
                if new_threshold != threshold {
                    let before = describe_node(&out, id);
                    out = out.with_threshold(id, new_threshold)?;
                    log.record(NodeChange {
                        node_id: id,
                        change_kind: ChangeKind::ThresholdChanged,
                        before,
                        after: describe_node(&out, id),
                    });
                }
            }
        }
    }
    Ok((out, log.finish()))
}

/// The vibration space: states whose discounted angular-rate sum is at
/// most `threshold`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationSpaceSpec {
    /// `V_b`.
    pub threshold: f64,
    /// Discount per timestep, in [0, 1].
    pub gamma: f64,
    /// Angular-velocity feature indices, newest timestep first, as
    /// (roll, pitch) pairs.
    pub feature_indices: Vec<usize>,
}

impl VibrationSpaceSpec {
    /// Derives the feature set from the layout's `"angular_velocity"` group.
    pub fn from_layout(layout: &crate::state::StateLayout, threshold: f64, gamma: f64) -> Result<Self> {
        let group = layout
            .group("angular_velocity")
            .ok_or_else(|| Error::Layout("layout declares no angular_velocity group".into()))?;
        Ok(Self {
            threshold,
            gamma,
            feature_indices: group.to_vec(),
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.feature_indices.is_empty() || self.feature_indices.len() % 2 != 0 {
            return Err(Error::Layout(
                "vibration features must be nonempty (roll, pitch) pairs".into(),
            ));
        }
        if self.feature_indices.iter().any(|&i| i >= dim) {
            return Err(Error::Layout("vibration feature index out of range".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !self.threshold.is_finite() {
            return Err(Error::Parameter("invalid vibration gamma or threshold".into()));
        }
        Ok(())
    }

    /// Discount weight of each listed feature.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.feature_indices.len())
            .map(|j| self.gamma.powi((j / 2) as i32))
            .collect()
    }
}

/// `W` bounds of one box restricted to the vibration features:
/// (minimum over the box, minimum over the box surface, maximum over the
/// box). `None` when the box has no surface (no finite bound) or is empty.
fn surface_w_range(
    spec: &VibrationSpaceSpec,
    weights: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<(f64, f64)> {
    let k = spec.feature_indices.len();
    let mut w_min = 0.0;
    let mut w_max: f64 = 0.0;
    let mut mins = Vec::with_capacity(k);
    for (j, &feat) in spec.feature_indices.iter().enumerate() {
        let (lo, hi) = (lower[feat], upper[feat]);
        if lo > hi {
            return None; // empty region
        }
        let abs_min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
        let abs_max = lo.abs().max(hi.abs()); // may be infinite
        mins.push(abs_min);
        w_min += weights[j] * abs_min;
        w_max += weights[j] * abs_max;
    }
    // Minimum of W over the box surface: fix one dimension at a finite
    // bound, leave the rest at their per-dimension minima.
    let mut surface_min = f64::INFINITY;
    for (j, &feat) in spec.feature_indices.iter().enumerate() {
        for b in [lower[feat], upper[feat]] {
            if b.is_finite() {
                surface_min = surface_min.min(w_min - weights[j] * mins[j] + weights[j] * b.abs());
            }
        }
    }
    if surface_min.is_finite() {
        Some((surface_min, w_max))
    } else {
        None // unbounded box in every vibration dimension: no surface
    }
}

/// Breadth-limited descent flagging nodes whose box surface crosses the
/// vibration-space boundary; flagged nodes are not descended.
pub fn detect_vibration_m2(tree: &DecisionTreePolicy, spec: &VibrationSpaceSpec) -> Result<Vec<NodeId>> {
    spec.validate(tree.layout().total_dim())?;
    let weights = spec.weights();
    let mut detected = Vec::new();
    let mut frontier = vec![tree.root_id()];
    while let Some(id) = frontier.pop() {
        let sub = tree.node_subspace_clipped(id)?;
        let intersects = match surface_w_range(spec, &weights, &sub.lower, &sub.upper) {
            Some((surface_min, w_max)) => surface_min <= spec.threshold && spec.threshold <= w_max,
            None => false,
        };
        if intersects {
            detected.push(id);
            continue;
        }
        if let NodeKind::Branch { left, right, .. } = tree.node(id)?.kind {
            frontier.push(left);
            frontier.push(right);
        }
    }
    detected.sort_unstable();
    Ok(detected)
}

/// Remaps the action of every descendant leaf of each detected node
/// through `map`. Errors list every encountered action outside the map's
/// domain. `n_plus` counts distinct leaves whose action actually changed.
pub fn fix_vibration_m2(
    tree: &DecisionTreePolicy,
    detected: &[NodeId],
    map: &BTreeMap<ActionId, ActionId>,
) -> Result<(DecisionTreePolicy, RepairLog)> {
    let mut leaves = Vec::new();
    for &id in detected {
        leaves.extend(tree.descendant_leaves(id)?);
    }
    leaves.sort_unstable();
    leaves.dedup();
    let mut missing = Vec::new();
    for &leaf in &leaves {
        let action = tree.node(leaf)?.action().expect("descendant_leaves returns leaves");
        if !map.contains_key(&action) {
            missing.push(action);
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::Config(format!(
            "contraction map missing actions {missing:?}"
        )));
    }
    let mut log = RepairLog::new("v_b_mean", detected, tree);
    let mut out = tree.clone();
    for &leaf in &leaves {
        let action = out.node(leaf)?.action().expect("leaf");
        let target = map[&action];
        if target != action {
            let before = describe_node(&out, leaf);
            out = out.with_leaf_action(leaf, target)?;
            log.record(NodeChange {
                node_id: leaf,
                change_kind: ChangeKind::ActionChanged,
                before,
                after: describe_node(&out, leaf),
            });
        }
    }
    Ok((out, log.finish()))
}
