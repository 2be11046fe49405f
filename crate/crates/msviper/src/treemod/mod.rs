//! Detection and repair of freezing, oscillation, and vibration behaviors
//! by direct tree surgery.
//!
//! Every repair is a pure function from a tree to a (new tree, log) pair;
//! the input tree is never mutated. Logs account for every node touched:
//! `n_plus` is the number of distinct nodes actually changed plus nodes
//! added, and always equals the node-record diff between the serialized
//! before/after trees.

mod freezing;
mod oscillation;
mod vibration;

pub use freezing::{detect_freezing, fix_freezing, FreezingDetectConfig, FreezingFixConfig};
pub use oscillation::{
    detect_oscillation, fix_oscillation, OscillationDetectConfig, OscillationObservations,
};
pub use vibration::{
    detect_vibration_m1, detect_vibration_m2, fix_vibration_m1, fix_vibration_m2,
    VibrationSpaceSpec,
};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::tree::{DecisionTreePolicy, NodeId, NodeKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    ActionChanged,
    ThresholdChanged,
    NodeSplitAdded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChange {
    pub node_id: NodeId,
    pub change_kind: ChangeKind,
    pub before: String,
    pub after: String,
}

/// Record of one repair: which nodes were flagged, what changed, and the
/// node counts feeding the efficiency metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairLog {
    /// Metric the modification targets (e.g. "freezing_rate").
    pub target_metric: String,
    pub detected_node_ids: Vec<NodeId>,
    pub changes: Vec<NodeChange>,
    /// Distinct nodes changed plus nodes added.
    pub n_plus: usize,
    /// Node count of the tree before repair.
    pub n_1: usize,
    /// Free-form notes, e.g. recorded fallbacks.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RepairLog {
    pub(crate) fn new(target_metric: &str, detected: &[NodeId], before: &DecisionTreePolicy) -> Self {
        Self {
            target_metric: target_metric.to_string(),
            detected_node_ids: detected.to_vec(),
            changes: Vec::new(),
            n_plus: 0,
            n_1: before.stats().node_count,
            notes: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, change: NodeChange) {
        self.changes.push(change);
    }

    /// Finalizes `n_plus` as the number of distinct node ids appearing in
    /// the change list.
    pub(crate) fn finish(mut self) -> Self {
        let mut ids: Vec<NodeId> = self.changes.iter().map(|c| c.node_id).collect();
        ids.sort_unstable();
        ids.dedup();
        self.n_plus = ids.len();
        self
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("repair log serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| Error::Format(format!("repair log: {e}")))
    }
}

pub(crate) fn describe_node(tree: &DecisionTreePolicy, id: NodeId) -> String {
    match tree.node(id).map(|n| n.kind.clone()) {
        Ok(NodeKind::Leaf { action }) => format!("leaf action {action}"),
        Ok(NodeKind::Branch {
            feature, threshold, ..
        }) => format!("branch f{feature} @ {threshold}"),
        Err(_) => "missing".to_string(),
    }
}

/// Number of node records that differ between two trees (changed ids plus
/// ids present on only one side). Used to cross-check `n_plus`.
pub fn node_diff_count(before: &DecisionTreePolicy, after: &DecisionTreePolicy) -> usize {
    let mut count = 0;
    for node in after.nodes() {
        match before.node(node.id) {
            Ok(old) => {
                if old.kind != node.kind {
                    count += 1;
                }
            }
            Err(_) => count += 1,
        }
    }
    for node in before.nodes() {
        if after.node(node.id).is_err() {
            count += 1;
        }
    }
    count
}
