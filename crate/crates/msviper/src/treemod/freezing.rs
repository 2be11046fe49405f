//! Freezing detection and repair.
//!
//! A leaf can freeze the robot when it commands a stop action in a region
//! that admits a static obstacle configuration. Detection inspects each
//! stop leaf's clipped subspace: an occupancy cell counts as static when
//! the bounds of that cell's feature coincide across all timestep slices
//! (a region whose bounds coincide still contains motionless-obstacle
//! states even if it also contains moving ones); leaves with at most
//! `movement_cell_tolerance` non-coinciding cells are flagged. Setting the
//! tolerance to the cell count flags every stop leaf regardless of bounds.
//!
//! Repair swaps each flagged leaf's action for a pure rotation, turning
//! away from the side where obstacles are guaranteed: left when the
//! guaranteed-occupied cells sit mostly in right-side columns, right
//! otherwise (ties go right).

use crate::state::{ActionId, ColumnSide};
use crate::tree::{DecisionTreePolicy, NodeId};
use crate::{Error, Result};

use super::{describe_node, ChangeKind, NodeChange, RepairLog};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezingDetectConfig {
    /// The stop-action set `a_F`.
    pub stop_actions: Vec<ActionId>,
    /// Maximum number of occupancy cells allowed to violate the
    /// static-bounds condition (`m_A`).
    pub movement_cell_tolerance: usize,
}

impl Default for FreezingDetectConfig {
    fn default() -> Self {
        Self {
            stop_actions: vec![3],
            movement_cell_tolerance: 0,
        }
    }
}

/// Ids of leaves that can freeze the robot.
pub fn detect_freezing(tree: &DecisionTreePolicy, cfg: &FreezingDetectConfig) -> Result<Vec<NodeId>> {
    let layout = tree.layout();
    if layout.cells_per_snapshot() == 0 || layout.timesteps < 2 {
        return Err(Error::Layout(
            "freezing detection needs an occupancy block with stacked timesteps".into(),
        ));
    }
    let mut detected = Vec::new();
    for leaf in tree.leaf_ids() {
        let action = tree.node(leaf)?.action().expect("leaf");
        if !cfg.stop_actions.contains(&action) {
            continue;
        }
        let sub = tree.node_subspace_clipped(leaf)?;
        let mut violations = 0usize;
        for row in 0..layout.occupancy_rows {
            for col in 0..layout.occupancy_columns {
                let first = sub.interval(layout.occ_index(0, row, col));
                let coincide = (1..layout.timesteps)
                    .all(|t| sub.interval(layout.occ_index(t, row, col)) == first);
                if !coincide {
                    violations += 1;
                }
            }
        }
        if violations <= cfg.movement_cell_tolerance {
            detected.push(leaf);
        }
    }
    Ok(detected)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezingFixConfig {
    /// Pure right rotation (`a_R`).
    pub rotate_right: ActionId,
    /// Pure left rotation (`a_L`).
    pub rotate_left: ActionId,
    /// Cells whose lower bound exceeds this are guaranteed occupied.
    pub occupancy_threshold: f64,
}

impl Default for FreezingFixConfig {
    fn default() -> Self {
        Self {
            rotate_right: 1,
            rotate_left: 5,
            occupancy_threshold: 0.5,
        }
    }
}

/// Replaces each detected leaf's action with a rotation chosen by the
/// guaranteed-obstacle side. Structure is unchanged; `n_plus` counts only
/// leaves whose action actually changed.
pub fn fix_freezing(
    tree: &DecisionTreePolicy,
    detected: &[NodeId],
    cfg: &FreezingFixConfig,
) -> Result<(DecisionTreePolicy, RepairLog)> {
    let catalog = tree.actions();
    if !catalog.contains(cfg.rotate_right) || !catalog.contains(cfg.rotate_left) {
        return Err(Error::Config("rotation actions not in catalog".into()));
    }
    let layout = tree.layout().clone();
    let mut log = RepairLog::new("freezing_rate", detected, tree);
    let mut out = tree.clone();
    for &leaf in detected {
        let node = tree.node(leaf)?;
        let old_action = node
            .action()
            .ok_or_else(|| Error::Parameter(format!("detected node {leaf} is not a leaf")))?;
        let sub = tree.node_subspace_clipped(leaf)?;
        let mut right = 0usize;
        let mut left = 0usize;
        for row in 0..layout.occupancy_rows {
            for col in 0..layout.occupancy_columns {
                let guaranteed = (0..layout.timesteps)
                    .any(|t| sub.lower[layout.occ_index(t, row, col)] > cfg.occupancy_threshold);
                if guaranteed {
                    match layout.column_side(col) {
                        ColumnSide::Right => right += 1,
                        ColumnSide::Left => left += 1,
                        ColumnSide::Center => {}
                    }
                }
            }
        }
        let new_action = if right > left { cfg.rotate_left } else { cfg.rotate_right };
        if new_action != old_action {
            let before = describe_node(&out, leaf);
            out = out.with_leaf_action(leaf, new_action)?;
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
