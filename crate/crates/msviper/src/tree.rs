//! Binary threshold-split decision trees over state features.
//!
//! Prediction descends from the root: at a branch, states with
//! `value <= threshold` go left. Trees are immutable after construction;
//! repairs build a new tree value. Node ids are stable across
//! serialization round-trips so repair logs stay meaningful.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::state::{ActionCatalog, ActionId, StateLayout, StateVector};
use crate::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Branch {
        feature: usize,
        threshold: f64,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        action: ActionId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn branch(id: NodeId, feature: usize, threshold: f64, left: NodeId, right: NodeId) -> Self {
        Self {
            id,
            kind: NodeKind::Branch {
                feature,
                threshold,
                left,
                right,
            },
        }
    }

    pub fn leaf(id: NodeId, action: ActionId) -> Self {
        Self {
            id,
            kind: NodeKind::Leaf { action },
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn action(&self) -> Option<ActionId> {
        match self.kind {
            NodeKind::Leaf { action } => Some(action),
            NodeKind::Branch { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub leaf_count: usize,
    pub depth: usize,
}

/// Axis-aligned feature box implied by a root-to-node path.
///
/// Bounds follow the `<=`-left split convention: a left edge tightens the
/// upper bound inclusively, a right edge tightens the lower bound
/// exclusively. [`NodeSubspace::contains`] therefore tests
/// `lower < v <= upper` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSubspace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NodeSubspace {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, state: &StateVector) -> bool {
        state.dim() == self.dim()
            && state
                .values()
                .iter()
                .enumerate()
                .all(|(i, &v)| v > self.lower[i] && v <= self.upper[i])
    }

    /// Interval of one feature as a closed `[lo, hi]` pair.
    pub fn interval(&self, feature: usize) -> (f64, f64) {
        (self.lower[feature], self.upper[feature])
    }
}

/// A decision-tree policy: a state layout, an action catalog, and a valid
/// single-rooted binary tree of threshold splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTreePolicy {
    layout: StateLayout,
    actions: ActionCatalog,
    root_id: NodeId,
    nodes: BTreeMap<NodeId, TreeNode>,
    /// child -> (parent, went_left)
    parents: BTreeMap<NodeId, (NodeId, bool)>,
}

impl DecisionTreePolicy {
    pub fn new(
        layout: StateLayout,
        actions: ActionCatalog,
        root_id: NodeId,
        nodes: Vec<TreeNode>,
    ) -> Result<Self> {
        layout.validate()?;
        let mut map = BTreeMap::new();
        for n in nodes {
            if map.insert(n.id, n).is_some() {
                return Err(Error::Format("duplicate node id".into()));
            }
        }
        let tree = Self {
            layout,
            actions,
            root_id,
            parents: BTreeMap::new(),
            nodes: map,
        };
        tree.validated()
    }

    /// Recomputes the parent map and checks structural invariants: every
    /// node reachable exactly once from the single root, children exist,
    /// branch features in range, leaf actions in the catalog.
    fn validated(mut self) -> Result<Self> {
        if !self.nodes.contains_key(&self.root_id) {
            return Err(Error::UnknownNode(self.root_id));
        }
        let dim = self.layout.total_dim();
        let mut parents = BTreeMap::new();
        let mut visited = BTreeSet::new();
        let mut stack = vec![self.root_id];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                return Err(Error::Format(format!("node {id} reached twice; tree must be acyclic")));
            }
            let node = self.nodes.get(&id).ok_or(Error::UnknownNode(id))?;
            match node.kind {
                NodeKind::Leaf { action } => {
                    if !self.actions.contains(action) {
                        return Err(Error::Format(format!("leaf {id} has unknown action {action}")));
                    }
                }
                NodeKind::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= dim {
                        return Err(Error::Format(format!("branch {id} splits feature {feature} >= dim {dim}")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Format(format!("branch {id} has non-finite threshold")));
                    }
                    if left == right {
                        return Err(Error::Format(format!("branch {id} has identical children")));
                    }
                    for (child, went_left) in [(left, true), (right, false)] {
                        if parents.insert(child, (id, went_left)).is_some() {
                            return Err(Error::Format(format!("node {child} has two parents")));
                        }
                        stack.push(child);
                    }
                }
            }
        }
        if visited.len() != self.nodes.len() {
            return Err(Error::Format("tree contains nodes unreachable from the root".into()));
        }
        self.parents = parents;
        Ok(self)
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn actions(&self) -> &ActionCatalog {
        &self.actions
    }

    pub fn root_id(&self) -> NodeId {
        self.root_id
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(&id).ok_or(Error::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    /// Leaf reached by descending with the `<=`-left rule.
    pub fn leaf_for(&self, state: &StateVector) -> Result<NodeId> {
        self.layout.check_state(state)?;
        let mut id = self.root_id;
        loop {
            match self.node(id)?.kind {
                NodeKind::Leaf { .. } => return Ok(id),
                NodeKind::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if state.get(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    /// Action of the unique leaf the state reaches.
    pub fn predict(&self, state: &StateVector) -> Result<ActionId> {
        let leaf = self.leaf_for(state)?;
        Ok(self.node(leaf)?.action().expect("leaf_for returns a leaf"))
    }

    /// Intersection of the half-spaces along the root-to-node path, with
    /// all unconstrained bounds infinite.
    pub fn node_subspace(&self, id: NodeId) -> Result<NodeSubspace> {
        self.node(id)?;
        let mut sub = NodeSubspace::unbounded(self.layout.total_dim());
        let mut child = id;
        while let Some(&(parent, went_left)) = self.parents.get(&child) {
            if let NodeKind::Branch { feature, threshold, .. } = self.node(parent)?.kind {
                if went_left {
                    sub.upper[feature] = sub.upper[feature].min(threshold);
                } else {
                    sub.lower[feature] = sub.lower[feature].max(threshold);
                }
            }
            child = parent;
        }
        Ok(sub)
    }

    /// Node subspace clipped to the layout's declared feature ranges.
    /// Repair algorithms use this so unconstrained features still carry
    /// physical bounds.
    pub fn node_subspace_clipped(&self, id: NodeId) -> Result<NodeSubspace> {
        let mut sub = self.node_subspace(id)?;
        for i in 0..sub.dim() {
            let (lo, hi) = self.layout.declared_range(i);
            sub.lower[i] = sub.lower[i].max(lo);
            sub.upper[i] = sub.upper[i].min(hi);
        }
        Ok(sub)
    }

    pub fn stats(&self) -> TreeStats {
        let mut leaf_count = 0;
        let mut max_depth = 0;
        let mut stack = vec![(self.root_id, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            max_depth = max_depth.max(depth);
            match self.nodes[&id].kind {
                NodeKind::Leaf { .. } => leaf_count += 1,
                NodeKind::Branch { left, right, .. } => {
                    stack.push((left, depth + 1));
                    stack.push((right, depth + 1));
                }
            }
        }
        TreeStats {
            node_count: self.nodes.len(),
            leaf_count,
            depth: max_depth,
        }
    }

    pub fn next_free_id(&self) -> NodeId {
        self.nodes.keys().next_back().map(|&id| id + 1).unwrap_or(0)
    }

    /// All leaf ids in the subtree rooted at `id` (the node itself when it
    /// is a leaf).
    pub fn descendant_leaves(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.node(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[&n].kind {
                NodeKind::Leaf { .. } => out.push(n),
                NodeKind::Branch { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// New tree with one leaf's action replaced.
    pub fn with_leaf_action(&self, id: NodeId, action: ActionId) -> Result<Self> {
        let node = self.node(id)?;
        if !node.is_leaf() {
            return Err(Error::Parameter(format!("node {id} is not a leaf")));
        }
        let mut clone = self.clone();
        clone.nodes.insert(id, TreeNode::leaf(id, action));
        clone.validated()
    }

    /// New tree with one branch's threshold replaced.
    pub fn with_threshold(&self, id: NodeId, new_threshold: f64) -> Result<Self> {
        match self.node(id)?.kind {
            NodeKind::Leaf { .. } => Err(Error::Parameter(format!("node {id} is not a branch"))),
            NodeKind::Branch {
                feature, left, right, ..
            } => {
                let mut clone = self.clone();
                clone
                    .nodes
                    .insert(id, TreeNode::branch(id, feature, new_threshold, left, right));
                clone.validated()
            }
        }
    }

    /// New tree where leaf `id` becomes a branch with two fresh leaves.
    /// Returns the tree and the (left, right) leaf ids.
    pub fn with_leaf_split(
        &self,
        id: NodeId,
        feature: usize,
        threshold: f64,
        left_action: ActionId,
        right_action: ActionId,
    ) -> Result<(Self, NodeId, NodeId)> {
        let node = self.node(id)?;
        if !node.is_leaf() {
            return Err(Error::Parameter(format!("node {id} is not a leaf")));
        }
        let left_id = self.next_free_id();
        let right_id = left_id + 1;
        let mut clone = self.clone();
        clone.nodes.insert(id, TreeNode::branch(id, feature, threshold, left_id, right_id));
        clone.nodes.insert(left_id, TreeNode::leaf(left_id, left_action));
        clone.nodes.insert(right_id, TreeNode::leaf(right_id, right_action));
        Ok((clone.validated()?, left_id, right_id))
    }

    pub fn to_json_string(&self) -> String {
        let file = io::TreeFile::from_tree(self);
        let mut s = serde_json::to_string_pretty(&file).expect("tree serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: io::TreeFile =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("tree file: {e}")))?;
        file.into_tree()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }
}

impl crate::Policy for DecisionTreePolicy {
    /// Panics on layout mismatch; rollout drivers validate layouts before
    /// stepping.
    fn act(&self, state: &StateVector) -> ActionId {
        self.predict(state).expect("state conforms to tree layout")
    }
}

mod io {
    //! On-disk tree format: a single JSON document. Thresholds are decimal
    //! strings with 17 significant digits, which round-trips every finite
    //! f64 bit-exactly.

    use super::*;

    pub const FORMAT_VERSION: u32 = 1;

    pub fn format_threshold(v: f64) -> String {
        format!("{v:.16e}")
    }

    pub fn parse_threshold(s: &str) -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad threshold {s:?}")))
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct NodeFile {
        pub id: NodeId,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub feature: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub threshold: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub left: Option<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub right: Option<NodeId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub action: Option<ActionId>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct TreeFile {
        pub format_version: u32,
        pub layout: StateLayout,
        pub actions: Vec<ActionSpecFile>,
        pub root_id: NodeId,
        pub nodes: Vec<NodeFile>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ActionSpecFile {
        pub id: ActionId,
        pub linear_velocity: f64,
        pub angular_velocity: f64,
    }

    impl TreeFile {
        pub fn from_tree(tree: &DecisionTreePolicy) -> Self {
            let nodes = tree
                .nodes
                .values()
                .map(|n| match n.kind {
                    NodeKind::Branch {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeFile {
                        id: n.id,
                        feature: Some(feature),
                        threshold: Some(format_threshold(threshold)),
                        left: Some(left),
                        right: Some(right),
                        action: None,
                    },
                    NodeKind::Leaf { action } => NodeFile {
                        id: n.id,
                        feature: None,
                        threshold: None,
                        left: None,
                        right: None,
                        action: Some(action),
                    },
                })
                .collect();
            let actions = tree
                .actions
                .iter()
                .map(|a| ActionSpecFile {
                    id: a.id,
                    linear_velocity: a.linear_velocity,
                    angular_velocity: a.angular_velocity,
                })
                .collect();
            TreeFile {
                format_version: FORMAT_VERSION,
                layout: tree.layout.clone(),
                actions,
                root_id: tree.root_id,
                nodes,
            }
        }

        pub fn into_tree(self) -> Result<DecisionTreePolicy> {
            if self.format_version != FORMAT_VERSION {
                return Err(Error::Format(format!(
                    "unsupported tree format version {}",
                    self.format_version
                )));
            }
            let actions = ActionCatalog::new(
                self.actions
                    .into_iter()
                    .map(|a| crate::state::ActionSpec {
                        id: a.id,
                        linear_velocity: a.linear_velocity,
                        angular_velocity: a.angular_velocity,
                    })
                    .collect(),
            )?;
            let mut nodes = Vec::with_capacity(self.nodes.len());
            for n in self.nodes {
                let kind = match (n.feature, n.threshold, n.left, n.right, n.action) {
                    (Some(feature), Some(t), Some(left), Some(right), None) => NodeKind::Branch {
                        feature,
                        threshold: parse_threshold(&t)?,
                        left,
                        right,
                    },
                    (None, None, None, None, Some(action)) => NodeKind::Leaf { action },
                    _ => {
                        return Err(Error::Format(format!(
                            "node {} is neither a full branch nor a bare leaf",
                            n.id
                        )))
                    }
                };
                nodes.push(TreeNode { id: n.id, kind });
            }
            DecisionTreePolicy::new(self.layout, actions, self.root_id, nodes)
        }
    }
}
