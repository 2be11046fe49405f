//! Supervised induction of decision-tree policies from labeled
//! state-action pairs.
//!
//! Greedy recursive growth with Gini impurity. Candidate thresholds are
//! the midpoints between consecutive distinct sorted feature values, so
//! the candidate set is finite and the search exhaustive. All ties break
//! deterministically: splits by (lower feature index, lower threshold),
//! majority labels by lowest action id. Pairs are canonically sorted
//! before growth, making training independent of input order.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::state::{ActionCatalog, ActionId, StateLayout, StateVector};
use crate::tree::{DecisionTreePolicy, NodeId, TreeNode};
use crate::{Error, Result};

/// An unordered multiset of (state, action) pairs with optional
/// nonnegative per-pair weights. All states share one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    dim: usize,
    states: Vec<StateVector>,
    actions: Vec<ActionId>,
    weights: Option<Vec<f64>>,
}

impl PairSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            states: Vec::new(),
            actions: Vec::new(),
            weights: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: StateVector, action: ActionId) -> Result<()> {
        self.push_weighted(state, action, None)
    }

    pub fn push_weighted(&mut self, state: StateVector, action: ActionId, weight: Option<f64>) -> Result<()> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: state.dim(),
            });
        }
        match weight {
            Some(w) => {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Parameter(format!("pair weight {w} must be finite and >= 0")));
                }
                // Backfill implicit unit weights when the first weighted
                // pair arrives.
                let ws = self.weights.get_or_insert_with(|| vec![1.0; self.states.len()]);
                ws.push(w);
            }
            None => {
                if let Some(ws) = &mut self.weights {
                    ws.push(1.0);
                }
            }
        }
        self.states.push(state);
        self.actions.push(action);
        Ok(())
    }

    /// Union with another pair set (multiset semantics: duplicates kept).
    pub fn merge(&mut self, other: &PairSet) -> Result<()> {
        for i in 0..other.len() {
            self.push_weighted(other.states[i].clone(), other.actions[i], other.weight(i).into())?;
        }
        Ok(())
    }

    pub fn state(&self, i: usize) -> &StateVector {
        &self.states[i]
    }

    pub fn action(&self, i: usize) -> ActionId {
        self.actions[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map(|w| w[i]).unwrap_or(1.0)
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVector, ActionId, f64)> {
        (0..self.len()).map(move |i| (&self.states[i], self.actions[i], self.weight(i)))
    }

    /// Builds a new pair set from a subset of indices.
    pub fn subset(&self, indices: &[usize]) -> PairSet {
        let mut out = PairSet::new(self.dim);
        for &i in indices {
            let w = self.weights.as_ref().map(|ws| ws[i]);
            out.push_weighted(self.states[i].clone(), self.actions[i], w)
                .expect("subset of a valid pair set is valid");
        }
        out
    }

    /// Index order sorting pairs by (features lexicographically, action,
    /// weight). Total because all stored values are finite in practice;
    /// non-finite values order last.
    fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let sa = self.states[a].values();
            let sb = self.states[b].values();
            for (x, y) in sa.iter().zip(sb.iter()) {
                match x.partial_cmp(y) {
                    Some(std::cmp::Ordering::Equal) | None => continue,
                    Some(o) => return o,
                }
            }
            self.actions[a]
                .cmp(&self.actions[b])
                .then(self.weight(a).partial_cmp(&self.weight(b)).unwrap_or(std::cmp::Ordering::Equal))
        });
        idx
    }

    /// CSV with header `f0,...,f{d-1},action[,weight]`. Feature values are
    /// written with 17 significant digits for exact round-trips.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("f{i}")).collect();
        header.push("action".into());
        if self.has_weights() {
            header.push("weight".into());
        }
        writeln!(f, "{}", header.join(","))?;
        for (s, a, w) in self.iter() {
            let mut row: Vec<String> = s.values().iter().map(|v| format!("{v:.16e}")).collect();
            row.push(a.to_string());
            if self.has_weights() {
                row.push(format!("{w:.16e}"));
            }
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty pair file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let weighted = cols.last() == Some(&"weight");
        let action_col = if weighted { cols.len() - 2 } else { cols.len() - 1 };
        if cols.get(action_col) != Some(&"action") {
            return Err(Error::Format("pair file header must end with action[,weight]".into()));
        }
        let dim = action_col;
        for (i, c) in cols[..dim].iter().enumerate() {
            if *c != format!("f{i}") {
                return Err(Error::Format(format!("unexpected feature column {c:?}")));
            }
        }
        let mut out = PairSet::new(dim);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let expected = dim + 1 + usize::from(weighted);
            if parts.len() != expected {
                return Err(Error::Format(format!("row {}: expected {expected} columns", lineno + 2)));
            }
            let mut values = Vec::with_capacity(dim);
            for p in &parts[..dim] {
                values.push(
                    p.parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: bad value {p:?}", lineno + 2)))?,
                );
            }
            let action: ActionId = parts[dim]
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad action", lineno + 2)))?;
            let weight = if weighted {
                Some(
                    parts[dim + 1]
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: bad weight", lineno + 2)))?,
                )
            } else {
                None
            };
            out.push_weighted(StateVector::new(values), action, weight)?;
        }
        Ok(out)
    }
}

/// Stopping configuration for tree growth.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
    /// Reserved for stochastic extensions (feature subsampling); growth is
    /// currently fully deterministic and ignores it.
    pub rng_seed: u64,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_impurity_decrease: 0.0,
            rng_seed: 0,
        }
    }
}

impl CartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be >= 2".into()));
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return Err(Error::Config("min_impurity_decrease must be >= 0".into()));
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum_a p_a^2` of a weighted label multiset.
pub fn gini(labels: &[ActionId], weights: Option<&[f64]>) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(w) = weights {
        if w.len() != labels.len() {
            return Err(Error::Parameter("labels and weights differ in length".into()));
        }
    }
    let mut counts: std::collections::BTreeMap<ActionId, f64> = std::collections::BTreeMap::new();
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        *counts.entry(l).or_insert(0.0) += w;
        total += w;
    }
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut sum_sq = 0.0;
    for &c in counts.values() {
        let p = c / total;
        sum_sq += p * p;
    }
    Ok(1.0 - sum_sq)
}

/// A chosen split and its weighted impurity decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

struct ClassCounts {
    counts: Vec<f64>,
    total: f64,
}

impl ClassCounts {
    fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![0.0; n_classes],
            total: 0.0,
        }
    }

    fn add(&mut self, class: usize, w: f64) {
        self.counts[class] += w;
        self.total += w;
    }

    fn remove(&mut self, class: usize, w: f64) {
        self.counts[class] -= w;
        self.total -= w;
    }

    fn gini(&self) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let mut sum_sq = 0.0;
        for &c in &self.counts {
            let p = c / self.total;
            sum_sq += p * p;
        }
        1.0 - sum_sq
    }
}

fn n_classes(pairs: &PairSet, indices: &[usize]) -> usize {
    indices.iter().map(|&i| pairs.action(i) as usize + 1).max().unwrap_or(0)
}

fn best_split_indices(pairs: &PairSet, indices: &[usize], features: &[usize]) -> Option<Split> {
    if indices.len() < 2 {
        return None;
    }
    let k = n_classes(pairs, indices);
    let mut parent = ClassCounts::new(k);
    for &i in indices {
        parent.add(pairs.action(i) as usize, pairs.weight(i));
    }
    let parent_gini = parent.gini();
    if parent_gini == 0.0 {
        return None; // already pure: no split can help
    }
    let total = parent.total;

    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = indices.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| {
            pairs
                .state(a)
                .get(f)
                .partial_cmp(&pairs.state(b).get(f))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut left = ClassCounts::new(k);
        let mut right = ClassCounts::new(k);
        for &i in &order {
            right.add(pairs.action(i) as usize, pairs.weight(i));
        }
        for w in 0..order.len() - 1 {
            let i = order[w];
            let cls = pairs.action(i) as usize;
            let wt = pairs.weight(i);
            left.add(cls, wt);
            right.remove(cls, wt);
            let v = pairs.state(i).get(f);
            let v_next = pairs.state(order[w + 1]).get(f);
            if v == v_next {
                continue; // not a boundary between distinct values
            }
            // Adjacent floats can round the midpoint up to v_next, which
            // would send both values left; fall back to the lower value.
            let mid = 0.5 * (v + v_next);
            let threshold = if mid >= v_next { v } else { mid };
            let decrease = parent_gini - (left.total * left.gini() + right.total * right.gini()) / total;
            let better = match best {
                None => true,
                // Strictly-greater keeps the first (lowest feature, lowest
                // threshold) candidate on ties; features ascend and
                // thresholds ascend within a feature.
                Some(b) => decrease > b.impurity_decrease,
            };
            if better {
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

/// Best split over the allowed features, or `None` when the set is pure,
/// too small, or no candidate reaches `min_impurity_decrease`.
pub fn best_split(pairs: &PairSet, features: Option<&[usize]>, cfg: &CartConfig) -> Option<Split> {
    let all: Vec<usize>;
    let feats = match features {
        Some(f) => f,
        None => {
            all = (0..pairs.dim()).collect();
            &all
        }
    };
    let indices: Vec<usize> = (0..pairs.len()).collect();
    if indices.len() < cfg.min_samples_split {
        return None;
    }
    best_split_indices(pairs, &indices, feats)
        .filter(|s| s.impurity_decrease >= cfg.min_impurity_decrease)
}

fn majority_action(pairs: &PairSet, indices: &[usize]) -> ActionId {
    let mut counts: std::collections::BTreeMap<ActionId, f64> = std::collections::BTreeMap::new();
    for &i in indices {
        *counts.entry(pairs.action(i)).or_insert(0.0) += pairs.weight(i);
    }
    // BTreeMap iteration ascends by action id, so `>` keeps the lowest id
    // on ties.
    let mut best = (ActionId::MAX, f64::NEG_INFINITY);
    for (&a, &w) in &counts {
        if w > best.1 {
            best = (a, w);
        }
    }
    best.0
}

/// Trains a tree on a labeled pair set.
///
/// Growth recurses until purity, the depth cap, the sample floor, or the
/// absence of a qualifying split. Leaf actions are weighted-majority
/// labels. Given one config, training is a deterministic function of the
/// pair multiset (input order is irrelevant).
pub fn train(
    pairs: &PairSet,
    cfg: &CartConfig,
    layout: &StateLayout,
    actions: &ActionCatalog,
) -> Result<DecisionTreePolicy> {
    cfg.validate()?;
    layout.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pairs.dim() != layout.total_dim() {
        return Err(Error::DimensionMismatch {
            expected: layout.total_dim(),
            got: pairs.dim(),
        });
    }
    for (_, a, _) in pairs.iter() {
        if !actions.contains(a) {
            return Err(Error::Config(format!("label {a} not in action catalog")));
        }
    }
    let features: Vec<usize> = (0..pairs.dim()).collect();
    let order = pairs.canonical_order();

    struct Grower<'a> {
        pairs: &'a PairSet,
        cfg: &'a CartConfig,
        features: &'a [usize],
        nodes: Vec<TreeNode>,
    }

    impl Grower<'_> {
        fn grow(&mut self, indices: Vec<usize>, depth: usize) -> NodeId {
            let id = self.nodes.len() as NodeId;
            let depth_capped = self.cfg.max_depth.map(|d| depth >= d).unwrap_or(false);
            let split = if depth_capped || indices.len() < self.cfg.min_samples_split {
                None
            } else {
                best_split_indices(self.pairs, &indices, self.features)
                    .filter(|s| s.impurity_decrease >= self.cfg.min_impurity_decrease)
            };
            match split {
                None => {
                    self.nodes.push(TreeNode::leaf(id, majority_action(self.pairs, &indices)));
                    id
                }
                Some(s) => {
                    // Placeholder keeps preorder ids; patched after children.
                    self.nodes.push(TreeNode::branch(id, s.feature, s.threshold, 0, 0));
                    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                        .into_iter()
                        .partition(|&i| self.pairs.state(i).get(s.feature) <= s.threshold);
                    debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());
                    let left = self.grow(left_idx, depth + 1);
                    let right = self.grow(right_idx, depth + 1);
                    self.nodes[id as usize] = TreeNode::branch(id, s.feature, s.threshold, left, right);
                    id
                }
            }
        }
    }

    let mut grower = Grower {
        pairs,
        cfg,
        features: &features,
        nodes: Vec::new(),
    };
    let root = grower.grow(order, 0);
    DecisionTreePolicy::new(layout.clone(), actions.clone(), root, grower.nodes)
}

/// Fraction of pairs the tree labels identically to the dataset.
pub fn training_accuracy(tree: &DecisionTreePolicy, pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (s, a, _) in pairs.iter() {
        if tree.predict(s)? == a {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn layout_d(dim: usize) -> StateLayout {
        // Occupancy block of `dim` cells x 1 row x 1 timestep is not
        // representable; use extras so total_dim == dim exactly.
        StateLayout {
            occupancy_columns: 0,
            occupancy_rows: 0,
            timesteps: 3,
            goal_features: 0,
            prev_action_features: 0,
            extra_features: dim,
            named_index_groups: Default::default(),
            feature_ranges: Vec::new(),
        }
    }

    fn pairs_from(rows: &[(&[f64], ActionId)]) -> PairSet {
        let mut p = PairSet::new(rows[0].0.len());
        for (v, a) in rows {
            p.push(StateVector::new(v.to_vec()), *a).unwrap();
        }
        p
    }

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini(&[5, 5, 5], None).unwrap(), 0.0);
        assert!((gini(&[0, 1], None).unwrap() - 0.5).abs() < 1e-15);
        let g = gini(&[0, 0, 1, 2], None).unwrap();
        assert!((g - 0.625).abs() < 1e-15);
        assert!(matches!(gini(&[], None), Err(Error::EmptyDataset)));
    }

    #[test]
    fn gini_weighted() {
        // weights 3:1 on two classes -> 1 - (0.75^2 + 0.25^2) = 0.375
        let g = gini(&[0, 1], Some(&[3.0, 1.0])).unwrap();
        assert!((g - 0.375).abs() < 1e-15);
    }

    #[test]
    fn best_split_uses_midpoints() {
        let p = pairs_from(&[(&[0.0], 0), (&[1.0], 1)]);
        let s = best_split(&p, None, &CartConfig::default()).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn best_split_none_on_pure_set() {
        let p = pairs_from(&[(&[0.0], 4), (&[1.0], 4), (&[2.0], 4)]);
        assert_eq!(best_split(&p, None, &CartConfig::default()), None);
    }

    /// Exhaustive oracle: enumerate every (feature, midpoint) candidate
    /// and recompute the weighted decrease from scratch.
    fn brute_force_best(pairs: &PairSet) -> Option<Split> {
        let labels: Vec<ActionId> = (0..pairs.len()).map(|i| pairs.action(i)).collect();
        let weights: Vec<f64> = (0..pairs.len()).map(|i| pairs.weight(i)).collect();
        let parent = gini(&labels, Some(&weights)).unwrap();
        if parent == 0.0 {
            return None;
        }
        let total: f64 = weights.iter().sum();
        let mut best: Option<Split> = None;
        for f in 0..pairs.dim() {
            let mut vals: Vec<f64> = (0..pairs.len()).map(|i| pairs.state(i).get(f)).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let threshold = if mid >= w[1] { w[0] } else { mid };
                let (mut ll, mut lw, mut rl, mut rw) = (vec![], vec![], vec![], vec![]);
                for i in 0..pairs.len() {
                    if pairs.state(i).get(f) <= threshold {
                        ll.push(labels[i]);
                        lw.push(weights[i]);
                    } else {
                        rl.push(labels[i]);
                        rw.push(weights[i]);
                    }
                }
                let lt: f64 = lw.iter().sum();
                let rt: f64 = rw.iter().sum();
                let decrease = parent
                    - (lt * gini(&ll, Some(&lw)).unwrap() + rt * gini(&rl, Some(&rw)).unwrap()) / total;
                let better = match best {
                    None => true,
                    Some(b) => decrease > b.impurity_decrease,
                };
                if better {
                    best = Some(Split {
                        feature: f,
                        threshold,
                        impurity_decrease: decrease,
                    });
                }
            }
        }
        best
    }

    #[test]
    fn best_split_matches_exhaustive_enumeration_on_random_data() {
        let mut rng = crate::seed::rng(7, &[10]);
        let cfg = CartConfig::default();
        for case in 0..60 {
            let n = rng.gen_range(2..50);
            let d = rng.gen_range(1..4);
            let mut p = PairSet::new(d);
            for _ in 0..n {
                let v: Vec<f64> = (0..d).map(|_| f64::from(rng.gen_range(-4i32..=4)) * 0.25).collect();
                p.push(StateVector::new(v), rng.gen_range(0..3)).unwrap();
            }
            let ours = best_split(&p, None, &cfg);
            let oracle = brute_force_best(&p);
            match (ours, oracle) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert_eq!(a.feature, b.feature, "case {case}");
                    assert_eq!(a.threshold, b.threshold, "case {case}");
                    assert!((a.impurity_decrease - b.impurity_decrease).abs() < 1e-12);
                }
                (a, b) => panic!("case {case}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn train_single_pair_gives_single_leaf() {
        let p = pairs_from(&[(&[0.3, 0.4], 9)]);
        let tree = train(&p, &CartConfig::default(), &layout_d(2), &ActionCatalog::default_table()).unwrap();
        assert_eq!(tree.stats().node_count, 1);
        assert_eq!(tree.predict(&StateVector::new(vec![0.0, 0.0])).unwrap(), 9);
    }

    #[test]
    fn train_empty_errors() {
        let p = PairSet::new(2);
        assert!(matches!(
            train(&p, &CartConfig::default(), &layout_d(2), &ActionCatalog::default_table()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn xor_dataset_trains_to_depth_two_and_full_accuracy() {
        let p = pairs_from(&[
            (&[0.0, 0.0], 0),
            (&[1.0, 1.0], 0),
            (&[0.0, 1.0], 1),
            (&[1.0, 0.0], 1),
        ]);
        let tree = train(&p, &CartConfig::default(), &layout_d(2), &ActionCatalog::default_table()).unwrap();
        assert_eq!(tree.stats().depth, 2);
        assert_eq!(training_accuracy(&tree, &p).unwrap(), 1.0);
    }

    /// Independent greedy builder used as a structural oracle.
    fn oracle_node_count(pairs: &PairSet, indices: Vec<usize>) -> usize {
        let sub = pairs.subset(&indices);
        match brute_force_best(&sub) {
            None => 1,
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| pairs.state(i).get(s.feature) <= s.threshold);
                1 + oracle_node_count(pairs, l) + oracle_node_count(pairs, r)
            }
        }
    }

    #[test]
    fn separable_dataset_matches_oracle_node_count() {
        let mut rng = crate::seed::rng(11, &[11]);
        let mut p = PairSet::new(3);
        for _ in 0..500 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Label is a deterministic function of the features, so the
            // data is consistent.
            let a = if v[0] <= 0.2 {
                u32::from(v[1] <= -0.5)
            } else {
                2 + u32::from(v[2] <= 0.0)
            };
            p.push(StateVector::new(v), a).unwrap();
        }
        let tree = train(&p, &CartConfig::default(), &layout_d(3), &ActionCatalog::default_table()).unwrap();
        assert_eq!(training_accuracy(&tree, &p).unwrap(), 1.0);
        assert_eq!(tree.stats().node_count, oracle_node_count(&p, (0..p.len()).collect()));
    }

    #[test]
    fn training_is_order_independent_and_deterministic() {
        let mut rng = crate::seed::rng(13, &[12]);
        let mut rows: Vec<(Vec<f64>, ActionId)> = (0..80)
            .map(|_| {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = u32::from(v[0] + v[1] <= 0.0);
                (v, a)
            })
            .collect();
        let build = |rows: &[(Vec<f64>, ActionId)]| {
            let mut p = PairSet::new(2);
            for (v, a) in rows {
                p.push(StateVector::new(v.clone()), *a).unwrap();
            }
            train(&p, &CartConfig::default(), &layout_d(2), &ActionCatalog::default_table())
                .unwrap()
                .to_json_string()
        };
        let a = build(&rows);
        rows.reverse();
        let b = build(&rows);
        rows.sort_by(|x, y| x.0[1].partial_cmp(&y.0[1]).unwrap());
        let c = build(&rows);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn deeper_caps_never_lose_accuracy() {
        let mut rng = crate::seed::rng(17, &[13]);
        let mut p = PairSet::new(2);
        for _ in 0..120 {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = u32::from(v[0] * v[1] <= 0.0) + 2 * u32::from(v[0] <= 0.3);
            p.push(StateVector::new(v), a).unwrap();
        }
        let mut last = 0.0;
        for depth in 0..10 {
            let cfg = CartConfig {
                max_depth: Some(depth),
                ..CartConfig::default()
            };
            let tree = train(&p, &cfg, &layout_d(2), &ActionCatalog::default_table()).unwrap();
            let acc = training_accuracy(&tree, &p).unwrap();
            assert!(acc >= last - 1e-12, "accuracy dropped at depth {depth}");
            last = acc;
        }
    }

    #[test]
    fn weighted_majority_breaks_ties_toward_lower_action() {
        // One state, two labels with equal weight: leaf must take the
        // lower id.
        let mut p = PairSet::new(1);
        p.push(StateVector::new(vec![0.0]), 7).unwrap();
        p.push(StateVector::new(vec![0.0]), 2).unwrap();
        let tree = train(&p, &CartConfig::default(), &layout_d(1), &ActionCatalog::default_table()).unwrap();
        assert_eq!(tree.predict(&StateVector::new(vec![0.0])).unwrap(), 2);
    }

    #[test]
    fn csv_round_trip_preserves_pairs_exactly() {
        let mut rng = crate::seed::rng(19, &[14]);
        let mut p = PairSet::new(3);
        for i in 0..40 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w = if i % 2 == 0 { Some(rng.gen_range(0.0..3.0)) } else { None };
            p.push_weighted(StateVector::new(v), rng.gen_range(0..15), w).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        p.write_csv(&path).unwrap();
        let back = PairSet::read_csv(&path).unwrap();
        assert_eq!(back.len(), p.len());
        for i in 0..p.len() {
            assert!(back.state(i).bits_eq(p.state(i)));
            assert_eq!(back.action(i), p.action(i));
            assert_eq!(back.weight(i).to_bits(), p.weight(i).to_bits());
        }
    }
}
