//! Decision-tree navigation policies: distillation from expert controllers
//! across staged scenarios, behavior diagnosis, and direct tree repair
//! without retraining.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`state`] / [`tree`] — the policy representation: a discrete action
//!   catalog, a flat feature layout (occupancy grid history + goal +
//!   previous action), and a binary threshold tree with node-subspace
//!   geometry.
//! * [`cart`] — supervised tree induction (Gini impurity, midpoint splits).
//! * [`envs`] — three desk-scale navigation simulators (grid, unicycle,
//!   terrain) sharing one state encoder.
//! * [`expert`] — tabular Q-learning and scripted controllers, including
//!   deliberately flawed ones used as repair targets.
//! * [`distill`] — the multi-scenario imitation loop and its single-scenario
//!   baseline.
//! * [`treemod`] — detection and repair of freezing, oscillation, and
//!   vibration behaviors by editing tree nodes directly.
//! * [`metrics`] — behavior metrics, modification-efficiency numbers, and
//!   the critical-state coverage-probability calculator.

pub mod cart;
pub mod distill;
pub mod envs;
pub mod expert;
pub mod metrics;
pub mod seed;
pub mod state;
pub mod tree;
pub mod treemod;

pub use state::{ActionCatalog, ActionId, ActionSpec, StateLayout, StateVector};
pub use tree::{DecisionTreePolicy, NodeId, NodeKind, NodeSubspace, TreeNode, TreeStats};

/// Crate-wide error type. Variants map onto the failure classes of the
/// public operations; the CLI distinguishes config/input errors from
/// domain errors when choosing exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown node id {0}")]
    UnknownNode(u32),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unsatisfiable placement: {0}")]
    Placement(String),
    #[error("environment lifecycle: {0}")]
    Lifecycle(String),
    #[error("encoder: {0}")]
    Encoder(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("config: {0}")]
    Config(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("parameter: {0}")]
    Parameter(String),
    #[error("expert training: {0}")]
    Training(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A state-to-action mapping. Implemented by distilled trees and by
/// experts; everything that rolls out episodes is generic over this.
///
/// `act` must be a pure function of the state: identical inputs yield
/// identical outputs across calls and across processes.
pub trait Policy: Sync {
    fn act(&self, state: &StateVector) -> ActionId;
}

/// A black-box expert policy. Q-values are optional: scripted controllers
/// have none, and loss-weighted sampling silently degrades to uniform
/// when they are absent. When present, the returned array has one entry
/// per catalog action and `act` is consistent with its argmax.
pub trait Expert: Policy {
    fn q_values(&self, _state: &StateVector) -> Option<Vec<f64>> {
        None
    }
}
