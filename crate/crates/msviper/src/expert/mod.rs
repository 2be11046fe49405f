//! Expert policies: tabular Q-learning and scripted controllers.

mod q;
mod scripted;

pub use q::{discretize, train_q_expert, BucketKey, QExpert, QLearningParams, QTrainer};
pub use scripted::{scripted_expert, ScriptedExpert, ScriptedKind, ScriptedParams};
