//! On-disk artifacts: expert manifests, distill manifests, and report
//! documents. Everything serializes deterministically (sorted maps,
//! fixed field order, no timestamps) so identical configs produce
//! byte-identical files.

use serde::{Deserialize, Serialize};
use std::path::Path;

use msviper::distill::DistillRun;
use msviper::envs::OccupancyConfig;
use msviper::expert::{QExpert, QLearningParams, ScriptedExpert, ScriptedKind, ScriptedParams};
use msviper::metrics::{BehaviorReport, EfficiencyResult};
use msviper::state::StateLayout;
use msviper::tree::TreeStats;
use msviper::{Error, Expert, Policy, Result};

use crate::config;

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serialization cannot fail");
    s.push('\n');
    s
}

/// Writes a file, refusing to clobber an existing one unless forced.
pub fn write_artifact(path: &Path, contents: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "refusing to overwrite {} (pass --force to allow)",
            path.display()
        )));
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QExpertManifest {
    pub params: QLearningParams,
    pub layout: StateLayout,
    pub n_actions: usize,
    /// Q-table file name, relative to the manifest.
    pub table_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedExpertManifest {
    pub scripted_kind: ScriptedKind,
    pub params: ScriptedParams,
    pub layout: StateLayout,
    pub occupancy: OccupancyConfig,
}

/// Self-contained description of a trained expert.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpertManifest {
    QLearning {
        seed: u64,
        #[serde(flatten)]
        q: QExpertManifest,
    },
    Scripted {
        seed: u64,
        #[serde(flatten)]
        scripted: ScriptedExpertManifest,
    },
}

pub enum LoadedExpert {
    Q(QExpert),
    Scripted(ScriptedExpert),
}

impl LoadedExpert {
    pub fn as_expert(&self) -> &dyn Expert {
        match self {
            LoadedExpert::Q(e) => e,
            LoadedExpert::Scripted(e) => e,
        }
    }

    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            LoadedExpert::Q(e) => e,
            LoadedExpert::Scripted(e) => e,
        }
    }
}

pub fn load_expert(manifest_path: &Path) -> Result<LoadedExpert> {
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: ExpertManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("expert manifest: {e}")))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    match manifest {
        ExpertManifest::QLearning { q, .. } => {
            let table = dir.join(&q.table_file);
            Ok(LoadedExpert::Q(QExpert::load(&table, q.params, q.layout, q.n_actions)?))
        }
        ExpertManifest::Scripted { scripted, .. } => Ok(LoadedExpert::Scripted(ScriptedExpert::new(
            scripted.scripted_kind,
            scripted.layout,
            &scripted.occupancy.ring_edges,
            scripted.occupancy.fov_half_angle,
            scripted.params,
        )?)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub scenario_index: usize,
    pub iteration: usize,
    pub stats: TreeStats,
    pub mean_reward_per_timestep: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillManifest {
    pub mode: String,
    pub config: config::DistillCommandConfig,
    pub iterations: Vec<msviper::distill::IterationRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub selected: usize,
    pub final_dataset_size: usize,
    pub tree_file: String,
    pub sizes_file: String,
}

impl DistillManifest {
    pub fn from_run(
        mode: &str,
        cfg: &config::DistillCommandConfig,
        run: &DistillRun,
        tree_file: &str,
        sizes_file: &str,
    ) -> Self {
        Self {
            mode: mode.to_string(),
            config: cfg.clone(),
            iterations: run.iterations.clone(),
            candidates: run
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    scenario_index: c.scenario_index,
                    iteration: c.iteration,
                    stats: c.tree.stats(),
                    mean_reward_per_timestep: c.mean_reward_per_timestep,
                })
                .collect(),
            selected: run.selected,
            final_dataset_size: run.final_dataset_size,
            tree_file: tree_file.to_string(),
            sizes_file: sizes_file.to_string(),
        }
    }
}

/// Size-vs-samples CSV: one row per training round.
pub fn sizes_csv(run: &DistillRun) -> String {
    let mut out = String::from("scenario_index,iteration,beta,dataset_size,sample_size,node_count,leaf_count,depth\n");
    for r in &run.iterations {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.scenario_index,
            r.iteration,
            r.beta,
            r.dataset_size,
            r.sample_size,
            r.stats.node_count,
            r.stats.leaf_count,
            r.stats.depth
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub before: BehaviorReport,
    pub after: BehaviorReport,
    pub repair_log_file: String,
    pub efficiency: EfficiencyResult,
}
