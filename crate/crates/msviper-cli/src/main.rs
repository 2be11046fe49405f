//! Command-line pipeline: train experts, distill decision-tree policies,
//! evaluate behavior, repair defects by tree surgery, and report
//! modification-efficiency metrics.
//!
//! Every command reads one JSON config, writes its artifacts plus a
//! manifest of the fully resolved configuration into `--out-dir`, and is
//! reproducible: the same config and seed yield byte-identical files.
//! Exit codes: 0 success, 2 config/input error, 3 domain error.

mod artifacts;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use msviper::distill::{msviper as msviper_run, ssviper, DistillConfig};
use msviper::envs::{run_episode, write_trajectory_csv, validate_curriculum};
use msviper::expert::{scripted_expert, train_q_expert};
use msviper::metrics::{
    behavior_report, coverage_probability, efficiency_from_counts, BehaviorReport, CoverageParams,
    OscillationPredicate,
};
use msviper::seed;
use msviper::state::default_contraction_map;
use msviper::tree::DecisionTreePolicy;
use msviper::treemod::{
    detect_freezing, detect_oscillation, detect_vibration_m1, detect_vibration_m2, fix_freezing,
    fix_oscillation, fix_vibration_m1, fix_vibration_m2, FreezingDetectConfig, FreezingFixConfig,
    OscillationDetectConfig, RepairLog, VibrationSpaceSpec,
};
use msviper::{Error, Policy};

use artifacts::{to_pretty_json, write_artifact};

#[derive(Parser)]
#[command(name = "msviper", version, about = "Decision-tree policy distillation and repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
    /// Maximum concurrent rollouts (does not affect results).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tabular Q-learning expert or instantiate a scripted one.
    TrainExpert(CommonArgs),
    /// Distill an expert into a decision tree.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
        /// Sampling regime: the full scenario list or only the final one.
        #[arg(long, value_parser = ["msviper", "ssviper"])]
        mode: String,
    },
    /// Evaluate behavior metrics of a tree and/or an expert.
    Eval(CommonArgs),
    /// Detect and repair one defect class in a tree.
    Repair {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = ["freezing", "oscillation", "vibration1", "vibration2"])]
        defect: String,
    },
    /// Consolidate before/after reports and a repair log into efficiency
    /// metrics.
    Report {
        /// Behavior report measured before the repair.
        #[arg(long)]
        before: PathBuf,
        /// Behavior report measured after the repair (same seeds).
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        repair_log: PathBuf,
        /// Target metric: freezing_rate, c_osc_pct, c_osc_delta, or v_b_mean.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Exact critical-state coverage probability.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// Optional output directory for coverage.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Domain(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::TrainExpert(common) => cmd_train_expert(&common),
        Command::Distill { common, mode } => cmd_distill(&common, &mode),
        Command::Eval(common) => cmd_eval(&common),
        Command::Repair { common, defect } => cmd_repair(&common, &defect),
        Command::Report {
            before,
            after,
            repair_log,
            metric,
            out_dir,
            force,
        } => cmd_report(&before, &after, &repair_log, &metric, &out_dir, force),
        Command::Coverage { config, out_dir, force } => cmd_coverage(&config, out_dir.as_deref(), force),
    }
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Manifest wrapper shared by all commands: the command name plus its
/// fully resolved configuration and output file names.
#[derive(Serialize)]
struct RunManifest<C: Serialize> {
    command: String,
    config: C,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    cfg: &C,
    outputs: &[&str],
    force: bool,
) -> Result<(), Error> {
    let manifest = RunManifest {
        command: command.to_string(),
        config: cfg,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_artifact(&dir.join(name), &to_pretty_json(&manifest), force)
}

fn cmd_train_expert(common: &CommonArgs) -> Result<(), Error> {
    let cfg: config::TrainExpertConfig = load_config(&common.config)?;
    ensure_out_dir(&common.out_dir)?;
    match &cfg {
        config::TrainExpertConfig::QLearning {
            seed,
            curriculum,
            q_params,
        } => {
            validate_curriculum(curriculum)?;
            let expert = train_q_expert(curriculum, q_params, *seed)?;
            let table_file = "qtable.tsv";
            expert.save_table(&common.out_dir.join(table_file))?;
            let manifest = artifacts::ExpertManifest::QLearning {
                seed: *seed,
                q: artifacts::QExpertManifest {
                    params: expert.params.clone(),
                    layout: expert.layout().clone(),
                    n_actions: expert.n_actions(),
                    table_file: table_file.to_string(),
                },
            };
            write_artifact(
                &common.out_dir.join("expert_manifest.json"),
                &to_pretty_json(&manifest),
                common.force,
            )?;
            write_manifest(
                &common.out_dir,
                "run_manifest.json",
                "train-expert",
                &cfg,
                &["expert_manifest.json", table_file],
                common.force,
            )?;
        }
        config::TrainExpertConfig::Scripted {
            seed,
            scripted_kind,
            scenario,
            params,
        } => {
            scenario.validate()?;
            // Construction validates kind/layout compatibility.
            scripted_expert(*scripted_kind, scenario, params.clone())?;
            let manifest = artifacts::ExpertManifest::Scripted {
                seed: *seed,
                scripted: artifacts::ScriptedExpertManifest {
                    scripted_kind: *scripted_kind,
                    params: params.clone(),
                    layout: scenario.layout(),
                    occupancy: scenario.occupancy.clone(),
                },
            };
            write_artifact(
                &common.out_dir.join("expert_manifest.json"),
                &to_pretty_json(&manifest),
                common.force,
            )?;
            write_manifest(
                &common.out_dir,
                "run_manifest.json",
                "train-expert",
                &cfg,
                &["expert_manifest.json"],
                common.force,
            )?;
        }
    }
    println!("expert written to {}", common.out_dir.display());
    Ok(())
}

fn cmd_distill(common: &CommonArgs, mode: &str) -> Result<(), Error> {
    let cfg: config::DistillCommandConfig = load_config(&common.config)?;
    let expert = artifacts::load_expert(Path::new(&cfg.expert))?;
    if cfg.scenarios.is_empty() {
        return Err(Error::Config("distill needs at least one scenario".into()));
    }
    for s in &cfg.scenarios {
        s.validate()?;
    }
    let distill_cfg = DistillConfig {
        trajectories_per_iteration: cfg.trajectories_per_iteration,
        iterations_per_scenario: cfg.iterations_per_scenario,
        trajectory_length: cfg.trajectory_length,
        sample_size: cfg.sample_size,
        cv_trials: cfg.cv_trials,
        sampling_mode: cfg.sampling_mode,
        beta_schedule: cfg.beta_schedule.clone(),
        cart: cfg.cart.clone(),
        rng_seed: cfg.seed,
    };
    let run = match mode {
        "msviper" => msviper_run(expert.as_expert(), &cfg.scenarios, &distill_cfg, common.jobs)?,
        "ssviper" => ssviper(
            expert.as_expert(),
            cfg.scenarios.last().expect("nonempty"),
            &distill_cfg,
            common.jobs,
        )?,
        other => return Err(Error::Config(format!("unknown mode {other}"))),
    };
    ensure_out_dir(&common.out_dir)?;
    let tree_file = "tree.json";
    let sizes_file = "sizes.csv";
    write_artifact(
        &common.out_dir.join(tree_file),
        &run.selected_tree().to_json_string(),
        common.force,
    )?;
    write_artifact(&common.out_dir.join(sizes_file), &artifacts::sizes_csv(&run), common.force)?;
    let manifest = artifacts::DistillManifest::from_run(mode, &cfg, &run, tree_file, sizes_file);
    write_artifact(
        &common.out_dir.join("distill_manifest.json"),
        &to_pretty_json(&manifest),
        common.force,
    )?;
    let stats = run.selected_tree().stats();
    println!(
        "selected candidate {} ({} nodes, depth {}) written to {}",
        run.selected,
        stats.node_count,
        stats.depth,
        common.out_dir.join(tree_file).display()
    );
    Ok(())
}

fn cmd_eval(common: &CommonArgs) -> Result<(), Error> {
    let cfg: config::EvalConfig = load_config(&common.config)?;
    cfg.scenario.validate()?;
    let tree = cfg
        .tree
        .as_ref()
        .map(|p| DecisionTreePolicy::load(Path::new(p)))
        .transpose()?;
    let expert = cfg
        .expert
        .as_ref()
        .map(|p| artifacts::load_expert(Path::new(p)))
        .transpose()?;
    if tree.is_none() && expert.is_none() {
        return Err(Error::Config("eval needs a tree, an expert, or both".into()));
    }

    let spec = &cfg.scenario;
    let measure = |policy: &dyn Policy| -> Result<BehaviorReport, Error> {
        behavior_report(policy, spec, cfg.trials, cfg.seed, &cfg.behavior)
    };
    ensure_out_dir(&common.out_dir)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut fidelity_ratio = None;

    let tree_report = tree.as_ref().map(|t| measure(t)).transpose()?;
    let expert_report = expert.as_ref().map(|e| measure(e.as_policy())).transpose()?;
    if let Some(report) = &tree_report {
        write_artifact(
            &common.out_dir.join("behavior_report.json"),
            &to_pretty_json(report),
            common.force,
        )?;
        outputs.push("behavior_report.json".into());
    }
    if let Some(report) = &expert_report {
        let name = if tree_report.is_some() {
            "expert_behavior_report.json"
        } else {
            "behavior_report.json"
        };
        write_artifact(&common.out_dir.join(name), &to_pretty_json(report), common.force)?;
        outputs.push(name.into());
    }
    if let (Some(t), Some(e)) = (&tree_report, &expert_report) {
        // Reward fidelity of the tree relative to the expert on the same
        // seeds.
        let ratio = if e.mean_reward_per_timestep != 0.0 {
            t.mean_reward_per_timestep / e.mean_reward_per_timestep
        } else {
            f64::NAN
        };
        fidelity_ratio = Some(ratio);
        println!("fidelity ratio (tree reward / expert reward): {ratio:.4}");
    }
    if cfg.write_trajectories {
        let policy: &dyn Policy = match (&tree, &expert) {
            (Some(t), _) => t,
            (None, Some(e)) => e.as_policy(),
            (None, None) => unreachable!(),
        };
        let mut episodes = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let ep_spec = spec.with_seed(seed::derive(cfg.seed, &[seed::stream::METRICS, trial as u64]));
            episodes.push(run_episode(&ep_spec, policy, spec.horizon)?);
        }
        let path = common.out_dir.join("trajectories.csv");
        if path.exists() && !common.force {
            return Err(Error::Config(format!("refusing to overwrite {}", path.display())));
        }
        write_trajectory_csv(&path, &episodes, spec.layout().total_dim())?;
        outputs.push("trajectories.csv".into());
    }

    #[derive(Serialize)]
    struct EvalResolved<'a> {
        #[serde(flatten)]
        config: &'a config::EvalConfig,
        fidelity_reward_ratio: Option<f64>,
    }
    let resolved = EvalResolved {
        config: &cfg,
        fidelity_reward_ratio: fidelity_ratio,
    };
    let output_refs: Vec<&str> = outputs.iter().map(|s| s.as_str()).collect();
    write_manifest(&common.out_dir, "run_manifest.json", "eval", &resolved, &output_refs, common.force)?;
    if let Some(r) = &tree_report {
        println!(
            "tree: success {:.2} collisions {:.2} freezing {:.2} c_osc {:.3} V_b {:.3}",
            r.success_rate, r.collision_rate, r.freezing_rate, r.c_osc_pct, r.v_b_mean
        );
    }
    Ok(())
}

fn cmd_repair(common: &CommonArgs, defect: &str) -> Result<(), Error> {
    let cfg: config::RepairConfig = load_config(&common.config)?;
    let tree = DecisionTreePolicy::load(Path::new(&cfg.tree))?;
    let (repaired, log): (DecisionTreePolicy, RepairLog) = match defect {
        "freezing" => {
            let params = cfg
                .freezing
                .as_ref()
                .ok_or_else(|| Error::Config("config lacks a freezing section".into()))?;
            let detected = detect_freezing(
                &tree,
                &FreezingDetectConfig {
                    stop_actions: params.stop_actions.clone(),
                    movement_cell_tolerance: params.movement_cell_tolerance,
                },
            )?;
            fix_freezing(
                &tree,
                &detected,
                &FreezingFixConfig {
                    rotate_right: params.rotate_right,
                    rotate_left: params.rotate_left,
                    occupancy_threshold: params.occupancy_threshold,
                },
            )?
        }
        "oscillation" => {
            let params = cfg
                .oscillation
                .as_ref()
                .ok_or_else(|| Error::Config("config lacks an oscillation section".into()))?;
            params.scenario.validate()?;
            let obs = detect_oscillation(
                &tree,
                &params.scenario,
                &OscillationDetectConfig {
                    episodes: params.episodes,
                    window: params.window,
                    predicate: OscillationPredicate {
                        window: params.window,
                        min_sign_flips: params.min_sign_flips,
                    },
                    seed: cfg.seed,
                },
            )?;
            fix_oscillation(&tree, &obs, params.force_replace)?
        }
        "vibration1" => {
            let params = cfg
                .vibration1
                .as_ref()
                .ok_or_else(|| Error::Config("config lacks a vibration1 section".into()))?;
            let group = tree
                .layout()
                .group("angular_velocity")
                .ok_or_else(|| Error::Layout("tree layout declares no angular_velocity group".into()))?
                .to_vec();
            let detected = detect_vibration_m1(&tree, &group)?;
            fix_vibration_m1(&tree, &detected, params.h)?
        }
        "vibration2" => {
            let params = cfg
                .vibration2
                .as_ref()
                .ok_or_else(|| Error::Config("config lacks a vibration2 section".into()))?;
            let spec = VibrationSpaceSpec::from_layout(tree.layout(), params.threshold, params.gamma)?;
            let detected = detect_vibration_m2(&tree, &spec)?;
            let map = params
                .contraction_map
                .clone()
                .unwrap_or_else(default_contraction_map);
            fix_vibration_m2(&tree, &detected, &map)?
        }
        other => return Err(Error::Config(format!("unknown defect {other}"))),
    };
    ensure_out_dir(&common.out_dir)?;
    write_artifact(&common.out_dir.join("tree_repaired.json"), &repaired.to_json_string(), common.force)?;
    write_artifact(&common.out_dir.join("repair_log.json"), &log.to_json_string(), common.force)?;
    #[derive(Serialize)]
    struct RepairResolved<'a> {
        defect: &'a str,
        #[serde(flatten)]
        config: &'a config::RepairConfig,
    }
    write_manifest(
        &common.out_dir,
        "run_manifest.json",
        "repair",
        &RepairResolved { defect, config: &cfg },
        &["tree_repaired.json", "repair_log.json"],
        common.force,
    )?;
    println!(
        "{defect}: {} nodes detected, N+ = {} of {} nodes",
        log.detected_node_ids.len(),
        log.n_plus,
        log.n_1
    );
    Ok(())
}

fn metric_value(report: &BehaviorReport, metric: &str) -> Result<f64, Error> {
    Ok(match metric {
        "freezing_rate" => report.freezing_rate,
        "c_osc_pct" => report.c_osc_pct,
        "c_osc_delta" => report.c_osc_delta,
        "v_b_mean" => report.v_b_mean,
        other => return Err(Error::Config(format!("unknown metric {other}"))),
    })
}

fn cmd_report(
    before: &Path,
    after: &Path,
    repair_log: &Path,
    metric: &str,
    out_dir: &Path,
    force: bool,
) -> Result<(), Error> {
    let before_report: BehaviorReport = load_config(before)?;
    let after_report: BehaviorReport = load_config(after)?;
    let log = RepairLog::load(repair_log)?;
    let m_1 = metric_value(&before_report, metric)?;
    let m_2 = metric_value(&after_report, metric)?;
    let eff = efficiency_from_counts(m_1, m_2, log.n_plus, log.n_1)?;
    ensure_out_dir(out_dir)?;
    let report = artifacts::ComparisonReport {
        metric: metric.to_string(),
        before: before_report,
        after: after_report,
        repair_log_file: repair_log.display().to_string(),
        efficiency: eff.clone(),
    };
    write_artifact(&out_dir.join("report.json"), &to_pretty_json(&report), force)?;
    println!(
        "{metric}: {m_1:.4} -> {m_2:.4}; e_O = {:.4}, e_R = {:.4}",
        eff.e_o, eff.e_r
    );
    Ok(())
}

fn cmd_coverage(config_path: &Path, out_dir: Option<&Path>, force: bool) -> Result<(), Error> {
    let cfg: config::CoverageConfig = load_config(config_path)?;
    let params = CoverageParams {
        trajectories: cfg.trajectories,
        hit_probabilities: cfg.hit_probabilities.clone(),
        epsilon: cfg.epsilon,
    };
    let probability = coverage_probability(&params, cfg.method)?;
    println!("coverage probability: {probability:.10}");
    if let Some(dir) = out_dir {
        ensure_out_dir(dir)?;
        #[derive(Serialize)]
        struct CoverageOut<'a> {
            #[serde(flatten)]
            config: &'a config::CoverageConfig,
            probability: f64,
        }
        write_artifact(
            &dir.join("coverage.json"),
            &to_pretty_json(&CoverageOut {
                config: &cfg,
                probability,
            }),
            force,
        )?;
    }
    Ok(())
}
