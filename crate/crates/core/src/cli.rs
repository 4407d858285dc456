//! Command-line surface over the experiment pipeline.
//!
//! Every subcommand is config-driven: `--config` names an experiment file
//! (the bundled default benchmark when omitted), `--seed` overrides its
//! top-level seed, and `--out` overrides its output directory. Exit codes:
//! 0 on success, 2 on configuration/usage errors, 3 on numeric failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, RunMode};
use crate::costgraph::CostGraph;
use crate::curriculum::{
    export_plan, plan_curriculum, student_id, Algorithm, PerformanceTable,
};
use crate::error::{Error, Result};
use crate::harness::{
    build_pipeline, emit_report, execute_mini_progressive, landscape_probe, sweep_orders_on,
    Report, RunRecord,
};
use crate::io::write_dataset;
use crate::model::evaluate;
use crate::rng::derive_seed;

/// Seed-tag lane for landscape probe directions.
const LANDSCAPE_SEED_TAG: u64 = 0x6c61_6e64; // "land"

#[derive(Parser)]
#[command(
    name = "mtpd",
    about = "Multi-teacher progressive distillation laboratory",
    version,
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Experiment config file (bundled default benchmark when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config's top-level seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic task dataset files (train.data, val.data).
    GenData,
    /// Train the teacher pool and the initial student; write checkpoints.
    TrainTeachers,
    /// Build the adaptation-cost graph; write cost_matrix.csv and q.csv.
    CostGraph,
    /// Plan a teacher curriculum and print it (first → last).
    Plan {
        /// Planner: bgs | forward | sp-sum | sp-max | topk.
        #[arg(long)]
        algo: Option<String>,
        /// Maximum curriculum length.
        #[arg(long)]
        k: Option<usize>,
        /// Plan from an exported cost matrix instead of the config pipeline
        /// (requires --q).
        #[arg(long, value_name = "CSV")]
        costs: Option<PathBuf>,
        /// Quality-score table accompanying --costs.
        #[arg(long, value_name = "CSV")]
        q: Option<PathBuf>,
        /// Student id override (default: the one unscored node).
        #[arg(long)]
        student: Option<String>,
    },
    /// Run the configured experiment mode and write the report files.
    Distill,
    /// Run every teacher order under the mini budget and rank the plan.
    SweepOrders,
    /// Probe the loss landscape around the configured run's final student.
    Landscape {
        /// Half-width of the probe grid.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Grid points per axis (odd, ≥ 3).
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Re-run the configured experiment and re-emit all report files.
    Report,
}

/// Load the config and apply the shared overrides.
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::bundled_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out
            .to_str()
            .ok_or_else(|| Error::Config("--out path is not valid UTF-8".into()))?
            .to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&cfg.output.dir)
}

fn plan_from_files(
    costs: &Path,
    q_path: &Path,
    algo: Algorithm,
    k: usize,
    student: Option<&str>,
    explicit_out: Option<&Path>,
) -> Result<()> {
    let graph = CostGraph::from_csv(&std::fs::read_to_string(costs)?)?;
    let q = PerformanceTable::from_csv("file", &std::fs::read_to_string(q_path)?)?;
    let student = match student {
        Some(id) => {
            if graph.index_of(id).is_none() {
                return Err(Error::Argument(format!("student '{id}' not in the cost graph")));
            }
            id.to_string()
        }
        None => student_id(&graph, &q)?,
    };
    let curriculum = plan_curriculum(algo, &graph, &q, k)?;
    let plan = export_plan(&graph, &student, &curriculum)?;
    println!("{}", curriculum.order.join(","));
    if let Some(dir) = explicit_out {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&plan)
            .map_err(|e| Error::Format(format!("cannot serialize plan: {e}")))?;
        std::fs::write(dir.join("plan.json"), json + "\n")?;
    }
    Ok(())
}

/// Execute the configured mode and produce its record plus the final
/// student (handles the sweep mode by ranking the planned order under the
/// mini budget).
fn record_for_mode(
    pipeline: &crate::harness::Pipeline,
    cfg: &ExperimentConfig,
) -> Result<(RunRecord, crate::model::Model, Option<crate::harness::SweepResult>)> {
    let started = std::time::Instant::now();
    let (sweep, student, stages) = if cfg.distill.mode == RunMode::Sweep {
        let sweep = sweep_orders_on(pipeline)?;
        let (student, stages) = execute_mini_progressive(pipeline, &pipeline.curriculum.order)?;
        (Some(sweep), student, stages)
    } else {
        let (student, stages) = crate::harness::execute_mode(pipeline, cfg.distill.mode)?;
        (None, student, stages)
    };
    let (final_train_task_loss, _) = evaluate(&student, &pipeline.train_data)?;
    let (final_val_task_loss, final_val_accuracy) = evaluate(&student, &pipeline.val_data)?;
    let record = RunRecord {
        config_hash: cfg.canonical_hash()?,
        mode: cfg.distill.mode,
        curriculum: pipeline.curriculum.clone(),
        stages,
        final_train_task_loss,
        final_val_task_loss,
        final_val_accuracy,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((record, student, sweep))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => {
            let cfg = resolve_config(&cli)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            let (train, val) = crate::model::synth_dataset(
                cfg.task.classes,
                cfg.task.input_dim,
                cfg.task.train_samples,
                cfg.task.val_samples,
                cfg.task.noise_sigma,
                cfg.task_seed(),
            )?;
            let train_path = dir.join("train.data");
            let val_path = dir.join("val.data");
            write_dataset(&train_path, &train)?;
            write_dataset(&val_path, &val)?;
            println!("wrote {} ({} samples)", train_path.display(), train.len());
            println!("wrote {} ({} samples)", val_path.display(), val.len());
        }
        Command::TrainTeachers => {
            let cfg = resolve_config(&cli)?;
            let dir = out_dir(&cfg);
            let pipeline = build_pipeline(&cfg, Some(&dir))?;
            for teacher in &pipeline.teachers {
                let q = pipeline.q.score(&teacher.spec.id)?;
                println!(
                    "{}: val accuracy {q} ({})",
                    teacher.spec.id,
                    dir.join(format!("model-{}.ckpt", teacher.spec.id)).display()
                );
            }
            println!(
                "{}: initial student ({})",
                pipeline.student.spec.id,
                dir.join(format!("model-{}.ckpt", pipeline.student.spec.id)).display()
            );
        }
        Command::CostGraph => {
            let cfg = resolve_config(&cli)?;
            let dir = out_dir(&cfg);
            let pipeline = build_pipeline(&cfg, Some(&dir))?;
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("cost_matrix.csv"), pipeline.graph.to_csv())?;
            std::fs::write(dir.join("q.csv"), pipeline.q.to_csv())?;
            println!(
                "wrote {} ({} entries) and {}",
                dir.join("cost_matrix.csv").display(),
                pipeline.graph.entry_count(),
                dir.join("q.csv").display()
            );
        }
        Command::Plan { algo, k, costs, q, student } => {
            let cfg = resolve_config(&cli)?;
            let algo = match algo {
                Some(tag) => Algorithm::parse(tag)?,
                None => cfg.plan.algorithm,
            };
            let k = k.unwrap_or(cfg.plan.k);
            match (costs, q) {
                (Some(c), Some(qp)) => {
                    plan_from_files(c, qp, algo, k, student.as_deref(), cli.out.as_deref())?
                }
                (None, None) => {
                    let dir = out_dir(&cfg);
                    let pipeline = build_pipeline(&cfg, Some(&dir))?;
                    let curriculum = plan_curriculum(algo, &pipeline.graph, &pipeline.q, k)?;
                    let plan = export_plan(&pipeline.graph, &pipeline.student.spec.id, &curriculum)?;
                    println!("{}", curriculum.order.join(","));
                    std::fs::create_dir_all(&dir)?;
                    let json = serde_json::to_string_pretty(&plan)
                        .map_err(|e| Error::Format(format!("cannot serialize plan: {e}")))?;
                    std::fs::write(dir.join("plan.json"), json + "\n")?;
                }
                _ => {
                    return Err(Error::Argument(
                        "--costs and --q must be given together".into(),
                    ))
                }
            }
        }
        Command::Distill | Command::Report => {
            let cfg = resolve_config(&cli)?;
            let dir = out_dir(&cfg);
            let pipeline = build_pipeline(&cfg, Some(&dir))?;
            let (record, _, sweep) = record_for_mode(&pipeline, &cfg)?;
            let report =
                Report { pipeline: &pipeline, record: &record, landscape: None, sweep: sweep.as_ref() };
            let written = emit_report(&report, &dir)?;
            if matches!(cli.command, Command::Report) {
                for path in &written {
                    println!("wrote {}", path.display());
                }
            } else {
                println!(
                    "mode {:?}: curriculum [{}], final val accuracy {}, val task loss {}",
                    record.mode,
                    record.curriculum.order.join(","),
                    record.final_val_accuracy,
                    record.final_val_task_loss
                );
            }
        }
        Command::SweepOrders => {
            let mut cfg = resolve_config(&cli)?;
            cfg.distill.mode = RunMode::Sweep;
            let dir = out_dir(&cfg);
            let pipeline = build_pipeline(&cfg, Some(&dir))?;
            let (record, _, sweep) = record_for_mode(&pipeline, &cfg)?;
            let sweep = sweep.expect("sweep mode yields a sweep result");
            let report =
                Report { pipeline: &pipeline, record: &record, landscape: None, sweep: Some(&sweep) };
            emit_report(&report, &dir)?;
            println!(
                "planned order [{}] ranks {}/{}",
                sweep.bgs_order.join(","),
                sweep.bgs_rank,
                sweep.total_orders
            );
        }
        Command::Landscape { radius, points } => {
            let cfg = resolve_config(&cli)?;
            if cfg.distill.mode == RunMode::Sweep {
                return Err(Error::Argument(
                    "landscape needs a training mode (progressive | direct | ensemble | longer_baseline)".into(),
                ));
            }
            let dir = out_dir(&cfg);
            let pipeline = build_pipeline(&cfg, Some(&dir))?;
            let (record, student, _) = record_for_mode(&pipeline, &cfg)?;
            let grid = landscape_probe(
                &student,
                &pipeline.train_data,
                *radius,
                *points,
                derive_seed(cfg.seed, LANDSCAPE_SEED_TAG),
            )?;
            let report = Report {
                pipeline: &pipeline,
                record: &record,
                landscape: Some(&grid),
                sweep: None,
            };
            emit_report(&report, &dir)?;
            println!(
                "landscape center {} flatness {} ({})",
                grid.center(),
                grid.flatness(),
                dir.join("landscape.csv").display()
            );
        }
    }
    Ok(())
}

/// Parse `argv` and execute; returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful outcomes; everything
            // else is a usage error.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
