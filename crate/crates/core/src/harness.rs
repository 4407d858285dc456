//! Config-driven experiment pipeline: data → teachers → costs → plan → run.
//!
//! [`build_pipeline`] materializes everything an experiment needs from an
//! [`ExperimentConfig`]: the synthetic task, the trained (or checkpointed)
//! teacher pool, the teachers' quality scores, the initial task-trained
//! student, the adaptation-cost graph, and the planned curriculum.
//! [`run_experiment`] then spends the distillation budget according to the
//! configured mode, under strict budget parity: if the planned curriculum
//! has L stages of E epochs, every mode consumes exactly L·E epochs —
//! progressive as L distillation stages, direct and ensemble as one long
//! stage, and the longer task-only baseline as L back-to-back task stages
//! whose learning-rate schedule restarts at each boundary.
//!
//! [`sweep_orders`] reruns the progressive mode for every enumerable teacher
//! order under a mini budget (linear learning-rate decay), ranking the
//! backward-greedy plan among them. [`landscape_probe`] maps the loss
//! surface around a trained model along two filter-normalized random
//! directions. [`emit_report`] writes the byte-stable artifact files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunMode};
use crate::costgraph::{build_cost_graph, CostGraph};
use crate::curriculum::{
    bgs, enumeration_count, export_plan, plan_curriculum, Curriculum, PerformanceTable, PlanExport,
};
use crate::distill::{distill_stage, ensemble_stage, StageConfig};
use crate::error::{Error, Result};
use crate::io::{read_model, write_model};
use crate::model::{build_model, evaluate, Dataset, Model, Split};
use crate::rng::RngStream;
use crate::train::{train, LrSchedule, MetricsLog, TaskLoss};

/// Everything an experiment run consumes, fully materialized.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub train_data: Dataset,
    pub val_data: Dataset,
    /// Teacher pool in lexicographic id order.
    pub teachers: Vec<Model>,
    /// Teacher quality scores (validation accuracy).
    pub q: PerformanceTable,
    /// The task-pretrained student every mode starts from.
    pub student: Model,
    pub student_log: MetricsLog,
    pub graph: CostGraph,
    pub curriculum: Curriculum,
    pub plan: PlanExport,
}

/// One executed stage: which teacher (if any) and its epoch history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Teacher id, `"-"` for task-only stages, ids joined with `+` for the
    /// ensemble.
    pub teacher_id: String,
    pub metrics: MetricsLog,
}

/// The durable outcome of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Hash of the canonical config serialization.
    pub config_hash: String,
    pub mode: RunMode,
    /// The planned curriculum (budget source for every mode).
    pub curriculum: Curriculum,
    pub stages: Vec<StageRecord>,
    pub final_train_task_loss: f64,
    pub final_val_task_loss: f64,
    pub final_val_accuracy: f64,
    /// Excluded from all determinism comparisons; lives only in the summary.
    pub wall_time_secs: f64,
}

/// Contiguous row range of a dataset as its own dataset.
fn subset(data: &Dataset, lo: usize, hi: usize, split: Split) -> Result<Dataset> {
    let indices: Vec<usize> = (lo..hi).collect();
    let (inputs, labels) = data.gather(&indices)?;
    Ok(Dataset { inputs, labels, split, gen_seed: data.gen_seed })
}

/// 80/20 split of the cost-probe dataset (the task's train split).
fn probe_split(data: &Dataset) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Argument("cost probe needs at least 2 samples".into()));
    }
    let cut = (n * 4 / 5).clamp(1, n - 1);
    Ok((subset(data, 0, cut, Split::Train)?, subset(data, cut, n, Split::Val)?))
}

/// Load a checkpoint if it exists and matches `expected` id and shape;
/// otherwise train from scratch with `build`, saving the result when a
/// checkpoint directory is given.
fn load_or_train(
    ckpt_dir: Option<&Path>,
    expected: &crate::model::ModelSpec,
    build: impl FnOnce() -> Result<(Model, MetricsLog)>,
) -> Result<(Model, MetricsLog)> {
    if let Some(dir) = ckpt_dir {
        let path = dir.join(format!("model-{}.ckpt", expected.id));
        if path.exists() {
            let model = read_model(&path)?;
            if &model.spec != expected {
                return Err(Error::Config(format!(
                    "checkpoint {} was built for a different spec than the config's '{}'",
                    path.display(),
                    expected.id
                )));
            }
            return Ok((model, MetricsLog::default()));
        }
    }
    let (model, log) = build()?;
    if let Some(dir) = ckpt_dir {
        std::fs::create_dir_all(dir)?;
        write_model(&dir.join(format!("model-{}.ckpt", model.spec.id)), &model)?;
    }
    Ok((model, log))
}

/// Materialize the full pipeline. When `ckpt_dir` is given, previously
/// saved teacher/student checkpoints are reused and fresh ones are saved.
pub fn build_pipeline(cfg: &ExperimentConfig, ckpt_dir: Option<&Path>) -> Result<Pipeline> {
    cfg.validate()?;
    let (train_data, val_data) = crate::model::synth_dataset(
        cfg.task.classes,
        cfg.task.input_dim,
        cfg.task.train_samples,
        cfg.task.val_samples,
        cfg.task.noise_sigma,
        cfg.task_seed(),
    )?;

    let mut teachers = Vec::new();
    let mut q_pairs = Vec::new();
    for id in cfg.teacher_ids() {
        let spec = cfg.teacher_spec(&id)?;
        let section = &cfg.teachers[&id];
        let train_cfg = section.train.materialize(cfg.seed);
        let init_seed = cfg.teacher_init_seed(&id)?;
        let (teacher, _) = load_or_train(ckpt_dir, &spec, || {
            let fresh = build_model(&spec, init_seed)?;
            train(&fresh, &train_data, &val_data, &train_cfg, &mut TaskLoss)
        })?;
        let (_, accuracy) = evaluate(&teacher, &val_data)?;
        q_pairs.push((id.clone(), accuracy));
        teachers.push(teacher);
    }
    let q = PerformanceTable::new("val-acc", &q_pairs)?;

    let student_spec = cfg.student_spec();
    let ots_cfg = cfg.train.materialize(cfg.seed);
    let init_seed = cfg.student_init_seed();
    let (student, student_log) = load_or_train(ckpt_dir, &student_spec, || {
        let fresh = build_model(&student_spec, init_seed)?;
        train(&fresh, &train_data, &val_data, &ots_cfg, &mut TaskLoss)
    })?;

    let (probe_train, probe_val) = probe_split(&train_data)?;
    let graph = build_cost_graph(&student, &teachers, &probe_train, &probe_val, &cfg.cost_config())?;
    let curriculum = plan_curriculum(cfg.plan.algorithm, &graph, &q, cfg.plan.k)?;
    let plan = export_plan(&graph, &student.spec.id, &curriculum)?;

    Ok(Pipeline {
        cfg: cfg.clone(),
        train_data,
        val_data,
        teachers,
        q,
        student,
        student_log,
        graph,
        curriculum,
        plan,
    })
}

fn find_teacher<'a>(pipeline: &'a Pipeline, id: &str) -> Result<&'a Model> {
    pipeline
        .teachers
        .iter()
        .find(|t| t.spec.id == id)
        .ok_or_else(|| Error::Argument(format!("curriculum references unknown teacher '{id}'")))
}

/// Execute one budgeted mode from the pipeline's initial student; returns
/// the final student and the per-stage records.
pub fn execute_mode(pipeline: &Pipeline, mode: RunMode) -> Result<(Model, Vec<StageRecord>)> {
    let cfg = &pipeline.cfg;
    let order = &pipeline.curriculum.order;
    let stage_epochs = cfg.distill.stage.epochs;
    let budget = order.len() * stage_epochs;

    match mode {
        RunMode::Progressive => {
            let mut student = pipeline.student.clone();
            let mut stages = Vec::with_capacity(order.len());
            for (i, teacher_id) in order.iter().enumerate() {
                let teacher = find_teacher(pipeline, teacher_id)?;
                let stage = StageConfig {
                    teacher_id: teacher_id.clone(),
                    train: cfg.stage_train_config(i),
                    loss: cfg.loss_config(),
                    adapter_init_seed: cfg.stage_adapter_seed(i),
                };
                let (next, log) =
                    distill_stage(&student, teacher, &pipeline.train_data, &pipeline.val_data, &stage)?;
                student = next;
                stages.push(StageRecord { teacher_id: teacher_id.clone(), metrics: log });
            }
            Ok((student, stages))
        }
        RunMode::Direct => {
            let final_id = pipeline
                .curriculum
                .order
                .last()
                .ok_or_else(|| Error::Argument("empty curriculum".into()))?;
            let teacher = find_teacher(pipeline, final_id)?;
            let mut train_cfg = cfg.stage_train_config(0);
            train_cfg.epochs = budget;
            let stage = StageConfig {
                teacher_id: final_id.clone(),
                train: train_cfg,
                loss: cfg.loss_config(),
                adapter_init_seed: cfg.stage_adapter_seed(0),
            };
            let (student, log) = distill_stage(
                &pipeline.student,
                teacher,
                &pipeline.train_data,
                &pipeline.val_data,
                &stage,
            )?;
            Ok((student, vec![StageRecord { teacher_id: final_id.clone(), metrics: log }]))
        }
        RunMode::Ensemble => {
            let teachers: Vec<&Model> = pipeline.teachers.iter().collect();
            let label = pipeline
                .teachers
                .iter()
                .map(|t| t.spec.id.as_str())
                .collect::<Vec<_>>()
                .join("+");
            let mut train_cfg = cfg.stage_train_config(0);
            train_cfg.epochs = budget;
            let stage = StageConfig {
                teacher_id: label.clone(),
                train: train_cfg,
                loss: cfg.loss_config(),
                adapter_init_seed: cfg.stage_adapter_seed(0),
            };
            let (student, log) = ensemble_stage(
                &pipeline.student,
                &teachers,
                &pipeline.train_data,
                &pipeline.val_data,
                &stage,
            )?;
            Ok((student, vec![StageRecord { teacher_id: label, metrics: log }]))
        }
        RunMode::LongerBaseline => {
            // Same budget as the progressive run, task-only, with the
            // learning-rate schedule restarting at every stage boundary.
            let mut student = pipeline.student.clone();
            let mut combined = MetricsLog::default();
            for i in 0..order.len() {
                let train_cfg = cfg.stage_train_config(i);
                let (next, log) =
                    train(&student, &pipeline.train_data, &pipeline.val_data, &train_cfg, &mut TaskLoss)?;
                student = next;
                combined.extend_from(&log);
            }
            Ok((student, vec![StageRecord { teacher_id: "-".into(), metrics: combined }]))
        }
        RunMode::Sweep => Err(Error::Argument(
            "mode 'sweep' runs through sweep_orders, not run_experiment".into(),
        )),
    }
}

/// Run the configured experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig, ckpt_dir: Option<&Path>) -> Result<RunRecord> {
    let started = Instant::now();
    let pipeline = build_pipeline(cfg, ckpt_dir)?;
    let (student, stages) = execute_mode(&pipeline, cfg.distill.mode)?;
    let (final_train_task_loss, _) = evaluate(&student, &pipeline.train_data)?;
    let (final_val_task_loss, final_val_accuracy) = evaluate(&student, &pipeline.val_data)?;
    Ok(RunRecord {
        config_hash: cfg.canonical_hash()?,
        mode: cfg.distill.mode,
        curriculum: pipeline.curriculum,
        stages,
        final_train_task_loss,
        final_val_task_loss,
        final_val_accuracy,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// One row of an order sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub order: Vec<String>,
    pub final_val_accuracy: f64,
    /// Competition rank: 1 + number of strictly better rows.
    pub rank: usize,
}

/// All enumerated orders with their mini-budget outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub bgs_order: Vec<String>,
    pub bgs_rank: usize,
    pub total_orders: usize,
}

/// Cap on how many sequences a sweep may enumerate.
pub const SWEEP_GUARD: u128 = 1000;

/// Run one teacher order progressively under the mini budget: the per-stage
/// recipe with the learning-rate schedule forced linear.
pub fn execute_mini_progressive(
    pipeline: &Pipeline,
    order: &[String],
) -> Result<(Model, Vec<StageRecord>)> {
    let cfg = &pipeline.cfg;
    let mut student = pipeline.student.clone();
    let mut stages = Vec::with_capacity(order.len());
    for (i, teacher_id) in order.iter().enumerate() {
        let teacher = find_teacher(pipeline, teacher_id)?;
        let mut train_cfg = cfg.stage_train_config(i);
        train_cfg.lr_schedule = LrSchedule::Linear;
        let stage = StageConfig {
            teacher_id: teacher_id.clone(),
            train: train_cfg,
            loss: cfg.loss_config(),
            adapter_init_seed: cfg.stage_adapter_seed(i),
        };
        let (next, log) =
            distill_stage(&student, teacher, &pipeline.train_data, &pipeline.val_data, &stage)?;
        student = next;
        stages.push(StageRecord { teacher_id: teacher_id.clone(), metrics: log });
    }
    Ok((student, stages))
}

/// Run every repetition-free order of length ≤ k under a mini budget
/// (every stage forced onto the linear learning-rate schedule) and rank the
/// backward-greedy plan among them.
pub fn sweep_orders(cfg: &ExperimentConfig, ckpt_dir: Option<&Path>) -> Result<SweepResult> {
    cfg.validate()?;
    guard_sweep_size(cfg)?;
    let pipeline = build_pipeline(cfg, ckpt_dir)?;
    sweep_orders_on(&pipeline)
}

fn guard_sweep_size(cfg: &ExperimentConfig) -> Result<()> {
    let count = enumeration_count(cfg.teachers.len(), cfg.plan.k);
    if count > SWEEP_GUARD {
        return Err(Error::Argument(format!(
            "sweep would enumerate {count} orders (> {SWEEP_GUARD}); shrink the pool or k"
        )));
    }
    Ok(())
}

/// [`sweep_orders`] over an already-built pipeline.
pub fn sweep_orders_on(pipeline: &Pipeline) -> Result<SweepResult> {
    let cfg = &pipeline.cfg;
    guard_sweep_size(cfg)?;
    let orders = crate::curriculum::enumerate_orders(&cfg.teacher_ids(), cfg.plan.k)?;

    let mut rows = Vec::with_capacity(orders.len());
    for order in &orders {
        let (student, _) = execute_mini_progressive(pipeline, order)?;
        let (_, accuracy) = evaluate(&student, &pipeline.val_data)?;
        rows.push(SweepRow { order: order.clone(), final_val_accuracy: accuracy, rank: 0 });
    }

    let accuracies: Vec<f64> = rows.iter().map(|r| r.final_val_accuracy).collect();
    for row in &mut rows {
        row.rank = 1 + accuracies.iter().filter(|&&a| a > row.final_val_accuracy).count();
    }

    let reference = bgs(&pipeline.graph, &pipeline.q, cfg.plan.k)?;
    let bgs_rank = rows
        .iter()
        .find(|r| r.order == reference.order)
        .map(|r| r.rank)
        .ok_or_else(|| Error::Argument("backward-greedy order missing from enumeration".into()))?;

    Ok(SweepResult {
        rows,
        bgs_order: reference.order,
        bgs_rank,
        total_orders: orders.len(),
    })
}

/// A sampled loss surface: `losses[i][j]` is the task loss at
/// `θ + coords[i]·d₁ + coords[j]·d₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub coords: Vec<f64>,
    pub losses: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    /// The unperturbed loss (grid midpoint).
    pub fn center(&self) -> f64 {
        let m = self.coords.len() / 2;
        self.losses[m][m]
    }

    /// Mean loss over the grid minus the center: how much the surface rises
    /// around the minimum on average (smaller = flatter).
    pub fn flatness(&self) -> f64 {
        let n = (self.coords.len() * self.coords.len()) as f64;
        let sum: f64 = self.losses.iter().flatten().sum();
        sum / n - self.center()
    }

    /// Comma-separated matrix; first row and column carry grid coordinates.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for &c in &self.coords {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push('\n');
        for (row, &a) in self.losses.iter().zip(&self.coords) {
            out.push_str(&a.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Draw one filter-normalized random direction: per weight matrix, each row
/// is rescaled to the corresponding parameter row's norm; bias entries are
/// zero, so the probe moves only through weight space.
fn filter_normalized_direction(model: &Model, rng: &mut RngStream) -> Vec<crate::tensor::Tensor> {
    let mut direction = Vec::new();
    for t in model.params.tensors() {
        let mut d = crate::tensor::Tensor::zeros(t.shape()).expect("same shape");
        if t.shape().len() == 2 {
            rng.fill_normal(d.data_mut());
            let cols = t.shape()[1];
            for r in 0..t.shape()[0] {
                let trow = &t.data()[r * cols..(r + 1) * cols];
                let drow = &mut d.data_mut()[r * cols..(r + 1) * cols];
                let tnorm = trow.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dnorm = drow.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if dnorm > 0.0 { tnorm / dnorm } else { 0.0 };
                for v in drow {
                    *v *= scale;
                }
            }
        }
        // 1-D tensors are biases: left at zero.
        direction.push(d);
    }
    direction
}

/// Sample the task-loss surface around `model` on a symmetric
/// `grid_points × grid_points` grid of radius `grid_radius` along two
/// seeded random directions. `grid_points` must be odd (≥ 3) so the exact
/// center is on the grid.
pub fn landscape_probe(
    model: &Model,
    data: &Dataset,
    grid_radius: f64,
    grid_points: usize,
    seed: u64,
) -> Result<LandscapeGrid> {
    if grid_points < 3 || grid_points.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "grid_points must be odd and ≥ 3, got {grid_points}"
        )));
    }
    if !(grid_radius > 0.0) || !grid_radius.is_finite() {
        return Err(Error::Argument(format!(
            "grid_radius must be finite and > 0, got {grid_radius}"
        )));
    }
    let mut rng = RngStream::new(seed);
    let d1 = filter_normalized_direction(model, &mut rng);
    let d2 = filter_normalized_direction(model, &mut rng);

    let half = (grid_points / 2) as i64;
    let step = grid_radius / half as f64;
    // Integer-scaled coordinates make the midpoint exactly 0.
    let coords: Vec<f64> = (-half..=half).map(|i| i as f64 * step).collect();

    let mut losses = vec![vec![0.0; grid_points]; grid_points];
    let mut probe = model.clone();
    for (i, &a) in coords.iter().enumerate() {
        for (j, &b) in coords.iter().enumerate() {
            for (((p, base), dir1), dir2) in probe
                .params
                .tensors_mut()
                .zip(model.params.tensors())
                .zip(&d1)
                .zip(&d2)
            {
                for (((pv, &bv), &v1), &v2) in
                    p.data_mut().iter_mut().zip(base.data()).zip(dir1.data()).zip(dir2.data())
                {
                    *pv = bv + a * v1 + b * v2;
                }
            }
            let (loss, _) = evaluate(&probe, data)?;
            losses[i][j] = loss;
        }
    }
    Ok(LandscapeGrid { coords, losses })
}

/// Summary object: final metrics plus cross-file pointers; the only
/// artifact that carries wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub mode: RunMode,
    pub curriculum: Vec<String>,
    pub final_train_task_loss: f64,
    pub final_val_task_loss: f64,
    pub final_val_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_order: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bgs_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_orders: Option<usize>,
    pub wall_time_secs: f64,
}

/// Everything [`emit_report`] may write.
pub struct Report<'a> {
    pub pipeline: &'a Pipeline,
    pub record: &'a RunRecord,
    pub landscape: Option<&'a LandscapeGrid>,
    pub sweep: Option<&'a SweepResult>,
}

/// Per-epoch metrics table across stages.
pub fn metrics_csv(stages: &[StageRecord]) -> String {
    let mut out =
        String::from("stage,teacher_id,epoch,train_task_loss,train_distill_loss,val_task_loss,val_accuracy\n");
    for (i, stage) in stages.iter().enumerate() {
        for m in &stage.metrics.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i,
                stage.teacher_id,
                m.epoch,
                m.train_task_loss,
                m.train_distill_loss,
                m.val_task_loss,
                m.val_accuracy
            ));
        }
    }
    out
}

fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("order,final_val_accuracy,rank\n");
    for row in &sweep.rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.order.join("->"),
            row.final_val_accuracy,
            row.rank
        ));
    }
    out
}

/// Write the artifact files for a run: metrics, cost matrix, quality table,
/// plan, optional landscape and sweep tables, and the summary. All files
/// except `summary.json` are byte-deterministic for equal configs.
/// Overwrites are idempotent. Returns the written paths.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };

    emit("metrics.csv", metrics_csv(&report.record.stages))?;
    emit("cost_matrix.csv", report.pipeline.graph.to_csv())?;
    emit("q.csv", report.pipeline.q.to_csv())?;
    let plan_json = serde_json::to_string_pretty(&report.pipeline.plan)
        .map_err(|e| Error::Format(format!("cannot serialize plan: {e}")))?;
    emit("plan.json", plan_json + "\n")?;
    if let Some(grid) = report.landscape {
        emit("landscape.csv", grid.to_csv())?;
    }
    if let Some(sweep) = report.sweep {
        emit("sweep.csv", sweep_csv(sweep))?;
    }

    let best_order = report.sweep.map(|s| {
        s.rows
            .iter()
            .find(|r| r.rank == 1)
            .expect("some row has rank 1")
            .order
            .clone()
    });
    let summary = RunSummary {
        config_hash: report.record.config_hash.clone(),
        mode: report.record.mode,
        curriculum: report.record.curriculum.order.clone(),
        final_train_task_loss: report.record.final_train_task_loss,
        final_val_task_loss: report.record.final_val_task_loss,
        final_val_accuracy: report.record.final_val_accuracy,
        best_order,
        bgs_rank: report.sweep.map(|s| s.bgs_rank),
        total_orders: report.sweep.map(|s| s.total_orders),
        wall_time_secs: report.record.wall_time_secs,
    };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("cannot serialize summary: {e}")))?;
    emit("summary.json", summary_json + "\n")?;
    Ok(written)
}

/// Equality of run records with wall time masked out.
pub fn records_equivalent(a: &RunRecord, b: &RunRecord) -> bool {
    let mut b = b.clone();
    b.wall_time_secs = a.wall_time_secs;
    *a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        DistillSection, ModelSection, OutputSection, PlanSection, TaskSection, TeacherSection,
        TrainSection,
    };
    use crate::curriculum::Algorithm;
    use crate::io::model_hash;
    use crate::tensor::Normalization;

    fn train_section(epochs: usize, seed: u64) -> TrainSection {
        TrainSection {
            epochs,
            batch_size: 16,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_schedule: LrSchedule::Step,
            seed,
        }
    }

    /// A deliberately tiny benchmark so harness tests stay fast.
    fn tiny_config() -> ExperimentConfig {
        let mut teachers = std::collections::BTreeMap::new();
        teachers.insert(
            "A".to_string(),
            TeacherSection {
                model: ModelSection {
                    id: "A".into(),
                    backbone: vec![8],
                    neck: vec![[4, 2]],
                    seed: 11,
                },
                train: train_section(6, 21),
            },
        );
        teachers.insert(
            "B".to_string(),
            TeacherSection {
                model: ModelSection {
                    id: "B".into(),
                    backbone: vec![12],
                    neck: vec![[6, 2]],
                    seed: 12,
                },
                train: train_section(6, 22),
            },
        );
        ExperimentConfig {
            seed: 7,
            task: TaskSection {
                classes: 3,
                input_dim: 8,
                train_samples: 48,
                val_samples: 32,
                noise_sigma: 0.4,
                seed: 1,
            },
            student: ModelSection { id: "S".into(), backbone: vec![6], neck: vec![[4, 2]], seed: 10 },
            teachers,
            train: train_section(2, 30),
            distill: DistillSection {
                mode: RunMode::Progressive,
                lambda: 0.5,
                normalization: Normalization::Mean,
                level_aggregation: Normalization::Sum,
                stage: train_section(3, 40),
            },
            plan: PlanSection { algorithm: Algorithm::Bgs, k: 2, ridge_eps: 1e-9 },
            output: OutputSection { dir: "out".into() },
        }
    }

    #[test]
    fn budget_parity_across_modes() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let budget = pipeline.curriculum.order.len() * cfg.distill.stage.epochs;
        assert!(budget > 0);
        for mode in [
            RunMode::Progressive,
            RunMode::Direct,
            RunMode::Ensemble,
            RunMode::LongerBaseline,
        ] {
            let (_, stages) = execute_mode(&pipeline, mode).unwrap();
            let epochs: usize = stages.iter().map(|s| s.metrics.epochs.len()).sum();
            assert_eq!(epochs, budget, "mode {mode:?} breaks budget parity");
            match mode {
                RunMode::Progressive => assert_eq!(stages.len(), pipeline.curriculum.order.len()),
                _ => assert_eq!(stages.len(), 1),
            }
        }
    }

    #[test]
    fn run_experiment_is_deterministic() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert!(records_equivalent(&a, &b));
        assert_eq!(a.config_hash, cfg.canonical_hash().unwrap());
    }

    #[test]
    fn progressive_stages_carry_the_student_over() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let (final_model, stages) = execute_mode(&pipeline, RunMode::Progressive).unwrap();
        assert!(stages.len() >= 2, "need a multi-stage plan for this test");

        // Re-run the same stages by hand, checking the hash chain.
        let mut student = pipeline.student.clone();
        for (i, teacher_id) in pipeline.curriculum.order.iter().enumerate() {
            let teacher = find_teacher(&pipeline, teacher_id).unwrap();
            let stage = StageConfig {
                teacher_id: teacher_id.clone(),
                train: cfg.stage_train_config(i),
                loss: cfg.loss_config(),
                adapter_init_seed: cfg.stage_adapter_seed(i),
            };
            let (next, _) =
                distill_stage(&student, teacher, &pipeline.train_data, &pipeline.val_data, &stage)
                    .unwrap();
            student = next;
        }
        assert_eq!(model_hash(&student).unwrap(), model_hash(&final_model).unwrap());
    }

    #[test]
    fn checkpoints_round_trip_through_the_pipeline() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let fresh = build_pipeline(&cfg, Some(dir.path())).unwrap();
        // Checkpoints now exist; a second build must load identical models.
        for id in cfg.teacher_ids() {
            assert!(dir.path().join(format!("model-{id}.ckpt")).exists());
        }
        let cached = build_pipeline(&cfg, Some(dir.path())).unwrap();
        for (a, b) in fresh.teachers.iter().zip(&cached.teachers) {
            assert_eq!(a, b);
        }
        assert_eq!(fresh.student, cached.student);
        assert_eq!(fresh.graph, cached.graph);

        // A checkpoint built for a different shape is rejected.
        let mut other = cfg.clone();
        other.student.backbone = vec![9];
        assert!(matches!(
            build_pipeline(&other, Some(dir.path())),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_epoch_baseline_keeps_the_initial_student() {
        let mut cfg = tiny_config();
        cfg.distill.mode = RunMode::LongerBaseline;
        cfg.distill.stage.epochs = 0;
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let (student, stages) = execute_mode(&pipeline, RunMode::LongerBaseline).unwrap();
        assert_eq!(student, pipeline.student);
        assert_eq!(stages.len(), 1);
        assert!(stages[0].metrics.epochs.is_empty());
        let record = run_experiment(&cfg, None).unwrap();
        let (train_loss, _) = evaluate(&pipeline.student, &pipeline.train_data).unwrap();
        let (val_loss, val_acc) = evaluate(&pipeline.student, &pipeline.val_data).unwrap();
        assert_eq!(record.final_train_task_loss, train_loss);
        assert_eq!(record.final_val_task_loss, val_loss);
        assert_eq!(record.final_val_accuracy, val_acc);
    }

    #[test]
    fn teacher_quality_is_validation_accuracy() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        for teacher in &pipeline.teachers {
            let (_, acc) = evaluate(teacher, &pipeline.val_data).unwrap();
            assert_eq!(pipeline.q.score(&teacher.spec.id).unwrap(), acc);
        }
        // The graph covers {student} ∪ pool with all ordered pairs.
        let n = pipeline.teachers.len() + 1;
        assert_eq!(pipeline.graph.entry_count(), n * (n - 1));
    }

    #[test]
    fn sweep_covers_every_order_and_ranks_consistently() {
        let cfg = tiny_config();
        let sweep = sweep_orders(&cfg, None).unwrap();
        assert_eq!(sweep.total_orders as u128, enumeration_count(2, 2));
        assert_eq!(sweep.rows.len(), sweep.total_orders);
        // Ranks are competition ranks.
        for row in &sweep.rows {
            let better = sweep
                .rows
                .iter()
                .filter(|r| r.final_val_accuracy > row.final_val_accuracy)
                .count();
            assert_eq!(row.rank, better + 1);
        }
        // The reference order is present with its rank.
        assert!(sweep.rows.iter().any(|r| r.order == sweep.bgs_order && r.rank == sweep.bgs_rank));
        assert!(sweep.rows.iter().any(|r| r.rank == 1));
    }

    #[test]
    fn sweep_guard_refuses_oversized_enumerations() {
        let mut cfg = tiny_config();
        // 7 teachers, k = 7 → 13699 sequences > 1000. Clone teacher A's
        // shape under new ids; the guard must fire before any training.
        for i in 0..5 {
            let id = format!("T{i}");
            let mut section = cfg.teachers["A"].clone();
            section.model.id = id.clone();
            section.model.seed = 100 + i;
            cfg.teachers.insert(id, section);
        }
        cfg.plan.k = 7;
        let err = sweep_orders(&cfg, None).unwrap_err();
        match err {
            Error::Argument(msg) => assert!(msg.contains("13699"), "got: {msg}"),
            other => panic!("expected argument error, got {other:?}"),
        }
    }

    #[test]
    fn landscape_center_and_shape() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let grid = landscape_probe(&pipeline.student, &pipeline.train_data, 0.5, 5, 99).unwrap();
        assert_eq!(grid.coords.len(), 5);
        assert_eq!(grid.losses.len(), 5);
        assert!(grid.losses.iter().all(|row| row.len() == 5));
        let (loss, _) = evaluate(&pipeline.student, &pipeline.train_data).unwrap();
        assert!(
            (grid.center() - loss).abs() <= 1e-9,
            "center {} vs eval {loss}",
            grid.center()
        );
        assert_eq!(grid.coords[2], 0.0);
        // Even grid sizes are rejected.
        assert!(landscape_probe(&pipeline.student, &pipeline.train_data, 0.5, 4, 99).is_err());
        assert!(landscape_probe(&pipeline.student, &pipeline.train_data, 0.0, 5, 99).is_err());
    }

    #[test]
    fn landscape_directions_leave_biases_alone() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let mut rng = RngStream::new(3);
        let d = filter_normalized_direction(&pipeline.student, &mut rng);
        for (dir, base) in d.iter().zip(pipeline.student.params.tensors()) {
            if base.shape().len() == 1 {
                assert!(dir.data().iter().all(|&v| v == 0.0), "bias direction not zero");
            } else {
                // Each weight row of the direction has the parameter row's
                // norm (or is zero if the parameter row is zero).
                let cols = base.shape()[1];
                for r in 0..base.shape()[0] {
                    let tnorm: f64 =
                        base.data()[r * cols..(r + 1) * cols].iter().map(|v| v * v).sum::<f64>();
                    let dnorm: f64 =
                        dir.data()[r * cols..(r + 1) * cols].iter().map(|v| v * v).sum::<f64>();
                    assert!(
                        (tnorm.sqrt() - dnorm.sqrt()).abs() < 1e-9,
                        "row {r} norms differ: {} vs {}",
                        tnorm.sqrt(),
                        dnorm.sqrt()
                    );
                }
            }
        }
    }

    #[test]
    fn report_files_are_byte_deterministic() {
        let cfg = tiny_config();
        let pipeline = build_pipeline(&cfg, None).unwrap();
        let record = run_experiment(&cfg, None).unwrap();
        let grid = landscape_probe(&pipeline.student, &pipeline.train_data, 0.5, 3, 5).unwrap();
        let sweep = sweep_orders(&cfg, None).unwrap();

        let emit_all = |dir: &Path| {
            let report = Report {
                pipeline: &pipeline,
                record: &record,
                landscape: Some(&grid),
                sweep: Some(&sweep),
            };
            emit_report(&report, dir).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = emit_all(d1.path());
        let p2 = emit_all(d2.path());
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(a.file_name(), b.file_name());
            let (ca, cb) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
            if a.file_name().unwrap() == "summary.json" {
                continue; // carries wall time
            }
            assert_eq!(ca, cb, "{:?} differs between emissions", a.file_name());
        }
        // Metrics row count = header + Σ stage epochs.
        let metrics = std::fs::read_to_string(d1.path().join("metrics.csv")).unwrap();
        let rows = metrics.lines().count() - 1;
        let total: usize = record.stages.iter().map(|s| s.metrics.epochs.len()).sum();
        assert_eq!(rows, total);
        // Summary's best order is the sweep's rank-1 row.
        let summary: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(d1.path().join("summary.json")).unwrap())
                .unwrap();
        let best = summary.best_order.unwrap();
        let rank1 = sweep.rows.iter().find(|r| r.rank == 1).unwrap();
        assert_eq!(best, rank1.order);
    }
}
