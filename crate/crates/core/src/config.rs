//! Experiment configuration: strict TOML with deterministic seed derivation.
//!
//! A config file fully determines an experiment. Every stochastic choice is
//! seeded, and every section seed is a small *tag* that is mixed with the
//! top-level seed through [`derive_seed`], so changing the one top-level
//! value re-seeds the whole experiment coherently while section streams stay
//! independent of each other. Unknown keys anywhere in the file are errors.
//!
//! Sections: `[task]` (the synthetic dataset), `[student]` and
//! `[teachers.<id>]` (model shapes), `[train]` (the student's initial
//! task-only training), `[distill]` (stage hyper-parameters and run mode),
//! `[plan]` (curriculum planner and cost probe), `[output]`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costgraph::CostConfig;
use crate::curriculum::Algorithm;
use crate::distill::LossConfig;
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::model::{LevelShape, ModelRole, ModelSpec};
use crate::rng::derive_seed;
use crate::tensor::Normalization;
use crate::train::{LrSchedule, TrainConfig};

/// `[task]`: the synthetic classification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    /// Number of classes K (prototypes live in the first K coordinates).
    pub classes: usize,
    /// Input dimensionality D.
    pub input_dim: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Isotropic noise scale around each class prototype.
    pub noise_sigma: f64,
    /// Section seed tag, mixed with the top-level seed.
    pub seed: u64,
}

/// Shape of one model: backbone hidden widths plus neck levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Identifier; for teachers this must equal the `[teachers.<id>]` key.
    pub id: String,
    pub backbone: Vec<usize>,
    /// Neck levels as `[channels, positions]` pairs.
    pub neck: Vec<[usize; 2]>,
    /// Init seed tag for the parameter draw.
    pub seed: u64,
}

/// One teacher: its shape and its task-training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    #[serde(flatten)]
    pub model: ModelSection,
    pub train: TrainSection,
}

/// A training recipe; `seed` is a tag, not the final shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl TrainSection {
    /// Materialize into a concrete [`TrainConfig`] under `global_seed`.
    pub fn materialize(&self, global_seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            lr_schedule: self.lr_schedule,
            seed: derive_seed(global_seed, self.seed),
        }
    }
}

/// How the distillation budget is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// One stage per curriculum entry, student carried across stages.
    Progressive,
    /// The whole budget in a single stage with the final teacher.
    Direct,
    /// The whole budget in a single stage distilling from all teachers.
    Ensemble,
    /// The whole budget as plain task-only training.
    LongerBaseline,
    /// Run every enumerated order in mini-budget mode.
    Sweep,
}

/// `[distill]`: loss weights and the per-stage training template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    pub lambda: f64,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_aggregation")]
    pub level_aggregation: Normalization,
    /// Per-stage training recipe (re-used by every stage; stage index is
    /// mixed into the derived seeds).
    pub stage: TrainSection,
}

fn default_mode() -> RunMode {
    RunMode::Progressive
}

fn default_normalization() -> Normalization {
    Normalization::Mean
}

fn default_aggregation() -> Normalization {
    Normalization::Sum
}

fn default_ridge_eps() -> f64 {
    1e-9
}

/// `[plan]`: curriculum planner selection and cost-probe settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub algorithm: Algorithm,
    pub k: usize,
    #[serde(default = "default_ridge_eps")]
    pub ridge_eps: f64,
}

/// `[output]`: where artifacts land.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

/// The complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Top-level seed; every section seed tag is mixed with it.
    pub seed: u64,
    pub task: TaskSection,
    pub student: ModelSection,
    pub teachers: BTreeMap<String, TeacherSection>,
    /// The student's initial task-only training (before any distillation).
    pub train: TrainSection,
    pub distill: DistillSection,
    pub plan: PlanSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// The bundled default benchmark: an 8-class, 32-dimensional task with a
    /// small student and a three-teacher capacity ladder that exercises the
    /// identity, channel-map, and composed adapter cases.
    pub fn bundled_default() -> Self {
        Self::from_toml_str(BUNDLED_DEFAULT_TOML).expect("bundled default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.classes < 2 {
            return Err(Error::Config(format!("task.classes must be ≥ 2, got {}", t.classes)));
        }
        if t.input_dim < t.classes {
            return Err(Error::Config(format!(
                "task.input_dim ({}) must be ≥ task.classes ({})",
                t.input_dim, t.classes
            )));
        }
        if t.train_samples == 0 || t.val_samples == 0 {
            return Err(Error::Config("task sample counts must be positive".into()));
        }
        if !(t.noise_sigma >= 0.0) || !t.noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "task.noise_sigma must be finite and ≥ 0, got {}",
                t.noise_sigma
            )));
        }
        if self.teachers.is_empty() {
            return Err(Error::Config("at least one [teachers.<id>] section required".into()));
        }
        for (key, teacher) in &self.teachers {
            if key != &teacher.model.id {
                return Err(Error::Config(format!(
                    "teacher section key '{key}' disagrees with its id '{}'",
                    teacher.model.id
                )));
            }
            if key == &self.student.id {
                return Err(Error::Config(format!(
                    "teacher id '{key}' collides with the student id"
                )));
            }
            teacher.train.materialize(self.seed).validate()?;
            self.teacher_spec(key)?.validate()?;
        }
        self.student_spec().validate()?;
        self.train.materialize(self.seed).validate()?;
        self.distill.stage.materialize(self.seed).validate()?;
        let d = &self.distill;
        if !(d.lambda >= 0.0) || !d.lambda.is_finite() {
            return Err(Error::Config(format!(
                "distill.lambda must be finite and ≥ 0, got {}",
                d.lambda
            )));
        }
        if self.plan.k == 0 {
            return Err(Error::Config("plan.k must be ≥ 1".into()));
        }
        if !(self.plan.ridge_eps >= 0.0) || !self.plan.ridge_eps.is_finite() {
            return Err(Error::Config(format!(
                "plan.ridge_eps must be finite and ≥ 0, got {}",
                self.plan.ridge_eps
            )));
        }
        if self.output.dir.is_empty() {
            return Err(Error::Config("output.dir must be non-empty".into()));
        }
        Ok(())
    }

    fn spec_from_section(&self, section: &ModelSection, role: ModelRole) -> ModelSpec {
        ModelSpec {
            id: section.id.clone(),
            role,
            input_dim: self.task.input_dim,
            backbone_layers: section.backbone.clone(),
            neck_levels: section
                .neck
                .iter()
                .map(|&[c, p]| LevelShape::new(c, p))
                .collect(),
            num_classes: self.task.classes,
        }
    }

    pub fn student_spec(&self) -> ModelSpec {
        self.spec_from_section(&self.student, ModelRole::Student)
    }

    pub fn teacher_spec(&self, id: &str) -> Result<ModelSpec> {
        let teacher = self
            .teachers
            .get(id)
            .ok_or_else(|| Error::Config(format!("no [teachers.{id}] section")))?;
        Ok(self.spec_from_section(&teacher.model, ModelRole::Teacher))
    }

    /// Teacher ids in lexicographic order (the map's natural order).
    pub fn teacher_ids(&self) -> Vec<String> {
        self.teachers.keys().cloned().collect()
    }

    /// Materialized init seed for the student's parameter draw.
    pub fn student_init_seed(&self) -> u64 {
        derive_seed(self.seed, self.student.seed)
    }

    /// Materialized init seed for a teacher's parameter draw.
    pub fn teacher_init_seed(&self, id: &str) -> Result<u64> {
        let teacher = self
            .teachers
            .get(id)
            .ok_or_else(|| Error::Config(format!("no [teachers.{id}] section")))?;
        Ok(derive_seed(self.seed, teacher.model.seed))
    }

    /// Materialized dataset generator seed.
    pub fn task_seed(&self) -> u64 {
        derive_seed(self.seed, self.task.seed)
    }

    /// Shuffle seed for distillation stage `index` (0-based): even lanes of
    /// the stage seed stream.
    pub fn stage_shuffle_seed(&self, index: usize) -> u64 {
        let base = derive_seed(self.seed, self.distill.stage.seed);
        derive_seed(base, 2 * index as u64)
    }

    /// Adapter init seed for distillation stage `index` (0-based): odd lanes
    /// of the stage seed stream, so adapters and shuffles never collide.
    pub fn stage_adapter_seed(&self, index: usize) -> u64 {
        let base = derive_seed(self.seed, self.distill.stage.seed);
        derive_seed(base, 2 * index as u64 + 1)
    }

    /// Per-stage training config with the stage-indexed shuffle seed.
    pub fn stage_train_config(&self, index: usize) -> TrainConfig {
        let mut cfg = self.distill.stage.materialize(self.seed);
        cfg.seed = self.stage_shuffle_seed(index);
        cfg
    }

    /// The distillation loss settings shared by every stage.
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.distill.lambda,
            normalization: self.distill.normalization,
            level_aggregation: self.distill.level_aggregation,
        }
    }

    /// Cost-probe settings for building the adaptation-cost graph.
    pub fn cost_config(&self) -> CostConfig {
        CostConfig {
            ridge_eps: self.plan.ridge_eps,
            normalization: self.distill.normalization,
            level_aggregation: self.distill.level_aggregation,
            dataset_id: format!("task-{}", self.task_seed()),
        }
    }

    /// Hash of the canonical serialized form: stable across formatting and
    /// key-order differences in the source file.
    pub fn canonical_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml_string()?.as_bytes()))
    }
}

/// The bundled default config (see [`ExperimentConfig::bundled_default`]).
pub const BUNDLED_DEFAULT_TOML: &str = include_str!("../fixtures/default.toml");
