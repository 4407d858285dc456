//! Feature-matching distillation.
//!
//! A frozen teacher's neck feature maps are the target; the student minimizes
//! `λ · Σ_levels ‖F_T − r(F_S)‖² + task loss`, where `r(·)` is a per-level
//! dimension adapter: identity when shapes already match, a channel matrix
//! (the 1×1-convolution analog) when channel counts differ, nearest-neighbor
//! upsampling when position counts differ, or the two composed. Channel
//! matrices are trainable and are updated jointly with the student.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FeatureSet, LevelShape, Model, OutputGrads};
use crate::rng::{derive_seed, RngStream};
use crate::tensor::{matmul, matmul_at, matmul_bt, nearest_upsample, Normalization, Tensor};
use crate::train::{train, BatchLoss, LossProvider, MetricsLog, TrainConfig};

/// Per-level adapter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LevelAdapter {
    /// Shapes already match; features pass through bit-exactly.
    Identity,
    /// Channel matrix `M: C_to × C_from`, applied per position.
    ChannelMap(Tensor),
    /// Nearest-neighbor position upsampling by an integer factor.
    Upsample(usize),
    /// Channel matrix first, then upsampling.
    Composed { map: Tensor, factor: usize },
}

impl LevelAdapter {
    fn channel_map(&self) -> Option<&Tensor> {
        match self {
            LevelAdapter::ChannelMap(m) | LevelAdapter::Composed { map: m, .. } => Some(m),
            _ => None,
        }
    }

    fn channel_map_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            LevelAdapter::ChannelMap(m) | LevelAdapter::Composed { map: m, .. } => Some(m),
            _ => None,
        }
    }
}

/// A dimension adapter `r(·)`: one [`LevelAdapter`] per neck level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub levels: Vec<LevelAdapter>,
    /// True iff any level carries a channel matrix (the trainable case).
    pub trainable: bool,
}

impl Adapter {
    pub fn from_levels(levels: Vec<LevelAdapter>) -> Self {
        let trainable = levels.iter().any(|l| l.channel_map().is_some());
        Adapter { levels, trainable }
    }

    /// Mutable access to each level's channel matrix, if it has one.
    pub fn channel_maps_mut(&mut self) -> Vec<Option<&mut Tensor>> {
        self.levels.iter_mut().map(|l| l.channel_map_mut()).collect()
    }
}

/// Build the adapter taking `from_shapes` features to `to_shapes` features:
/// per level, identity / channel map / upsample / composed as the shape
/// difference dictates. Channel matrices initialize uniform in `(−s, s)`,
/// `s = sqrt(1/C_from)`, drawn in level order from a stream seeded by `seed`.
pub fn make_adapter(
    from_shapes: &[LevelShape],
    to_shapes: &[LevelShape],
    seed: u64,
) -> Result<Adapter> {
    if from_shapes.len() != to_shapes.len() {
        return Err(Error::Adapter(format!(
            "level counts differ: {} vs {}",
            from_shapes.len(),
            to_shapes.len()
        )));
    }
    let mut rng = RngStream::new(seed);
    let mut levels = Vec::with_capacity(from_shapes.len());
    for (lvl, (f, t)) in from_shapes.iter().zip(to_shapes).enumerate() {
        let needs_map = f.channels != t.channels;
        let needs_up = f.positions != t.positions;
        if needs_up && (t.positions % f.positions != 0 || t.positions < f.positions) {
            return Err(Error::Adapter(format!(
                "level {lvl}: target positions {} are not an integer multiple of source positions {}",
                t.positions, f.positions
            )));
        }
        let map = if needs_map {
            let mut m = Tensor::zeros(&[t.channels, f.channels])?;
            let s = (1.0 / f.channels as f64).sqrt();
            rng.fill_uniform(m.data_mut(), -s, s);
            Some(m)
        } else {
            None
        };
        levels.push(match (map, needs_up) {
            (None, false) => LevelAdapter::Identity,
            (Some(m), false) => LevelAdapter::ChannelMap(m),
            (None, true) => LevelAdapter::Upsample(t.positions / f.positions),
            (Some(m), true) => LevelAdapter::Composed { map: m, factor: t.positions / f.positions },
        });
    }
    Ok(Adapter::from_levels(levels))
}

/// Copy sample `i` of a `B×C×P` tensor out as a `C×P` matrix.
fn sample(t: &Tensor, i: usize) -> Result<Tensor> {
    let (c, p) = (t.shape()[1], t.shape()[2]);
    Tensor::from_data(&[c, p], t.data()[i * c * p..(i + 1) * c * p].to_vec())
}

/// Apply the adapter to a batch of student features (`B×C×P` per level),
/// returning target-shaped features.
pub fn apply_adapter(adapter: &Adapter, features: &FeatureSet) -> Result<FeatureSet> {
    if adapter.levels.len() != features.levels.len() {
        return Err(Error::Dimension(format!(
            "adapter has {} levels, features have {}",
            adapter.levels.len(),
            features.levels.len()
        )));
    }
    let batch = features.batch_size();
    let mut out = Vec::with_capacity(features.levels.len());
    for (kind, level) in adapter.levels.iter().zip(&features.levels) {
        match kind {
            LevelAdapter::Identity => out.push(level.clone()),
            LevelAdapter::ChannelMap(m) => {
                let (ct, p) = (m.rows(), level.shape()[2]);
                let mut data = Vec::with_capacity(batch * ct * p);
                for i in 0..batch {
                    let mapped = matmul(m, &sample(level, i)?)?;
                    data.extend_from_slice(mapped.data());
                }
                out.push(Tensor::from_data(&[batch, ct, p], data)?);
            }
            LevelAdapter::Upsample(factor) => {
                let (c, p) = (level.shape()[1], level.shape()[2]);
                let mut data = Vec::with_capacity(batch * c * p * factor);
                for i in 0..batch {
                    let up = nearest_upsample(&sample(level, i)?, *factor)?;
                    data.extend_from_slice(up.data());
                }
                out.push(Tensor::from_data(&[batch, c, p * factor], data)?);
            }
            LevelAdapter::Composed { map, factor } => {
                let (ct, p) = (map.rows(), level.shape()[2]);
                let mut data = Vec::with_capacity(batch * ct * p * factor);
                for i in 0..batch {
                    let mapped = matmul(map, &sample(level, i)?)?;
                    let up = nearest_upsample(&mapped, *factor)?;
                    data.extend_from_slice(up.data());
                }
                out.push(Tensor::from_data(&[batch, ct, p * factor], data)?);
            }
        }
    }
    Ok(FeatureSet { levels: out })
}

/// Weighting of the combined loss and scaling of the feature term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// λ: weight of the feature-matching term. 0 reduces training to task-only.
    pub lambda: f64,
    /// Per-level squared-error scaling.
    pub normalization: Normalization,
    /// How per-level losses combine (sum or mean over levels).
    pub level_aggregation: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.5,
            normalization: Normalization::Mean,
            level_aggregation: Normalization::Sum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Argument(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Gradients of the (unweighted) feature-matching loss.
#[derive(Debug, Clone)]
pub struct DistillGrads {
    /// ∂L/∂F_S per level, student-shaped.
    pub student_features: Vec<Tensor>,
    /// ∂L/∂M per level, present where the adapter has a channel matrix.
    pub channel_maps: Vec<Option<Tensor>>,
}

/// Feature-matching loss: per level `sse(F_T, r(F_S))` with
/// `cfg.normalization`, combined across levels per `cfg.level_aggregation`.
/// Returns the scalar and its analytic gradients w.r.t. the student features
/// and any channel matrices.
pub fn distill_loss(
    teacher_f: &FeatureSet,
    student_f: &FeatureSet,
    adapter: &Adapter,
    cfg: &LossConfig,
) -> Result<(f64, DistillGrads)> {
    cfg.validate()?;
    let adapted = apply_adapter(adapter, student_f)?;
    if adapted.levels.len() != teacher_f.levels.len() {
        return Err(Error::Dimension(format!(
            "adapter produced {} levels, teacher has {}",
            adapted.levels.len(),
            teacher_f.levels.len()
        )));
    }
    let n_levels = teacher_f.levels.len();
    let agg_scale = match cfg.level_aggregation {
        Normalization::Sum => 1.0,
        Normalization::Mean => 1.0 / n_levels as f64,
    };

    let mut total = 0.0;
    let mut feature_grads = Vec::with_capacity(n_levels);
    let mut map_grads = Vec::with_capacity(n_levels);
    for (lvl, (t_level, a_level)) in teacher_f.levels.iter().zip(&adapted.levels).enumerate() {
        if t_level.shape() != a_level.shape() {
            return Err(Error::Dimension(format!(
                "level {lvl}: adapted shape {:?} vs teacher shape {:?}",
                a_level.shape(),
                t_level.shape()
            )));
        }
        let norm_scale = match cfg.normalization {
            Normalization::Sum => 1.0,
            Normalization::Mean => 1.0 / t_level.len() as f64,
        };
        // Loss contribution and d(loss)/d(adapted) = 2·(adapted − teacher)·scale.
        let mut level_loss = 0.0;
        let mut d_adapted = a_level.clone();
        for (d, &tv) in d_adapted.data_mut().iter_mut().zip(t_level.data()) {
            let diff = *d - tv;
            level_loss += diff * diff;
            *d = 2.0 * diff * norm_scale * agg_scale;
        }
        total += level_loss * norm_scale * agg_scale;

        // Pull d_adapted back through this level's adapter.
        let batch = student_f.levels[lvl].shape()[0];
        let s_level = &student_f.levels[lvl];
        let (cs, ps) = (s_level.shape()[1], s_level.shape()[2]);
        match &adapter.levels[lvl] {
            LevelAdapter::Identity => {
                feature_grads.push(d_adapted);
                map_grads.push(None);
            }
            LevelAdapter::Upsample(factor) => {
                let mut d_s = Tensor::zeros(&[batch, cs, ps])?;
                fold_upsample_grad(&d_adapted, &mut d_s, *factor);
                feature_grads.push(d_s);
                map_grads.push(None);
            }
            LevelAdapter::ChannelMap(m) => {
                let (d_s, d_m) = channel_map_backward(&d_adapted, s_level, m)?;
                feature_grads.push(d_s);
                map_grads.push(Some(d_m));
            }
            LevelAdapter::Composed { map, factor } => {
                // Undo the upsample first: d_mid has the pre-upsample width.
                let ct = map.rows();
                let mut d_mid = Tensor::zeros(&[batch, ct, ps])?;
                fold_upsample_grad(&d_adapted, &mut d_mid, *factor);
                let (d_s, d_m) = channel_map_backward(&d_mid, s_level, map)?;
                feature_grads.push(d_s);
                map_grads.push(Some(d_m));
            }
        }
    }
    Ok((total, DistillGrads { student_features: feature_grads, channel_maps: map_grads }))
}

/// Adjoint of nearest-neighbor upsampling: each source column accumulates the
/// gradients of the `factor` output columns copied from it.
fn fold_upsample_grad(d_up: &Tensor, d_src: &mut Tensor, factor: usize) {
    let (batch, c, p) = (d_src.shape()[0], d_src.shape()[1], d_src.shape()[2]);
    let wide = p * factor;
    for i in 0..batch {
        for ch in 0..c {
            let src_base = (i * c + ch) * p;
            let up_base = (i * c + ch) * wide;
            for j in 0..p {
                let mut acc = 0.0;
                for r in 0..factor {
                    acc += d_up.data()[up_base + j * factor + r];
                }
                d_src.data_mut()[src_base + j] = acc;
            }
        }
    }
}

/// Backward through `out = M·F` per sample: returns (`∂L/∂F`, `∂L/∂M`).
fn channel_map_backward(
    d_out: &Tensor,
    student_level: &Tensor,
    m: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let batch = student_level.shape()[0];
    let (cs, ps) = (student_level.shape()[1], student_level.shape()[2]);
    let mut d_f = Vec::with_capacity(batch * cs * ps);
    let mut d_m = Tensor::zeros(&[m.rows(), m.cols()])?;
    for i in 0..batch {
        let f_i = sample(student_level, i)?;
        let d_out_i = sample(d_out, i)?;
        // ∂L/∂F_i = Mᵀ · d_out_i
        d_f.extend_from_slice(matmul_at(m, &d_out_i)?.data());
        // ∂L/∂M += d_out_i · F_iᵀ
        let contrib = matmul_bt(&d_out_i, &f_i)?;
        for (acc, &v) in d_m.data_mut().iter_mut().zip(contrib.data()) {
            *acc += v;
        }
    }
    Ok((Tensor::from_data(&[batch, cs, ps], d_f)?, d_m))
}

/// The combined objective: `λ·distill + task`.
pub fn total_loss(task_loss: f64, distill: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    Ok(lambda * distill + task_loss)
}

/// Configuration of one distillation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Which teacher distills this stage.
    pub teacher_id: String,
    pub train: TrainConfig,
    pub loss: LossConfig,
    /// The adapter is re-initialized from this seed at stage start.
    pub adapter_init_seed: u64,
}

/// Loss provider implementing the combined task + feature-matching objective
/// against one frozen teacher, updating its adapter's channel matrices with
/// the same SGD-with-momentum rule the student uses.
pub struct DistillProvider<'a> {
    teacher: &'a Model,
    adapter: Adapter,
    cfg: LossConfig,
    momentum: f64,
    velocity: Vec<Option<Tensor>>,
    pending: Vec<Option<Tensor>>,
}

impl<'a> DistillProvider<'a> {
    pub fn new(teacher: &'a Model, adapter: Adapter, cfg: LossConfig, momentum: f64) -> Self {
        let velocity = adapter
            .levels
            .iter()
            .map(|l| l.channel_map().map(|m| Tensor::zeros(m.shape()).expect("map shape")))
            .collect();
        let n = adapter.levels.len();
        DistillProvider { teacher, adapter, cfg, momentum, velocity, pending: vec![None; n] }
    }

    pub fn adapter(&self) -> &Adapter {
        &self.adapter
    }
}

impl LossProvider for DistillProvider<'_> {
    fn batch_loss(
        &mut self,
        inputs: &Tensor,
        labels: &[usize],
        features: &FeatureSet,
        logits: &Tensor,
    ) -> Result<BatchLoss> {
        let (task, d_logits) = crate::tensor::softmax_cross_entropy(logits, labels)?;
        if self.cfg.lambda == 0.0 {
            // Reduces to plain task training: no teacher forward, no feature
            // gradients, no adapter updates.
            self.pending = vec![None; self.adapter.levels.len()];
            return Ok(BatchLoss {
                task_loss: task,
                distill_loss: 0.0,
                grads: OutputGrads { logits: Some(d_logits), features: None },
            });
        }
        let (teacher_f, _, _) = crate::model::forward(self.teacher, inputs)?;
        let (dl, grads) = distill_loss(&teacher_f, features, &self.adapter, &self.cfg)?;
        let lambda = self.cfg.lambda;
        let feature_grads: Vec<Tensor> = grads
            .student_features
            .into_iter()
            .map(|mut g| {
                for v in g.data_mut() {
                    *v *= lambda;
                }
                g
            })
            .collect();
        self.pending = grads
            .channel_maps
            .into_iter()
            .map(|opt| {
                opt.map(|mut g| {
                    for v in g.data_mut() {
                        *v *= lambda;
                    }
                    g
                })
            })
            .collect();
        Ok(BatchLoss {
            task_loss: task,
            distill_loss: dl,
            grads: OutputGrads { logits: Some(d_logits), features: Some(feature_grads) },
        })
    }

    fn step(&mut self, lr: f64) -> Result<()> {
        for ((level, vel), pend) in self
            .adapter
            .levels
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&self.pending)
        {
            if let (Some(m), Some(v), Some(g)) = (level.channel_map_mut(), vel.as_mut(), pend) {
                for ((mv, vv), &gv) in m.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = self.momentum * *vv + gv;
                    *mv -= lr * *vv;
                }
            }
        }
        Ok(())
    }
}

/// Run one distillation stage: the student trains against a frozen teacher
/// under the combined objective, with adapter matrices updated jointly.
pub fn distill_stage(
    student: &Model,
    teacher: &Model,
    train_data: &Dataset,
    val_data: &Dataset,
    stage: &StageConfig,
) -> Result<(Model, MetricsLog)> {
    stage.loss.validate()?;
    let adapter = make_adapter(
        &student.spec.neck_levels,
        &teacher.spec.neck_levels,
        stage.adapter_init_seed,
    )?;
    let mut provider = DistillProvider::new(teacher, adapter, stage.loss, stage.train.momentum);
    train(student, train_data, val_data, &stage.train, &mut provider)
}

/// Elementwise mean of feature sets that share shapes.
pub fn mean_features(sets: &[FeatureSet]) -> Result<FeatureSet> {
    let first = sets.first().ok_or_else(|| Error::Argument("no feature sets to average".into()))?;
    let inv = 1.0 / sets.len() as f64;
    let mut out = Vec::with_capacity(first.levels.len());
    for lvl in 0..first.levels.len() {
        let mut acc = first.levels[lvl].clone();
        for set in &sets[1..] {
            let level = &set.levels[lvl];
            if level.shape() != acc.shape() {
                return Err(Error::Dimension(format!(
                    "cannot average feature sets: level {lvl} shapes {:?} vs {:?}",
                    acc.shape(),
                    level.shape()
                )));
            }
            for (a, &v) in acc.data_mut().iter_mut().zip(level.data()) {
                *a += v;
            }
        }
        for a in acc.data_mut() {
            *a *= inv;
        }
        out.push(acc);
    }
    Ok(FeatureSet { levels: out })
}

// The homogeneous path needs an adapter + its optimizer state but distills
// toward a synthetic (averaged) target, so it cannot reuse DistillProvider
// directly. It carries its own small state instead.
struct HomogeneousState {
    adapter: Adapter,
    velocity: Vec<Option<Tensor>>,
    pending: Vec<Option<Tensor>>,
}

enum EnsembleInner<'a> {
    Homogeneous { teachers: Vec<&'a Model>, state: HomogeneousState },
    Heterogeneous { teachers: Vec<&'a Model>, adapters: Vec<HomogeneousState> },
}

/// Loss provider used by [`ensemble_stage`] for ≥ 2 teachers.
pub struct MultiTeacherProvider<'a> {
    inner: EnsembleInner<'a>,
    cfg: LossConfig,
    momentum: f64,
}

impl<'a> MultiTeacherProvider<'a> {
    fn new(
        student: &Model,
        teachers: Vec<&'a Model>,
        cfg: LossConfig,
        momentum: f64,
        adapter_seed: u64,
    ) -> Result<Self> {
        let shapes = &teachers[0].spec.neck_levels;
        let homogeneous = teachers.iter().all(|t| &t.spec.neck_levels == shapes);
        let mk_state = |to: &[LevelShape], seed: u64| -> Result<HomogeneousState> {
            let adapter = make_adapter(&student.spec.neck_levels, to, seed)?;
            let velocity = adapter
                .levels
                .iter()
                .map(|l| l.channel_map().map(|m| Tensor::zeros(m.shape()).expect("map shape")))
                .collect();
            let n = adapter.levels.len();
            Ok(HomogeneousState { adapter, velocity, pending: vec![None; n] })
        };
        let inner = if homogeneous {
            EnsembleInner::Homogeneous {
                state: mk_state(shapes, adapter_seed)?,
                teachers,
            }
        } else {
            let adapters = teachers
                .iter()
                .enumerate()
                .map(|(i, t)| mk_state(&t.spec.neck_levels, derive_seed(adapter_seed, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            EnsembleInner::Heterogeneous { teachers, adapters }
        };
        Ok(MultiTeacherProvider { inner, cfg, momentum })
    }
}

impl LossProvider for MultiTeacherProvider<'_> {
    fn batch_loss(
        &mut self,
        inputs: &Tensor,
        labels: &[usize],
        features: &FeatureSet,
        logits: &Tensor,
    ) -> Result<BatchLoss> {
        let (task, d_logits) = crate::tensor::softmax_cross_entropy(logits, labels)?;
        if self.cfg.lambda == 0.0 {
            return Ok(BatchLoss {
                task_loss: task,
                distill_loss: 0.0,
                grads: OutputGrads { logits: Some(d_logits), features: None },
            });
        }
        let lambda = self.cfg.lambda;
        let scale_into = |mut g: Tensor, s: f64| {
            for v in g.data_mut() {
                *v *= s;
            }
            g
        };
        match &mut self.inner {
            EnsembleInner::Homogeneous { teachers, state } => {
                let mut sets = Vec::with_capacity(teachers.len());
                for t in teachers.iter() {
                    let (f, _, _) = crate::model::forward(t, inputs)?;
                    sets.push(f);
                }
                let target = mean_features(&sets)?;
                let (dl, grads) = distill_loss(&target, features, &state.adapter, &self.cfg)?;
                state.pending = grads
                    .channel_maps
                    .into_iter()
                    .map(|o| o.map(|g| scale_into(g, lambda)))
                    .collect();
                let fg: Vec<Tensor> = grads
                    .student_features
                    .into_iter()
                    .map(|g| scale_into(g, lambda))
                    .collect();
                Ok(BatchLoss {
                    task_loss: task,
                    distill_loss: dl,
                    grads: OutputGrads { logits: Some(d_logits), features: Some(fg) },
                })
            }
            EnsembleInner::Heterogeneous { teachers, adapters } => {
                let n = teachers.len() as f64;
                let mut total_dl = 0.0;
                let mut fg: Option<Vec<Tensor>> = None;
                for (t, state) in teachers.iter().zip(adapters.iter_mut()) {
                    let (tf, _, _) = crate::model::forward(t, inputs)?;
                    let (dl, grads) = distill_loss(&tf, features, &state.adapter, &self.cfg)?;
                    total_dl += dl / n;
                    state.pending = grads
                        .channel_maps
                        .into_iter()
                        .map(|o| o.map(|g| scale_into(g, lambda / n)))
                        .collect();
                    match &mut fg {
                        None => {
                            fg = Some(
                                grads
                                    .student_features
                                    .into_iter()
                                    .map(|g| scale_into(g, lambda / n))
                                    .collect(),
                            );
                        }
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(grads.student_features) {
                                for (av, &gv) in a.data_mut().iter_mut().zip(g.data()) {
                                    *av += lambda / n * gv;
                                }
                            }
                        }
                    }
                }
                Ok(BatchLoss {
                    task_loss: task,
                    distill_loss: total_dl,
                    grads: OutputGrads { logits: Some(d_logits), features: fg },
                })
            }
        }
    }

    fn step(&mut self, lr: f64) -> Result<()> {
        let momentum = self.momentum;
        let step_state = |state: &mut HomogeneousState| {
            for ((level, vel), pend) in state
                .adapter
                .levels
                .iter_mut()
                .zip(&mut state.velocity)
                .zip(&state.pending)
            {
                if let (Some(m), Some(v), Some(g)) = (level.channel_map_mut(), vel.as_mut(), pend)
                {
                    for ((mv, vv), &gv) in m.data_mut().iter_mut().zip(v.data_mut()).zip(g.data())
                    {
                        *vv = momentum * *vv + gv;
                        *mv -= lr * *vv;
                    }
                }
            }
        };
        match &mut self.inner {
            EnsembleInner::Homogeneous { state, .. } => step_state(state),
            EnsembleInner::Heterogeneous { adapters, .. } => {
                for state in adapters {
                    step_state(state);
                }
            }
        }
        Ok(())
    }
}

/// The ensemble baseline: distill from several teachers at once.
/// A single-teacher list is exactly [`distill_stage`].
pub fn ensemble_stage(
    student: &Model,
    teachers: &[&Model],
    train_data: &Dataset,
    val_data: &Dataset,
    stage: &StageConfig,
) -> Result<(Model, MetricsLog)> {
    match teachers {
        [] => Err(Error::Argument("ensemble needs at least one teacher".into())),
        [only] => distill_stage(student, only, train_data, val_data, stage),
        _ => {
            stage.loss.validate()?;
            let mut provider = MultiTeacherProvider::new(
                student,
                teachers.to_vec(),
                stage.loss,
                stage.train.momentum,
                stage.adapter_init_seed,
            )?;
            train(student, train_data, val_data, &stage.train, &mut provider)
        }
    }
}
