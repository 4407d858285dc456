//! Adaptation-cost graphs.
//!
//! The adaptation cost `C(A, B)` measures how hard it is to linearly map
//! model A's neck features onto model B's: fit a per-level channel matrix
//! (with nearest-neighbor upsampling where positions differ) on a train
//! split by ridge-regularized least squares, then report the feature-matching
//! loss of that frozen adapter on a validation split. The cost is
//! deliberately non-symmetric — `C(A,B)` and `C(B,A)` are separate fits —
//! and all ordered pairs among the student and the teacher pool form a dense
//! directed graph that curriculum planners consume.
//!
//! The fit is closed-form via the normal equations
//! `M = Y·Xᵀ·(X·Xᵀ + εI)⁻¹`, solved with a semidefinite-tolerant LDLᵀ
//! factorization; an iterative gradient-descent mode exists solely to
//! cross-check that the closed form is optimal.

use serde::{Deserialize, Serialize};

use crate::distill::{distill_loss, Adapter, LevelAdapter, LossConfig};
use crate::error::{Error, Result};
use crate::model::{forward, Dataset, FeatureSet, LevelShape, Model};
use crate::tensor::{avg_pool, matmul_bt, nearest_upsample, Normalization, Tensor};

/// Parameters of a cost computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Ridge regularizer ε added to the Gram diagonal.
    pub ridge_eps: f64,
    /// Per-level scaling of the validation feature loss.
    pub normalization: Normalization,
    /// Combination of per-level losses.
    pub level_aggregation: Normalization,
    /// Identifier of the dataset the costs were computed on.
    pub dataset_id: String,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            ridge_eps: 1e-9,
            normalization: Normalization::Mean,
            level_aggregation: Normalization::Sum,
            dataset_id: String::new(),
        }
    }
}

/// Copy sample `i` of a `B×C×P` tensor as a `C×P` matrix.
fn sample(t: &Tensor, i: usize) -> Result<Tensor> {
    let (c, p) = (t.shape()[1], t.shape()[2]);
    Tensor::from_data(&[c, p], t.data()[i * c * p..(i + 1) * c * p].to_vec())
}

fn transpose(t: &Tensor) -> Result<Tensor> {
    let (m, n) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(&[n, m])?;
    for i in 0..m {
        for j in 0..n {
            out.data_mut()[j * m + i] = t.data()[i * n + j];
        }
    }
    Ok(out)
}

/// Solve `G·Z = B` for symmetric positive-semidefinite `G` via LDLᵀ.
///
/// Pivots within tolerance of zero are treated as exactly zero (the
/// corresponding solution components are set to zero), which handles the
/// rank-deficient-but-consistent systems the normal equations produce.
/// Negative pivots or non-finite intermediates abort with a numeric error
/// advising a positive ridge.
fn solve_spd(g: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = g.rows();
    if g.cols() != n || b.rows() != n {
        return Err(Error::Dimension(format!(
            "solve_spd wants square G and matching rhs, got {:?} and {:?}",
            g.shape(),
            b.shape()
        )));
    }
    let m = b.cols();
    let scale = (0..n)
        .map(|i| g.data()[i * n + i].abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let tol = 1e-12 * scale;

    // G = L·D·Lᵀ with unit lower-triangular L.
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = g.data()[j * n + j];
        for k in 0..j {
            dj -= l[j * n + k] * l[j * n + k] * d[k];
        }
        if !dj.is_finite() || dj < -tol {
            return Err(Error::Numeric(format!(
                "normal matrix is not positive semidefinite (pivot {dj}); use ridge_eps > 0"
            )));
        }
        d[j] = if dj.abs() <= tol { 0.0 } else { dj };
        l[j * n + j] = 1.0;
        for i in (j + 1)..n {
            if d[j] == 0.0 {
                l[i * n + j] = 0.0;
                continue;
            }
            let mut v = g.data()[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = v / d[j];
        }
    }

    // Forward, diagonal, backward solves, one rhs column at a time.
    let mut z = Tensor::zeros(&[n, m])?;
    for col in 0..m {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = b.data()[i * m + col];
            for k in 0..i {
                v -= l[i * n + k] * y[k];
            }
            y[i] = v;
        }
        for i in 0..n {
            y[i] = if d[i] == 0.0 { 0.0 } else { y[i] / d[i] };
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= l[k * n + i] * y[k];
            }
            y[i] = v;
            if !v.is_finite() {
                return Err(Error::Numeric(
                    "non-finite value while solving the normal equations; use ridge_eps > 0".into(),
                ));
            }
            z.data_mut()[i * m + col] = v;
        }
    }
    Ok(z)
}

/// Per-level Gram and cross-moment matrices of a feature pair, with the
/// source upsampled to the target's positions.
fn level_moments(
    from_level: &Tensor,
    to_level: &Tensor,
    lvl: usize,
) -> Result<(Tensor, Tensor, usize)> {
    let batch = from_level.shape()[0];
    if to_level.shape()[0] != batch {
        return Err(Error::Dimension(format!(
            "level {lvl}: batches differ ({batch} vs {})",
            to_level.shape()[0]
        )));
    }
    let (cf, pf) = (from_level.shape()[1], from_level.shape()[2]);
    let (ct, pt) = (to_level.shape()[1], to_level.shape()[2]);
    if pt % pf != 0 {
        return Err(Error::Adapter(format!(
            "level {lvl}: target positions {pt} are not an integer multiple of source positions {pf}"
        )));
    }
    let factor = pt / pf;
    let mut gram = Tensor::zeros(&[cf, cf])?;
    let mut cross = Tensor::zeros(&[ct, cf])?;
    for i in 0..batch {
        let x = sample(from_level, i)?;
        let xu = if factor == 1 { x } else { nearest_upsample(&x, factor)? };
        let y = sample(to_level, i)?;
        let gx = matmul_bt(&xu, &xu)?;
        for (a, &v) in gram.data_mut().iter_mut().zip(gx.data()) {
            *a += v;
        }
        let hy = matmul_bt(&y, &xu)?;
        for (a, &v) in cross.data_mut().iter_mut().zip(hy.data()) {
            *a += v;
        }
    }
    Ok((gram, cross, factor))
}

/// Closed-form ridge fit of the linear adapter taking `from_f` to `to_f`:
/// per level, the channel matrix minimizing
/// `Σ‖F_to − M·up(F_from)‖² + ridge_eps·‖M‖²` via the normal equations.
pub fn fit_adapter_closed_form(
    from_f: &FeatureSet,
    to_f: &FeatureSet,
    ridge_eps: f64,
) -> Result<Adapter> {
    if from_f.levels.len() != to_f.levels.len() {
        return Err(Error::Adapter(format!(
            "level counts differ: {} vs {}",
            from_f.levels.len(),
            to_f.levels.len()
        )));
    }
    if !(ridge_eps >= 0.0) {
        return Err(Error::Argument(format!("ridge_eps must be ≥ 0, got {ridge_eps}")));
    }
    let mut levels = Vec::with_capacity(from_f.levels.len());
    for (lvl, (fl, tl)) in from_f.levels.iter().zip(&to_f.levels).enumerate() {
        let (mut gram, cross, factor) = level_moments(fl, tl, lvl)?;
        let n = gram.rows();
        for i in 0..n {
            gram.data_mut()[i * n + i] += ridge_eps;
        }
        let z = solve_spd(&gram, &transpose(&cross)?)?;
        let m = transpose(&z)?;
        m.assert_finite("fitted channel matrix")?;
        levels.push(if factor == 1 {
            LevelAdapter::ChannelMap(m)
        } else {
            LevelAdapter::Composed { map: m, factor }
        });
    }
    Ok(Adapter::from_levels(levels))
}

/// Gradient-descent fit of the same ridge objective. Exists to cross-check
/// [`fit_adapter_closed_form`]: with enough steps it approaches, and never
/// beats, the closed-form optimum.
pub fn fit_adapter_iterative(
    from_f: &FeatureSet,
    to_f: &FeatureSet,
    ridge_eps: f64,
    steps: usize,
) -> Result<Adapter> {
    if from_f.levels.len() != to_f.levels.len() {
        return Err(Error::Adapter(format!(
            "level counts differ: {} vs {}",
            from_f.levels.len(),
            to_f.levels.len()
        )));
    }
    let mut levels = Vec::with_capacity(from_f.levels.len());
    for (lvl, (fl, tl)) in from_f.levels.iter().zip(&to_f.levels).enumerate() {
        let (gram, cross, factor) = level_moments(fl, tl, lvl)?;
        let n = gram.rows();
        // Safe step size: 1 / (trace(G) + ε) ≤ 1 / λ_max(G + εI).
        let trace: f64 = (0..n).map(|i| gram.data()[i * n + i]).sum();
        let lr = 1.0 / (trace + ridge_eps).max(f64::MIN_POSITIVE);
        let mut m = Tensor::zeros(&[cross.rows(), n])?;
        for _ in 0..steps {
            // ∇ = 2(M·(G + εI) − H)
            let mg = matmul_bt(&m, &gram)?; // G symmetric: M·G = M·Gᵀ
            for idx in 0..m.len() {
                let grad = 2.0 * (mg.data()[idx] + ridge_eps * m.data()[idx] - cross.data()[idx]);
                m.data_mut()[idx] -= lr * grad;
            }
        }
        m.assert_finite("iteratively fitted channel matrix")?;
        levels.push(if factor == 1 {
            LevelAdapter::ChannelMap(m)
        } else {
            LevelAdapter::Composed { map: m, factor }
        });
    }
    Ok(Adapter::from_levels(levels))
}

/// Frobenius norm of the ridge objective's gradient at `adapter` — the
/// optimality certificate for the closed-form fit.
pub fn adapter_objective_gradient_norm(
    from_f: &FeatureSet,
    to_f: &FeatureSet,
    adapter: &Adapter,
    ridge_eps: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for (lvl, (fl, tl)) in from_f.levels.iter().zip(&to_f.levels).enumerate() {
        let (gram, cross, _) = level_moments(fl, tl, lvl)?;
        let m = match &adapter.levels[lvl] {
            LevelAdapter::ChannelMap(m) | LevelAdapter::Composed { map: m, .. } => m,
            other => {
                return Err(Error::Argument(format!(
                    "level {lvl}: adapter kind {other:?} has no channel matrix"
                )))
            }
        };
        let mg = matmul_bt(m, &gram)?;
        for idx in 0..m.len() {
            let g = 2.0 * (mg.data()[idx] + ridge_eps * m.data()[idx] - cross.data()[idx]);
            acc += g * g;
        }
    }
    Ok(acc.sqrt())
}

/// Pre-align source features to target level shapes for the *downsampling*
/// direction: where the source has more positions than the target, each
/// sample's map is average-pooled down by the (integer) ratio. The
/// upsampling direction is left to the fitted adapter itself.
pub fn align_features(from: &FeatureSet, to_shapes: &[LevelShape]) -> Result<FeatureSet> {
    if from.levels.len() != to_shapes.len() {
        return Err(Error::Adapter(format!(
            "level counts differ: {} vs {}",
            from.levels.len(),
            to_shapes.len()
        )));
    }
    let mut out = Vec::with_capacity(from.levels.len());
    for (lvl, (fl, ts)) in from.levels.iter().zip(to_shapes).enumerate() {
        let (pf, pt) = (fl.shape()[2], ts.positions);
        if pf <= pt {
            out.push(fl.clone());
        } else if pf % pt == 0 {
            let factor = pf / pt;
            let batch = fl.shape()[0];
            let c = fl.shape()[1];
            let mut data = Vec::with_capacity(batch * c * pt);
            for i in 0..batch {
                let pooled = avg_pool(&sample(fl, i)?, factor)?;
                data.extend_from_slice(pooled.data());
            }
            out.push(Tensor::from_data(&[batch, c, pt], data)?);
        } else {
            return Err(Error::Adapter(format!(
                "level {lvl}: positions {pf} and {pt} are incommensurate"
            )));
        }
    }
    Ok(FeatureSet { levels: out })
}

/// Adaptation cost from already-computed feature sets: fit on the train
/// features, report the feature-matching loss on the validation features.
pub fn adaptation_cost_from_features(
    from_train: &FeatureSet,
    to_train: &FeatureSet,
    from_val: &FeatureSet,
    to_val: &FeatureSet,
    cfg: &CostConfig,
) -> Result<f64> {
    let to_shapes_train = to_train.level_shapes();
    let from_train = align_features(from_train, &to_shapes_train)?;
    let from_val = align_features(from_val, &to_val.level_shapes())?;
    let adapter = fit_adapter_closed_form(&from_train, to_train, cfg.ridge_eps)?;
    let loss_cfg = LossConfig {
        lambda: 1.0,
        normalization: cfg.normalization,
        level_aggregation: cfg.level_aggregation,
    };
    let (cost, _) = distill_loss(to_val, &from_val, &adapter, &loss_cfg)?;
    if !cost.is_finite() {
        return Err(Error::Numeric(format!("adaptation cost is not finite: {cost}")));
    }
    Ok(cost)
}

/// Adaptation cost between two frozen models on a train/val dataset pair.
pub fn adaptation_cost(
    from_model: &Model,
    to_model: &Model,
    train_split: &Dataset,
    val_split: &Dataset,
    cfg: &CostConfig,
) -> Result<f64> {
    let (from_train, _, _) = forward(from_model, &train_split.inputs)?;
    let (to_train, _, _) = forward(to_model, &train_split.inputs)?;
    let (from_val, _, _) = forward(from_model, &val_split.inputs)?;
    let (to_val, _, _) = forward(to_model, &val_split.inputs)?;
    adaptation_cost_from_features(&from_train, &to_train, &from_val, &to_val, cfg)
}

/// The dense directed cost graph over the student and the teacher pool.
/// `cost[from][to]` entries are independent; the diagonal is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostGraph {
    ids: Vec<String>,
    /// Row-major `n×n`, `None` on the diagonal.
    costs: Vec<Option<f64>>,
    pub metadata: CostConfig,
}

impl CostGraph {
    /// An empty graph over the given ids (costs filled in afterwards).
    pub fn empty(ids: Vec<String>, metadata: CostConfig) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if id.is_empty() {
                return Err(Error::Argument("empty model id in cost graph".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Argument(format!("duplicate model id '{id}' in cost graph")));
            }
        }
        let n = ids.len();
        Ok(CostGraph { ids, costs: vec![None; n * n], metadata })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::Argument(format!("unknown model id '{id}' in cost graph")))
    }

    /// Number of stored (off-diagonal) entries.
    pub fn entry_count(&self) -> usize {
        self.costs.iter().filter(|c| c.is_some()).count()
    }

    pub fn set_cost(&mut self, from: &str, to: &str, value: f64) -> Result<()> {
        let (i, j) = (self.require(from)?, self.require(to)?);
        if i == j {
            return Err(Error::Argument(format!("diagonal cost ({from}→{to}) is undefined")));
        }
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Numeric(format!(
                "cost {from}→{to} must be finite and ≥ 0, got {value}"
            )));
        }
        let n = self.ids.len();
        self.costs[i * n + j] = Some(value);
        Ok(())
    }

    /// The stored cost `from → to`.
    pub fn cost(&self, from: &str, to: &str) -> Result<f64> {
        let (i, j) = (self.require(from)?, self.require(to)?);
        if i == j {
            return Err(Error::Argument(format!("diagonal cost ({from}→{to}) is undefined")));
        }
        let n = self.ids.len();
        self.costs[i * n + j]
            .ok_or_else(|| Error::Argument(format!("cost {from}→{to} not computed")))
    }

    /// Comma-separated export: header row and first column carry the ids,
    /// entries use 9 significant digits, the diagonal stays empty.
    pub fn to_csv(&self) -> String {
        let n = self.ids.len();
        let mut out = String::new();
        out.push_str("from\\to");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for i in 0..n {
            out.push_str(&self.ids[i]);
            for j in 0..n {
                out.push(',');
                if let Some(c) = self.costs[i * n + j] {
                    out.push_str(&format!("{c:.8e}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV form. Metadata is not carried by CSV and resets to the
    /// default config.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty cost matrix".into()))?;
        let ids: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        if ids.is_empty() {
            return Err(Error::Format("cost matrix header has no ids".into()));
        }
        let mut graph = CostGraph::empty(ids.clone(), CostConfig::default())?;
        let mut rows_seen = 0usize;
        for line in lines {
            let mut cells = line.split(',');
            let row_id = cells
                .next()
                .ok_or_else(|| Error::Format("cost matrix row missing id".into()))?
                .trim()
                .to_string();
            if graph.index_of(&row_id).is_none() {
                return Err(Error::Format(format!(
                    "cost matrix row id '{row_id}' not in header"
                )));
            }
            let cells: Vec<&str> = cells.map(str::trim).collect();
            if cells.len() != ids.len() {
                return Err(Error::Format(format!(
                    "cost matrix row '{row_id}' has {} cells, expected {}",
                    cells.len(),
                    ids.len()
                )));
            }
            for (col, cell) in ids.iter().zip(&cells) {
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Format(format!("bad cost value '{cell}' at {row_id}→{col}"))
                })?;
                graph.set_cost(&row_id, col, v)?;
            }
            rows_seen += 1;
        }
        if rows_seen != ids.len() {
            return Err(Error::Format(format!(
                "cost matrix has {rows_seen} rows for {} ids",
                ids.len()
            )));
        }
        Ok(graph)
    }
}

/// Compute the full cost graph over `{student} ∪ pool`: every model's
/// features over each split are computed once and reused across all
/// ordered-pair fits.
pub fn build_cost_graph(
    student: &Model,
    pool: &[Model],
    train_split: &Dataset,
    val_split: &Dataset,
    cfg: &CostConfig,
) -> Result<CostGraph> {
    if pool.is_empty() {
        return Err(Error::Argument("cost graph needs at least one teacher".into()));
    }
    let models: Vec<&Model> = std::iter::once(student).chain(pool.iter()).collect();
    let ids: Vec<String> = models.iter().map(|m| m.spec.id.clone()).collect();
    let mut graph = CostGraph::empty(ids.clone(), cfg.clone())?;

    let mut features = Vec::with_capacity(models.len());
    for m in &models {
        let (ftr, _, _) = forward(m, &train_split.inputs)?;
        let (fva, _, _) = forward(m, &val_split.inputs)?;
        features.push((ftr, fva));
    }
    for i in 0..models.len() {
        for j in 0..models.len() {
            if i == j {
                continue;
            }
            let cost = adaptation_cost_from_features(
                &features[i].0,
                &features[j].0,
                &features[i].1,
                &features[j].1,
                cfg,
            )?;
            graph.set_cost(&ids[i], &ids[j], cost)?;
        }
    }
    Ok(graph)
}
