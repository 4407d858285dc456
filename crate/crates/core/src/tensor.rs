//! Dense row-major tensors and the small set of numeric kernels the rest of
//! the crate is built from: matrix products, nearest-neighbor upsampling,
//! softmax cross-entropy, and sum-of-squared-error distances.
//!
//! Everything is double precision. Exported operations are expected to keep
//! values finite; [`Tensor::assert_finite`] is the explicit checkpoint used at
//! module boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a squared-error distance is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw sum of squared differences.
    Sum,
    /// Sum divided by the element count.
    Mean,
}

/// A dense tensor: positive extents and contiguous row-major doubles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// A zero-filled tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::validate_shape(shape)?;
        let len = shape.iter().product();
        Ok(Tensor { shape: shape.to_vec(), data: vec![0.0; len] })
    }

    /// Wrap existing data in a shape.
    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::validate_shape(shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Dimension(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    fn validate_shape(shape: &[usize]) -> Result<()> {
        if shape.is_empty() {
            return Err(Error::Argument("tensor shape must have at least one extent".into()));
        }
        if shape.contains(&0) {
            return Err(Error::Argument(format!("tensor extents must be positive, got {shape:?}")));
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when viewed as a matrix (first extent).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix (product of trailing extents).
    pub fn cols(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    /// Reinterpret the same data under a new shape of equal volume.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_data(shape, self.data.clone())
    }

    /// Error out if any value is NaN or infinite.
    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if let Some(idx) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{what}: non-finite value {} at flat index {idx}",
                self.data[idx]
            )));
        }
        Ok(())
    }
}

/// Matrix product `A·B` for `A: m×k`, `B: k×n` (trailing extents flattened).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul inner extents differ: {:?} × {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_data(&[m, n], out)
}

/// `A·Bᵀ` for `A: m×k`, `B: n×k`. Used by backward passes and normal equations.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul_bt inner extents differ: {:?} × {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * ka..(i + 1) * ka];
        for j in 0..n {
            let brow = &b.data[j * kb..(j + 1) * kb];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::from_data(&[m, n], out)
}

/// `Aᵀ·B` for `A: k×m`, `B: k×n`.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ka, m) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul_at outer extents differ: {:?}ᵀ × {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; m * n];
    for p in 0..ka {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_data(&[m, n], out)
}

/// Nearest-neighbor upsampling along the position axis of a `C×P` feature map:
/// every column is repeated `factor` times, giving `C×(P·factor)`.
pub fn nearest_upsample(f: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::Argument("upsample factor must be positive".into()));
    }
    let (c, p) = (f.rows(), f.cols());
    let mut out = vec![0.0; c * p * factor];
    for ch in 0..c {
        let src = &f.data[ch * p..(ch + 1) * p];
        let dst = &mut out[ch * p * factor..(ch + 1) * p * factor];
        for (j, &v) in src.iter().enumerate() {
            for r in 0..factor {
                dst[j * factor + r] = v;
            }
        }
    }
    Tensor::from_data(&[c, p * factor], out)
}

/// Keep every `factor`-th column of a `C×P` map (the left inverse of
/// [`nearest_upsample`]). `P` must be divisible by `factor`.
pub fn stride_subsample(f: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::Argument("subsample factor must be positive".into()));
    }
    let (c, p) = (f.rows(), f.cols());
    if p % factor != 0 {
        return Err(Error::Dimension(format!(
            "cannot subsample {p} positions by factor {factor}"
        )));
    }
    let q = p / factor;
    let mut out = vec![0.0; c * q];
    for ch in 0..c {
        for j in 0..q {
            out[ch * q + j] = f.data[ch * p + j * factor];
        }
    }
    Tensor::from_data(&[c, q], out)
}

/// Average non-overlapping windows of `factor` columns of a `C×P` map,
/// producing `C×(P/factor)`. Exact adjoint-style counterpart of
/// [`nearest_upsample`]; used to pre-align finer feature maps to coarser ones.
pub fn avg_pool(f: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::Argument("pool factor must be positive".into()));
    }
    let (c, p) = (f.rows(), f.cols());
    if p % factor != 0 {
        return Err(Error::Dimension(format!(
            "cannot pool {p} positions by factor {factor}"
        )));
    }
    let q = p / factor;
    let inv = 1.0 / factor as f64;
    let mut out = vec![0.0; c * q];
    for ch in 0..c {
        for j in 0..q {
            let mut acc = 0.0;
            for r in 0..factor {
                acc += f.data[ch * p + j * factor + r];
            }
            out[ch * q + j] = acc * inv;
        }
    }
    Tensor::from_data(&[c, q], out)
}

/// Mean negative log-softmax of the true class over a batch, plus the analytic
/// gradient w.r.t. the logits (softmax minus one-hot, divided by batch size).
///
/// `logits` is `N×K`; `labels[n]` must lie in `[0, K)`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} rows of logits but {} labels",
            n,
            labels.len()
        )));
    }
    let mut grad = vec![0.0; n * k];
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (row, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Argument(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let lrow = &logits.data[row * k..(row + 1) * k];
        let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in lrow {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln();
        loss += -(lrow[label] - max - log_denom);
        let grow = &mut grad[row * k..(row + 1) * k];
        for (g, &v) in grow.iter_mut().zip(lrow) {
            *g = (v - max).exp() / denom * inv_n;
        }
        grow[label] -= inv_n;
    }
    Ok((loss * inv_n, Tensor::from_data(&[n, k], grad)?))
}

/// Squared-error distance `Σ(a−b)²`, optionally divided by the element count.
pub fn sse(a: &Tensor, b: &Tensor, normalization: Normalization) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "sse over mismatched shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut acc = 0.0;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let d = x - y;
        acc += d * d;
    }
    Ok(match normalization {
        Normalization::Sum => acc,
        Normalization::Mean => acc / a.len() as f64,
    })
}
