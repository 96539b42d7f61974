//! Dense row-major `f64` tensors.
//!
//! Rank is carried as an explicit shape vector; the neural code uses rank-1
//! vectors (biases) and rank-2 matrices almost exclusively. All math helpers
//! are plain functions so the autodiff tape and the forward-only generation
//! path share one implementation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::validation(format!(
                "tensor shape {:?} does not hold {} elements",
                shape,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor (a rank-1 tensor counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Raise `Error::NonFinite` if any entry is NaN or infinite.
    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape.clone(),
        right: b.shape.clone(),
    }
}

/// `a [m,k] · b [k,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if k != kb {
        return Err(shape_err("matmul", a, b));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a [m,k] · bᵀ` where `b` is `[n,k]` — row-by-row dot products.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    if k != kb {
        return Err(shape_err("matmul_nt", a, b));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = b.row(j);
            *o = dot(arow, brow);
        }
    }
    Ok(out)
}

/// `aᵀ · b` where `a` is `[m,k]` and `b` is `[m,n]` — accumulates outer products.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (mb, n) = (b.rows(), b.cols());
    if m != mb {
        return Err(shape_err("matmul_tn", a, b));
    }
    let mut out = Tensor::zeros(vec![k, n]);
    for p in 0..m {
        let arow = a.row(p);
        let brow = b.row(p);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err("add", a, b));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// `a [t,d] + bias [d]`, broadcast over rows.
pub fn add_bias(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = a.cols();
    if bias.data.len() != d {
        return Err(shape_err("add_bias", a, bias));
    }
    let mut out = a.clone();
    for r in 0..out.rows() {
        for (o, &bv) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *o += bv;
        }
    }
    Ok(out)
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|v| v * c).collect(),
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row layer normalization (pre-affine). Returns the normalized tensor
/// together with each row's mean and reciprocal standard deviation, which the
/// backward pass reuses.
pub fn layer_norm_rows(a: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
    let d = a.cols() as f64;
    let mut out = a.clone();
    let mut means = Vec::with_capacity(out.rows());
    let mut inv_stds = Vec::with_capacity(out.rows());
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv_std;
        }
        means.push(mean);
        inv_stds.push(inv_std);
    }
    (out, means, inv_stds)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

/// Analytic derivative of [`gelu_scalar`].
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn gelu(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&v| gelu_scalar(v)).collect(),
    }
}

/// Mean of the rows: `[t,d] -> [d]`.
pub fn mean_rows(a: &Tensor) -> Vec<f64> {
    let (t, d) = (a.rows(), a.cols());
    let mut out = vec![0.0; d];
    for r in 0..t {
        for (o, &v) in out.iter_mut().zip(a.row(r)) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= t as f64;
    }
    out
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_leaves_input_unchanged() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data[i * 3 + i] = 1.0;
        }
        let out = matmul(&a, &eye).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn transposed_variants_agree_with_plain_matmul() {
        let a = Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 1.0, -1.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![2.0, 0.0, 1.0, -1.0, 0.5, 4.0]).unwrap();
        let bt = Tensor::matrix(2, 3, vec![2.0, 1.0, 0.5, 0.0, -1.0, 4.0]).unwrap();
        let at = Tensor::matrix(3, 2, vec![1.0, 3.0, -2.0, 1.0, 0.5, -1.0]).unwrap();
        let direct = matmul(&a, &b).unwrap();
        assert_eq!(matmul_nt(&a, &bt).unwrap(), direct);
        assert_eq!(matmul_tn(&at, &b).unwrap(), direct);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let a = Tensor::matrix(1, 8, vec![3.25; 8]).unwrap();
        let s = softmax_rows(&a);
        for v in &s.data {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = Tensor::matrix(3, 5, (0..15).map(|i| (i as f64).sin() * 4.0).collect()).unwrap();
        let s = softmax_rows(&a);
        for r in 0..3 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_centers_and_scales() {
        let a = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]).unwrap();
        let (out, _, _) = layer_norm_rows(&a);
        for r in 0..2 {
            let row = out.row(r);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn check_finite_rejects_nan() {
        let t = Tensor::matrix(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(t.check_finite("test").is_err());
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((gelu_grad_scalar(x) - fd).abs() < 1e-8, "x={x}");
        }
    }
}
