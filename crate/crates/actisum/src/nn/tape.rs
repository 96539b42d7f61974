//! Reverse-mode autodiff over an explicitly recorded op tape.
//!
//! A [`Tape`] owns every intermediate value of one forward computation. Ops
//! append nodes and return lightweight [`Var`] handles; [`Tape::backward`]
//! walks the recording in reverse and accumulates exact analytic gradients
//! into every node that transitively depends on a gradient-requiring leaf.
//!
//! Frozen parameters enter as constants: gradients flow *through* the ops
//! that consume them but are never accumulated for the leaf itself.
//!
//! Every op checks its output for NaN/Inf and fails rather than propagate
//! poison through a training run.

use crate::error::{Error, Result};
use crate::nn::param::Parameter;
use crate::nn::tensor::{self, Tensor};

/// Sentinel target id marking positions excluded from the loss.
pub const IGNORE_INDEX: i64 = -100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    /// `a · bᵀ`
    MatmulNt(Var, Var),
    SliceCols {
        input: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SoftmaxRows(Var),
    LayerNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_stds: Vec<f64>,
    },
    Gelu(Var),
    EmbeddingLookup {
        table: Var,
        ids: Vec<usize>,
    },
    MaskedCrossEntropy {
        logits: Var,
        targets: Vec<i64>,
        probs: Tensor,
        supervised: usize,
    },
    MaskedMse {
        pred: Var,
        target: Tensor,
        row_mask: Vec<bool>,
        masked_rows: usize,
    },
}

struct Node {
    value: Tensor,
    needs_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target w.r.t. `v`, if one was produced.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A gradient-requiring input (trainable parameter or probe).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// A fixed input: data, masks, frozen weights.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Enter a parameter: trainable parameters become gradient leaves,
    /// frozen ones constants.
    pub fn param(&mut self, p: &Parameter) -> Var {
        if p.frozen {
            self.constant(p.value.clone())
        } else {
            self.leaf(p.value.clone())
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::add(self.value(a), self.value(b))?;
        value.check_finite("add")?;
        Ok(self.push(value, self.needs(a) || self.needs(b), Op::Add(a, b)))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = tensor::add_bias(self.value(a), self.value(bias))?;
        value.check_finite("add_bias")?;
        Ok(self.push(value, self.needs(a) || self.needs(bias), Op::AddBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = tensor::scale(self.value(a), c);
        value.check_finite("scale")?;
        Ok(self.push(value, self.needs(a), Op::Scale(a, c)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        value.check_finite("matmul")?;
        Ok(self.push(value, self.needs(a) || self.needs(b), Op::Matmul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul_nt(self.value(a), self.value(b))?;
        value.check_finite("matmul_nt")?;
        Ok(self.push(value, self.needs(a) || self.needs(b), Op::MatmulNt(a, b)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        let (rows, cols) = (src.rows(), src.cols());
        if start + len > cols {
            return Err(Error::validation(format!(
                "slice_cols {start}..{} out of {cols} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let value = Tensor::matrix(rows, len, data)?;
        Ok(self.push(value, self.needs(a), Op::SliceCols { input: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::validation("concat_cols of zero parts"));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape.clone(),
                    right: self.value(p).shape.clone(),
                });
            }
            cols += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::matrix(rows, cols, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, needs, Op::ConcatCols(parts.to_vec())))
    }

    /// Concatenate along the sequence (row) axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::validation("concat_rows of zero parts"));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: self.value(parts[0]).shape.clone(),
                    right: self.value(p).shape.clone(),
                });
            }
            rows += self.value(p).rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let value = Tensor::matrix(rows, cols, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, needs, Op::ConcatRows(parts.to_vec())))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = tensor::softmax_rows(self.value(a));
        value.check_finite("softmax_rows")?;
        Ok(self.push(value, self.needs(a), Op::SoftmaxRows(a)))
    }

    /// Layer norm with affine parameters: `y = norm(x) ∘ gamma + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (normalized, _, inv_stds) = tensor::layer_norm_rows(self.value(x));
        let g = self.value(gamma);
        let b = self.value(beta);
        let d = normalized.cols();
        if g.data.len() != d || b.data.len() != d {
            return Err(Error::Shape {
                op: "layer_norm",
                left: normalized.shape.clone(),
                right: g.shape.clone(),
            });
        }
        let mut value = normalized.clone();
        for r in 0..value.rows() {
            for (i, v) in value.row_mut(r).iter_mut().enumerate() {
                *v = *v * g.data[i] + b.data[i];
            }
        }
        value.check_finite("layer_norm")?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            value,
            needs,
            Op::LayerNorm {
                input: x,
                gamma,
                beta,
                normalized,
                inv_stds,
            },
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = tensor::gelu(self.value(a));
        value.check_finite("gelu")?;
        Ok(self.push(value, self.needs(a), Op::Gelu(a)))
    }

    /// Gather rows of `table` at `ids`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (vocab, dim) = (t.rows(), t.cols());
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::validation(format!(
                "embedding id {bad} out of vocabulary {vocab}"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::matrix(ids.len(), dim, data)?;
        Ok(self.push(
            value,
            self.needs(table),
            Op::EmbeddingLookup {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Mean negative log-softmax over positions whose target is not the
    /// `IGNORE_INDEX` sentinel. Gradient is exactly zero at ignored positions.
    pub fn masked_cross_entropy(&mut self, logits: Var, targets: &[i64]) -> Result<Var> {
        let l = self.value(logits);
        let (t, v) = (l.rows(), l.cols());
        if targets.len() != t {
            return Err(Error::Shape {
                op: "masked_cross_entropy",
                left: l.shape.clone(),
                right: vec![targets.len()],
            });
        }
        let probs = tensor::softmax_rows(l);
        let mut supervised = 0usize;
        let mut total = 0.0;
        for (r, &tgt) in targets.iter().enumerate() {
            if tgt == IGNORE_INDEX {
                continue;
            }
            if tgt < 0 || tgt as usize >= v {
                return Err(Error::validation(format!(
                    "target id {tgt} out of vocabulary {v}"
                )));
            }
            // log-softmax computed stably from raw logits
            let row = l.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[tgt as usize];
            supervised += 1;
        }
        if supervised == 0 {
            return Err(Error::validation("no supervised tokens"));
        }
        let value = Tensor::scalar(total / supervised as f64);
        value.check_finite("masked_cross_entropy")?;
        Ok(self.push(
            value,
            self.needs(logits),
            Op::MaskedCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                supervised,
            },
        ))
    }

    /// Mean squared error over the rows selected by `row_mask` only.
    pub fn masked_mse(&mut self, pred: Var, target: &Tensor, row_mask: &[bool]) -> Result<Var> {
        let p = self.value(pred);
        if !p.same_shape(target) {
            return Err(Error::Shape {
                op: "masked_mse",
                left: p.shape.clone(),
                right: target.shape.clone(),
            });
        }
        if row_mask.len() != p.rows() {
            return Err(Error::validation(format!(
                "row mask of {} entries for {} rows",
                row_mask.len(),
                p.rows()
            )));
        }
        let masked_rows = row_mask.iter().filter(|&&m| m).count();
        if masked_rows == 0 {
            return Err(Error::validation("masked_mse with no masked rows"));
        }
        let cols = p.cols();
        let mut total = 0.0;
        for (r, &m) in row_mask.iter().enumerate() {
            if !m {
                continue;
            }
            for (a, b) in p.row(r).iter().zip(target.row(r)) {
                let d = a - b;
                total += d * d;
            }
        }
        let value = Tensor::scalar(total / (masked_rows * cols) as f64);
        value.check_finite("masked_mse")?;
        Ok(self.push(
            value,
            self.needs(pred),
            Op::MaskedMse {
                pred,
                target: target.clone(),
                row_mask: row_mask.to_vec(),
                masked_rows,
            },
        ))
    }

    /// Reverse sweep from `loss` (a scalar node). Accumulated gradients are
    /// then available through [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::validation("backward target must be a scalar"));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.data.iter_mut().zip(&delta.data) {
                    *e += d;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Tensor) -> Result<()> {
        // Ops are matched by value of their recorded handles; values needed by
        // a backward rule are cloned out first to satisfy the borrow checker.
        enum Deltas {
            None,
            One(Var, Tensor),
            Two(Var, Tensor, Var, Tensor),
            Many(Vec<(Var, Tensor)>),
        }
        let deltas = match &self.nodes[idx].op {
            Op::Leaf => Deltas::None,
            Op::Add(a, b) => Deltas::Two(*a, g.clone(), *b, g.clone()),
            Op::AddBias(a, bias) => {
                let mut db = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    for (s, &v) in db.iter_mut().zip(g.row(r)) {
                        *s += v;
                    }
                }
                Deltas::Two(*a, g.clone(), *bias, Tensor::vector(db))
            }
            Op::Scale(a, c) => Deltas::One(*a, tensor::scale(g, *c)),
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let mut out = Vec::new();
                if self.needs(a) {
                    out.push((a, tensor::matmul_nt(g, self.value(b))?));
                }
                if self.needs(b) {
                    out.push((b, tensor::matmul_tn(self.value(a), g)?));
                }
                Deltas::Many(out)
            }
            Op::MatmulNt(a, b) => {
                let (a, b) = (*a, *b);
                let mut out = Vec::new();
                if self.needs(a) {
                    out.push((a, tensor::matmul(g, self.value(b))?));
                }
                if self.needs(b) {
                    out.push((b, tensor::matmul_tn(g, self.value(a))?));
                }
                Deltas::Many(out)
            }
            Op::SliceCols { input, start } => {
                let (input, start) = (*input, *start);
                let src = self.value(input);
                let mut da = Tensor::zeros(src.shape.clone());
                let len = g.cols();
                for r in 0..g.rows() {
                    da.row_mut(r)[start..start + len].copy_from_slice(g.row(r));
                }
                Deltas::One(input, da)
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let mut out = Vec::new();
                let mut offset = 0;
                for p in parts {
                    let cols = self.value(p).cols();
                    if self.needs(p) {
                        let rows = g.rows();
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        out.push((p, Tensor::matrix(rows, cols, data)?));
                    }
                    offset += cols;
                }
                Deltas::Many(out)
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut out = Vec::new();
                let mut offset = 0;
                let cols = g.cols();
                for p in parts {
                    let rows = self.value(p).rows();
                    if self.needs(p) {
                        let data = g.data[offset * cols..(offset + rows) * cols].to_vec();
                        out.push((p, Tensor::matrix(rows, cols, data)?));
                    }
                    offset += rows;
                }
                Deltas::Many(out)
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                let y = &self.nodes[idx].value;
                let mut da = Tensor::zeros(y.shape.clone());
                for r in 0..y.rows() {
                    let yrow = y.row(r);
                    let grow = g.row(r);
                    let inner = tensor::dot(grow, yrow);
                    for ((d, &yv), &gv) in da.row_mut(r).iter_mut().zip(yrow).zip(grow) {
                        *d = yv * (gv - inner);
                    }
                }
                Deltas::One(a, da)
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_stds,
            } => {
                let (input, gamma, beta) = (*input, *gamma, *beta);
                let xhat = normalized.clone();
                let inv_stds = inv_stds.clone();
                let gvec = self.value(gamma).data.clone();
                let d = xhat.cols();
                let rows = xhat.rows();

                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut dx = Tensor::zeros(xhat.shape.clone());
                for r in 0..rows {
                    let grow = g.row(r);
                    let xrow = xhat.row(r);
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_x = 0.0;
                    for i in 0..d {
                        dgamma[i] += grow[i] * xrow[i];
                        dbeta[i] += grow[i];
                        let dxh = grow[i] * gvec[i];
                        mean_dxhat += dxh;
                        mean_dxhat_x += dxh * xrow[i];
                    }
                    mean_dxhat /= d as f64;
                    mean_dxhat_x /= d as f64;
                    let inv = inv_stds[r];
                    for (i, slot) in dx.row_mut(r).iter_mut().enumerate() {
                        let dxh = grow[i] * gvec[i];
                        *slot = inv * (dxh - mean_dxhat - xrow[i] * mean_dxhat_x);
                    }
                }
                let mut out = Vec::new();
                if self.needs(input) {
                    out.push((input, dx));
                }
                if self.needs(gamma) {
                    out.push((gamma, Tensor::vector(dgamma)));
                }
                if self.needs(beta) {
                    out.push((beta, Tensor::vector(dbeta)));
                }
                Deltas::Many(out)
            }
            Op::Gelu(a) => {
                let a = *a;
                let x = self.value(a);
                let data = x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(&xv, &gv)| gv * tensor::gelu_grad_scalar(xv))
                    .collect();
                Deltas::One(
                    a,
                    Tensor {
                        shape: x.shape.clone(),
                        data,
                    },
                )
            }
            Op::EmbeddingLookup { table, ids } => {
                let (table, ids) = (*table, ids.clone());
                let tshape = self.value(table).shape.clone();
                let mut dt = Tensor::zeros(tshape);
                for (r, &id) in ids.iter().enumerate() {
                    for (slot, &v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *slot += v;
                    }
                }
                Deltas::One(table, dt)
            }
            Op::MaskedCrossEntropy {
                logits,
                targets,
                probs,
                supervised,
            } => {
                let logits = *logits;
                let scale = g.scalar_value() / *supervised as f64;
                let mut dl = Tensor::zeros(probs.shape.clone());
                for (r, &tgt) in targets.iter().enumerate() {
                    if tgt == IGNORE_INDEX {
                        continue;
                    }
                    let prow = probs.row(r);
                    let drow = dl.row_mut(r);
                    for (slot, &p) in drow.iter_mut().zip(prow) {
                        *slot = p * scale;
                    }
                    drow[tgt as usize] -= scale;
                }
                Deltas::One(logits, dl)
            }
            Op::MaskedMse {
                pred,
                target,
                row_mask,
                masked_rows,
            } => {
                let pred = *pred;
                let scale = g.scalar_value() * 2.0 / (*masked_rows * target.cols()) as f64;
                let p = self.value(pred);
                let mut dp = Tensor::zeros(p.shape.clone());
                for (r, &m) in row_mask.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    for ((slot, &pv), &tv) in
                        dp.row_mut(r).iter_mut().zip(p.row(r)).zip(target.row(r))
                    {
                        *slot = scale * (pv - tv);
                    }
                }
                Deltas::One(pred, dp)
            }
        };
        match deltas {
            Deltas::None => {}
            Deltas::One(v, d) => self.accumulate(v, d),
            Deltas::Two(a, da, b, db) => {
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Deltas::Many(list) => {
                for (v, d) in list {
                    self.accumulate(v, d);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    /// Build a small composite graph and return its scalar loss. `xs` are the
    /// entries of the single gradient-requiring leaf.
    fn composite_loss(xs: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 4, xs.to_vec()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = tape.constant(random_tensor(&mut rng, 4, 5));
        let bias = tape.constant(Tensor::vector(vec![0.1, -0.2, 0.3, 0.0, 0.5]));
        let gamma = tape.constant(Tensor::vector(vec![1.1, 0.9, 1.0, 1.2, 0.8]));
        let beta = tape.constant(Tensor::vector(vec![0.0, 0.1, -0.1, 0.2, 0.0]));

        let h = tape.matmul(x, w).unwrap();
        let h = tape.add_bias(h, bias).unwrap();
        let h = tape.layer_norm(h, gamma, beta).unwrap();
        let h = tape.gelu(h).unwrap();
        let logits = tape.softmax_rows(h).unwrap();
        let loss = tape
            .masked_cross_entropy(logits, &[1, IGNORE_INDEX, 3])
            .unwrap();
        tape.value(loss).scalar_value()
    }

    #[test]
    fn composite_graph_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();

        // analytic gradient
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 4, xs.clone()).unwrap());
        let mut wrng = ChaCha8Rng::seed_from_u64(11);
        let w = tape.constant(random_tensor(&mut wrng, 4, 5));
        let bias = tape.constant(Tensor::vector(vec![0.1, -0.2, 0.3, 0.0, 0.5]));
        let gamma = tape.constant(Tensor::vector(vec![1.1, 0.9, 1.0, 1.2, 0.8]));
        let beta = tape.constant(Tensor::vector(vec![0.0, 0.1, -0.1, 0.2, 0.0]));
        let h = tape.matmul(x, w).unwrap();
        let h = tape.add_bias(h, bias).unwrap();
        let h = tape.layer_norm(h, gamma, beta).unwrap();
        let h = tape.gelu(h).unwrap();
        let logits = tape.softmax_rows(h).unwrap();
        let loss = tape
            .masked_cross_entropy(logits, &[1, IGNORE_INDEX, 3])
            .unwrap();
        tape.backward(loss).unwrap();
        let analytic = tape.grad(x).unwrap().data.clone();

        let h_step = 1e-5;
        for i in 0..xs.len() {
            let mut plus = xs.clone();
            plus[i] += h_step;
            let mut minus = xs.clone();
            minus[i] -= h_step;
            let fd = (composite_loss(&plus) - composite_loss(&minus)) / (2.0 * h_step);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            let rel = (analytic[i] - fd).abs() / denom;
            assert!(rel < 1e-4, "entry {i}: analytic {} vs fd {fd}", analytic[i]);
        }
    }

    #[test]
    fn per_op_gradients_match_finite_differences() {
        // each primitive exercised through a quadratic-free scalar readout:
        // loss = masked_mse(op_output, zeros) which has gradient 2y/n.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        type Builder = fn(&mut Tape, Var) -> Var;
        let builders: Vec<(&str, Builder)> = vec![
            ("softmax", |t, x| t.softmax_rows(x).unwrap()),
            ("gelu", |t, x| t.gelu(x).unwrap()),
            ("scale", |t, x| t.scale(x, -1.7).unwrap()),
            ("slice", |t, x| t.slice_cols(x, 1, 2).unwrap()),
            ("concat_cols", |t, x| t.concat_cols(&[x, x]).unwrap()),
            ("concat_rows", |t, x| t.concat_rows(&[x, x]).unwrap()),
        ];
        for (name, build) in builders {
            let xs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eval = |vals: &[f64]| -> (f64, Option<Vec<f64>>) {
                let mut tape = Tape::new();
                let x = tape.leaf(Tensor::matrix(3, 4, vals.to_vec()).unwrap());
                let y = build(&mut tape, x);
                let target = Tensor::zeros(tape.value(y).shape.clone());
                let mask = vec![true; tape.value(y).rows()];
                let loss = tape.masked_mse(y, &target, &mask).unwrap();
                let v = tape.value(loss).scalar_value();
                tape.backward(loss).unwrap();
                (v, tape.grad(x).map(|g| g.data.clone()))
            };
            let (_, grad) = eval(&xs);
            let grad = grad.unwrap();
            let h = 1e-5;
            for i in 0..xs.len() {
                let mut p = xs.clone();
                p[i] += h;
                let mut m = xs.clone();
                m[i] -= h;
                let fd = (eval(&p).0 - eval(&m).0) / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-8);
                assert!(
                    (grad[i] - fd).abs() / denom < 1e-4,
                    "{name} entry {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn embedding_lookup_scatters_gradient_rows() {
        let mut tape = Tape::new();
        let table = tape.leaf(
            Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        );
        let picked = tape.embedding_lookup(table, &[2, 0, 2]).unwrap();
        let target = Tensor::zeros(vec![3, 2]);
        let loss = tape.masked_mse(picked, &target, &[true, true, true]).unwrap();
        tape.backward(loss).unwrap();
        let grad = tape.grad(table).unwrap();
        // rows 0 and 2 receive gradient; row 1 untouched; row 2 twice
        assert_eq!(grad.row(1), &[0.0, 0.0]);
        let expected_r0 = 2.0 * 1.0 / 6.0; // 2*x/n with x=table[0,0]=1, n=6
        assert!((grad.at(0, 0) - expected_r0).abs() < 1e-12);
        let expected_r2_c0 = 2.0 * 5.0 * 2.0 / 6.0;
        assert!((grad.at(2, 0) - expected_r2_c0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_logits_equals_ln_vocab() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::matrix(1, 8, vec![0.0; 8]).unwrap());
        let loss = tape.masked_cross_entropy(logits, &[5]).unwrap();
        assert!((tape.value(loss).scalar_value() - (8.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_masked_positions_bitwise() {
        let base = vec![0.3, -0.5, 1.2, 0.7, -0.1, 0.4, 0.9, -1.0];
        let mut perturbed = base.clone();
        for v in &mut perturbed[0..4] {
            *v += 123.0;
        }
        let run = |row0: &[f64]| {
            let mut data = row0.to_vec();
            data.extend_from_slice(&base[4..]);
            let mut tape = Tape::new();
            let logits = tape.leaf(Tensor::matrix(2, 4, data).unwrap());
            let loss = tape
                .masked_cross_entropy(logits, &[IGNORE_INDEX, 2])
                .unwrap();
            tape.value(loss).scalar_value()
        };
        let a = run(&base[0..4]);
        let b = run(&perturbed[0..4]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn cross_entropy_matches_brute_force_log_sum_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let t = rng.random_range(2..6);
            let v = rng.random_range(3..9);
            let data: Vec<f64> = (0..t * v).map(|_| rng.random_range(-4.0..4.0)).collect();
            let targets: Vec<i64> = (0..t)
                .map(|i| {
                    if i == 0 {
                        rng.random_range(0..v) as i64
                    } else if rng.random_range(0..3) == 0 {
                        IGNORE_INDEX
                    } else {
                        rng.random_range(0..v) as i64
                    }
                })
                .collect();

            // brute force: per-position log-sum-exp without stabilization tricks
            let mut total = 0.0;
            let mut n = 0.0;
            for (r, &tgt) in targets.iter().enumerate() {
                if tgt == IGNORE_INDEX {
                    continue;
                }
                let row = &data[r * v..(r + 1) * v];
                let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
                total += lse - row[tgt as usize];
                n += 1.0;
            }
            let expected = total / n;

            let mut tape = Tape::new();
            let logits = tape.leaf(Tensor::matrix(t, v, data).unwrap());
            let loss = tape.masked_cross_entropy(logits, &targets).unwrap();
            assert!((tape.value(loss).scalar_value() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_all_ignored_is_an_error() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let err = tape
            .masked_cross_entropy(logits, &[IGNORE_INDEX, IGNORE_INDEX])
            .unwrap_err();
        assert!(err.to_string().contains("no supervised tokens"));
    }

    #[test]
    fn masked_mse_ignores_unmasked_rows() {
        let mut tape = Tape::new();
        let pred = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut target = Tensor::zeros(vec![2, 2]);
        let loss_a = tape.masked_mse(pred, &target, &[true, false]).unwrap();
        let a = tape.value(loss_a).scalar_value();
        // perturb the unmasked row's target
        target.row_mut(1).copy_from_slice(&[100.0, -50.0]);
        let loss_b = tape.masked_mse(pred, &target, &[true, false]).unwrap();
        let b = tape.value(loss_b).scalar_value();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((a - (1.0 + 4.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_parameter_receives_no_gradient() {
        let mut tape = Tape::new();
        let frozen = Parameter::frozen("w", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = tape.param(&frozen);
        let x = tape.leaf(Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap());
        let y = tape.matmul(x, w).unwrap();
        let loss = tape
            .masked_mse(y, &Tensor::zeros(vec![1, 2]), &[true])
            .unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(w).is_none());
        assert!(tape.grad(x).is_some());
    }
}
