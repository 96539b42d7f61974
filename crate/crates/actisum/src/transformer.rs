//! Pre-norm transformer block shared by the patch encoder and the text
//! decoder. Two forward paths over the same parameters: a tape path for
//! training (exact gradients through every op) and an incremental KV-cached
//! path for autoregressive generation.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::{self, Tensor};
use crate::nn::{normal_init, Parameter};

/// Additive attention-mask value for blocked positions. Large but finite so
/// downstream finiteness checks stay meaningful.
pub const MASK_BLOCK: f64 = -1e9;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct BlockParams {
    pub ln1_g: Parameter,
    pub ln1_b: Parameter,
    pub wq: Parameter,
    pub bq: Parameter,
    pub wk: Parameter,
    pub bk: Parameter,
    pub wv: Parameter,
    pub bv: Parameter,
    pub wo: Parameter,
    pub bo: Parameter,
    pub ln2_g: Parameter,
    pub ln2_b: Parameter,
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

/// Tape handles of one block's parameters, created once per tape so gradient
/// contributions from every batch item accumulate on the same leaves.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub ln1_g: Var,
    pub ln1_b: Var,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln2_g: Var,
    pub ln2_b: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl BlockParams {
    pub fn init(rng: &mut ChaCha8Rng, prefix: &str, dim: usize, ffn_dim: usize) -> Self {
        let mat = |rng: &mut ChaCha8Rng, name: String, rows, cols| {
            Parameter::trainable(name, normal_init(rng, vec![rows, cols], INIT_STD))
        };
        let zeros = |name: String, n| Parameter::trainable(name, Tensor::vector(vec![0.0; n]));
        let ones = |name: String, n| Parameter::trainable(name, Tensor::vector(vec![1.0; n]));
        BlockParams {
            ln1_g: ones(format!("{prefix}.ln1.g"), dim),
            ln1_b: zeros(format!("{prefix}.ln1.b"), dim),
            wq: mat(rng, format!("{prefix}.attn.wq"), dim, dim),
            bq: zeros(format!("{prefix}.attn.bq"), dim),
            wk: mat(rng, format!("{prefix}.attn.wk"), dim, dim),
            bk: zeros(format!("{prefix}.attn.bk"), dim),
            wv: mat(rng, format!("{prefix}.attn.wv"), dim, dim),
            bv: zeros(format!("{prefix}.attn.bv"), dim),
            wo: mat(rng, format!("{prefix}.attn.wo"), dim, dim),
            bo: zeros(format!("{prefix}.attn.bo"), dim),
            ln2_g: ones(format!("{prefix}.ln2.g"), dim),
            ln2_b: zeros(format!("{prefix}.ln2.b"), dim),
            w1: mat(rng, format!("{prefix}.ffn.w1"), dim, ffn_dim),
            b1: zeros(format!("{prefix}.ffn.b1"), ffn_dim),
            w2: mat(rng, format!("{prefix}.ffn.w2"), ffn_dim, dim),
            b2: zeros(format!("{prefix}.ffn.b2"), dim),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.ln1_g, &self.ln1_b, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv,
            &self.wo, &self.bo, &self.ln2_g, &self.ln2_b, &self.w1, &self.b1, &self.w2, &self.b2,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.ln1_g, &mut self.ln1_b, &mut self.wq, &mut self.bq, &mut self.wk,
            &mut self.bk, &mut self.wv, &mut self.bv, &mut self.wo, &mut self.bo, &mut self.ln2_g,
            &mut self.ln2_b, &mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2,
        ]
    }

    pub fn freeze(&mut self) {
        for p in self.params_mut() {
            p.freeze();
        }
    }

    pub fn vars(&self, tape: &mut Tape) -> BlockVars {
        BlockVars {
            ln1_g: tape.param(&self.ln1_g),
            ln1_b: tape.param(&self.ln1_b),
            wq: tape.param(&self.wq),
            bq: tape.param(&self.bq),
            wk: tape.param(&self.wk),
            bk: tape.param(&self.bk),
            wv: tape.param(&self.wv),
            bv: tape.param(&self.bv),
            wo: tape.param(&self.wo),
            bo: tape.param(&self.bo),
            ln2_g: tape.param(&self.ln2_g),
            ln2_b: tape.param(&self.ln2_b),
            w1: tape.param(&self.w1),
            b1: tape.param(&self.b1),
            w2: tape.param(&self.w2),
            b2: tape.param(&self.b2),
        }
    }
}

/// Build an additive causal mask, optionally blocking padded key positions
/// for every query.
pub fn causal_mask(seq_len: usize, pad: Option<&[bool]>) -> Tensor {
    let mut mask = Tensor::zeros(vec![seq_len, seq_len]);
    for t in 0..seq_len {
        for s in 0..seq_len {
            let blocked = s > t || pad.map(|p| p[s]).unwrap_or(false);
            if blocked {
                mask.data[t * seq_len + s] = MASK_BLOCK;
            }
        }
    }
    mask
}

/// One block on the tape: pre-norm multi-head attention plus pre-norm FFN,
/// both with residual connections.
pub fn block_forward(
    tape: &mut Tape,
    vars: &BlockVars,
    x: Var,
    n_heads: usize,
    mask: Option<Var>,
) -> Result<Var> {
    let dim = tape.value(x).cols();
    let head_dim = dim / n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let h = tape.layer_norm(x, vars.ln1_g, vars.ln1_b)?;
    let q = tape.matmul(h, vars.wq)?;
    let q = tape.add_bias(q, vars.bq)?;
    let k = tape.matmul(h, vars.wk)?;
    let k = tape.add_bias(k, vars.bk)?;
    let v = tape.matmul(h, vars.wv)?;
    let v = tape.add_bias(v, vars.bv)?;

    let mut heads = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let start = head * head_dim;
        let qh = tape.slice_cols(q, start, head_dim)?;
        let kh = tape.slice_cols(k, start, head_dim)?;
        let vh = tape.slice_cols(v, start, head_dim)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale)?;
        let scores = match mask {
            Some(m) => tape.add(scores, m)?,
            None => scores,
        };
        let probs = tape.softmax_rows(scores)?;
        heads.push(tape.matmul(probs, vh)?);
    }
    let merged = tape.concat_cols(&heads)?;
    let attn = tape.matmul(merged, vars.wo)?;
    let attn = tape.add_bias(attn, vars.bo)?;
    let x = tape.add(x, attn)?;

    let h2 = tape.layer_norm(x, vars.ln2_g, vars.ln2_b)?;
    let f = tape.matmul(h2, vars.w1)?;
    let f = tape.add_bias(f, vars.b1)?;
    let f = tape.gelu(f)?;
    let ffn = tape.matmul(f, vars.w2)?;
    let ffn = tape.add_bias(ffn, vars.b2)?;
    tape.add(x, ffn)
}

/// Grown key/value buffers of one block for incremental decoding.
#[derive(Debug, Clone, Default)]
pub struct BlockKvCache {
    k: Vec<f64>,
    v: Vec<f64>,
    len: usize,
}

fn affine_rows(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    tensor::add_bias(&tensor::matmul(x, w)?, b)
}

fn layer_norm_affine(x: &Tensor, g: &Tensor, b: &Tensor) -> Tensor {
    let (mut out, _, _) = tensor::layer_norm_rows(x);
    for r in 0..out.rows() {
        for (i, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = *v * g.data[i] + b.data[i];
        }
    }
    out
}

/// Forward-only block step over `x_new` rows (absolute positions follow the
/// cache). Causal attention against all cached positions plus the new rows.
pub fn block_forward_cached(
    block: &BlockParams,
    cache: &mut BlockKvCache,
    x_new: &Tensor,
    n_heads: usize,
) -> Result<Tensor> {
    let dim = x_new.cols();
    let head_dim = dim / n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let new_rows = x_new.rows();

    let h = layer_norm_affine(x_new, &block.ln1_g.value, &block.ln1_b.value);
    let q = affine_rows(&h, &block.wq.value, &block.bq.value)?;
    let k = affine_rows(&h, &block.wk.value, &block.bk.value)?;
    let v = affine_rows(&h, &block.wv.value, &block.bv.value)?;
    cache.k.extend_from_slice(&k.data);
    cache.v.extend_from_slice(&v.data);
    cache.len += new_rows;

    let total = cache.len;
    let mut merged = Tensor::zeros(vec![new_rows, dim]);
    for (r, pos) in (total - new_rows..total).enumerate() {
        let qrow = q.row(r);
        for head in 0..n_heads {
            let start = head * head_dim;
            let qh = &qrow[start..start + head_dim];
            // scores against every visible position
            let mut scores = Vec::with_capacity(pos + 1);
            let mut max = f64::NEG_INFINITY;
            for s in 0..=pos {
                let krow = &cache.k[s * dim + start..s * dim + start + head_dim];
                let score = tensor::dot(qh, krow) * scale;
                if score > max {
                    max = score;
                }
                scores.push(score);
            }
            let mut denom = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                denom += *s;
            }
            let out = &mut merged.row_mut(r)[start..start + head_dim];
            for (s, weight) in scores.iter().enumerate() {
                let p = weight / denom;
                let vrow = &cache.v[s * dim + start..s * dim + start + head_dim];
                for (o, &vv) in out.iter_mut().zip(vrow) {
                    *o += p * vv;
                }
            }
        }
    }
    let attn = affine_rows(&merged, &block.wo.value, &block.bo.value)?;
    let x = tensor::add(x_new, &attn)?;

    let h2 = layer_norm_affine(&x, &block.ln2_g.value, &block.ln2_b.value);
    let f = tensor::gelu(&affine_rows(&h2, &block.w1.value, &block.b1.value)?);
    let ffn = affine_rows(&f, &block.w2.value, &block.b2.value)?;
    tensor::add(&x, &ffn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cached_path_matches_tape_path_on_causal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 16;
        let block = BlockParams::init(&mut rng, "b", dim, dim * 4);
        let x = random_input(&mut rng, 7, dim);

        let mut tape = Tape::new();
        let vars = block.vars(&mut tape);
        let xin = tape.constant(x.clone());
        let mask = tape.constant(causal_mask(7, None));
        let full = block_forward(&mut tape, &vars, xin, 4, Some(mask)).unwrap();
        let full_out = tape.value(full).clone();

        // prefill 3 rows, then one row at a time
        let mut cache = BlockKvCache::default();
        let first = Tensor::matrix(3, dim, x.data[..3 * dim].to_vec()).unwrap();
        let mut rows = block_forward_cached(&block, &mut cache, &first, 4).unwrap().data;
        for r in 3..7 {
            let row = Tensor::matrix(1, dim, x.row(r).to_vec()).unwrap();
            let out = block_forward_cached(&block, &mut cache, &row, 4).unwrap();
            rows.extend_from_slice(&out.data);
        }
        for (a, b) in full_out.data.iter().zip(&rows) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn causal_mask_blocks_future_and_pad() {
        let pad = vec![false, false, true];
        let mask = causal_mask(3, Some(&pad));
        assert_eq!(mask.at(0, 0), 0.0);
        assert_eq!(mask.at(0, 1), MASK_BLOCK);
        assert_eq!(mask.at(2, 0), 0.0);
        assert_eq!(mask.at(2, 2), MASK_BLOCK); // pad blocked even on-diagonal
    }

    #[test]
    fn output_at_position_t_ignores_later_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 8;
        let block = BlockParams::init(&mut rng, "b", dim, 32);
        let x1 = random_input(&mut rng, 5, dim);
        let mut x2 = x1.clone();
        for v in x2.row_mut(4).iter_mut() {
            *v += 3.0;
        }
        let run = |x: &Tensor| {
            let mut tape = Tape::new();
            let vars = block.vars(&mut tape);
            let xin = tape.constant(x.clone());
            let mask = tape.constant(causal_mask(5, None));
            let out = block_forward(&mut tape, &vars, xin, 2, Some(mask)).unwrap();
            tape.value(out).clone()
        };
        let a = run(&x1);
        let b = run(&x2);
        for t in 0..4 {
            assert_eq!(a.row(t), b.row(t), "position {t} saw the future");
        }
        assert_ne!(a.row(4), b.row(4));
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dim = 6;
        let block = BlockParams::init(&mut rng, "b", dim, 12);
        let base = random_input(&mut rng, 4, dim);

        let eval = |x: &Tensor, want_grad: bool| -> (f64, Option<Vec<f64>>) {
            let mut tape = Tape::new();
            let vars = block.vars(&mut tape);
            let xin = if want_grad {
                tape.leaf(x.clone())
            } else {
                tape.constant(x.clone())
            };
            let mask = tape.constant(causal_mask(4, None));
            let out = block_forward(&mut tape, &vars, xin, 2, Some(mask)).unwrap();
            let target = Tensor::zeros(vec![4, dim]);
            let loss = tape.masked_mse(out, &target, &[true; 4]).unwrap();
            let value = tape.value(loss).scalar_value();
            if want_grad {
                tape.backward(loss).unwrap();
                (value, Some(tape.grad(xin).unwrap().data.clone()))
            } else {
                (value, None)
            }
        };
        let (_, grad) = eval(&base, true);
        let grad = grad.unwrap();
        let h = 1e-5;
        for i in (0..base.data.len()).step_by(3) {
            let mut plus = base.clone();
            plus.data[i] += h;
            let mut minus = base.clone();
            minus.data[i] -= h;
            let fd = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((grad[i] - fd).abs() / denom < 1e-4, "entry {i}: {} vs {fd}", grad[i]);
        }
    }
}
