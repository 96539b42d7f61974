//! Frozen patch-transformer encoder for minute-level activity.
//!
//! A day of standardized minutes is split into non-overlapping patches, each
//! linearly embedded, tagged with fixed sinusoidal positions and passed
//! through a bidirectional encoder stack with a final layer norm. Weights are
//! learned once with a masked-autoencoding objective and frozen afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::nn::{normal_init, AdamConfig, OptimizerState, Parameter, WeightArchive};
use crate::transformer::{block_forward, BlockParams, BlockVars, INIT_STD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub sequence_len: usize,
    pub patch_len: usize,
    pub n_patches: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    /// Whether a final layer norm is applied before emitting tokens.
    pub final_layer_norm: bool,
}

impl PatchConfig {
    /// CPU-trainable miniature.
    pub fn desk() -> Self {
        PatchConfig {
            sequence_len: 1440,
            patch_len: 18,
            n_patches: 80,
            embed_dim: 32,
            n_layers: 2,
            n_heads: 4,
            ffn_mult: 4,
            final_layer_norm: true,
        }
    }

    /// Full-width token dimension.
    pub fn paper() -> Self {
        PatchConfig {
            embed_dim: 96,
            n_layers: 4,
            n_heads: 8,
            ..PatchConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence_len != self.patch_len * self.n_patches {
            return Err(Error::validation(format!(
                "sequence_len {} != patch_len {} × n_patches {}",
                self.sequence_len, self.patch_len, self.n_patches
            )));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "embed_dim {} not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Split a sequence into contiguous non-overlapping patches, order preserved.
pub fn patchify(values: &[f64], patch_len: usize) -> Result<Tensor> {
    if patch_len == 0 || values.len() % patch_len != 0 {
        return Err(Error::validation(format!(
            "sequence of {} values is not divisible into patches of {patch_len}",
            values.len()
        )));
    }
    Tensor::matrix(values.len() / patch_len, patch_len, values.to_vec())
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor) -> Vec<f64> {
    patches.data.clone()
}

/// Standard interleaved sinusoidal positional encoding: even columns sine,
/// odd columns cosine, wavelengths geometric in the column pair index.
pub fn sinusoidal_pe(n_positions: usize, dim: usize) -> Result<Tensor> {
    if dim % 2 != 0 {
        return Err(Error::validation(format!("positional dim must be even, got {dim}")));
    }
    let mut pe = Tensor::zeros(vec![n_positions, dim]);
    for pos in 0..n_positions {
        for pair in 0..dim / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * pair as f64 / dim as f64);
            let angle = pos as f64 * rate;
            pe.data[pos * dim + 2 * pair] = angle.sin();
            pe.data[pos * dim + 2 * pair + 1] = angle.cos();
        }
    }
    Ok(pe)
}

#[derive(Debug, Clone)]
pub struct PatchEncoder {
    pub config: PatchConfig,
    pub patch_embed_w: Parameter,
    pub patch_embed_b: Parameter,
    pub mask_token: Parameter,
    pub blocks: Vec<BlockParams>,
    pub final_ln_g: Parameter,
    pub final_ln_b: Parameter,
    /// Light linear reconstruction head used only during pretraining.
    pub decoder_head_w: Parameter,
    pub decoder_head_b: Parameter,
    positional: Tensor,
}

struct EncoderVars {
    patch_w: Var,
    patch_b: Var,
    mask_token: Var,
    blocks: Vec<BlockVars>,
    final_g: Var,
    final_b: Var,
    head_w: Var,
    head_b: Var,
    positional: Var,
}

impl PatchEncoder {
    pub fn init(config: PatchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = config.embed_dim;
        let blocks = (0..config.n_layers)
            .map(|l| BlockParams::init(&mut rng, &format!("enc.block{l}"), dim, dim * config.ffn_mult))
            .collect();
        let positional = sinusoidal_pe(config.n_patches, dim)?;
        Ok(PatchEncoder {
            patch_embed_w: Parameter::trainable(
                "enc.patch_embed.w",
                normal_init(&mut rng, vec![config.patch_len, dim], INIT_STD),
            ),
            patch_embed_b: Parameter::trainable("enc.patch_embed.b", Tensor::vector(vec![0.0; dim])),
            mask_token: Parameter::trainable(
                "enc.mask_token",
                normal_init(&mut rng, vec![1, dim], INIT_STD),
            ),
            blocks,
            final_ln_g: Parameter::trainable("enc.final_ln.g", Tensor::vector(vec![1.0; dim])),
            final_ln_b: Parameter::trainable("enc.final_ln.b", Tensor::vector(vec![0.0; dim])),
            decoder_head_w: Parameter::trainable(
                "enc.head.w",
                normal_init(&mut rng, vec![dim, config.patch_len], INIT_STD),
            ),
            decoder_head_b: Parameter::trainable(
                "enc.head.b",
                Tensor::vector(vec![0.0; config.patch_len]),
            ),
            config,
            positional,
        })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![
            &self.patch_embed_w,
            &self.patch_embed_b,
            &self.mask_token,
            &self.final_ln_g,
            &self.final_ln_b,
            &self.decoder_head_w,
            &self.decoder_head_b,
        ];
        for b in &self.blocks {
            out.extend(b.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![
            &mut self.patch_embed_w,
            &mut self.patch_embed_b,
            &mut self.mask_token,
            &mut self.final_ln_g,
            &mut self.final_ln_b,
            &mut self.decoder_head_w,
            &mut self.decoder_head_b,
        ];
        for b in &mut self.blocks {
            out.extend(b.params_mut());
        }
        out
    }

    pub fn freeze(&mut self) {
        for p in self.params_mut() {
            p.freeze();
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.frozen)
    }

    fn vars(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            patch_w: tape.param(&self.patch_embed_w),
            patch_b: tape.param(&self.patch_embed_b),
            mask_token: tape.param(&self.mask_token),
            blocks: self.blocks.iter().map(|b| b.vars(tape)).collect(),
            final_g: tape.param(&self.final_ln_g),
            final_b: tape.param(&self.final_ln_b),
            head_w: tape.param(&self.decoder_head_w),
            head_b: tape.param(&self.decoder_head_b),
            positional: tape.constant(self.positional.clone()),
        }
    }

    /// Patch-embed one day's patches: `[n_patches, patch_len] → [n_patches, dim]`.
    fn embed_patches(&self, tape: &mut Tape, vars: &EncoderVars, patches: Var) -> Result<Var> {
        let e = tape.matmul(patches, vars.patch_w)?;
        tape.add_bias(e, vars.patch_b)
    }

    /// Encoder stack over already-embedded tokens (mask replacement applied
    /// by the caller when pretraining).
    fn encode_tokens(&self, tape: &mut Tape, vars: &EncoderVars, embedded: Var) -> Result<Var> {
        let mut x = tape.add(embedded, vars.positional)?;
        for block in &vars.blocks {
            x = block_forward(tape, block, x, self.config.n_heads, None)?;
        }
        if self.config.final_layer_norm {
            x = tape.layer_norm(x, vars.final_g, vars.final_b)?;
        }
        Ok(x)
    }

    /// Inference: standardized minutes in, `[n_patches, embed_dim]` tokens out.
    /// The encoder must be frozen (pretrained weights in place).
    pub fn encode(&self, standardized_minutes: &[f64]) -> Result<Tensor> {
        if !self.is_frozen() {
            return Err(Error::validation(
                "encoder weights not loaded: pretrain or load an archive, then freeze",
            ));
        }
        if standardized_minutes.len() != self.config.sequence_len {
            return Err(Error::validation(format!(
                "expected {} minutes, got {}",
                self.config.sequence_len,
                standardized_minutes.len()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.vars(&mut tape);
        let patches = tape.constant(patchify(standardized_minutes, self.config.patch_len)?);
        let embedded = self.embed_patches(&mut tape, &vars, patches)?;
        let tokens = self.encode_tokens(&mut tape, &vars, embedded)?;
        Ok(tape.value(tokens).clone())
    }

    /// Pre-positional patch embeddings, exposed for shift/permutation probes.
    pub fn embed_only(&self, standardized_minutes: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.vars(&mut tape);
        let patches = tape.constant(patchify(standardized_minutes, self.config.patch_len)?);
        let embedded = self.embed_patches(&mut tape, &vars, patches)?;
        Ok(tape.value(embedded).clone())
    }

    /// Masked-autoencoding loss for one sequence on an existing tape.
    /// Masked patches are replaced (post-embedding) by the learned mask token;
    /// reconstruction error is computed on masked patches only.
    fn mae_loss(
        &self,
        tape: &mut Tape,
        vars: &EncoderVars,
        minutes: &[f64],
        masked: &[bool],
    ) -> Result<Var> {
        let n = self.config.n_patches;
        let patch_tensor = patchify(minutes, self.config.patch_len)?;
        let patches = tape.constant(patch_tensor.clone());
        let embedded = self.embed_patches(tape, vars, patches)?;

        // keep = diag(1 - mask) · embedded; masked rows get ones·mask_token
        let mut diag_keep = Tensor::zeros(vec![n, n]);
        let mut ones_masked = Tensor::zeros(vec![n, 1]);
        for (i, &m) in masked.iter().enumerate() {
            if m {
                ones_masked.data[i] = 1.0;
            } else {
                diag_keep.data[i * n + i] = 1.0;
            }
        }
        let keep = tape.constant(diag_keep);
        let ones = tape.constant(ones_masked);
        let kept = tape.matmul(keep, embedded)?;
        let mask_rows = tape.matmul(ones, vars.mask_token)?;
        let mixed = tape.add(kept, mask_rows)?;

        let tokens = self.encode_tokens(tape, vars, mixed)?;
        let pred = tape.matmul(tokens, vars.head_w)?;
        let pred = tape.add_bias(pred, vars.head_b)?;
        tape.masked_mse(pred, &patch_tensor, masked)
    }

    /// Mean masked-reconstruction loss over a set of sequences with a fixed
    /// seeded mask draw; evaluation path for before/after comparisons.
    pub fn mae_eval_loss(&self, sequences: &[Vec<f64>], mask_ratio: f64, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for minutes in sequences {
            let masked = draw_mask(&mut rng, self.config.n_patches, mask_ratio);
            let mut tape = Tape::new();
            let vars = self.vars(&mut tape);
            let loss = self.mae_loss(&mut tape, &vars, minutes, &masked)?;
            total += tape.value(loss).scalar_value();
        }
        Ok(total / sequences.len() as f64)
    }

    pub fn to_archive(&self) -> Result<WeightArchive> {
        let config = serde_json::to_value(&self.config).map_err(|e| Error::json("encoder config", e))?;
        Ok(WeightArchive::new(
            config,
            self.params().into_iter().cloned().collect(),
        ))
    }

    pub fn from_archive(archive: &WeightArchive) -> Result<Self> {
        let config: PatchConfig = serde_json::from_value(archive.config.clone())
            .map_err(|e| Error::json("encoder config", e))?;
        let mut encoder = PatchEncoder::init(config, 0)?;
        for p in encoder.params_mut() {
            let stored = archive.find(&p.name)?;
            if stored.value.shape != p.value.shape {
                return Err(Error::Shape {
                    op: "encoder load",
                    left: p.value.shape.clone(),
                    right: stored.value.shape.clone(),
                });
            }
            *p = stored.clone();
        }
        Ok(encoder)
    }
}

fn draw_mask(rng: &mut ChaCha8Rng, n: usize, ratio: f64) -> Vec<bool> {
    // at least one masked and one visible patch
    let target = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..target {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut mask = vec![false; n];
    for &i in &idx[..target] {
        mask[i] = true;
    }
    mask
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaeReport {
    pub epoch_losses: Vec<f64>,
    pub mask_ratio: f64,
}

/// Masked-autoencoder pretraining over standardized sequences. Returns the
/// trained encoder already frozen, plus per-epoch mean losses.
pub fn pretrain_mae(
    config: PatchConfig,
    sequences: &[Vec<f64>],
    mask_ratio: f64,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<(PatchEncoder, MaeReport)> {
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::validation(format!(
            "mask_ratio must lie in (0,1), got {mask_ratio}"
        )));
    }
    if sequences.len() < 32 {
        return Err(Error::validation(format!(
            "masked-autoencoder pretraining needs at least 32 sequences, got {}",
            sequences.len()
        )));
    }
    let mut encoder = PatchEncoder::init(config, seed)?;
    let mut optimizer = OptimizerState::new(AdamConfig::default());
    let batch_size = batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1));
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37 + epoch as u64));
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;

        for chunk in order.chunks(batch_size) {
            let mut tape = Tape::new();
            let vars = encoder.vars(&mut tape);
            let mut item_losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let masked = draw_mask(&mut mask_rng, encoder.config.n_patches, mask_ratio);
                item_losses.push(encoder.mae_loss(&mut tape, &vars, &sequences[i], &masked)?);
            }
            let weight = 1.0 / item_losses.len() as f64;
            let mut total = tape.scale(item_losses[0], weight)?;
            for &item in &item_losses[1..] {
                let scaled = tape.scale(item, weight)?;
                total = tape.add(total, scaled)?;
            }
            epoch_loss += tape.value(total).scalar_value();
            batches += 1.0;
            tape.backward(total)?;

            let grads: Vec<Option<Tensor>> = [
                vars.patch_w, vars.patch_b, vars.mask_token, vars.final_g, vars.final_b,
                vars.head_w, vars.head_b,
            ]
            .iter()
            .map(|&v| tape.grad(v).cloned())
            .chain(vars.blocks.iter().flat_map(|b| {
                [
                    b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_g,
                    b.ln2_b, b.w1, b.b1, b.w2, b.b2,
                ]
                .into_iter()
                .map(|v| tape.grad(v).cloned())
                .collect::<Vec<_>>()
            }))
            .collect();
            let mut params = encoder.params_mut();
            let mut pairs: Vec<(&mut Parameter, Option<&Tensor>)> = params
                .iter_mut()
                .zip(grads.iter().map(|g| g.as_ref()))
                .map(|(p, g)| (&mut **p, g))
                .collect();
            optimizer.step(&mut pairs, lr)?;
        }
        epoch_losses.push(epoch_loss / batches);
    }

    encoder.freeze();
    Ok((
        encoder,
        MaeReport {
            epoch_losses,
            mask_ratio,
        },
    ))
}
