//! Decoder-only language model over the closed word vocabulary.
//!
//! Learned token and position embeddings, a causal pre-norm block stack, a
//! final layer norm and a linear head. The decoder is trained once as a plain
//! language model on the oracle labels, then frozen; during alignment it only
//! propagates gradients through to the projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::{self, Tensor};
use crate::nn::{normal_init, Parameter, WeightArchive};
use crate::transformer::{
    block_forward, block_forward_cached, BlockKvCache, BlockParams, BlockVars, INIT_STD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub decoder_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub ffn_mult: usize,
}

impl DecoderConfig {
    pub fn desk(vocab_size: usize) -> Self {
        DecoderConfig {
            decoder_dim: 128,
            n_layers: 2,
            n_heads: 4,
            vocab_size,
            max_seq_len: 320,
            ffn_mult: 4,
        }
    }

    /// Full-width embedding space.
    pub fn paper(vocab_size: usize) -> Self {
        DecoderConfig {
            decoder_dim: 2048,
            n_layers: 4,
            n_heads: 16,
            vocab_size,
            max_seq_len: 320,
            ffn_mult: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.decoder_dim % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "decoder_dim {} not divisible by n_heads {}",
                self.decoder_dim, self.n_heads
            )));
        }
        if self.decoder_dim == 0 || self.n_layers == 0 || self.vocab_size == 0 || self.max_seq_len == 0 {
            return Err(Error::validation("decoder config fields must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TextDecoder {
    pub config: DecoderConfig,
    pub tok_embed: Parameter,
    pub pos_embed: Parameter,
    pub blocks: Vec<BlockParams>,
    pub final_ln_g: Parameter,
    pub final_ln_b: Parameter,
    pub head_w: Parameter,
    pub head_b: Parameter,
}

/// Tape handles for one forward pass; create once per tape so batch items
/// share leaves.
pub struct DecoderVars {
    pub tok: Var,
    pub pos: Var,
    pub blocks: Vec<BlockVars>,
    pub final_g: Var,
    pub final_b: Var,
    pub head_w: Var,
    pub head_b: Var,
}

/// Incremental decoding state.
#[derive(Debug, Clone)]
pub struct DecoderKvCache {
    blocks: Vec<BlockKvCache>,
    pub len: usize,
}

impl TextDecoder {
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.decoder_dim;
        let blocks = (0..config.n_layers)
            .map(|l| BlockParams::init(&mut rng, &format!("dec.block{l}"), d, d * config.ffn_mult))
            .collect();
        Ok(TextDecoder {
            tok_embed: Parameter::trainable(
                "dec.tok_embed",
                normal_init(&mut rng, vec![config.vocab_size, d], INIT_STD),
            ),
            pos_embed: Parameter::trainable(
                "dec.pos_embed",
                normal_init(&mut rng, vec![config.max_seq_len, d], INIT_STD),
            ),
            blocks,
            final_ln_g: Parameter::trainable("dec.final_ln.g", Tensor::vector(vec![1.0; d])),
            final_ln_b: Parameter::trainable("dec.final_ln.b", Tensor::vector(vec![0.0; d])),
            head_w: Parameter::trainable(
                "dec.head.w",
                normal_init(&mut rng, vec![d, config.vocab_size], INIT_STD),
            ),
            head_b: Parameter::trainable("dec.head.b", Tensor::vector(vec![0.0; config.vocab_size])),
            config,
        })
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![
            &self.tok_embed,
            &self.pos_embed,
            &self.final_ln_g,
            &self.final_ln_b,
            &self.head_w,
            &self.head_b,
        ];
        for b in &self.blocks {
            out.extend(b.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![
            &mut self.tok_embed,
            &mut self.pos_embed,
            &mut self.final_ln_g,
            &mut self.final_ln_b,
            &mut self.head_w,
            &mut self.head_b,
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

    pub fn vars(&self, tape: &mut Tape) -> DecoderVars {
        DecoderVars {
            tok: tape.param(&self.tok_embed),
            pos: tape.param(&self.pos_embed),
            blocks: self.blocks.iter().map(|b| b.vars(tape)).collect(),
            final_g: tape.param(&self.final_ln_g),
            final_b: tape.param(&self.final_ln_b),
            head_w: tape.param(&self.head_w),
            head_b: tape.param(&self.head_b),
        }
    }

    /// Core stack over input embeddings (positions are added here, uniformly
    /// across the whole sequence). Returns `[T, vocab]` logits.
    pub fn forward_embedded(
        &self,
        tape: &mut Tape,
        vars: &DecoderVars,
        x: Var,
        mask: Var,
    ) -> Result<Var> {
        let t = tape.value(x).rows();
        if t > self.config.max_seq_len {
            return Err(Error::validation(format!(
                "sequence of {t} positions exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        let positions: Vec<usize> = (0..t).collect();
        let pos = tape.embedding_lookup(vars.pos, &positions)?;
        let mut h = tape.add(x, pos)?;
        for block in &vars.blocks {
            h = block_forward(tape, block, h, self.config.n_heads, Some(mask))?;
        }
        let h = tape.layer_norm(h, vars.final_g, vars.final_b)?;
        let logits = tape.matmul(h, vars.head_w)?;
        tape.add_bias(logits, vars.head_b)
    }

    /// Language-model forward over token ids (training path for the decoder
    /// pretraining stage).
    pub fn forward_ids(
        &self,
        tape: &mut Tape,
        vars: &DecoderVars,
        ids: &[u32],
        mask: Var,
    ) -> Result<Var> {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let x = tape.embedding_lookup(vars.tok, &idx)?;
        self.forward_embedded(tape, vars, x, mask)
    }

    /// Token embedding plus position row, for the incremental path.
    pub fn embed_token_at(&self, id: u32, pos: usize) -> Result<Tensor> {
        if pos >= self.config.max_seq_len {
            return Err(Error::validation(format!(
                "position {pos} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        let d = self.config.decoder_dim;
        let mut row = self.tok_embed.value.row(id as usize).to_vec();
        for (r, p) in row.iter_mut().zip(self.pos_embed.value.row(pos)) {
            *r += p;
        }
        Tensor::matrix(1, d, row)
    }

    pub fn new_cache(&self) -> DecoderKvCache {
        DecoderKvCache {
            blocks: vec![BlockKvCache::default(); self.config.n_layers],
            len: 0,
        }
    }

    /// Forward-only incremental step: `rows` are input embeddings (positions
    /// already added) for the next positions. Returns logits for the last row.
    pub fn forward_cached(&self, cache: &mut DecoderKvCache, rows: &Tensor) -> Result<Vec<f64>> {
        if cache.len + rows.rows() > self.config.max_seq_len {
            return Err(Error::validation(format!(
                "cached sequence of {} exceeds max_seq_len {}",
                cache.len + rows.rows(),
                self.config.max_seq_len
            )));
        }
        let mut h = rows.clone();
        for (block, kv) in self.blocks.iter().zip(cache.blocks.iter_mut()) {
            h = block_forward_cached(block, kv, &h, self.config.n_heads)?;
        }
        cache.len += rows.rows();
        let last = Tensor::matrix(1, h.cols(), h.row(h.rows() - 1).to_vec())?;
        let (normalized, _, _) = tensor::layer_norm_rows(&last);
        let mut scaled = normalized;
        for (i, v) in scaled.row_mut(0).iter_mut().enumerate() {
            *v = *v * self.final_ln_g.value.data[i] + self.final_ln_b.value.data[i];
        }
        let logits = tensor::add_bias(&tensor::matmul(&scaled, &self.head_w.value)?, &self.head_b.value)?;
        Ok(logits.data)
    }

    pub fn to_archive(&self) -> Result<WeightArchive> {
        let config = serde_json::to_value(&self.config).map_err(|e| Error::json("decoder config", e))?;
        Ok(WeightArchive::new(
            config,
            self.params().into_iter().cloned().collect(),
        ))
    }

    pub fn from_archive(archive: &WeightArchive) -> Result<Self> {
        let config: DecoderConfig = serde_json::from_value(archive.config.clone())
            .map_err(|e| Error::json("decoder config", e))?;
        let mut decoder = TextDecoder::init(config, 0)?;
        for p in decoder.params_mut() {
            let stored = archive.find(&p.name)?;
            if stored.value.shape != p.value.shape {
                return Err(Error::Shape {
                    op: "decoder load",
                    left: p.value.shape.clone(),
                    right: stored.value.shape.clone(),
                });
            }
            *p = stored.clone();
        }
        Ok(decoder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::causal_mask;

    fn tiny() -> TextDecoder {
        TextDecoder::init(
            DecoderConfig {
                decoder_dim: 16,
                n_layers: 2,
                n_heads: 2,
                vocab_size: 11,
                max_seq_len: 32,
                ffn_mult: 2,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn cached_logits_match_tape_logits() {
        let decoder = tiny();
        let ids: Vec<u32> = vec![1, 4, 7, 2, 9, 5];

        let mut tape = Tape::new();
        let vars = decoder.vars(&mut tape);
        let mask = tape.constant(causal_mask(ids.len(), None));
        let logits = decoder.forward_ids(&mut tape, &vars, &ids, mask).unwrap();
        let full = tape.value(logits).clone();

        let mut cache = decoder.new_cache();
        let mut last = Vec::new();
        for (pos, &id) in ids.iter().enumerate() {
            let row = decoder.embed_token_at(id, pos).unwrap();
            last = decoder.forward_cached(&mut cache, &row).unwrap();
        }
        for (a, b) in full.row(ids.len() - 1).iter().zip(&last) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn causality_logits_at_t_ignore_later_tokens() {
        let decoder = tiny();
        let a: Vec<u32> = vec![1, 4, 7, 2, 9];
        let mut b = a.clone();
        b[4] = 3;
        let run = |ids: &[u32]| {
            let mut tape = Tape::new();
            let vars = decoder.vars(&mut tape);
            let mask = tape.constant(causal_mask(ids.len(), None));
            let logits = decoder.forward_ids(&mut tape, &vars, ids, mask).unwrap();
            tape.value(logits).clone()
        };
        let la = run(&a);
        let lb = run(&b);
        for t in 0..4 {
            assert_eq!(la.row(t), lb.row(t), "position {t}");
        }
    }

    #[test]
    fn oversized_sequence_is_rejected() {
        let decoder = tiny();
        let ids: Vec<u32> = (0..33).map(|i| (i % 11) as u32).collect();
        let mut tape = Tape::new();
        let vars = decoder.vars(&mut tape);
        let mask = tape.constant(causal_mask(33, None));
        assert!(decoder.forward_ids(&mut tape, &vars, &ids, mask).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let decoder = tiny();
        let archive = decoder.to_archive().unwrap();
        let restored = TextDecoder::from_archive(&archive).unwrap();
        assert_eq!(
            archive.to_bytes().unwrap(),
            restored.to_archive().unwrap().to_bytes().unwrap()
        );
    }
}
