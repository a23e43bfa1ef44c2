//! Small decoder-only transformer with hand-written gradients.
//!
//! The model is generic over its scalar type so the same code path runs in
//! `f32` for training and inference and in `f64` for gradient checks.
//! Blocks are pre-normalized (RMS norm with a learned gain), positions are
//! learned absolute embeddings, and the feed-forward path uses tanh-GELU.

mod checkpoint;
mod generate;
mod linalg;
mod optim;
mod params;
mod train;
mod transformer;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use generate::{generate, DecoderState, GenerationConfig};
pub use optim::{Adam, AdamConfig};
pub use params::{LayerParams, Parameters};
pub use train::{resume, train, write_loss_csv, LossPoint, TrainHyperparams, TrainOutcome, TrainingSequence};
pub use transformer::{
    attention_free_logits, forward, forward_trace, loss_and_grads, Forward, ForwardTrace,
};

/// Token identifier in the unified text/speech/marker vocabulary.
pub type TokenId = u32;

/// Floating point type the model can run in.
pub trait Scalar:
    num_traits::Float + std::iter::Sum + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default architecture (4 layers, 4 heads, width 128) for a given vocabulary.
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            max_context: 512,
            vocab_size,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_context", self.max_context),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn total_heads(&self) -> usize {
        self.n_layers * self.n_heads
    }

    /// Every head in (layer, head) order.
    pub fn all_heads(&self) -> impl Iterator<Item = HeadRef> + '_ {
        (0..self.n_layers).flat_map(move |layer| (0..self.n_heads).map(move |head| HeadRef { layer, head }))
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if tokens.len() > self.max_context {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.max_context,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadRef {
    pub layer: usize,
    pub head: usize,
}

impl HeadRef {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl fmt::Display for HeadRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

/// A validated set of heads whose context vectors are zeroed in the forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    mask: Vec<bool>,
    n_heads: usize,
}

impl Ablation {
    /// No heads removed.
    pub fn none(config: &ModelConfig) -> Self {
        Self {
            mask: vec![false; config.total_heads()],
            n_heads: config.n_heads,
        }
    }

    /// Remove the listed heads. Duplicates are harmless.
    pub fn new<'a>(config: &ModelConfig, heads: impl IntoIterator<Item = &'a HeadRef>) -> Result<Self> {
        let mut ablation = Self::none(config);
        for h in heads {
            if h.layer >= config.n_layers || h.head >= config.n_heads {
                return Err(Error::HeadOutOfRange {
                    layer: h.layer,
                    head: h.head,
                    n_layers: config.n_layers,
                    n_heads: config.n_heads,
                });
            }
            ablation.mask[h.layer * config.n_heads + h.head] = true;
        }
        Ok(ablation)
    }

    pub fn all(config: &ModelConfig) -> Self {
        Self {
            mask: vec![true; config.total_heads()],
            n_heads: config.n_heads,
        }
    }

    #[inline]
    pub fn is_ablated(&self, layer: usize, head: usize) -> bool {
        self.mask
            .get(layer * self.n_heads + head)
            .copied()
            .unwrap_or(false)
    }

    pub fn heads(&self) -> BTreeSet<HeadRef> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| HeadRef::new(i / self.n_heads, i % self.n_heads))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Per-head causal attention matrices from one forward pass.
///
/// Entry `(q, k)` is the weight query position `q` puts on key position `k`;
/// entries with `k > q` are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    n_layers: usize,
    n_heads: usize,
    seq_len: usize,
    weights: Vec<f64>,
}

impl AttentionRecord {
    pub fn zeros(n_layers: usize, n_heads: usize, seq_len: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            seq_len,
            weights: vec![0.0; n_layers * n_heads * seq_len * seq_len],
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    fn offset(&self, layer: usize, head: usize) -> usize {
        (layer * self.n_heads + head) * self.seq_len * self.seq_len
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f64 {
        self.weights[self.offset(layer, head) + query * self.seq_len + key]
    }

    pub fn set(&mut self, layer: usize, head: usize, query: usize, key: usize, value: f64) {
        let o = self.offset(layer, head);
        self.weights[o + query * self.seq_len + key] = value;
    }

    /// Row-major `seq_len x seq_len` matrix for one head.
    pub fn matrix(&self, layer: usize, head: usize) -> &[f64] {
        let o = self.offset(layer, head);
        &self.weights[o..o + self.seq_len * self.seq_len]
    }

    pub(crate) fn matrix_mut(&mut self, layer: usize, head: usize) -> &mut [f64] {
        let o = self.offset(layer, head);
        let n = self.seq_len * self.seq_len;
        &mut self.weights[o..o + n]
    }
}
