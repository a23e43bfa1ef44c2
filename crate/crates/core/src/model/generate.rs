use super::linalg::{dot, matmul, matmul_acc};
use super::transformer::{gelu, rms_norm};
use super::{Ablation, Parameters, Scalar, TokenId};
use crate::error::{Error, Result};

/// Greedy decoding settings. Defaults to 50 new tokens with no stop sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    /// Generation halts once the output ends with any of these.
    pub stop_sequences: Vec<Vec<TokenId>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 50,
            stop_sequences: Vec::new(),
        }
    }
}

/// Incremental decoder holding per-layer key/value caches.
pub struct DecoderState<'a, T> {
    params: &'a Parameters<T>,
    ablation: Ablation,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

impl<'a, T: Scalar> DecoderState<'a, T> {
    pub fn new(params: &'a Parameters<T>, ablation: Ablation) -> Self {
        let n = params.config.n_layers;
        Self {
            params,
            ablation,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feed one token and return the next-token logits at its position.
    pub fn step(&mut self, token: TokenId) -> Result<Vec<T>> {
        let p = self.params;
        let cfg = &p.config;
        if self.len >= cfg.max_context {
            return Err(Error::SequenceTooLong {
                len: self.len + 1,
                max: cfg.max_context,
            });
        }
        if token as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab_size: cfg.vocab_size,
            });
        }
        let (d, f, hd) = (cfg.d_model, cfg.d_ff, cfg.head_dim());
        let pos = self.len;
        let mut x: Vec<T> = p.tok_emb[token as usize * d..(token as usize + 1) * d]
            .iter()
            .zip(&p.pos_emb[pos * d..(pos + 1) * d])
            .map(|(&a, &b)| a + b)
            .collect();
        let scale = T::from_f64(1.0 / (hd as f64).sqrt());
        let t = pos + 1;
        let mut scores = vec![T::zero(); t];
        for (l, lp) in p.layers.iter().enumerate() {
            let (h1, _) = rms_norm(&x, &lp.attn_norm, d);
            let q = matmul(&h1, &lp.wq, 1, d, d);
            self.keys[l].extend(matmul(&h1, &lp.wk, 1, d, d));
            self.values[l].extend(matmul(&h1, &lp.wv, 1, d, d));
            let (ks, vs) = (&self.keys[l], &self.values[l]);
            let mut ctx = vec![T::zero(); d];
            for h in 0..cfg.n_heads {
                if self.ablation.is_ablated(l, h) {
                    continue;
                }
                let off = h * hd;
                let qh = &q[off..off + hd];
                let mut max = T::neg_infinity();
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(qh, &ks[j * d + off..j * d + off + hd]) * scale;
                    if *s > max {
                        max = *s;
                    }
                }
                let mut sum = T::zero();
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum = sum + *s;
                }
                let ch = &mut ctx[off..off + hd];
                for (j, &s) in scores.iter().enumerate() {
                    let w = s / sum;
                    for (c, &v) in ch.iter_mut().zip(&vs[j * d + off..j * d + off + hd]) {
                        *c = *c + w * v;
                    }
                }
            }
            matmul_acc(&mut x, &ctx, &lp.wo, 1, d, d);
            let (h2, _) = rms_norm(&x, &lp.ffn_norm, d);
            let act: Vec<T> = matmul(&h2, &lp.w_in, 1, d, f).into_iter().map(gelu).collect();
            matmul_acc(&mut x, &act, &lp.w_out, 1, f, d);
        }
        self.len += 1;
        let (hf, _) = rms_norm(&x, &p.final_norm, d);
        Ok(matmul(&hf, &p.unembed, 1, d, cfg.vocab_size))
    }
}

fn argmax<T: Scalar>(row: &[T]) -> TokenId {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Greedy continuation of `prompt`. The returned tokens exclude the prompt
/// and include a trailing stop sequence when one was produced.
pub fn generate<T: Scalar>(
    params: &Parameters<T>,
    prompt: &[TokenId],
    gen: &GenerationConfig,
    ablation: &Ablation,
) -> Result<Vec<TokenId>> {
    let cfg = &params.config;
    if prompt.is_empty() {
        return Err(Error::EmptySequence);
    }
    if prompt.len() + 1 > cfg.max_context {
        return Err(Error::SequenceTooLong {
            len: prompt.len() + 1,
            max: cfg.max_context,
        });
    }
    let mut out = Vec::new();
    if gen.max_new_tokens == 0 {
        return Ok(out);
    }
    let mut state = DecoderState::new(params, ablation.clone());
    let mut logits = Vec::new();
    for &t in prompt {
        logits = state.step(t)?;
    }
    loop {
        let next = argmax(&logits);
        out.push(next);
        if out.len() >= gen.max_new_tokens
            || gen.stop_sequences.iter().any(|s| !s.is_empty() && out.ends_with(s))
            || state.len() >= cfg.max_context
        {
            break;
        }
        logits = state.step(next)?;
    }
    Ok(out)
}
