use super::linalg::{dot, matmul, matmul_a_bt, matmul_acc, matmul_at_b_acc};
use super::{Ablation, AttentionRecord, Parameters, Scalar, TokenId};
use crate::error::{Error, Result};

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Logits from a full-sequence forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub seq_len: usize,
    pub vocab_size: usize,
    /// Row-major `[seq_len, vocab_size]`.
    pub logits: Vec<T>,
    pub attention: Option<AttentionRecord>,
}

impl<T: Scalar> Forward<T> {
    pub fn row(&self, pos: usize) -> &[T] {
        &self.logits[pos * self.vocab_size..(pos + 1) * self.vocab_size]
    }
}

/// Intermediate activations exposed for analysis.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub logits: Vec<T>,
    /// Per layer, the attention sublayer output added to the residual stream, `[seq_len, d_model]`.
    pub attn_out: Vec<Vec<T>>,
    /// Per layer, the concatenated per-head context vectors entering the output projection.
    pub head_context: Vec<Vec<T>>,
}

struct LayerCache<T> {
    x_in: Vec<T>,
    inv_rms1: Vec<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `[n_heads, t, t]`, zero above the diagonal.
    probs: Vec<T>,
    ctx: Vec<T>,
    attn_out: Vec<T>,
    x_mid: Vec<T>,
    inv_rms2: Vec<T>,
    h2: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
}

pub(crate) struct Cache<T> {
    layers: Vec<LayerCache<T>>,
    x_final: Vec<T>,
    inv_rms_f: Vec<T>,
    h_final: Vec<T>,
    pub(crate) logits: Vec<T>,
}

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let inner = c * (x + a * x * x * x);
    let th = inner.tanh();
    let sech2 = T::one() - th * th;
    half * (T::one() + th) + half * x * sech2 * c * (T::one() + T::from_f64(3.0) * a * x * x)
}

/// RMS-normalize each row of `x` (`[rows, d]`) and apply `gain`.
pub(crate) fn rms_norm<T: Scalar>(x: &[T], gain: &[T], d: usize) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut out = vec![T::zero(); x.len()];
    let mut inv = vec![T::zero(); rows];
    let eps = T::from_f64(NORM_EPS);
    let dn = T::from_f64(d as f64);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let ms = row.iter().fold(T::zero(), |acc, &v| acc + v * v) / dn;
        let ir = T::one() / (ms + eps).sqrt();
        inv[r] = ir;
        for ((o, &v), &g) in out[r * d..(r + 1) * d].iter_mut().zip(row).zip(gain) {
            *o = v * ir * g;
        }
    }
    (out, inv)
}

/// Backward of [`rms_norm`]; accumulates into `dgain` and returns `dx`.
fn rms_norm_backward<T: Scalar>(x: &[T], inv: &[T], gain: &[T], dy: &[T], dgain: &mut [T], d: usize) -> Vec<T> {
    let rows = x.len() / d;
    let mut dx = vec![T::zero(); x.len()];
    let dn = T::from_f64(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let ir = inv[r];
        let mut m = T::zero();
        for c in 0..d {
            let xhat = xr[c] * ir;
            let dxhat = dyr[c] * gain[c];
            dgain[c] = dgain[c] + dyr[c] * xhat;
            m = m + dxhat * xhat;
        }
        m = m / dn;
        for c in 0..d {
            let xhat = xr[c] * ir;
            let dxhat = dyr[c] * gain[c];
            dx[r * d + c] = ir * (dxhat - xhat * m);
        }
    }
    dx
}

fn embed<T: Scalar>(params: &Parameters<T>, tokens: &[TokenId]) -> Vec<T> {
    let d = params.config.d_model;
    let mut x = vec![T::zero(); tokens.len() * d];
    for (i, &t) in tokens.iter().enumerate() {
        let te = &params.tok_emb[t as usize * d..(t as usize + 1) * d];
        let pe = &params.pos_emb[i * d..(i + 1) * d];
        for ((o, &a), &b) in x[i * d..(i + 1) * d].iter_mut().zip(te).zip(pe) {
            *o = a + b;
        }
    }
    x
}

/// Causal multi-head attention over `[t, d]` projections. Returns
/// (probabilities `[h, t, t]`, context `[t, d]`). Ablated heads keep their
/// probabilities but contribute a zero context vector.
pub(crate) fn causal_attention<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    t: usize,
    n_heads: usize,
    head_dim: usize,
    layer: usize,
    ablation: &Ablation,
) -> (Vec<T>, Vec<T>) {
    let d = n_heads * head_dim;
    let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());
    let mut probs = vec![T::zero(); n_heads * t * t];
    let mut ctx = vec![T::zero(); t * d];
    for h in 0..n_heads {
        let off = h * head_dim;
        let ablated = ablation.is_ablated(layer, h);
        for i in 0..t {
            let qi = &q[i * d + off..i * d + off + head_dim];
            let row = &mut probs[(h * t + i) * t..(h * t + i) * t + t];
            let mut max = T::neg_infinity();
            for j in 0..=i {
                let s = dot(qi, &k[j * d + off..j * d + off + head_dim]) * scale;
                row[j] = s;
                if s > max {
                    max = s;
                }
            }
            let mut sum = T::zero();
            for p in row.iter_mut().take(i + 1) {
                *p = (*p - max).exp();
                sum = sum + *p;
            }
            for p in row.iter_mut().take(i + 1) {
                *p = *p / sum;
            }
            if ablated {
                continue;
            }
            let ci = &mut ctx[i * d + off..i * d + off + head_dim];
            for j in 0..=i {
                let p = row[j];
                let vj = &v[j * d + off..j * d + off + head_dim];
                for (c, &vv) in ci.iter_mut().zip(vj) {
                    *c = *c + p * vv;
                }
            }
        }
    }
    (probs, ctx)
}

pub(crate) fn run<T: Scalar>(params: &Parameters<T>, tokens: &[TokenId], ablation: &Ablation) -> Result<Cache<T>> {
    let cfg = &params.config;
    cfg.check_tokens(tokens)?;
    let t = tokens.len();
    let d = cfg.d_model;
    let f = cfg.d_ff;
    let mut x = embed(params, tokens);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for (l, lp) in params.layers.iter().enumerate() {
        let (h1, inv_rms1) = rms_norm(&x, &lp.attn_norm, d);
        let q = matmul(&h1, &lp.wq, t, d, d);
        let k = matmul(&h1, &lp.wk, t, d, d);
        let v = matmul(&h1, &lp.wv, t, d, d);
        let (probs, ctx) = causal_attention(&q, &k, &v, t, cfg.n_heads, cfg.head_dim(), l, ablation);
        let attn_out = matmul(&ctx, &lp.wo, t, d, d);
        let x_mid: Vec<T> = x.iter().zip(&attn_out).map(|(&a, &b)| a + b).collect();
        let (h2, inv_rms2) = rms_norm(&x_mid, &lp.ffn_norm, d);
        let pre_act = matmul(&h2, &lp.w_in, t, d, f);
        let act: Vec<T> = pre_act.iter().map(|&u| gelu(u)).collect();
        let mut x_out = x_mid.clone();
        matmul_acc(&mut x_out, &act, &lp.w_out, t, f, d);
        layers.push(LayerCache {
            x_in: std::mem::replace(&mut x, x_out),
            inv_rms1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            attn_out,
            x_mid,
            inv_rms2,
            h2,
            pre_act,
            act,
        });
    }
    let (h_final, inv_rms_f) = rms_norm(&x, &params.final_norm, d);
    let logits = matmul(&h_final, &params.unembed, t, d, cfg.vocab_size);
    Ok(Cache {
        layers,
        x_final: x,
        inv_rms_f,
        h_final,
        logits,
    })
}

fn attention_record<T: Scalar>(params: &Parameters<T>, cache: &Cache<T>, t: usize) -> AttentionRecord {
    let cfg = &params.config;
    let mut rec = AttentionRecord::zeros(cfg.n_layers, cfg.n_heads, t);
    for (l, lc) in cache.layers.iter().enumerate() {
        for h in 0..cfg.n_heads {
            let src = &lc.probs[h * t * t..(h + 1) * t * t];
            for (dst, &p) in rec.matrix_mut(l, h).iter_mut().zip(src) {
                *dst = p.to_f64();
            }
        }
    }
    rec
}

/// Full-sequence forward pass.
pub fn forward<T: Scalar>(
    params: &Parameters<T>,
    tokens: &[TokenId],
    record_attention: bool,
    ablation: &Ablation,
) -> Result<Forward<T>> {
    let cache = run(params, tokens, ablation)?;
    let attention = record_attention.then(|| attention_record(params, &cache, tokens.len()));
    Ok(Forward {
        seq_len: tokens.len(),
        vocab_size: params.config.vocab_size,
        logits: cache.logits,
        attention,
    })
}

/// Forward pass that also returns per-layer attention sublayer outputs.
pub fn forward_trace<T: Scalar>(params: &Parameters<T>, tokens: &[TokenId], ablation: &Ablation) -> Result<ForwardTrace<T>> {
    let cache = run(params, tokens, ablation)?;
    Ok(ForwardTrace {
        attn_out: cache.layers.iter().map(|l| l.attn_out.clone()).collect(),
        head_context: cache.layers.iter().map(|l| l.ctx.clone()).collect(),
        logits: cache.logits,
    })
}

/// Logits of the same network with every attention sublayer removed: only
/// the feed-forward blocks and the residual path remain.
pub fn attention_free_logits<T: Scalar>(params: &Parameters<T>, tokens: &[TokenId]) -> Result<Vec<T>> {
    let cfg = &params.config;
    cfg.check_tokens(tokens)?;
    let t = tokens.len();
    let (d, f) = (cfg.d_model, cfg.d_ff);
    let mut x = embed(params, tokens);
    for lp in &params.layers {
        let (h2, _) = rms_norm(&x, &lp.ffn_norm, d);
        let act: Vec<T> = matmul(&h2, &lp.w_in, t, d, f).into_iter().map(gelu).collect();
        matmul_acc(&mut x, &act, &lp.w_out, t, f, d);
    }
    let (hf, _) = rms_norm(&x, &params.final_norm, d);
    Ok(matmul(&hf, &params.unembed, t, d, cfg.vocab_size))
}

/// Sum of next-token cross-entropy over masked positions of one sequence, with
/// gradients scaled by `scale` accumulated into `grads`.
///
/// `loss_mask[i]` selects the prediction of `tokens[i + 1]` made at position `i`.
pub(crate) fn accumulate<T: Scalar>(
    params: &Parameters<T>,
    tokens: &[TokenId],
    loss_mask: &[bool],
    scale: T,
    grads: &mut Parameters<T>,
    ablation: &Ablation,
) -> Result<f64> {
    let expected = tokens.len().saturating_sub(1);
    if loss_mask.len() != expected {
        return Err(Error::LossMaskLength {
            got: loss_mask.len(),
            expected,
        });
    }
    let cache = run(params, tokens, ablation)?;
    let cfg = &params.config;
    let t = tokens.len();
    let (d, f, vsz) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let (n_heads, hd) = (cfg.n_heads, cfg.head_dim());

    let mut loss = 0.0f64;
    let mut dlogits = vec![T::zero(); t * vsz];
    for i in 0..expected {
        if !loss_mask[i] {
            continue;
        }
        let row = &cache.logits[i * vsz..(i + 1) * vsz];
        let target = tokens[i + 1] as usize;
        let max = row.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += (lse - row[target]).to_f64();
        let drow = &mut dlogits[i * vsz..(i + 1) * vsz];
        for (dv, &v) in drow.iter_mut().zip(row) {
            *dv = (v - lse).exp() * scale;
        }
        drow[target] = drow[target] - scale;
    }

    // unembedding and final norm
    matmul_at_b_acc(&mut grads.unembed, &cache.h_final, &dlogits, t, d, vsz);
    let dh = matmul_a_bt(&dlogits, &params.unembed, t, vsz, d);
    let mut dx = rms_norm_backward(&cache.x_final, &cache.inv_rms_f, &params.final_norm, &dh, &mut grads.final_norm, d);

    for (l, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut grads.layers[l];
        // feed-forward
        matmul_at_b_acc(&mut lg.w_out, &lc.act, &dx, t, f, d);
        let dact = matmul_a_bt(&dx, &lp.w_out, t, d, f);
        let dpre: Vec<T> = dact.iter().zip(&lc.pre_act).map(|(&g, &u)| g * gelu_grad(u)).collect();
        matmul_at_b_acc(&mut lg.w_in, &lc.h2, &dpre, t, d, f);
        let dh2 = matmul_a_bt(&dpre, &lp.w_in, t, f, d);
        let dn2 = rms_norm_backward(&lc.x_mid, &lc.inv_rms2, &lp.ffn_norm, &dh2, &mut lg.ffn_norm, d);
        for (a, b) in dx.iter_mut().zip(&dn2) {
            *a = *a + *b;
        }

        // attention output projection
        matmul_at_b_acc(&mut lg.wo, &lc.ctx, &dx, t, d, d);
        let dctx = matmul_a_bt(&dx, &lp.wo, t, d, d);

        let mut dq = vec![T::zero(); t * d];
        let mut dk = vec![T::zero(); t * d];
        let mut dv = vec![T::zero(); t * d];
        let sc = T::from_f64(1.0 / (hd as f64).sqrt());
        let mut dp = vec![T::zero(); t];
        for h in 0..n_heads {
            if ablation.is_ablated(l, h) {
                continue;
            }
            let off = h * hd;
            for i in 0..t {
                let probs = &lc.probs[(h * t + i) * t..(h * t + i) * t + t];
                let dci = &dctx[i * d + off..i * d + off + hd];
                let mut rowdot = T::zero();
                for j in 0..=i {
                    let vj = &lc.v[j * d + off..j * d + off + hd];
                    dp[j] = dot(dci, vj);
                    rowdot = rowdot + dp[j] * probs[j];
                    let dvj = &mut dv[j * d + off..j * d + off + hd];
                    for (a, &c) in dvj.iter_mut().zip(dci) {
                        *a = *a + probs[j] * c;
                    }
                }
                let qi_off = i * d + off;
                for j in 0..=i {
                    let ds = probs[j] * (dp[j] - rowdot) * sc;
                    if ds == T::zero() {
                        continue;
                    }
                    let kj_off = j * d + off;
                    for c in 0..hd {
                        dq[qi_off + c] = dq[qi_off + c] + ds * lc.k[kj_off + c];
                        dk[kj_off + c] = dk[kj_off + c] + ds * lc.q[qi_off + c];
                    }
                }
            }
        }
        matmul_at_b_acc(&mut lg.wq, &lc.h1, &dq, t, d, d);
        matmul_at_b_acc(&mut lg.wk, &lc.h1, &dk, t, d, d);
        matmul_at_b_acc(&mut lg.wv, &lc.h1, &dv, t, d, d);
        let mut dh1 = matmul_a_bt(&dq, &lp.wq, t, d, d);
        for (a, b) in dh1.iter_mut().zip(matmul_a_bt(&dk, &lp.wk, t, d, d)) {
            *a = *a + b;
        }
        for (a, b) in dh1.iter_mut().zip(matmul_a_bt(&dv, &lp.wv, t, d, d)) {
            *a = *a + b;
        }
        let dn1 = rms_norm_backward(&lc.x_in, &lc.inv_rms1, &lp.attn_norm, &dh1, &mut lg.attn_norm, d);
        for (a, b) in dx.iter_mut().zip(&dn1) {
            *a = *a + *b;
        }
    }

    for (i, &tok) in tokens.iter().enumerate() {
        let dxi = &dx[i * d..(i + 1) * d];
        let te = &mut grads.tok_emb[tok as usize * d..(tok as usize + 1) * d];
        for (a, &b) in te.iter_mut().zip(dxi) {
            *a = *a + b;
        }
        let pe = &mut grads.pos_emb[i * d..(i + 1) * d];
        for (a, &b) in pe.iter_mut().zip(dxi) {
            *a = *a + b;
        }
    }
    Ok(loss)
}

/// Mean next-token cross-entropy over masked positions and its exact gradient.
///
/// `loss_mask` has one flag per prediction (length `tokens.len() - 1`).
pub fn loss_and_grads<T: Scalar>(
    params: &Parameters<T>,
    tokens: &[TokenId],
    loss_mask: &[bool],
) -> Result<(f64, Parameters<T>)> {
    let count = loss_mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyLossMask);
    }
    let mut grads = Parameters::zeros(&params.config);
    let scale = T::one() / T::from_f64(count as f64);
    let sum = accumulate(params, tokens, loss_mask, scale, &mut grads, &Ablation::none(&params.config))?;
    Ok((sum / count as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 12,
            max_context: 16,
            vocab_size: 9,
            seed: 11,
        }
    }

    #[test]
    fn empty_input_rejected() {
        let p = Parameters::<f32>::init(&cfg()).unwrap();
        let err = forward(&p, &[], false, &Ablation::none(&p.config)).unwrap_err();
        assert!(matches!(err, Error::EmptySequence));
    }

    #[test]
    fn too_long_and_out_of_range_rejected() {
        let p = Parameters::<f32>::init(&cfg()).unwrap();
        let none = Ablation::none(&p.config);
        let long = vec![1; 17];
        assert!(matches!(forward(&p, &long, false, &none), Err(Error::SequenceTooLong { .. })));
        assert!(matches!(forward(&p, &[1, 9], false, &none), Err(Error::TokenOutOfRange { id: 9, .. })));
    }

    #[test]
    fn single_token_attention_is_one() {
        let p = Parameters::<f32>::init(&cfg()).unwrap();
        let out = forward(&p, &[4], true, &Ablation::none(&p.config)).unwrap();
        assert_eq!(out.logits.len(), 9);
        let att = out.attention.unwrap();
        for l in 0..2 {
            for h in 0..2 {
                assert_eq!(att.matrix(l, h), &[1.0]);
            }
        }
    }

    #[test]
    fn uniform_logits_give_log_vocab_loss() {
        let mut p = Parameters::<f64>::init(&cfg()).unwrap();
        p.unembed.iter_mut().for_each(|w| *w = 0.0);
        let tokens = [1, 2, 3, 4, 5];
        let (loss, _) = loss_and_grads(&p, &tokens, &[true; 4]).unwrap();
        assert!((loss - (9f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn all_masked_out_is_error() {
        let p = Parameters::<f64>::init(&cfg()).unwrap();
        assert!(matches!(
            loss_and_grads(&p, &[1, 2, 3], &[false, false]),
            Err(Error::EmptyLossMask)
        ));
        assert!(matches!(
            loss_and_grads(&p, &[1, 2, 3], &[true]),
            Err(Error::LossMaskLength { .. })
        ));
    }

    #[test]
    fn duplicated_positions_leave_mean_unchanged() {
        // the same token twice at the same context: the second copy of the
        // sequence [a, b, a, b] predicts b from a again, but context differs.
        // Instead compare masking a single position against masking it in a
        // sequence where the masked predictions are identical.
        let p = Parameters::<f64>::init(&cfg()).unwrap();
        let tokens = [3, 5, 7, 2];
        let (single, _) = loss_and_grads(&p, &tokens, &[false, true, false]).unwrap();
        let mut grads = Parameters::zeros(&p.config);
        let none = Ablation::none(&p.config);
        let sum1 = accumulate(&p, &tokens, &[false, true, false], 0.5, &mut grads, &none).unwrap();
        let sum2 = accumulate(&p, &tokens, &[false, true, false], 0.5, &mut grads, &none).unwrap();
        assert!(((sum1 + sum2) / 2.0 - single).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
