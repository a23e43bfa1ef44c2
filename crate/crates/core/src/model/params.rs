use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm: Vec<T>,
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
    pub wo: Vec<T>,
    pub ffn_norm: Vec<T>,
    pub w_in: Vec<T>,
    pub w_out: Vec<T>,
}

/// All trainable tensors. Matrices are row-major `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub config: ModelConfig,
    pub tok_emb: Vec<T>,
    pub pos_emb: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm: Vec<T>,
    pub unembed: Vec<T>,
}

const EMB_STD: f64 = 0.02;

impl<T: Scalar> Parameters<T> {
    /// Seeded random initialization from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_model;
        let mut normal = |n: usize, std: f64| -> Vec<T> {
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| T::from_f64(dist.sample(&mut rng))).collect()
        };
        // fan-in scaled so that activations stay O(1) at small widths
        let proj_std = 1.0 / (d as f64).sqrt();
        let resid_std = proj_std / (2.0 * config.n_layers as f64).sqrt();
        // small embeddings keep token and position signals on one scale after the first norm
        let tok_emb = normal(config.vocab_size * d, EMB_STD);
        let pos_emb = normal(config.max_context * d, EMB_STD);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                attn_norm: vec![T::one(); d],
                wq: normal(d * d, proj_std),
                wk: normal(d * d, proj_std),
                wv: normal(d * d, proj_std),
                wo: normal(d * d, resid_std),
                ffn_norm: vec![T::one(); d],
                w_in: normal(d * config.d_ff, proj_std),
                w_out: normal(config.d_ff * d, resid_std / (config.d_ff as f64 / d as f64).sqrt()),
            });
        }
        let unembed = normal(d * config.vocab_size, proj_std);
        Ok(Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            final_norm: vec![T::one(); d],
            unembed,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let z = |n: usize| vec![T::zero(); n];
        Self {
            config: config.clone(),
            tok_emb: z(config.vocab_size * d),
            pos_emb: z(config.max_context * d),
            layers: (0..config.n_layers)
                .map(|_| LayerParams {
                    attn_norm: z(d),
                    wq: z(d * d),
                    wk: z(d * d),
                    wv: z(d * d),
                    wo: z(d * d),
                    ffn_norm: z(d),
                    w_in: z(d * config.d_ff),
                    w_out: z(config.d_ff * d),
                })
                .collect(),
            final_norm: z(d),
            unembed: z(d * config.vocab_size),
        }
    }

    /// Tensor shapes in canonical order, matching [`Parameters::tensors`].
    pub fn shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let d = config.d_model;
        let mut out = vec![
            ("tok_emb".to_string(), vec![config.vocab_size, d]),
            ("pos_emb".to_string(), vec![config.max_context, d]),
        ];
        for l in 0..config.n_layers {
            out.push((format!("layers.{l}.attn_norm"), vec![d]));
            out.push((format!("layers.{l}.wq"), vec![d, d]));
            out.push((format!("layers.{l}.wk"), vec![d, d]));
            out.push((format!("layers.{l}.wv"), vec![d, d]));
            out.push((format!("layers.{l}.wo"), vec![d, d]));
            out.push((format!("layers.{l}.ffn_norm"), vec![d]));
            out.push((format!("layers.{l}.w_in"), vec![d, config.d_ff]));
            out.push((format!("layers.{l}.w_out"), vec![config.d_ff, d]));
        }
        out.push(("final_norm".to_string(), vec![d]));
        out.push(("unembed".to_string(), vec![d, config.vocab_size]));
        out
    }

    /// Flat views of every tensor in canonical order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend([
                l.attn_norm.as_slice(),
                &l.wq,
                &l.wk,
                &l.wv,
                &l.wo,
                &l.ffn_norm,
                &l.w_in,
                &l.w_out,
            ]);
        }
        out.push(&self.final_norm);
        out.push(&self.unembed);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend([
                &mut l.attn_norm,
                &mut l.wq,
                &mut l.wk,
                &mut l.wv,
                &mut l.wo,
                &mut l.ffn_norm,
                &mut l.w_in,
                &mut l.w_out,
            ]);
        }
        out.push(&mut self.final_norm);
        out.push(&mut self.unembed);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        let shapes = Self::shapes(&self.config);
        for ((name, _), t) in shapes.iter().zip(self.tensors()) {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        Parameters {
            config: self.config.clone(),
            tok_emb: conv(&self.tok_emb),
            pos_emb: conv(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: conv(&l.attn_norm),
                    wq: conv(&l.wq),
                    wk: conv(&l.wk),
                    wv: conv(&l.wv),
                    wo: conv(&l.wo),
                    ffn_norm: conv(&l.ffn_norm),
                    w_in: conv(&l.w_in),
                    w_out: conv(&l.w_out),
                })
                .collect(),
            final_norm: conv(&self.final_norm),
            unembed: conv(&self.unembed),
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Parameters<T>, scale: T) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + scale * s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|&x| {
                let v = Scalar::to_f64(x);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }
}
