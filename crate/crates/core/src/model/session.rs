//! Incremental decoding with cached keys and values.

use super::config::{FfnKind, ModelConfig};
use super::params::{dec, ModelParams};
use crate::numerics::kernels::{self, AttnGeom, RopeTable};
use crate::numerics::{Scalar, Tensor};
use crate::{Error, Result};

struct LayerCache<S> {
    self_k: Vec<S>,
    self_v: Vec<S>,
    cross_k: Vec<S>,
    cross_v: Vec<S>,
}

/// Per-utterance decoder state. Feeding tokens one at a time yields the same
/// logits rows as a full causal pass over the prefix.
pub struct DecoderSession<'m, S: Scalar> {
    cfg: &'m ModelConfig,
    params: &'m ModelParams<S>,
    layers: Vec<LayerCache<S>>,
    memory_len: usize,
    position: usize,
}

fn project<S: Scalar>(x: &[S], w: &Tensor<S>) -> Vec<S> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let m = x.len() / k;
    let mut out = vec![S::zero(); m * n];
    kernels::gemm_acc(x, w.data(), &mut out, m, k, n);
    out
}

impl<'m, S: Scalar> DecoderSession<'m, S> {
    pub fn new(cfg: &'m ModelConfig, params: &'m ModelParams<S>, memory: &Tensor<S>) -> Result<Self> {
        let (frames, width) = memory.dims2("decoder session")?;
        if width != cfg.dim || frames == 0 {
            return Err(Error::shape("decoder session", format!("memory {:?} for dim {}", memory.shape(), cfg.dim)));
        }
        let mut layers = Vec::with_capacity(cfg.dec_layers);
        for i in 0..cfg.dec_layers {
            layers.push(LayerCache {
                self_k: Vec::new(),
                self_v: Vec::new(),
                cross_k: project(memory.data(), params.get(&dec(i, "cross_attn.k"))?),
                cross_v: project(memory.data(), params.get(&dec(i, "cross_attn.v"))?),
            });
        }
        Ok(DecoderSession {
            cfg,
            params,
            layers,
            memory_len: frames,
            position: 0,
        })
    }

    pub fn position(&self) -> usize {
        self.position
    }

    fn norm(&self, x: &[S], name: &str) -> Result<Vec<S>> {
        let g = self.params.get(name)?;
        Ok(kernels::rms_norm(x, g.data(), self.cfg.dim, S::lit(self.cfg.norm_eps)).0)
    }

    fn w(&self, name: String) -> Result<&'m Tensor<S>> {
        self.params.get(&name)
    }

    /// Consumes one token and returns the next-token logits.
    pub fn step(&mut self, token: u32) -> Result<Vec<S>> {
        let cfg = self.cfg;
        let d = cfg.dim;
        let embed = self.params.get("decoder.embed")?;
        if token as usize >= cfg.vocab_size {
            return Err(Error::Index(format!("token id {token} >= vocab size {}", cfg.vocab_size)));
        }
        let mut h = embed.row(token as usize).to_vec();
        let pos = self.position;
        let rope = RopeTable::<S>::new(&[pos], cfg.head_dim(), cfg.rope_theta);
        for i in 0..cfg.dec_layers {
            let a = self.norm(&h, &dec(i, "self_norm.gain"))?;
            let mut q = project(&a, self.w(dec(i, "self_attn.q"))?);
            let mut k = project(&a, self.w(dec(i, "self_attn.k"))?);
            let v = project(&a, self.w(dec(i, "self_attn.v"))?);
            rope.rotate(&mut q, cfg.heads, false);
            rope.rotate(&mut k, cfg.heads, false);
            let cache = &mut self.layers[i];
            cache.self_k.extend_from_slice(&k);
            cache.self_v.extend_from_slice(&v);
            let geom = AttnGeom {
                lq: 1,
                lk: pos + 1,
                dim: d,
                heads: cfg.heads,
                causal: false,
            };
            let (o, _) = kernels::attention_forward(&q, &cache.self_k, &cache.self_v, geom);
            let o = project(&o, self.w(dec(i, "self_attn.o"))?);
            kernels::axpy(S::one(), &o, &mut h);

            let c = self.norm(&h, &dec(i, "cross_norm.gain"))?;
            let q = project(&c, self.w(dec(i, "cross_attn.q"))?);
            let geom = AttnGeom {
                lq: 1,
                lk: self.memory_len,
                dim: d,
                heads: cfg.heads,
                causal: false,
            };
            let cache = &self.layers[i];
            let (o, _) = kernels::attention_forward(&q, &cache.cross_k, &cache.cross_v, geom);
            let o = project(&o, self.w(dec(i, "cross_attn.o"))?);
            kernels::axpy(S::one(), &o, &mut h);

            let f = self.norm(&h, &dec(i, "ffn_norm.gain"))?;
            let y = match cfg.decoder_ffn {
                FfnKind::Gelu => {
                    let mut u = project(&f, self.w(dec(i, "ffn.up.weight"))?);
                    let b = self.w(dec(i, "ffn.up.bias"))?;
                    u.iter_mut().zip(b.data()).for_each(|(x, &bi)| *x = kernels::gelu(*x + bi));
                    let mut y = project(&u, self.w(dec(i, "ffn.down.weight"))?);
                    kernels::axpy(S::one(), self.w(dec(i, "ffn.down.bias"))?.data(), &mut y);
                    y
                }
                FfnKind::Swiglu => {
                    let mut u = project(&f, self.w(dec(i, "ffn.up.weight"))?);
                    let g = project(&f, self.w(dec(i, "ffn.gate.weight"))?);
                    u.iter_mut().zip(&g).for_each(|(x, &gi)| *x *= kernels::silu(gi));
                    project(&u, self.w(dec(i, "ffn.down.weight"))?)
                }
            };
            kernels::axpy(S::one(), &y, &mut h);
        }
        let h = self.norm(&h, "decoder.final_norm.gain")?;
        let out = if cfg.tie_embeddings { embed } else { self.params.get("decoder.output")? };
        let mut logits = vec![S::zero(); cfg.vocab_size];
        kernels::gemm_bt_acc(&h, out.data(), &mut logits, 1, d, cfg.vocab_size);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoder step logits".into()));
        }
        self.position += 1;
        Ok(logits)
    }
}
