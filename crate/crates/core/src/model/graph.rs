//! The architecture expressed as tape operations. Used for training, gradient
//! checks and full-sequence inference.

use std::collections::HashMap;

use super::config::{Activation, FfnKind, FrontendKind, ModelConfig};
use super::params::{dec, enc, ModelParams};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// Parameter leaves placed on a tape, addressable by name.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: HashMap<String, Var>,
    order: Vec<Var>,
}

impl ParamVars {
    /// Borrows every parameter onto `tape`; `trainable` leaves receive gradients.
    pub fn load<'a, S: Scalar>(tape: &mut Tape<'a, S>, params: &'a ModelParams<S>, trainable: bool) -> Self {
        let mut vars = HashMap::with_capacity(params.len());
        let mut order = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            let v = tape.leaf_ref(t, trainable);
            vars.insert(name.to_string(), v);
            order.push(v);
        }
        ParamVars { vars, order }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Index(format!("no parameter named '{name}'")))
    }

    /// Leaves in parameter order.
    pub fn ordered(&self) -> &[Var] {
        &self.order
    }
}

/// Rescales a clip to unit RMS; silent clips pass through unchanged.
pub fn normalize_level<S: Scalar>(audio: &[S]) -> Vec<S> {
    let ms = audio.iter().map(|&x| x.as_f64() * x.as_f64()).sum::<f64>() / audio.len().max(1) as f64;
    if ms > 0.0 {
        let inv = S::lit(1.0 / ms.sqrt());
        audio.iter().map(|&x| x * inv).collect()
    } else {
        audio.to_vec()
    }
}

fn activate<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Tanh => tape.tanh(x),
        Activation::Gelu => tape.gelu(x),
        Activation::Identity => Ok(x),
    }
}

/// Raw PCM `[samples]` to features `[frames, dim]`.
pub fn stem<S: Scalar>(tape: &mut Tape<'_, S>, pv: &ParamVars, cfg: &ModelConfig, audio: &[S]) -> Result<Var> {
    if cfg.frontend != FrontendKind::MoonshineStem {
        return Err(Error::Config(format!("{} has no forward pass", cfg.frontend.name())));
    }
    let min = cfg.stem.receptive_field();
    if audio.len() < min {
        return Err(Error::InputTooShort {
            min_samples: min,
            got: audio.len(),
        });
    }
    let samples = if cfg.normalize_input { normalize_level(audio) } else { audio.to_vec() };
    let mut x = tape.leaf(Tensor::new([audio.len(), 1], samples)?);
    for (i, layer) in cfg.stem.layers.iter().enumerate() {
        let w = pv.get(&format!("stem.conv{}.weight", i + 1))?;
        x = tape.conv1d(x, w, layer.stride)?;
        if layer.bias {
            x = tape.add_row(x, pv.get(&format!("stem.conv{}.bias", i + 1))?)?;
        }
        x = activate(tape, x, layer.activation)?;
    }
    Ok(x)
}

fn positions(n: usize) -> Vec<usize> {
    (0..n).collect()
}

struct AttnIn {
    q: Var,
    kv: Var,
    rope: bool,
    causal: bool,
}

fn attention_block<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &ParamVars,
    cfg: &ModelConfig,
    prefix: &str,
    input: AttnIn,
) -> Result<Var> {
    let mut q = tape.matmul(input.q, pv.get(&format!("{prefix}.q"))?)?;
    let mut k = tape.matmul(input.kv, pv.get(&format!("{prefix}.k"))?)?;
    let v = tape.matmul(input.kv, pv.get(&format!("{prefix}.v"))?)?;
    if input.rope {
        let lq = tape.value(q).shape()[0];
        let lk = tape.value(k).shape()[0];
        q = tape.rope(q, cfg.heads, &positions(lq), cfg.rope_theta)?;
        k = tape.rope(k, cfg.heads, &positions(lk), cfg.rope_theta)?;
    }
    let o = tape.attention(q, k, v, cfg.heads, input.causal)?;
    tape.matmul(o, pv.get(&format!("{prefix}.o"))?)
}

fn ffn_block<S: Scalar>(tape: &mut Tape<'_, S>, pv: &ParamVars, prefix: &str, kind: FfnKind, x: Var) -> Result<Var> {
    match kind {
        FfnKind::Gelu => {
            let h = tape.matmul(x, pv.get(&format!("{prefix}.up.weight"))?)?;
            let h = tape.add_row(h, pv.get(&format!("{prefix}.up.bias"))?)?;
            let h = tape.gelu(h)?;
            let y = tape.matmul(h, pv.get(&format!("{prefix}.down.weight"))?)?;
            tape.add_row(y, pv.get(&format!("{prefix}.down.bias"))?)
        }
        FfnKind::Swiglu => {
            let up = tape.matmul(x, pv.get(&format!("{prefix}.up.weight"))?)?;
            let gate = tape.matmul(x, pv.get(&format!("{prefix}.gate.weight"))?)?;
            let gate = tape.silu(gate)?;
            let h = tape.mul(up, gate)?;
            tape.matmul(h, pv.get(&format!("{prefix}.down.weight"))?)
        }
    }
}

/// Bidirectional pre-norm encoder; output length equals input length.
pub fn encoder<S: Scalar>(tape: &mut Tape<'_, S>, pv: &ParamVars, cfg: &ModelConfig, features: Var) -> Result<Var> {
    tape.set_norm_eps(cfg.norm_eps);
    let mut h = features;
    for i in 0..cfg.enc_layers {
        let a = tape.rms_norm(h, pv.get(&enc(i, "attn_norm.gain"))?)?;
        let input = AttnIn {
            q: a,
            kv: a,
            rope: true,
            causal: false,
        };
        let o = attention_block(tape, pv, cfg, &enc(i, "attn"), input)?;
        h = tape.add(h, o)?;
        let f = tape.rms_norm(h, pv.get(&enc(i, "ffn_norm.gain"))?)?;
        let f = ffn_block(tape, pv, &enc(i, "ffn"), cfg.encoder_ffn, f)?;
        h = tape.add(h, f)?;
    }
    tape.rms_norm(h, pv.get("encoder.final_norm.gain")?)
}

/// Causal decoder over `tokens` attending to `memory`; returns `[t, vocab]` logits.
pub fn decoder<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &ParamVars,
    cfg: &ModelConfig,
    tokens: &[u32],
    memory: Var,
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Argument("decoder needs at least one token".into()));
    }
    tape.set_norm_eps(cfg.norm_eps);
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let embed = pv.get("decoder.embed")?;
    let mut h = tape.embedding(embed, &ids)?;
    for i in 0..cfg.dec_layers {
        let a = tape.rms_norm(h, pv.get(&dec(i, "self_norm.gain"))?)?;
        let self_in = AttnIn {
            q: a,
            kv: a,
            rope: true,
            causal: true,
        };
        let o = attention_block(tape, pv, cfg, &dec(i, "self_attn"), self_in)?;
        h = tape.add(h, o)?;
        let c = tape.rms_norm(h, pv.get(&dec(i, "cross_norm.gain"))?)?;
        let cross_in = AttnIn {
            q: c,
            kv: memory,
            rope: false,
            causal: false,
        };
        let o = attention_block(tape, pv, cfg, &dec(i, "cross_attn"), cross_in)?;
        h = tape.add(h, o)?;
        let f = tape.rms_norm(h, pv.get(&dec(i, "ffn_norm.gain"))?)?;
        let f = ffn_block(tape, pv, &dec(i, "ffn"), cfg.decoder_ffn, f)?;
        h = tape.add(h, f)?;
    }
    let h = tape.rms_norm(h, pv.get("decoder.final_norm.gain")?)?;
    let out = if cfg.tie_embeddings { embed } else { pv.get("decoder.output")? };
    tape.matmul_bt(h, out)
}

/// Teacher-forced forward: returns `(logits, mean cross-entropy)`.
pub fn teacher_forced_loss<S: Scalar>(
    tape: &mut Tape<'_, S>,
    pv: &ParamVars,
    cfg: &ModelConfig,
    audio: &[S],
    inputs: &[u32],
    targets: &[u32],
) -> Result<(Var, Var)> {
    let feats = stem(tape, pv, cfg, audio)?;
    let memory = encoder(tape, pv, cfg, feats)?;
    let logits = decoder(tape, pv, cfg, inputs, memory)?;
    let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    let loss = tape.cross_entropy(logits, &targets)?;
    Ok((logits, loss))
}
