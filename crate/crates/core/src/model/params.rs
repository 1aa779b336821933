//! Learnable tensors of a model and their naming scheme.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{FfnKind, ModelConfig};
use super::frontend;
use crate::numerics::checkpoint::{self, Checkpoint};
use crate::numerics::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal(f64),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn fan_in_normal(fan_in: usize) -> Init {
    Init::Normal(1.0 / (fan_in as f64).sqrt())
}

pub fn enc(layer: usize, suffix: &str) -> String {
    format!("encoder.layers.{layer}.{suffix}")
}

pub fn dec(layer: usize, suffix: &str) -> String {
    format!("decoder.layers.{layer}.{suffix}")
}

fn attention_specs(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    for p in ["q", "k", "v", "o"] {
        out.push(ParamSpec {
            name: format!("{prefix}.{p}"),
            shape: vec![d, d],
            init: fan_in_normal(d),
        });
    }
}

fn norm_spec(name: String, d: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: vec![d],
        init: Init::Ones,
    }
}

fn ffn_specs(out: &mut Vec<ParamSpec>, prefix: &str, kind: FfnKind, d: usize, h: usize) {
    let w = |name: &str, shape: Vec<usize>, fan: usize| ParamSpec {
        name: format!("{prefix}.{name}"),
        shape,
        init: fan_in_normal(fan),
    };
    let b = |name: &str, n: usize| ParamSpec {
        name: format!("{prefix}.{name}"),
        shape: vec![n],
        init: Init::Zeros,
    };
    match kind {
        FfnKind::Gelu => {
            out.push(w("up.weight", vec![d, h], d));
            out.push(b("up.bias", h));
            out.push(w("down.weight", vec![h, d], h));
            out.push(b("down.bias", d));
        }
        FfnKind::Swiglu => {
            out.push(w("up.weight", vec![d, h], d));
            out.push(w("gate.weight", vec![d, h], d));
            out.push(w("down.weight", vec![h, d], h));
        }
    }
}

/// Every learnable tensor implied by `config`, in a fixed order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.dim;
    let h = config.ffn_hidden();
    let mut out: Vec<ParamSpec> = frontend::for_kind(config.frontend)
        .param_shapes(config)
        .into_iter()
        .map(|(name, shape)| {
            let init = if name.ends_with(".bias") {
                Init::Zeros
            } else {
                fan_in_normal(shape[..shape.len() - 1].iter().product())
            };
            ParamSpec { name, shape, init }
        })
        .collect();
    for i in 0..config.enc_layers {
        out.push(norm_spec(enc(i, "attn_norm.gain"), d));
        attention_specs(&mut out, &enc(i, "attn"), d);
        out.push(norm_spec(enc(i, "ffn_norm.gain"), d));
        ffn_specs(&mut out, &enc(i, "ffn"), config.encoder_ffn, d, h);
    }
    out.push(norm_spec("encoder.final_norm.gain".into(), d));
    out.push(ParamSpec {
        name: "decoder.embed".into(),
        shape: vec![config.vocab_size, d],
        init: fan_in_normal(d),
    });
    for i in 0..config.dec_layers {
        out.push(norm_spec(dec(i, "self_norm.gain"), d));
        attention_specs(&mut out, &dec(i, "self_attn"), d);
        out.push(norm_spec(dec(i, "cross_norm.gain"), d));
        attention_specs(&mut out, &dec(i, "cross_attn"), d);
        out.push(norm_spec(dec(i, "ffn_norm.gain"), d));
        ffn_specs(&mut out, &dec(i, "ffn"), config.decoder_ffn, d, h);
    }
    out.push(norm_spec("decoder.final_norm.gain".into(), d));
    if !config.tie_embeddings {
        out.push(ParamSpec {
            name: "decoder.output".into(),
            shape: vec![config.vocab_size, d],
            init: fan_in_normal(d),
        });
    }
    out
}

/// Named parameter tensors in [`param_specs`] order.
#[derive(Debug, Clone)]
pub struct ModelParams<S: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ModelParams<S> {
    /// Deterministic initialisation from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for spec in param_specs(config) {
            let t = match spec.init {
                Init::Normal(std) => Tensor::randn(spec.shape, std, &mut rng),
                Init::Ones => Tensor::full(spec.shape, S::one()),
                Init::Zeros => Tensor::zeros(spec.shape),
            };
            names.push(spec.name);
            tensors.push(t);
        }
        Ok(Self::from_named(names, tensors))
    }

    fn from_named(names: Vec<String>, tensors: Vec<Tensor<S>>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ModelParams { names, tensors, index }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| Error::Index(format!("no parameter named '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.tensors[i]),
            None => Err(Error::Index(format!("no parameter named '{name}'"))),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.tensors.iter_mut().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> u64 {
        self.tensors.iter().map(|t| t.numel() as u64).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams::from_named(self.names.clone(), self.tensors.iter().map(Tensor::cast).collect())
    }

    pub fn to_checkpoint_bytes(&self, metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
        let named: Vec<(&str, &Tensor<S>)> = self.iter().collect();
        checkpoint::encode(&named, metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>, metadata: &BTreeMap<String, String>) -> Result<()> {
        let named: Vec<(&str, &Tensor<S>)> = self.iter().collect();
        checkpoint::save(path, &named, metadata)
    }

    /// Adopts checkpoint tensors after checking them against `config`.
    pub fn from_checkpoint(config: &ModelConfig, ckpt: Checkpoint<S>) -> Result<Self> {
        let specs = param_specs(config);
        if specs.len() != ckpt.tensors.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, config expects {}",
                ckpt.tensors.len(),
                specs.len()
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (spec, (name, t)) in specs.iter().zip(ckpt.tensors) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor '{name}' {:?} does not match '{}' {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self::from_named(names, tensors))
    }
}

/// Closed-form parameter count, independent of tensor instantiation.
pub fn count_params(config: &ModelConfig) -> u64 {
    let d = config.dim as u64;
    let h = config.ffn_hidden() as u64;
    let v = config.vocab_size as u64;
    let attention = 4 * d * d;
    let ffn = |kind: FfnKind| match kind {
        FfnKind::Gelu => 2 * d * h + h + d,
        FfnKind::Swiglu => 3 * d * h,
    };
    let encoder_layer = attention + ffn(config.encoder_ffn) + 2 * d;
    let decoder_layer = 2 * attention + ffn(config.decoder_ffn) + 3 * d;
    let embeddings = if config.tie_embeddings { v * d } else { 2 * v * d };
    frontend::for_kind(config.frontend).param_count(config)
        + config.enc_layers as u64 * encoder_layer
        + config.dec_layers as u64 * decoder_layer
        + 2 * d
        + embeddings
}
