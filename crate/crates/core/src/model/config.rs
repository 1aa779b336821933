//! Architecture hyperparameters, named presets and the key/value config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::conv_output_len;
use crate::{Error, Result};

/// Stem strides, first to last. Their product is the 384x time compression.
pub const STEM_STRIDES: [usize; 3] = [64, 3, 2];

/// Reserved special tokens appended after the base vocabulary.
pub const SPECIAL_TOKENS: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Gelu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    Gelu,
    Swiglu,
}

/// Which audio frontend feeds the encoder. Only the stem runs forward; the
/// mel frontend exists for parameter and MAC accounting of Whisper shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontendKind {
    MoonshineStem,
    WhisperMel,
}

impl FrontendKind {
    pub fn name(self) -> &'static str {
        match self {
            FrontendKind::MoonshineStem => "moonshine-stem",
            FrontendKind::WhisperMel => "whisper-mel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemLayer {
    pub kernel_width: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub layers: Vec<StemLayer>,
}

impl StemConfig {
    /// Kernels (127, 7, 3), channels (dim, 2·dim, dim), activations
    /// (tanh, GELU, GELU), bias-free first layer.
    pub fn for_dim(dim: usize) -> Self {
        let layer = |kernel_width, stride, out_channels, activation, bias| StemLayer {
            kernel_width,
            stride,
            out_channels,
            activation,
            bias,
        };
        StemConfig {
            layers: vec![
                layer(127, STEM_STRIDES[0], dim, Activation::Tanh, false),
                layer(7, STEM_STRIDES[1], 2 * dim, Activation::Gelu, true),
                layer(3, STEM_STRIDES[2], dim, Activation::Gelu, true),
            ],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.layers.len() != 3 {
            return Err(Error::Config(format!("stem needs exactly 3 layers, got {}", self.layers.len())));
        }
        let strides: Vec<usize> = self.layers.iter().map(|l| l.stride).collect();
        if strides != STEM_STRIDES {
            return Err(Error::Config(format!("stem strides must be {STEM_STRIDES:?}, got {strides:?}")));
        }
        if self.layers.iter().any(|l| l.kernel_width == 0 || l.out_channels == 0) {
            return Err(Error::Config("stem kernel widths and channels must be positive".into()));
        }
        if self.layers[2].out_channels != dim {
            return Err(Error::Config(format!(
                "last stem layer must output dim={dim} channels, got {}",
                self.layers[2].out_channels
            )));
        }
        Ok(())
    }

    pub fn compression(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    /// Smallest input that yields one output frame.
    pub fn receptive_field(&self) -> usize {
        let mut need = 1;
        for l in self.layers.iter().rev() {
            need = (need - 1) * l.stride + l.kernel_width;
        }
        need
    }

    /// Frame count after cascading the valid-convolution length formula.
    pub fn output_frames(&self, samples: usize) -> Option<usize> {
        self.layers
            .iter()
            .try_fold(samples, |t, l| conv_output_len(t, l.kernel_width, l.stride))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    /// FFN hidden width as a multiple of `dim` (both encoder and decoder).
    pub ffn_mult: usize,
    pub vocab_size: usize,
    pub rope_theta: f64,
    pub stem: StemConfig,
    pub frontend: FrontendKind,
    pub encoder_ffn: FfnKind,
    pub decoder_ffn: FfnKind,
    pub tie_embeddings: bool,
    /// Divide each clip by its RMS before the stem.
    pub normalize_input: bool,
    pub norm_eps: f64,
}

/// Names accepted by [`ModelConfig::preset`].
pub const PRESETS: &[&str] = &["tiny", "base", "whisper-tiny-shape", "whisper-base-shape", "toy-32", "toy-64"];

const MOONSHINE_VOCAB: usize = 32_000 + SPECIAL_TOKENS;
const WHISPER_EN_VOCAB: usize = 51_864;

impl ModelConfig {
    fn moonshine(name: &str, dim: usize, layers: usize, heads: usize, vocab_size: usize) -> Self {
        ModelConfig {
            name: name.to_string(),
            dim,
            enc_layers: layers,
            dec_layers: layers,
            heads,
            ffn_mult: 4,
            vocab_size,
            rope_theta: 10_000.0,
            stem: StemConfig::for_dim(dim),
            frontend: FrontendKind::MoonshineStem,
            encoder_ffn: FfnKind::Gelu,
            decoder_ffn: FfnKind::Swiglu,
            tie_embeddings: true,
            normalize_input: false,
            norm_eps: 1e-6,
        }
    }

    fn whisper(name: &str, dim: usize, layers: usize, heads: usize) -> Self {
        ModelConfig {
            frontend: FrontendKind::WhisperMel,
            decoder_ffn: FfnKind::Gelu,
            ..Self::moonshine(name, dim, layers, heads, WHISPER_EN_VOCAB)
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "tiny" => Self::moonshine(name, 288, 6, 8, MOONSHINE_VOCAB),
            "base" => Self::moonshine(name, 416, 8, 8, MOONSHINE_VOCAB),
            "whisper-tiny-shape" => Self::whisper(name, 384, 4, 6),
            "whisper-base-shape" => Self::whisper(name, 512, 6, 8),
            // Desk-scale shapes: byte vocabulary plus the special block.
            "toy-32" => Self::moonshine(name, 32, 2, 4, 256 + SPECIAL_TOKENS),
            "toy-64" => Self::moonshine(name, 64, 2, 4, 256 + SPECIAL_TOKENS),
            _ => {
                return Err(Error::UnknownName {
                    kind: "model preset",
                    name: name.to_string(),
                    known: PRESETS.join(", "),
                })
            }
        };
        Ok(cfg)
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    pub fn ffn_hidden(&self) -> usize {
        self.ffn_mult * self.dim
    }

    pub fn with_vocab(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dim {} not divisible by heads {}", self.dim, self.heads)));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config(format!("head_dim {} must be even for rotary pairs", self.head_dim())));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 || self.ffn_mult == 0 || self.vocab_size == 0 {
            return Err(Error::Config("layer counts, ffn_mult and vocab_size must be positive".into()));
        }
        if self.encoder_ffn != FfnKind::Gelu {
            return Err(Error::Config("encoder FFN is GELU".into()));
        }
        if !(self.rope_theta > 0.0) || !(self.norm_eps > 0.0) {
            return Err(Error::Config("rope_theta and norm_eps must be positive".into()));
        }
        if self.frontend == FrontendKind::MoonshineStem {
            self.stem.validate(self.dim)?;
        }
        Ok(())
    }

    /// Parses a TOML config: an optional `preset` plus field overrides.
    /// When `dim` is overridden without an explicit `[stem]`, the stem
    /// defaults are rebuilt for the new width.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "model config",
            location: e.span().map_or("?".into(), |s| format!("byte {}", s.start)),
            detail: e.message().to_string(),
        })?;
        file.resolve()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// A preset name or a path to a TOML file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if PRESETS.contains(&spec) {
            Self::preset(spec)
        } else if Path::new(spec).exists() {
            Self::load(spec)
        } else {
            Self::preset(spec)
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    name: Option<String>,
    dim: Option<usize>,
    enc_layers: Option<usize>,
    dec_layers: Option<usize>,
    heads: Option<usize>,
    ffn_mult: Option<usize>,
    vocab_size: Option<usize>,
    rope_theta: Option<f64>,
    stem: Option<StemConfig>,
    frontend: Option<FrontendKind>,
    encoder_ffn: Option<FfnKind>,
    decoder_ffn: Option<FfnKind>,
    tie_embeddings: Option<bool>,
    normalize_input: Option<bool>,
    norm_eps: Option<f64>,
}

impl ConfigFile {
    fn resolve(self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::preset(self.preset.as_deref().unwrap_or("tiny"))?;
        if let Some(dim) = self.dim {
            cfg.dim = dim;
            cfg.stem = StemConfig::for_dim(dim);
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(name, enc_layers, dec_layers, heads, ffn_mult, vocab_size, rope_theta, stem, frontend,
             encoder_ffn, decoder_ffn, tie_embeddings, normalize_input, norm_eps);
        cfg.validate()?;
        Ok(cfg)
    }
}
