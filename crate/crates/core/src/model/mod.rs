//! The speech model: a three-layer strided convolution stem over raw PCM, a
//! bidirectional RoPE encoder and a causal RoPE decoder with cross-attention.

pub mod config;
pub mod counts;
pub mod frontend;
pub mod graph;
pub mod params;
pub mod rope;
pub mod session;

pub use config::{Activation, FfnKind, FrontendKind, ModelConfig, StemConfig, StemLayer, PRESETS, SPECIAL_TOKENS, STEM_STRIDES};
pub use counts::{count_flops, FlopsReport};
pub use frontend::{Frontend, FrontendRegistry, MoonshineStem, WhisperMel};
pub use params::{count_params, param_specs, ModelParams};
pub use rope::rope_apply;
pub use session::DecoderSession;

use crate::numerics::{Scalar, Tape, Tensor};
use crate::Result;

/// Configuration plus weights. Forward passes are pure functions of
/// `(self, input)` and may run concurrently.
#[derive(Debug, Clone)]
pub struct Model<S: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<S>,
}

impl<S: Scalar> Model<S> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Model { config, params })
    }

    pub fn new(config: ModelConfig, params: ModelParams<S>) -> Result<Self> {
        config.validate()?;
        Ok(Model { config, params })
    }

    /// Fewest samples the stem accepts.
    pub fn min_samples(&self) -> usize {
        self.config.stem.receptive_field()
    }

    pub fn stem_forward(&self, audio: &[S]) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let pv = graph::ParamVars::load(&mut tape, &self.params, false);
        let out = graph::stem(&mut tape, &pv, &self.config, audio)?;
        Ok(tape.take_value(out))
    }

    pub fn encoder_forward(&self, features: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let pv = graph::ParamVars::load(&mut tape, &self.params, false);
        let x = tape.leaf_ref(features, false);
        let out = graph::encoder(&mut tape, &pv, &self.config, x)?;
        Ok(tape.take_value(out))
    }

    /// Stem followed by encoder.
    pub fn encode(&self, audio: &[S]) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let pv = graph::ParamVars::load(&mut tape, &self.params, false);
        let feats = graph::stem(&mut tape, &pv, &self.config, audio)?;
        let out = graph::encoder(&mut tape, &pv, &self.config, feats)?;
        Ok(tape.take_value(out))
    }

    /// Full causal pass: `[tokens.len(), vocab]` logits.
    pub fn decoder_forward(&self, tokens: &[u32], memory: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let pv = graph::ParamVars::load(&mut tape, &self.params, false);
        let m = tape.leaf_ref(memory, false);
        let out = graph::decoder(&mut tape, &pv, &self.config, tokens, m)?;
        Ok(tape.take_value(out))
    }

    pub fn session<'m>(&'m self, memory: &Tensor<S>) -> Result<DecoderSession<'m, S>> {
        DecoderSession::new(&self.config, &self.params, memory)
    }
}
