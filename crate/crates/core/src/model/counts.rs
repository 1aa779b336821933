//! Analytic multiply-accumulate accounting.
//!
//! Only matrix products are counted; normalisation, activations and softmax
//! are excluded. Decoding is assumed to use a key/value cache, so token `i`
//! attends to `i` earlier positions plus itself.

use serde::{Deserialize, Serialize};

use super::config::{FfnKind, ModelConfig};
use super::frontend::{seconds_to_samples, Frontend};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub config: String,
    pub frontend: String,
    pub audio_seconds: f64,
    /// Seconds actually processed per window (the padded canvas, if any).
    pub canvas_seconds: f64,
    pub windows: usize,
    pub out_tokens: usize,
    pub encoder_frames: usize,
    pub frontend_macs: u64,
    pub encoder_attention: u64,
    pub encoder_ffn: u64,
    pub decoder_self_attention: u64,
    pub decoder_cross_attention: u64,
    pub decoder_ffn: u64,
    pub logits: u64,
}

impl FlopsReport {
    pub fn total(&self) -> u64 {
        self.frontend_macs + self.transformer_total()
    }

    /// Encoder, decoder and output projection; everything but the frontend.
    pub fn transformer_total(&self) -> u64 {
        self.encoder_attention
            + self.encoder_ffn
            + self.decoder_self_attention
            + self.decoder_cross_attention
            + self.decoder_ffn
            + self.logits
    }
}

fn ffn_macs(kind: FfnKind, rows: u64, d: u64, h: u64) -> u64 {
    match kind {
        FfnKind::Gelu => 2 * rows * d * h,
        FfnKind::Swiglu => 3 * rows * d * h,
    }
}

/// MACs to transcribe `audio_seconds` of audio into `out_tokens` tokens.
///
/// With a canvas (`pad_to_seconds`, or the frontend's fixed default), every
/// window is padded to the canvas and audio longer than one canvas is split
/// into `ceil(audio / canvas)` windows, with tokens spread evenly.
pub fn count_flops(
    config: &ModelConfig,
    audio_seconds: f64,
    out_tokens: usize,
    frontend: &dyn Frontend,
    pad_to_seconds: Option<f64>,
) -> Result<FlopsReport> {
    if !(audio_seconds > 0.0) || !audio_seconds.is_finite() {
        return Err(Error::Argument(format!("audio_seconds must be positive, got {audio_seconds}")));
    }
    let canvas = pad_to_seconds.or(frontend.default_canvas_seconds());
    if let Some(c) = canvas {
        if !(c > 0.0) {
            return Err(Error::Argument(format!("pad_to_seconds must be positive, got {c}")));
        }
    }
    let (windows, window_seconds) = match canvas {
        Some(c) => ((audio_seconds / c).ceil().max(1.0) as usize, c),
        None => (1, audio_seconds),
    };
    let samples = seconds_to_samples(window_seconds);
    let frames = frontend.frames(config, samples)?;
    let frontend_macs = frontend.macs(config, samples)? * windows as u64;

    let d = config.dim as u64;
    let h = config.ffn_hidden() as u64;
    let l = frames as u64;
    let w = windows as u64;
    let enc_layers = config.enc_layers as u64;
    let dec_layers = config.dec_layers as u64;

    let encoder_attention = w * enc_layers * (4 * l * d * d + 2 * l * l * d);
    let encoder_ffn = w * enc_layers * ffn_macs(config.encoder_ffn, l, d, h);

    let (mut self_attn, mut cross, mut ffn) = (0u64, 0u64, 0u64);
    for win in 0..windows {
        let t = (out_tokens / windows + usize::from(win < out_tokens % windows)) as u64;
        // Scores and mix over 1..=t cached positions: sum(2·i·d) = t(t+1)d.
        self_attn += dec_layers * (4 * t * d * d + t * (t + 1) * d);
        cross += dec_layers * (2 * t * d * d + 2 * l * d * d + 2 * t * l * d);
        ffn += dec_layers * ffn_macs(config.decoder_ffn, t, d, h);
    }
    let logits = out_tokens as u64 * d * config.vocab_size as u64;

    Ok(FlopsReport {
        config: config.name.clone(),
        frontend: frontend.name().to_string(),
        audio_seconds,
        canvas_seconds: window_seconds,
        windows,
        out_tokens,
        encoder_frames: frames,
        frontend_macs,
        encoder_attention,
        encoder_ffn,
        decoder_self_attention: self_attn,
        decoder_cross_attention: cross,
        decoder_ffn: ffn,
        logits,
    })
}
