//! Audio frontends, registered by name.
//!
//! A frontend turns a clip into encoder frames. The registry lets the
//! accounting code (and the CLI) pick the strided-convolution stem or the
//! fixed-canvas mel pipeline by name; only the stem has a forward pass.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use super::config::{FrontendKind, ModelConfig};
use crate::numerics::conv_output_len;
use crate::{Error, Result, SAMPLE_RATE};

pub trait Frontend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fixed canvas every input is padded to, if the frontend has one.
    fn default_canvas_seconds(&self) -> Option<f64>;

    /// Encoder frames produced from `samples` input samples.
    fn frames(&self, config: &ModelConfig, samples: usize) -> Result<usize>;

    /// Multiply-accumulates spent producing those frames.
    fn macs(&self, config: &ModelConfig, samples: usize) -> Result<u64>;

    /// Learnable tensors owned by the frontend, as `(name, shape)`.
    fn param_shapes(&self, config: &ModelConfig) -> Vec<(String, Vec<usize>)>;

    /// Closed-form parameter count.
    fn param_count(&self, config: &ModelConfig) -> u64;
}

/// Three strided valid convolutions over raw PCM.
#[derive(Debug, Default)]
pub struct MoonshineStem;

impl Frontend for MoonshineStem {
    fn name(&self) -> &'static str {
        "moonshine-stem"
    }

    fn default_canvas_seconds(&self) -> Option<f64> {
        None
    }

    fn frames(&self, config: &ModelConfig, samples: usize) -> Result<usize> {
        config.stem.output_frames(samples).ok_or(Error::InputTooShort {
            min_samples: config.stem.receptive_field(),
            got: samples,
        })
    }

    fn macs(&self, config: &ModelConfig, samples: usize) -> Result<u64> {
        self.frames(config, samples)?;
        let mut t = samples;
        let mut c_in = 1;
        let mut total = 0u64;
        for l in &config.stem.layers {
            t = conv_output_len(t, l.kernel_width, l.stride).expect("checked above");
            total += (t * l.kernel_width * c_in * l.out_channels) as u64;
            c_in = l.out_channels;
        }
        Ok(total)
    }

    fn param_shapes(&self, config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = 1;
        for (i, l) in config.stem.layers.iter().enumerate() {
            out.push((format!("stem.conv{}.weight", i + 1), vec![l.kernel_width, c_in, l.out_channels]));
            if l.bias {
                out.push((format!("stem.conv{}.bias", i + 1), vec![l.out_channels]));
            }
            c_in = l.out_channels;
        }
        out
    }

    fn param_count(&self, config: &ModelConfig) -> u64 {
        let mut c_in = 1u64;
        let mut n = 0;
        for l in &config.stem.layers {
            let co = l.out_channels as u64;
            n += l.kernel_width as u64 * c_in * co + if l.bias { co } else { 0 };
            c_in = co;
        }
        n
    }
}

/// Log-mel spectrogram (10 ms hop) followed by two width-3 convolutions,
/// the second with stride 2: 320x compression over a fixed 30 s canvas.
#[derive(Debug)]
pub struct WhisperMel {
    pub n_mels: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub canvas_seconds: f64,
}

impl Default for WhisperMel {
    fn default() -> Self {
        WhisperMel {
            n_mels: 80,
            hop: 160,
            n_fft: 400,
            canvas_seconds: 30.0,
        }
    }
}

impl WhisperMel {
    fn mel_frames(&self, samples: usize) -> usize {
        samples / self.hop
    }
}

impl Frontend for WhisperMel {
    fn name(&self) -> &'static str {
        "whisper-mel"
    }

    fn default_canvas_seconds(&self) -> Option<f64> {
        Some(self.canvas_seconds)
    }

    fn frames(&self, _config: &ModelConfig, samples: usize) -> Result<usize> {
        let mel = self.mel_frames(samples);
        if mel == 0 {
            return Err(Error::InputTooShort {
                min_samples: self.hop,
                got: samples,
            });
        }
        // Width 3, padding 1: stride 1 keeps length, stride 2 halves it.
        Ok((mel - 1) / 2 + 1)
    }

    fn macs(&self, config: &ModelConfig, samples: usize) -> Result<u64> {
        let frames = self.frames(config, samples)? as u64;
        let mel = self.mel_frames(samples) as u64;
        let d = config.dim as u64;
        let n_fft = self.n_fft as u64;
        let fft = n_fft * (usize::BITS - (self.n_fft - 1).leading_zeros()) as u64;
        let filterbank = (n_fft / 2 + 1) * self.n_mels as u64;
        let spectrogram = mel * (fft + filterbank);
        let conv1 = mel * 3 * self.n_mels as u64 * d;
        let conv2 = frames * 3 * d * d;
        Ok(spectrogram + conv1 + conv2)
    }

    fn param_shapes(&self, config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let d = config.dim;
        vec![
            ("frontend.conv1.weight".into(), vec![3, self.n_mels, d]),
            ("frontend.conv1.bias".into(), vec![d]),
            ("frontend.conv2.weight".into(), vec![3, d, d]),
            ("frontend.conv2.bias".into(), vec![d]),
        ]
    }

    fn param_count(&self, config: &ModelConfig) -> u64 {
        let d = config.dim as u64;
        3 * self.n_mels as u64 * d + d + 3 * d * d + d
    }
}

/// Name-indexed set of frontends.
#[derive(Default)]
pub struct FrontendRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Frontend>>,
}

impl FrontendRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(MoonshineStem));
        r.register(Arc::new(WhisperMel::default()));
        r
    }

    pub fn register(&mut self, frontend: Arc<dyn Frontend>) {
        self.entries.insert(frontend.name(), frontend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Frontend>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "frontend",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// The process-wide registry of built-in frontends.
pub fn registry() -> &'static FrontendRegistry {
    static REGISTRY: OnceLock<FrontendRegistry> = OnceLock::new();
    REGISTRY.get_or_init(FrontendRegistry::with_builtins)
}

pub fn for_kind(kind: FrontendKind) -> Arc<dyn Frontend> {
    registry().get(kind.name()).expect("built-in frontend")
}

/// Samples in `seconds` of audio, rounded to the nearest sample.
pub fn seconds_to_samples(seconds: f64) -> usize {
    (seconds * SAMPLE_RATE as f64).round() as usize
}
