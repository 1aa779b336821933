//! Audio ingestion and the perturbations used by the robustness harnesses:
//! gain, quiet-frame-aware power measurement and additive noise at a
//! target SNR.

pub mod wav;

use std::path::Path;

pub use wav::{LoadOptions, SampleFormat};

use crate::{Error, Result, SAMPLE_RATE};

/// Samples per power-measurement frame (20 ms).
pub const FRAME_SAMPLES: usize = SAMPLE_RATE as usize / 50;
/// Frames this far below the loudest frame count as quiet.
pub const QUIET_DB: f64 = -40.0;

/// Mono 16 kHz audio with nominal range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("audio clip has no samples".into()));
        }
        Ok(AudioClip { samples })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(SAMPLE_RATE)
    }
}

pub fn load_wav(path: impl AsRef<Path>, opts: LoadOptions) -> Result<AudioClip> {
    wav::load(path, opts)
}

pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    wav::save(path, clip, format)
}

/// Amplitude factor for a gain in dB. Whole-decade gains are exact.
pub fn gain_factor(gain_db: f64) -> f64 {
    let e = gain_db / 20.0;
    if e.fract() == 0.0 && e.abs() <= 22.0 {
        let p = 10f64.powi(e.abs() as i32);
        if e < 0.0 {
            1.0 / p
        } else {
            p
        }
    } else {
        10f64.powf(e)
    }
}

/// Scales samples by `10^(gain_db / 20)`. Values outside [-1, 1] are kept.
pub fn apply_gain(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let g = gain_factor(gain_db);
    AudioClip {
        samples: clip.samples.iter().map(|&x| (f64::from(x) * g) as f32).collect(),
    }
}

/// Mean-square power over the clip's non-quiet 20 ms frames.
pub fn signal_power(clip: &AudioClip) -> Result<f64> {
    power_of(&clip.samples)
}

fn power_of(samples: &[f32]) -> Result<f64> {
    let frames: Vec<(f64, usize)> = samples
        .chunks(FRAME_SAMPLES)
        .map(|f| (f.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>(), f.len()))
        .collect();
    let max = frames.iter().map(|&(e, n)| e / n as f64).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::SilentClip(format!("all {} frames are silent", frames.len())));
    }
    let floor = max * 10f64.powf(QUIET_DB / 10.0);
    let (energy, count) = frames
        .iter()
        .filter(|&&(e, n)| e / n as f64 >= floor)
        .fold((0.0, 0usize), |(se, sn), &(e, n)| (se + e, sn + n));
    Ok(energy / count as f64)
}

pub fn power_db(power: f64) -> f64 {
    10.0 * power.log10()
}

#[derive(Debug, Clone)]
pub struct Mixed {
    pub audio: AudioClip,
    /// Amplitude applied to the (tiled) noise.
    pub noise_scale: f64,
    /// SNR remeasured from the clip and the scaled noise actually added.
    pub measured_snr_db: f64,
}

/// Adds `noise`, tiled or truncated to the clip length, scaled so the
/// signal-to-noise power ratio equals `snr_db`.
pub fn mix_at_snr(clip: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<Mixed> {
    if !snr_db.is_finite() {
        return Err(Error::Argument(format!("snr_db must be finite, got {snr_db}")));
    }
    let ps = signal_power(clip)?;
    let tiled: Vec<f32> = noise.samples.iter().copied().cycle().take(clip.len()).collect();
    let pn = power_of(&tiled).map_err(|_| Error::SilentClip("noise is silent over the clip span".into()))?;
    let scale = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f32> = tiled.iter().map(|&x| (f64::from(x) * scale) as f32).collect();
    let measured = power_db(ps) - power_db(power_of(&scaled)?);
    let samples = clip.samples.iter().zip(&scaled).map(|(&s, &n)| s + n).collect();
    Ok(Mixed {
        audio: AudioClip { samples },
        noise_scale: scale,
        measured_snr_db: measured,
    })
}
