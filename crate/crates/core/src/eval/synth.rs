//! Synthetic speech stand-in: each word is a short two-tone chord, and
//! sentences are drawn from a fixed lexicon with a seeded RNG.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, EvalItem};
use crate::audio::AudioClip;
use crate::{Result, SAMPLE_RATE};

pub const LEXICON: [&str; 16] = [
    "red", "green", "blue", "one", "two", "three", "go", "stop", "left", "right", "up", "down", "yes", "no", "on", "off",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    pub word_s: f64,
    pub gap_s: f64,
    pub amplitude: f64,
}

impl Default for ToneSpec {
    fn default() -> Self {
        ToneSpec {
            word_s: 0.15,
            gap_s: 0.05,
            amplitude: 0.3,
        }
    }
}

/// Frequencies of a word's chord.
pub fn word_tones(word: usize) -> (f64, f64) {
    let f1 = 250.0 + 130.0 * word as f64;
    (f1, 1.5 * f1 + 90.0)
}

/// Renders words back to back, each followed by a short silence.
pub fn render(words: &[usize], spec: ToneSpec) -> Vec<f32> {
    let rate = f64::from(SAMPLE_RATE);
    let n_word = (spec.word_s * rate).round() as usize;
    let n_gap = (spec.gap_s * rate).round() as usize;
    let mut out = Vec::with_capacity(words.len() * (n_word + n_gap));
    for &w in words {
        let (f1, f2) = word_tones(w);
        for i in 0..n_word {
            let t = i as f64 / rate;
            let env = (PI * i as f64 / n_word as f64).sin();
            let v = spec.amplitude * env * 0.5 * ((2.0 * PI * f1 * t).sin() + (2.0 * PI * f2 * t).sin());
            out.push(v as f32);
        }
        out.extend(std::iter::repeat_n(0.0, n_gap));
    }
    out
}

pub fn sentence_text(words: &[usize]) -> String {
    words.iter().map(|&w| LEXICON[w]).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub words: Vec<usize>,
    pub text: String,
    pub audio: AudioClip,
}

/// `n` random sentences of `min_words..=max_words` words.
pub fn sentences(seed: u64, n: usize, min_words: usize, max_words: usize, spec: ToneSpec) -> Result<Vec<SynthItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(min_words..=max_words.max(min_words));
            let words: Vec<usize> = (0..k).map(|_| rng.gen_range(0..LEXICON.len())).collect();
            Ok(SynthItem {
                text: sentence_text(&words),
                audio: AudioClip::new(render(&words, spec))?,
                words,
            })
        })
        .collect()
}

/// One clip per requested duration: words until the duration is filled,
/// then silence to the exact length.
pub fn duration_dataset(seed: u64, durations_s: &[f64], spec: ToneSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_word = spec.word_s + spec.gap_s;
    let items = durations_s
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let k = ((d / per_word).floor() as usize).max(1);
            let words: Vec<usize> = (0..k).map(|_| rng.gen_range(0..LEXICON.len())).collect();
            let mut samples = render(&words, spec);
            samples.resize((d * f64::from(SAMPLE_RATE)).round() as usize, 0.0);
            Ok(EvalItem {
                id: format!("synth-{i}"),
                audio: AudioClip::new(samples)?,
                reference: sentence_text(&words),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        id: format!("synthetic-durations-seed{seed}"),
        items,
    })
}

/// Low-passed noise plus a 120 Hz hum, a stand-in for fan noise.
pub fn fan_noise(seed: u64, seconds: f64) -> Result<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = f64::from(SAMPLE_RATE);
    let n = (seconds * rate).round().max(1.0) as usize;
    let mut lp = 0.0f64;
    let samples = (0..n)
        .map(|i| {
            lp = 0.95 * lp + 0.05 * rng.gen_range(-1.0..1.0);
            let hum = 0.02 * (2.0 * PI * 120.0 * i as f64 / rate).sin();
            (lp + hum) as f32
        })
        .collect();
    AudioClip::new(samples)
}

impl From<Vec<SynthItem>> for Dataset {
    fn from(items: Vec<SynthItem>) -> Self {
        Dataset {
            id: "synthetic".into(),
            items: items
                .into_iter()
                .enumerate()
                .map(|(i, s)| EvalItem {
                    id: format!("synth-{i}"),
                    audio: s.audio,
                    reference: s.text,
                })
                .collect(),
        }
    }
}
