//! Greedy decoding with the tokens-per-second cap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::model::{DecoderSession, Model};
use crate::tokenizer::Vocab;
use crate::{Error, Result, SAMPLE_RATE};

/// Output tokens allowed per second of audio.
pub const TOKENS_PER_SECOND: usize = 6;

/// `ceil(6 · samples / 16000)`, in integer arithmetic.
pub fn token_cap(samples: usize) -> usize {
    let rate = SAMPLE_RATE as usize;
    (TOKENS_PER_SECOND * samples).div_ceil(rate)
}

/// Produces next-token logits one step at a time.
pub trait DecodeStep {
    fn logits(&mut self, token: u32) -> Result<Vec<f32>>;
}

impl DecodeStep for DecoderSession<'_, f32> {
    fn logits(&mut self, token: u32) -> Result<Vec<f32>> {
        self.step(token)
    }
}

/// Anything greedy decoding can drive: a trained model or a scripted stub.
pub trait Recognizer: Sync {
    fn vocab(&self) -> &Vocab;
    fn min_samples(&self) -> usize;
    fn start<'a>(&'a self, audio: &[f32]) -> Result<Box<dyn DecodeStep + 'a>>;
}

/// A model paired with the vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct Transcriber {
    pub model: Model<f32>,
    pub vocab: Vocab,
}

impl Transcriber {
    pub fn new(model: Model<f32>, vocab: Vocab) -> Result<Self> {
        if model.config.vocab_size != vocab.total_size() {
            return Err(Error::Config(format!(
                "model vocab_size {} but tokenizer has {} ids",
                model.config.vocab_size,
                vocab.total_size()
            )));
        }
        Ok(Transcriber { model, vocab })
    }
}

impl Recognizer for Transcriber {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn min_samples(&self) -> usize {
        self.model.min_samples()
    }

    fn start<'a>(&'a self, audio: &[f32]) -> Result<Box<dyn DecodeStep + 'a>> {
        let memory = self.model.encode(audio)?;
        Ok(Box::new(self.model.session(&memory)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Eos,
    TokenCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub tokens: Vec<u32>,
    pub text: String,
    pub terminated_by: Termination,
    pub tokens_emitted: usize,
    pub audio_seconds: f64,
}

/// First index of the maximum; NaN never wins.
pub fn argmax(xs: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.map_or(!x.is_nan(), |(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// Starts from bos and takes the argmax each step until eos or the cap.
pub fn greedy_decode(rec: &dyn Recognizer, clip: &AudioClip) -> Result<DecodeResult> {
    let samples = clip.samples();
    if samples.len() < rec.min_samples() {
        return Err(Error::InputTooShort {
            min_samples: rec.min_samples(),
            got: samples.len(),
        });
    }
    let vocab = rec.vocab();
    let cap = token_cap(samples.len());
    let mut state = rec.start(samples)?;
    let mut tokens = Vec::new();
    let mut prev = vocab.bos_id();
    let mut terminated_by = Termination::TokenCap;
    while tokens.len() < cap {
        let logits = state.logits(prev)?;
        let next = argmax(&logits).ok_or_else(|| Error::NonFinite("decoder logits".into()))? as u32;
        if next == vocab.eos_id() {
            terminated_by = Termination::Eos;
            break;
        }
        tokens.push(next);
        prev = next;
    }
    Ok(DecodeResult {
        text: vocab.decode_text(&tokens)?,
        tokens_emitted: tokens.len(),
        tokens,
        terminated_by,
        audio_seconds: clip.duration_s(),
    })
}

/// Decodes clips in parallel; results keep input order.
pub fn decode_all(rec: &dyn Recognizer, clips: &[&AudioClip]) -> Vec<Result<DecodeResult>> {
    clips.par_iter().map(|c| greedy_decode(rec, c)).collect()
}

/// Logits fixed by a script, for exercising the decoding loop.
#[derive(Debug, Clone)]
pub struct ScriptedRecognizer {
    pub vocab: Vocab,
    /// Tokens emitted in order; once exhausted, `then` is emitted forever.
    pub script: Vec<u32>,
    pub then: u32,
    pub min_samples: usize,
}

impl ScriptedRecognizer {
    /// Never emits eos.
    pub fn babbler(vocab: Vocab, token: u32) -> Self {
        ScriptedRecognizer {
            vocab,
            script: Vec::new(),
            then: token,
            min_samples: 1,
        }
    }

    /// Emits `tokens`, then eos.
    pub fn reciter(vocab: Vocab, tokens: Vec<u32>) -> Self {
        let eos = vocab.eos_id();
        ScriptedRecognizer {
            vocab,
            script: tokens,
            then: eos,
            min_samples: 1,
        }
    }
}

struct Scripted<'a> {
    rec: &'a ScriptedRecognizer,
    step: usize,
}

impl DecodeStep for Scripted<'_> {
    fn logits(&mut self, _token: u32) -> Result<Vec<f32>> {
        let target = self.rec.script.get(self.step).copied().unwrap_or(self.rec.then);
        self.step += 1;
        let mut out = vec![0.0; self.rec.vocab.total_size()];
        out[target as usize] = 1.0;
        Ok(out)
    }
}

impl Recognizer for ScriptedRecognizer {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn min_samples(&self) -> usize {
        self.min_samples
    }

    fn start<'a>(&'a self, _audio: &[f32]) -> Result<Box<dyn DecodeStep + 'a>> {
        Ok(Box::new(Scripted { rec: self, step: 0 }))
    }
}
