//! Subcommand bodies. Each resolves its defaults into the run config so the
//! saved copy re-executes identically.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use moonshine_core::audio::{self, AudioClip, LoadOptions, SampleFormat};
use moonshine_core::datapipe::histogram::Histogram;
use moonshine_core::datapipe::pipeline::FileError;
use moonshine_core::datapipe::{
    manifest, run_pipeline, FileInput, PipelineConfig, PseudoRecord, TrainingInstance, DEFAULT_CAPTION_THRESHOLD,
    DEFAULT_LOGPROB_THRESHOLD,
};
use moonshine_core::eval::synth::{self, ToneSpec};
use moonshine_core::eval::{
    greedy_decode, registry, Dataset, FlopsRequest, HarnessInputs, Recognizer, Termination, Transcriber,
    DEFAULT_BINS_S, DEFAULT_DURATIONS_S, DEFAULT_GAINS_DB, DEFAULT_OUT_TOKENS_PER_S, DEFAULT_SNRS_DB,
};
use moonshine_core::model::{Model, ModelConfig};
use moonshine_core::tokenizer::{train_bpe, Vocab};
use moonshine_core::train::{self, Example, TrainConfig};
use moonshine_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{or_default, RunConfig};

pub const DEFAULT_TRAIN_MODEL: &str = "toy-64";
pub const DEFAULT_BPE_SIZE: usize = 320;
pub const FLOPS_MODELS: [&str; 4] = ["tiny", "base", "whisper-tiny-shape", "whisper-base-shape"];
pub const FLOPS_REFERENCE: &str = "whisper-tiny-shape";

const LOAD: LoadOptions = LoadOptions { resample: true };

/// Files written by a command, relative to its out-dir.
pub type Written = Vec<String>;

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>, written: &mut Written) -> anyhow::Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(name.to_string());
    Ok(())
}

fn jsonl<T: Serialize>(items: &[T]) -> anyhow::Result<String> {
    Ok(manifest::to_jsonl(items)?)
}

fn load_checkpoint(cfg: &RunConfig) -> anyhow::Result<Option<(Model<f32>, Vocab)>> {
    let Some(path) = &cfg.checkpoint else { return Ok(None) };
    let (model, vocab) = train::load_checkpoint(path)?;
    if let Some(spec) = &cfg.model {
        let wanted = ModelConfig::resolve(spec)?;
        if wanted.with_vocab(model.config.vocab_size) != model.config {
            return Err(Error::Config(format!("--model {spec} does not match the checkpoint's model")).into());
        }
    }
    Ok(Some((model, vocab)))
}

fn require_checkpoint(cfg: &RunConfig) -> anyhow::Result<Transcriber> {
    let (model, vocab) = load_checkpoint(cfg)?.ok_or_else(|| Error::Config("a --checkpoint is required".into()))?;
    Ok(Transcriber::new(model, vocab)?)
}

pub fn synth(cfg: &mut RunConfig, out: &Path) -> anyhow::Result<Written> {
    let seed = cfg.seed();
    let spec = ToneSpec::default();
    let items: Vec<(AudioClip, String)> = match &cfg.durations_s {
        Some(d) => synth::duration_dataset(seed, d, spec)?.items.into_iter().map(|i| (i.audio, i.reference)).collect(),
        None => {
            let n = or_default(&mut cfg.count, 20);
            let lo = or_default(&mut cfg.min_words, 2);
            let hi = or_default(&mut cfg.max_words, 3);
            synth::sentences(seed, n, lo, hi, spec)?.into_iter().map(|i| (i.audio, i.text)).collect()
        }
    };
    let mut written = Vec::new();
    let mut records = Vec::with_capacity(items.len());
    for (i, (clip, text)) in items.iter().enumerate() {
        let name = format!("audio/synth-{i:04}.wav");
        std::fs::create_dir_all(out.join("audio")).map_err(|e| Error::io(out, e))?;
        audio::save_wav(out.join(&name), clip, SampleFormat::Float32)?;
        written.push(name.clone());
        let d = clip.duration_s();
        records.push(TrainingInstance {
            audio: name,
            start_s: 0.0,
            end_s: d,
            label: text.clone(),
            duration_s: d,
            segments: Vec::new(),
        });
    }
    write(out, "manifest.jsonl", jsonl(&records)?, &mut written)?;
    if let Some(secs) = cfg.noise_s {
        let noise = synth::fan_noise(seed.wrapping_add(1), secs)?;
        audio::save_wav(out.join("noise.wav"), &noise, SampleFormat::Float32)?;
        written.push("noise.wav".into());
    }
    Ok(written)
}

fn require_manifest(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let path = cfg.manifest.as_ref().ok_or_else(|| Error::Config("a --manifest is required".into()))?;
    Ok(Dataset::from_manifest(path, LOAD)?)
}

pub fn train_toy(cfg: &mut RunConfig, out: &Path) -> anyhow::Result<Written> {
    let seed = cfg.seed();
    let data = require_manifest(cfg)?;
    let (mut model, vocab) = match load_checkpoint(cfg)? {
        Some(pair) => pair,
        None => {
            let spec = or_default(&mut cfg.model, DEFAULT_TRAIN_MODEL.to_string());
            let target = or_default(&mut cfg.vocab_size, DEFAULT_BPE_SIZE);
            let texts: Vec<&str> = data.items.iter().map(|i| i.reference.as_str()).collect();
            let vocab = train_bpe(&texts, target)?;
            let config = if ModelConfig::preset(&spec).is_ok() {
                ModelConfig::preset(&spec)?.with_vocab(vocab.total_size())
            } else {
                ModelConfig::resolve(&spec)?
            };
            if config.vocab_size != vocab.total_size() {
                return Err(Error::Config(format!(
                    "model vocab_size {} but the trained tokenizer has {} ids",
                    config.vocab_size,
                    vocab.total_size()
                ))
                .into());
            }
            (Model::init(config, seed)?, vocab)
        }
    };
    let examples: Vec<Example> = data
        .items
        .iter()
        .map(|i| Example {
            audio: i.audio.samples().to_vec(),
            tokens: vocab.encode(i.reference.as_bytes()),
        })
        .collect();
    let defaults = TrainConfig::default();
    let mut tc = TrainConfig {
        steps: or_default(&mut cfg.steps, defaults.steps),
        seed,
        target_accuracy: Some(or_default(&mut cfg.target_accuracy, defaults.target_accuracy.unwrap_or(1.0))),
        ..defaults
    };
    tc.optimizer.peak_lr = or_default(&mut cfg.peak_lr, tc.optimizer.peak_lr);
    tc.optimizer.warmup_steps = or_default(&mut cfg.warmup_steps, tc.optimizer.warmup_steps);
    let report = train::train(&mut model, &vocab, &examples, &tc)?;
    let mut written = Vec::new();
    write(out, "checkpoint.ckpt", train::checkpoint_bytes(&model, &vocab)?, &mut written)?;
    write(out, "loss.csv", report.log_csv(), &mut written)?;
    let summary = json!({
        "examples": examples.len(),
        "updates": report.updates,
        "reached_target": report.reached_target,
        "final_accuracy": report.final_accuracy,
        "final_loss": report.log.last().map(|l| l.loss),
        "vocab_size": vocab.total_size(),
    });
    write(out, "train_report.json", serde_json::to_string_pretty(&summary)? + "\n", &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct TranscriptRecord {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens_emitted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    terminated_by: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<Value>,
}

fn error_value(e: &Error) -> Value {
    json!({ "kind": e.kind(), "message": e.to_string() })
}

pub fn transcribe(cfg: &mut RunConfig, out: &Path) -> anyhow::Result<Written> {
    let rec = require_checkpoint(cfg)?;
    let results: Vec<(TranscriptRecord, f64)> = cfg
        .inputs
        .par_iter()
        .map(|path| {
            let t0 = Instant::now();
            let file = path.display().to_string();
            let r = audio::load_wav(path, LOAD).and_then(|clip| greedy_decode(&rec, &clip));
            let record = match r {
                Ok(d) => TranscriptRecord {
                    file,
                    text: Some(d.text),
                    tokens: Some(d.tokens),
                    tokens_emitted: Some(d.tokens_emitted),
                    terminated_by: Some(d.terminated_by),
                    audio_seconds: Some(d.audio_seconds),
                    error: None,
                },
                Err(e) => TranscriptRecord {
                    file,
                    text: None,
                    tokens: None,
                    tokens_emitted: None,
                    terminated_by: None,
                    audio_seconds: None,
                    error: Some(error_value(&e)),
                },
            };
            (record, t0.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let timing: Vec<Value> = results.iter().map(|(r, ms)| json!({ "file": r.file, "elapsed_ms": ms })).collect();
    let records: Vec<TranscriptRecord> = results.into_iter().map(|(r, _)| r).collect();
    let mut written = Vec::new();
    write(out, "transcripts.jsonl", jsonl(&records)?, &mut written)?;
    write(out, "timing.jsonl", jsonl(&timing)?, &mut written)?;
    Ok(written)
}

const SRT_EXT: &str = ".srt";
const PSEUDO_EXT: &str = ".pseudo.jsonl";

/// Recordings under `dir`: each stem with a `.srt` or `.pseudo.jsonl`, whose
/// audio is `<stem>.wav` beside it.
fn discover(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut stems = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(PSEUDO_EXT).or_else(|| name.strip_suffix(SRT_EXT)) {
            stems.insert(stem.to_string());
        }
    }
    Ok(stems.into_iter().collect())
}

pub fn pipeline(cfg: &mut RunConfig, out: &Path) -> anyhow::Result<Written> {
    let pc = PipelineConfig {
        caption_threshold: or_default(&mut cfg.threshold, DEFAULT_CAPTION_THRESHOLD),
        logprob_threshold: or_default(&mut cfg.logprob_threshold, DEFAULT_LOGPROB_THRESHOLD),
        ..PipelineConfig::default()
    };
    let mut inputs = Vec::new();
    let mut unreadable = Vec::new();
    for dir in &cfg.inputs {
        let abs = std::fs::canonicalize(dir).map_err(|e| Error::io(dir, e))?;
        for stem in discover(&abs)? {
            match read_recording(&abs, &stem) {
                Ok(input) => inputs.push(input),
                Err(e) => unreadable.push(FileError {
                    file: stem,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
    }
    let mut result = run_pipeline(&inputs, &pc)?;
    result.summary.files += unreadable.len();
    result.summary.files_failed += unreadable.len();
    result.errors.extend(unreadable);
    result.errors.sort_by(|a, b| a.file.cmp(&b.file));
    let mut written = Vec::new();
    write(out, "instances.jsonl", jsonl(&result.instances)?, &mut written)?;
    write(out, "decisions.jsonl", jsonl(&result.decisions)?, &mut written)?;
    write(out, "errors.jsonl", jsonl(&result.errors)?, &mut written)?;
    write(out, "histogram.csv", result.histogram.to_csv(), &mut written)?;
    write(out, "histogram.plot.jsonl", result.histogram.to_plot_jsonl(), &mut written)?;
    let summary = json!({ "summary": result.summary, "histogram_peaks_s": peaks(&result.histogram) });
    write(out, "summary.json", serde_json::to_string_pretty(&summary)? + "\n", &mut written)?;
    Ok(written)
}

fn peaks(h: &Histogram) -> Vec<f64> {
    h.local_maxima().into_iter().map(|i| h.bins[i].lo_s).collect()
}

fn read_recording(dir: &Path, stem: &str) -> moonshine_core::Result<FileInput> {
    let srt_path = dir.join(format!("{stem}{SRT_EXT}"));
    let pseudo_path = dir.join(format!("{stem}{PSEUDO_EXT}"));
    let srt = if srt_path.exists() {
        Some(std::fs::read(&srt_path).map_err(|e| Error::io(&srt_path, e))?)
    } else {
        None
    };
    let pseudo: Vec<PseudoRecord> = if pseudo_path.exists() { manifest::read_jsonl(&pseudo_path)? } else { Vec::new() };
    Ok(FileInput {
        name: stem.to_string(),
        audio: dir.join(format!("{stem}.wav")).display().to_string(),
        srt,
        pseudo,
    })
}

fn resolve_all(specs: &[String]) -> anyhow::Result<Vec<ModelConfig>> {
    Ok(specs.iter().map(|s| ModelConfig::resolve(s)).collect::<moonshine_core::Result<_>>()?)
}

pub fn eval(cfg: &mut RunConfig, out: &Path) -> anyhow::Result<Written> {
    let name = cfg.harness.clone().ok_or_else(|| Error::Config("eval needs a harness name".into()))?;
    let harness = registry().get(&name)?;
    let mut inputs = HarnessInputs::default();
    let recognizer: Option<Transcriber>;
    let dataset: Option<Dataset>;
    let noise: Option<AudioClip>;
    if name == "flops-compare" {
        let configs = or_default(&mut cfg.configs, FLOPS_MODELS.iter().map(|s| s.to_string()).collect());
        let reference = or_default(&mut cfg.reference, FLOPS_REFERENCE.to_string());
        inputs.flops = Some(FlopsRequest {
            configs: resolve_all(&configs)?,
            reference: ModelConfig::resolve(&reference)?,
            durations_s: or_default(&mut cfg.durations_s, DEFAULT_DURATIONS_S.to_vec()),
            out_tokens_per_s: or_default(&mut cfg.out_tokens_per_s, DEFAULT_OUT_TOKENS_PER_S),
            time_forward: or_default(&mut cfg.time_forward, false),
            seed: cfg.seed(),
        });
    } else {
        recognizer = load_checkpoint(cfg)?.map(|(m, v)| Transcriber::new(m, v)).transpose()?;
        dataset = cfg.manifest.as_ref().map(|p| Dataset::from_manifest(p, LOAD)).transpose()?;
        noise = match &cfg.noise {
            Some(p) => Some(
                audio::load_wav(p, LOAD).map_err(|e| Error::Config(format!("noise file {}: {e}", p.display())))?,
            ),
            None => None,
        };
        inputs.recognizer = recognizer.as_ref().map(|r| r as &dyn Recognizer);
        inputs.dataset = dataset.as_ref();
        inputs.noise = noise.as_ref();
        match name.as_str() {
            "gain-sweep" => inputs.gains_db = or_default(&mut cfg.gains_db, DEFAULT_GAINS_DB.to_vec()),
            "snr-sweep" => {
                let mut grid = DEFAULT_SNRS_DB.to_vec();
                grid.push(f64::INFINITY);
                inputs.snrs_db = or_default(&mut cfg.snrs_db, grid);
            }
            "wer-by-duration" => inputs.bins_s = or_default(&mut cfg.bins_s, DEFAULT_BINS_S.to_vec()),
            _ => {}
        }
    }
    let result = harness.run(&inputs)?;
    let mut written = Vec::new();
    write(out, &format!("{name}.csv"), &result.csv, &mut written)?;
    write(out, &format!("{name}.plot.jsonl"), &result.plot_jsonl, &mut written)?;
    write(out, &format!("{name}.json"), serde_json::to_string_pretty(&result.json)? + "\n", &mut written)?;
    Ok(written)
}

pub fn ensure_dir(dir: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).context("creating out-dir")
}
