//! Run configuration shared by flags and TOML files. Flags win over the
//! file; the out-dir env var is consulted only when neither sets it.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use moonshine_core::Error;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1234;
pub const OUT_DIR_ENV: &str = "MOONSHINE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "moonshine-out";
pub const SAVED_CONFIG: &str = "run_config.toml";

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harness: Option<String>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Model preset name or path to a model TOML file.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,

    /// Instance manifest (JSON lines) for training and evaluation.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Noise WAV for the SNR sweep.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<PathBuf>,

    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains_db: Option<Vec<f64>>,
    /// SNR grid; `inf` adds a clean condition.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snrs_db: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins_s: Option<Vec<f64>>,
    /// Caption distance threshold.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprob_threshold: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Tokenizer size to train when no checkpoint is given.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_lr: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<u64>,
    /// Stop early at this teacher-forced accuracy; above 1 never stops.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_words: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_words: Option<usize>,
    /// Clip durations for synth, or table durations for flops-compare.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub durations_s: Option<Vec<f64>>,
    /// Also write a noise WAV of this length.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_s: Option<f64>,

    /// Models compared by flops-compare.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub configs: Option<Vec<String>>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_tokens_per_s: Option<f64>,
    /// Time one encoder pass per model; makes outputs machine dependent.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_forward: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    /// Fills every unset field of `self` from `file`.
    pub fn overlay(mut self, file: RunConfig) -> Self {
        overlay!(self, file;
            command, harness, model, checkpoint, seed, workers, out_dir, manifest, noise,
            gains_db, snrs_db, bins_s, threshold, logprob_threshold, steps, vocab_size, peak_lr,
            warmup_steps, target_accuracy, count, min_words, max_words, durations_s, noise_s,
            configs, reference, out_tokens_per_s, time_forward,
        );
        if self.inputs.is_empty() {
            self.inputs = file.inputs;
        }
        self
    }

    pub fn seed(&mut self) -> u64 {
        *self.seed.get_or_insert(DEFAULT_SEED)
    }

    pub fn out_dir(&mut self) -> PathBuf {
        self.out_dir
            .get_or_insert_with(|| {
                std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
            })
            .clone()
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(SAVED_CONFIG);
        let text = toml::to_string(self).context("serializing run config")?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Returns `field`, storing `default` first when it is unset.
pub fn or_default<T: Clone>(field: &mut Option<T>, default: T) -> T {
    field.get_or_insert(default).clone()
}
