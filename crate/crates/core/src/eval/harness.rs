//! Named evaluation harnesses, selectable at runtime.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::decode::{greedy_decode, Recognizer, Termination};
use super::flops::{compare_flops, FlopsTable};
use super::report::SweepReport;
use super::sweeps::{gain_sweep, snr_sweep, wer_by_duration};
use super::wer::{wer, WerBreakdown};
use crate::audio::AudioClip;
use crate::model::ModelConfig;
use crate::{Error, Result};

/// Everything a harness may need; each uses a subset.
#[derive(Default)]
pub struct HarnessInputs<'a> {
    pub recognizer: Option<&'a dyn Recognizer>,
    pub dataset: Option<&'a Dataset>,
    pub noise: Option<&'a AudioClip>,
    pub gains_db: Vec<f64>,
    pub snrs_db: Vec<f64>,
    pub bins_s: Vec<f64>,
    pub flops: Option<FlopsRequest>,
}

#[derive(Debug, Clone)]
pub struct FlopsRequest {
    pub configs: Vec<ModelConfig>,
    pub reference: ModelConfig,
    pub durations_s: Vec<f64>,
    pub out_tokens_per_s: f64,
    /// Time one encoder pass per stem-frontend row.
    pub time_forward: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessOutput {
    pub name: &'static str,
    pub csv: String,
    pub plot_jsonl: String,
    pub json: serde_json::Value,
}

pub trait Harness: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput>;
}

fn need<'a, T: ?Sized>(v: Option<&'a T>, harness: &str, what: &str) -> Result<&'a T> {
    v.ok_or_else(|| Error::Config(format!("{harness} needs {what}")))
}

fn sweep_output(name: &'static str, report: SweepReport) -> Result<HarnessOutput> {
    Ok(HarnessOutput {
        name,
        csv: report.to_csv(),
        plot_jsonl: report.to_plot_jsonl(&report.axis),
        json: serde_json::to_value(&report)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResult {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub tokens_emitted: usize,
    pub terminated_by: Termination,
    pub breakdown: WerBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub dataset: String,
    pub clips: Vec<ClipResult>,
    pub total: WerBreakdown,
}

/// Per-clip decode and score plus the corpus aggregate.
pub fn wer_report(rec: &dyn Recognizer, dataset: &Dataset) -> Result<WerReport> {
    use rayon::prelude::*;
    let clips = dataset
        .items
        .par_iter()
        .map(|item| {
            let d = greedy_decode(rec, &item.audio)?;
            Ok(ClipResult {
                id: item.id.clone(),
                reference: item.reference.clone(),
                breakdown: wer(&item.reference, &d.text),
                hypothesis: d.text,
                tokens_emitted: d.tokens_emitted,
                terminated_by: d.terminated_by,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = WerBreakdown::sum(clips.iter().map(|c| &c.breakdown));
    Ok(WerReport {
        dataset: dataset.id.clone(),
        clips,
        total,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct WerHarness;

impl Harness for WerHarness {
    fn name(&self) -> &'static str {
        "wer"
    }
    fn describe(&self) -> &'static str {
        "corpus and per-clip word error rate"
    }
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput> {
        let rec = need(inputs.recognizer, self.name(), "a model")?;
        let ds = need(inputs.dataset, self.name(), "a dataset")?;
        let report = wer_report(rec, ds)?;
        let mut csv = String::from("id,reference,hypothesis,tokens_emitted,terminated_by,substitutions,deletions,insertions,reference_words,wer\n");
        let mut plot = String::new();
        for (i, c) in report.clips.iter().enumerate() {
            let b = c.breakdown;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&c.id),
                csv_field(&c.reference),
                csv_field(&c.hypothesis),
                c.tokens_emitted,
                serde_json::to_value(c.terminated_by)?.as_str().unwrap_or_default(),
                b.substitutions,
                b.deletions,
                b.insertions,
                b.reference_words,
                b.wer
            ));
            plot.push_str(&serde_json::json!({"x": i, "series": "wer", "y": b.wer}).to_string());
            plot.push('\n');
        }
        if !report.clips.is_empty() {
            let t = report.total;
            csv.push_str(&format!(
                "TOTAL,,,,,{},{},{},{},{}\n",
                t.substitutions, t.deletions, t.insertions, t.reference_words, t.wer
            ));
        }
        Ok(HarnessOutput {
            name: self.name(),
            csv,
            plot_jsonl: plot,
            json: serde_json::to_value(&report)?,
        })
    }
}

struct DurationHarness;

impl Harness for DurationHarness {
    fn name(&self) -> &'static str {
        "wer-by-duration"
    }
    fn describe(&self) -> &'static str {
        "corpus WER per clip-duration bin"
    }
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput> {
        let rec = need(inputs.recognizer, self.name(), "a model")?;
        let ds = need(inputs.dataset, self.name(), "a dataset")?;
        sweep_output(self.name(), wer_by_duration(rec, ds, &inputs.bins_s)?)
    }
}

struct GainHarness;

impl Harness for GainHarness {
    fn name(&self) -> &'static str {
        "gain-sweep"
    }
    fn describe(&self) -> &'static str {
        "corpus WER as input gain varies"
    }
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput> {
        let rec = need(inputs.recognizer, self.name(), "a model")?;
        let ds = need(inputs.dataset, self.name(), "a dataset")?;
        sweep_output(self.name(), gain_sweep(rec, ds, &inputs.gains_db)?)
    }
}

struct SnrHarness;

impl Harness for SnrHarness {
    fn name(&self) -> &'static str {
        "snr-sweep"
    }
    fn describe(&self) -> &'static str {
        "corpus WER as additive noise increases"
    }
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput> {
        let rec = need(inputs.recognizer, self.name(), "a model")?;
        let ds = need(inputs.dataset, self.name(), "a dataset")?;
        let noise = need(inputs.noise, self.name(), "a noise clip")?;
        sweep_output(self.name(), snr_sweep(rec, ds, noise, &inputs.snrs_db)?)
    }
}

struct FlopsHarness;

impl Harness for FlopsHarness {
    fn name(&self) -> &'static str {
        "flops-compare"
    }
    fn describe(&self) -> &'static str {
        "analytic MACs and speed-up against a reference shape"
    }
    fn run(&self, inputs: &HarnessInputs<'_>) -> Result<HarnessOutput> {
        let req = need(inputs.flops.as_ref(), self.name(), "flops settings")?;
        let mut table: FlopsTable = compare_flops(&req.configs, &req.reference, &req.durations_s, req.out_tokens_per_s)?;
        if req.time_forward {
            table = table.with_timing(&req.configs, req.seed)?;
        }
        Ok(HarnessOutput {
            name: self.name(),
            csv: table.to_csv(),
            plot_jsonl: table.to_plot_jsonl(),
            json: serde_json::to_value(&table)?,
        })
    }
}

#[derive(Default)]
pub struct HarnessRegistry {
    harnesses: BTreeMap<&'static str, Arc<dyn Harness>>,
}

impl HarnessRegistry {
    pub fn with_builtins() -> Self {
        let mut r = HarnessRegistry::default();
        r.register(Arc::new(WerHarness));
        r.register(Arc::new(DurationHarness));
        r.register(Arc::new(GainHarness));
        r.register(Arc::new(SnrHarness));
        r.register(Arc::new(FlopsHarness));
        r
    }

    pub fn register(&mut self, harness: Arc<dyn Harness>) {
        self.harnesses.insert(harness.name(), harness);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Harness>> {
        self.harnesses.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "harness",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.harnesses.keys().copied().collect()
    }
}

pub fn registry() -> &'static HarnessRegistry {
    static REGISTRY: OnceLock<HarnessRegistry> = OnceLock::new();
    REGISTRY.get_or_init(HarnessRegistry::with_builtins)
}
