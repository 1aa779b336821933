//! Analytic compute comparison between model shapes across clip durations.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::frontend::{for_kind, seconds_to_samples};
use crate::model::{count_flops, Model, ModelConfig};
use crate::{Error, Result};

pub const DEFAULT_OUT_TOKENS_PER_S: f64 = 3.0;
pub const DEFAULT_DURATIONS_S: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsRow {
    pub config: String,
    pub frontend: String,
    pub duration_s: f64,
    pub out_tokens: usize,
    pub encoder_frames: usize,
    pub frontend_macs: u64,
    pub transformer_macs: u64,
    pub total_macs: u64,
    /// Transformer MACs over the reference's at the same duration.
    pub ratio: f64,
    /// Reference transformer MACs over this row's.
    pub speedup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsTable {
    pub reference: String,
    pub out_tokens_per_s: f64,
    pub rows: Vec<FlopsRow>,
}

/// Tokens emitted for a clip at the given rate.
pub fn out_tokens(duration_s: f64, per_s: f64) -> usize {
    (duration_s * per_s).round() as usize
}

/// MAC table for each `(config, duration)`. Fixed-canvas frontends are
/// padded to their canvas; ratios use the transformer MACs.
pub fn compare_flops(
    configs: &[ModelConfig],
    reference: &ModelConfig,
    durations_s: &[f64],
    out_tokens_per_s: f64,
) -> Result<FlopsTable> {
    if !(out_tokens_per_s >= 0.0) || !out_tokens_per_s.is_finite() {
        return Err(Error::Argument(format!("out_tokens_per_s {out_tokens_per_s} must be finite and non-negative")));
    }
    let mut rows = Vec::with_capacity(configs.len() * durations_s.len());
    for cfg in configs {
        for &d in durations_s {
            let t = out_tokens(d, out_tokens_per_s);
            let fe = for_kind(cfg.frontend);
            let r = count_flops(cfg, d, t, fe.as_ref(), None)?;
            let base = count_flops(reference, d, t, for_kind(reference.frontend).as_ref(), None)?;
            let ratio = r.transformer_total() as f64 / base.transformer_total() as f64;
            rows.push(FlopsRow {
                config: cfg.name.clone(),
                frontend: r.frontend.clone(),
                duration_s: d,
                out_tokens: t,
                encoder_frames: r.encoder_frames,
                frontend_macs: r.frontend_macs,
                transformer_macs: r.transformer_total(),
                total_macs: r.total(),
                ratio,
                speedup: 1.0 / ratio,
                wall_clock_ms: None,
            });
        }
    }
    Ok(FlopsTable {
        reference: reference.name.clone(),
        out_tokens_per_s,
        rows,
    })
}

/// Milliseconds for one stem-plus-encoder pass of a randomly initialized
/// model over `duration_s` of audio. Only stem frontends can be timed.
pub fn time_encoder(config: &ModelConfig, duration_s: f64, seed: u64) -> Result<f64> {
    let model = Model::<f32>::init(config.clone(), seed)?;
    let n = seconds_to_samples(duration_s).max(model.min_samples());
    let audio: Vec<f32> = (0..n).map(|i| ((i as f32) * 0.01).sin() * 0.1).collect();
    let t0 = Instant::now();
    model.encode(&audio)?;
    Ok(t0.elapsed().as_secs_f64() * 1e3)
}

impl FlopsTable {
    /// Fills `wall_clock_ms` for rows whose config uses the conv stem.
    pub fn with_timing(mut self, configs: &[ModelConfig], seed: u64) -> Result<Self> {
        for row in &mut self.rows {
            if let Some(cfg) = configs.iter().find(|c| c.name == row.config && c.frontend == crate::model::FrontendKind::MoonshineStem) {
                row.wall_clock_ms = Some(time_encoder(cfg, row.duration_s, seed)?);
            }
        }
        Ok(self)
    }

    pub fn row(&self, config: &str, duration_s: f64) -> Option<&FlopsRow> {
        self.rows.iter().find(|r| r.config == config && r.duration_s == duration_s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "config,frontend,duration_s,out_tokens,encoder_frames,frontend_macs,transformer_macs,total_macs,ratio,speedup,wall_clock_ms\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
                r.config,
                r.frontend,
                r.duration_s,
                r.out_tokens,
                r.encoder_frames,
                r.frontend_macs,
                r.transformer_macs,
                r.total_macs,
                r.ratio,
                r.speedup,
                r.wall_clock_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
            );
        }
        s
    }

    /// Speed-up over the reference against duration, one series per config.
    pub fn to_plot_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let rec = serde_json::json!({"x": r.duration_s, "series": r.config, "y": r.speedup});
            let _ = writeln!(s, "{rec}");
        }
        s
    }
}
