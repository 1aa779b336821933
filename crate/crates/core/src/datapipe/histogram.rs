//! Instance-duration histograms over [4, 30] s.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::assemble::{TrainingInstance, MAX_INSTANCE_S, MIN_INSTANCE_S};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_s: f64,
    pub hi_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_s: f64,
    pub bins: Vec<HistogramBin>,
}

pub fn duration_histogram(instances: &[TrainingInstance], bin_width_s: f64) -> Result<Histogram> {
    if !(bin_width_s > 0.0) || !bin_width_s.is_finite() {
        return Err(Error::Argument(format!("bin width {bin_width_s} must be positive")));
    }
    let span = MAX_INSTANCE_S - MIN_INSTANCE_S;
    let n = ((span / bin_width_s) - 1e-9).ceil().max(1.0) as usize;
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|i| HistogramBin {
            lo_s: MIN_INSTANCE_S + i as f64 * bin_width_s,
            hi_s: (MIN_INSTANCE_S + (i + 1) as f64 * bin_width_s).min(MAX_INSTANCE_S),
            count: 0,
        })
        .collect();
    for inst in instances {
        let d = inst.duration_s;
        if !(MIN_INSTANCE_S - 1e-9..=MAX_INSTANCE_S + 1e-9).contains(&d) {
            return Err(Error::Contract(format!("instance duration {d} s outside [4, 30]")));
        }
        let i = (((d - MIN_INSTANCE_S) / bin_width_s).floor().max(0.0) as usize).min(n - 1);
        bins[i].count += 1;
    }
    Ok(Histogram { bin_width_s, bins })
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo_s,hi_s,count\n");
        for b in &self.bins {
            let _ = writeln!(s, "{},{},{}", b.lo_s, b.hi_s, b.count);
        }
        s
    }

    /// One `{x, series, y}` record per bin, x at the bin centre.
    pub fn to_plot_jsonl(&self) -> String {
        let mut s = String::new();
        for b in &self.bins {
            let rec = serde_json::json!({"x": (b.lo_s + b.hi_s) / 2.0, "series": "instances", "y": b.count});
            let _ = writeln!(s, "{rec}");
        }
        s
    }

    /// Bins whose count exceeds both neighbours (plateaus count once).
    pub fn local_maxima(&self) -> Vec<usize> {
        let c: Vec<usize> = self.bins.iter().map(|b| b.count).collect();
        let mut peaks = Vec::new();
        let mut i = 0;
        while i < c.len() {
            let mut j = i;
            while j + 1 < c.len() && c[j + 1] == c[i] {
                j += 1;
            }
            let left = i == 0 || c[i - 1] < c[i];
            let right = j + 1 == c.len() || c[j + 1] < c[i];
            if left && right && c[i] > 0 {
                peaks.push(i);
            }
            i = j + 1;
        }
        peaks
    }
}
