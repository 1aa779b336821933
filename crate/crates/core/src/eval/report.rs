//! Sweep reports and their CSV and plot-data renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::wer::WerBreakdown;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    /// Position on the condition axis; `None` for the clean (no-noise) case.
    pub x: Option<f64>,
    pub samples: usize,
    /// `None` when the condition holds no samples.
    pub breakdown: Option<WerBreakdown>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl Condition {
    pub fn wer(&self) -> Option<f64> {
        self.breakdown.map(|b| b.wer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub conditions: Vec<Condition>,
    pub metadata: BTreeMap<String, String>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let extra_keys: Vec<&String> = {
            let mut keys: Vec<&String> = self.conditions.iter().flat_map(|c| c.extra.keys()).collect();
            keys.sort();
            keys.dedup();
            keys
        };
        let mut s = String::from("axis,label,x,samples,substitutions,deletions,insertions,reference_words,wer");
        for k in &extra_keys {
            let _ = write!(s, ",{k}");
        }
        s.push('\n');
        for c in &self.conditions {
            let b = c.breakdown;
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.axis,
                c.label,
                opt(c.x),
                c.samples,
                opt(b.map(|b| b.substitutions)),
                opt(b.map(|b| b.deletions)),
                opt(b.map(|b| b.insertions)),
                opt(b.map(|b| b.reference_words)),
                opt(c.wer()),
            );
            for k in &extra_keys {
                let _ = write!(s, ",{}", opt(c.extra.get(*k)));
            }
            s.push('\n');
        }
        s
    }

    /// `{x, series, y}` per condition; y is null for empty conditions.
    pub fn to_plot_jsonl(&self, series: &str) -> String {
        let mut s = String::new();
        for c in &self.conditions {
            let rec = serde_json::json!({"x": c.x, "label": c.label, "series": series, "y": c.wer()});
            let _ = writeln!(s, "{rec}");
        }
        s
    }
}
