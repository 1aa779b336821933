use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    HumanCaption,
    PseudoLabel,
}

/// A timestamped span of speech with its transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedSegment {
    pub id: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_logprob: Option<f64>,
}

impl CaptionedSegment {
    pub fn caption(id: u32, start_s: f64, end_s: f64, text: impl Into<String>) -> Self {
        CaptionedSegment {
            id,
            start_s,
            end_s,
            text: text.into(),
            source: Source::HumanCaption,
            avg_logprob: None,
        }
    }

    pub fn pseudo(id: u32, start_s: f64, end_s: f64, text: impl Into<String>, avg_logprob: f64) -> Self {
        CaptionedSegment {
            id,
            start_s,
            end_s,
            text: text.into(),
            source: Source::PseudoLabel,
            avg_logprob: Some(avg_logprob),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Length of the intersection of the two time spans.
    pub fn overlap_s(&self, other: &CaptionedSegment) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }
}
