//! Label-quality gates for caption and pseudo-label sources.

use serde::{Deserialize, Serialize};

use super::segment::CaptionedSegment;
use super::text::{norm_levenshtein, normalize_text};
use crate::{Error, Result};

pub const DEFAULT_CAPTION_THRESHOLD: f64 = 0.3;
pub const DEFAULT_LOGPROB_THRESHOLD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    Kept,
    DistanceAboveThreshold,
    LogprobBelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub segment: u32,
    pub kept: bool,
    pub reason: Reason,
    pub score: f64,
}

/// Keeps a caption iff the normalized distance to its pseudo-label is at
/// most `threshold`. Decision `segment` is the pair's position.
pub fn filter_captions<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)], threshold: f64) -> Result<Vec<FilterDecision>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!("caption threshold {threshold} outside [0, 1]")));
    }
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, (caption, pseudo))| {
            let score = norm_levenshtein(&normalize_text(caption.as_ref()), &normalize_text(pseudo.as_ref()));
            distance_decision(i as u32, score, threshold)
        })
        .collect())
}

pub(crate) fn distance_decision(segment: u32, score: f64, threshold: f64) -> FilterDecision {
    let kept = score <= threshold;
    FilterDecision {
        segment,
        kept,
        reason: if kept { Reason::Kept } else { Reason::DistanceAboveThreshold },
        score,
    }
}

/// Keeps a pseudo-label iff its average log-probability is at least
/// `threshold` (inclusive).
pub fn filter_pseudolabels(segments: &[CaptionedSegment], threshold: f64) -> Result<Vec<FilterDecision>> {
    if threshold.is_nan() {
        return Err(Error::Argument("logprob threshold is NaN".into()));
    }
    segments
        .iter()
        .map(|s| {
            let score = s
                .avg_logprob
                .ok_or_else(|| Error::Contract(format!("segment {} has no avg_logprob", s.id)))?;
            let kept = score >= threshold;
            Ok(FilterDecision {
                segment: s.id,
                kept,
                reason: if kept { Reason::Kept } else { Reason::LogprobBelowThreshold },
                score,
            })
        })
        .collect()
}

/// For each caption, the pseudo-label with the largest time overlap
/// (earliest on ties), or `None` when nothing overlaps.
pub fn pair_by_overlap(captions: &[CaptionedSegment], pseudo: &[CaptionedSegment]) -> Vec<Option<usize>> {
    captions
        .iter()
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (j, p) in pseudo.iter().enumerate() {
                let o = c.overlap_s(p);
                if o > 0.0 && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((j, o));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_threshold() {
        let pairs = [("Hello there", "hello there!"), ("a cat", "a hat")];
        let d = filter_captions(&pairs, 0.0).unwrap();
        assert!(d[0].kept && !d[1].kept);
        assert_eq!(d[1].reason, Reason::DistanceAboveThreshold);
        assert!(filter_captions(&pairs, 1.5).is_err());
    }

    #[test]
    fn logprob_boundary_is_inclusive() {
        let segs = [
            CaptionedSegment::pseudo(0, 0.0, 1.0, "a", -1.0),
            CaptionedSegment::pseudo(1, 1.0, 2.0, "b", -1.0001),
        ];
        let d = filter_pseudolabels(&segs, -1.0).unwrap();
        assert!(d[0].kept && !d[1].kept);
        assert!(filter_pseudolabels(&segs, f64::NEG_INFINITY).unwrap().iter().all(|d| d.kept));
        let caption = [CaptionedSegment::caption(3, 0.0, 1.0, "x")];
        assert!(matches!(filter_pseudolabels(&caption, -1.0), Err(Error::Contract(_))));
    }
}
