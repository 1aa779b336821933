//! End-to-end driver: parse, pair, filter, normalize, assemble, histogram.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_instances, AssemblyStats, TrainingInstance};
use super::filter::{distance_decision, filter_pseudolabels, pair_by_overlap, FilterDecision, Reason};
use super::histogram::{duration_histogram, Histogram};
use super::segment::{CaptionedSegment, Source};
use super::srt::parse_srt;
use super::text::{norm_levenshtein, normalize_text};
use super::{DEFAULT_CAPTION_THRESHOLD, DEFAULT_LOGPROB_THRESHOLD};
use crate::Result;

/// One line of a pseudo-label manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    pub avg_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub caption_threshold: f64,
    pub logprob_threshold: f64,
    pub bin_width_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            caption_threshold: DEFAULT_CAPTION_THRESHOLD,
            logprob_threshold: DEFAULT_LOGPROB_THRESHOLD,
            bin_width_s: 1.0,
        }
    }
}

/// One recording. With captions, each cue is checked against the
/// pseudo-label it overlaps most; without, pseudo-labels are gated on their
/// average log-probability.
#[derive(Debug, Clone, Default)]
pub struct FileInput {
    pub name: String,
    pub audio: String,
    pub srt: Option<Vec<u8>>,
    pub pseudo: Vec<PseudoRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub file: String,
    pub source: Source,
    #[serde(flatten)]
    pub decision: FilterDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileError {
    pub file: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileOutput {
    pub instances: Vec<TrainingInstance>,
    pub decisions: Vec<DecisionRecord>,
    pub stats: AssemblyStats,
    pub overlapping_cues: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub files: usize,
    pub files_failed: usize,
    pub segments_considered: usize,
    pub segments_kept: usize,
    pub overlapping_cues: usize,
    pub assembly: AssemblyStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub instances: Vec<TrainingInstance>,
    pub decisions: Vec<DecisionRecord>,
    pub errors: Vec<FileError>,
    pub histogram: Histogram,
    pub summary: PipelineSummary,
}

pub fn process_file(input: &FileInput, cfg: &PipelineConfig) -> Result<FileOutput> {
    let pseudo: Vec<CaptionedSegment> = input
        .pseudo
        .iter()
        .enumerate()
        .map(|(i, r)| CaptionedSegment::pseudo(i as u32, r.start_s, r.end_s, r.text.clone(), r.avg_logprob))
        .collect();
    let mut out = FileOutput::default();
    let (mut kept, source): (Vec<CaptionedSegment>, Source) = match &input.srt {
        Some(bytes) => {
            let doc = parse_srt(bytes)?;
            out.overlapping_cues = doc.overlapping.len();
            let pairs = pair_by_overlap(&doc.segments, &pseudo);
            let mut kept = Vec::new();
            for (cue, pair) in doc.segments.iter().zip(pairs) {
                let norm = normalize_text(&cue.text);
                let score = pair.map_or(1.0, |j| norm_levenshtein(&norm, &normalize_text(&pseudo[j].text)));
                let d = distance_decision(cue.id, score, cfg.caption_threshold);
                if d.kept {
                    kept.push(CaptionedSegment { text: norm, ..cue.clone() });
                }
                out.decisions.push(record(&input.name, Source::HumanCaption, d));
            }
            (kept, Source::HumanCaption)
        }
        None => {
            let decisions = filter_pseudolabels(&pseudo, cfg.logprob_threshold)?;
            let kept = pseudo
                .iter()
                .zip(&decisions)
                .filter(|(_, d)| d.kept)
                .map(|(s, _)| CaptionedSegment { text: normalize_text(&s.text), ..s.clone() })
                .collect();
            out.decisions = decisions.into_iter().map(|d| record(&input.name, Source::PseudoLabel, d)).collect();
            (kept, Source::PseudoLabel)
        }
    };
    debug_assert!(out.decisions.iter().all(|r| r.source == source));
    kept.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let assembly = assemble_instances(&input.audio, &kept)?;
    out.instances = assembly.instances;
    out.stats = assembly.stats;
    Ok(out)
}

fn record(file: &str, source: Source, decision: FilterDecision) -> DecisionRecord {
    DecisionRecord {
        file: file.to_string(),
        source,
        decision,
    }
}

/// Files are processed in parallel; outputs keep input order. A file that
/// fails is reported in `errors` and skipped.
pub fn run_pipeline(inputs: &[FileInput], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let results: Vec<Result<FileOutput>> = inputs.par_iter().map(|f| process_file(f, cfg)).collect();
    let mut instances = Vec::new();
    let mut decisions = Vec::new();
    let mut errors = Vec::new();
    let mut summary = PipelineSummary {
        files: inputs.len(),
        ..PipelineSummary::default()
    };
    for (input, res) in inputs.iter().zip(results) {
        match res {
            Ok(f) => {
                summary.segments_considered += f.decisions.len();
                summary.segments_kept += f.decisions.iter().filter(|d| d.decision.reason == Reason::Kept).count();
                summary.overlapping_cues += f.overlapping_cues;
                let a = &mut summary.assembly;
                a.segments_in += f.stats.segments_in;
                a.instances += f.stats.instances;
                a.short_runs_dropped += f.stats.short_runs_dropped;
                a.short_run_segments += f.stats.short_run_segments;
                a.long_segments_dropped += f.stats.long_segments_dropped;
                instances.extend(f.instances);
                decisions.extend(f.decisions);
            }
            Err(e) => {
                summary.files_failed += 1;
                errors.push(FileError {
                    file: input.name.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let histogram = duration_histogram(&instances, cfg.bin_width_s)?;
    Ok(PipelineOutput {
        instances,
        decisions,
        errors,
        histogram,
        summary,
    })
}
