//! Greedy assembly of successive segments into training instances.

use serde::{Deserialize, Serialize};

use super::segment::CaptionedSegment;
use crate::{Error, Result};

pub const MIN_INSTANCE_S: f64 = 4.0;
pub const MAX_INSTANCE_S: f64 = 30.0;
pub const MAX_GAP_S: f64 = 2.0;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub audio: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
    pub duration_s: f64,
    pub segments: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub segments_in: usize,
    pub instances: usize,
    pub short_runs_dropped: usize,
    pub short_run_segments: usize,
    pub long_segments_dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembly {
    pub instances: Vec<TrainingInstance>,
    pub stats: AssemblyStats,
}

struct Run<'a> {
    start: f64,
    end: f64,
    members: Vec<&'a CaptionedSegment>,
}

/// Extends the open run with the next segment iff the gap is at most 2 s and
/// the resulting span is at most 30 s. Closed runs shorter than 4 s are
/// dropped; single segments longer than 30 s are dropped.
pub fn assemble_instances(audio: &str, segments: &[CaptionedSegment]) -> Result<Assembly> {
    let mut out = Assembly::default();
    out.stats.segments_in = segments.len();
    let mut run: Option<Run> = None;
    let mut last_start = f64::NEG_INFINITY;
    for seg in segments {
        if !(seg.end_s > seg.start_s) {
            return Err(Error::Contract(format!("segment {} has end {} <= start {}", seg.id, seg.end_s, seg.start_s)));
        }
        if seg.start_s < last_start {
            return Err(Error::Contract(format!("segment {} starts before its predecessor", seg.id)));
        }
        last_start = seg.start_s;
        if seg.duration_s() > MAX_INSTANCE_S + EPS {
            close(&mut out, audio, run.take());
            out.stats.long_segments_dropped += 1;
            continue;
        }
        if let Some(r) = run.as_mut() {
            let end = r.end.max(seg.end_s);
            if seg.start_s - r.end <= MAX_GAP_S + EPS && end - r.start <= MAX_INSTANCE_S + EPS {
                r.end = end;
                r.members.push(seg);
                continue;
            }
        }
        close(&mut out, audio, run.take());
        run = Some(Run {
            start: seg.start_s,
            end: seg.end_s,
            members: vec![seg],
        });
    }
    close(&mut out, audio, run);
    out.stats.instances = out.instances.len();
    Ok(out)
}

fn close(out: &mut Assembly, audio: &str, run: Option<Run>) {
    let Some(run) = run else { return };
    let duration = run.end - run.start;
    if duration + EPS < MIN_INSTANCE_S {
        out.stats.short_runs_dropped += 1;
        out.stats.short_run_segments += run.members.len();
        return;
    }
    let label = run
        .members
        .iter()
        .map(|s| s.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    out.instances.push(TrainingInstance {
        audio: audio.to_string(),
        start_s: run.start,
        end_s: run.end,
        label,
        duration_s: duration,
        segments: run.members.iter().map(|s| s.id).collect(),
    });
}
