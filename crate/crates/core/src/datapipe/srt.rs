//! SubRip subtitle parsing.

use super::segment::CaptionedSegment;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SrtDocument {
    pub segments: Vec<CaptionedSegment>,
    /// Positions of cues that start before the previous cue ends.
    pub overlapping: Vec<usize>,
}

fn cue_err(cue: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "srt",
        location: format!("cue {cue}"),
        detail: detail.into(),
    }
}

/// `HH:MM:SS,mmm` (a period is accepted in place of the comma).
fn parse_timestamp(s: &str) -> Option<f64> {
    let (hms, ms) = s.split_once([',', '.'])?;
    let mut parts = hms.split(':');
    let h: u64 = parts.next()?.trim().parse().ok()?;
    let m: u64 = parts.next()?.parse().ok()?;
    let sec: u64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || sec >= 60 || ms.len() != 3 {
        return None;
    }
    let ms: u64 = ms.parse().ok()?;
    Some(((h * 3600 + m * 60 + sec) * 1000 + ms) as f64 / 1000.0)
}

fn strip_tags(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut depth: Option<char> = None;
    for c in line.chars() {
        match (depth, c) {
            (None, '<') => depth = Some('>'),
            (None, '{') => depth = Some('}'),
            (Some(close), c) if c == close => depth = None,
            (Some(_), _) => {}
            (None, c) => out.push(c),
        }
    }
    out
}

pub fn parse_srt(bytes: &[u8]) -> Result<SrtDocument> {
    let text = String::from_utf8_lossy(bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text).replace("\r\n", "\n").replace('\r', "\n");
    let mut doc = SrtDocument::default();
    let mut lines = text.lines().peekable();
    let mut cue = 0usize;
    loop {
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        let Some(index_line) = lines.next() else { break };
        cue += 1;
        if index_line.trim().parse::<u64>().is_err() {
            return Err(cue_err(cue, format!("expected cue number, found '{}'", index_line.trim())));
        }
        let timing = lines.next().ok_or_else(|| cue_err(cue, "missing timing line"))?;
        let (a, b) = timing.split_once("-->").ok_or_else(|| cue_err(cue, format!("malformed timing line '{timing}'")))?;
        // Anything after the end timestamp is position metadata.
        let b = b.split_whitespace().next().unwrap_or("");
        let start = parse_timestamp(a.trim()).ok_or_else(|| cue_err(cue, format!("malformed timestamp '{}'", a.trim())))?;
        let end = parse_timestamp(b).ok_or_else(|| cue_err(cue, format!("malformed timestamp '{b}'")))?;
        if end <= start {
            return Err(cue_err(cue, format!("end {end} s not after start {start} s")));
        }
        let mut body = Vec::new();
        while let Some(l) = lines.peek() {
            if l.trim().is_empty() {
                break;
            }
            let stripped = strip_tags(l);
            let t = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
            if !t.is_empty() {
                body.push(t);
            }
            lines.next();
        }
        if let Some(prev) = doc.segments.last() {
            if start < prev.end_s {
                doc.overlapping.push(doc.segments.len());
            }
        }
        doc.segments.push(CaptionedSegment::caption(doc.segments.len() as u32, start, end, body.join(" ")));
    }
    Ok(doc)
}
