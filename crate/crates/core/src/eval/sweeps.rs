//! WER sweeps over clip duration, input gain and additive-noise SNR.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::dataset::Dataset;
use super::decode::{greedy_decode, Recognizer};
use super::report::{Condition, SweepReport};
use super::wer::{wer, WerBreakdown};
use crate::audio::{apply_gain, mix_at_snr, AudioClip};
use crate::{Error, Result};

pub const DEFAULT_BINS_S: [f64; 5] = [10.0, 20.0, 30.0, 40.0, 55.0];
pub const DEFAULT_GAINS_DB: [f64; 10] = [-60.0, -50.0, -40.0, -30.0, -20.0, -10.0, -5.0, 0.0, 5.0, 10.0];
pub const DEFAULT_SNRS_DB: [f64; 10] = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 17.0, 20.0, 25.0, 30.0];

/// Decodes each clip and scores it against its reference, in order.
pub fn score_clips(rec: &dyn Recognizer, clips: &[(&AudioClip, &str)]) -> Result<Vec<WerBreakdown>> {
    clips
        .par_iter()
        .map(|(clip, reference)| Ok(wer(reference, &greedy_decode(rec, clip)?.text)))
        .collect()
}

fn condition(label: String, x: Option<f64>, scores: &[WerBreakdown]) -> Condition {
    Condition {
        label,
        x,
        samples: scores.len(),
        breakdown: (!scores.is_empty()).then(|| WerBreakdown::sum(scores)),
        extra: BTreeMap::new(),
    }
}

fn metadata(dataset: &Dataset, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("dataset".to_string(), dataset.id.clone());
    m.insert("clips".to_string(), dataset.len().to_string());
    for (k, v) in extra {
        m.insert((*k).to_string(), v.clone());
    }
    m
}

fn sorted_grid(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument(format!("{what} grid contains NaN")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Corpus WER per duration bin `[edges[i], edges[i+1])`; the last bin
/// includes its upper edge. Empty bins are kept with a null WER.
pub fn wer_by_duration(rec: &dyn Recognizer, dataset: &Dataset, edges_s: &[f64]) -> Result<SweepReport> {
    let edges = sorted_grid(edges_s, "duration bin")?;
    if edges.len() < 2 {
        return Err(Error::Argument("need at least two bin edges".into()));
    }
    let pairs: Vec<(&AudioClip, &str)> = dataset.items.iter().map(|i| (&i.audio, i.reference.as_str())).collect();
    let scores = score_clips(rec, &pairs)?;
    let nb = edges.len() - 1;
    let mut bins: Vec<Vec<WerBreakdown>> = vec![Vec::new(); nb];
    let mut outside = 0usize;
    for (item, score) in dataset.items.iter().zip(scores) {
        let d = item.audio.duration_s();
        let idx = (0..nb).find(|&b| d >= edges[b] && (d < edges[b + 1] || (b + 1 == nb && d <= edges[b + 1])));
        match idx {
            Some(b) => bins[b].push(score),
            None => outside += 1,
        }
    }
    let conditions = bins
        .iter()
        .enumerate()
        .map(|(b, s)| {
            let mut c = condition(format!("{}-{}", edges[b], edges[b + 1]), Some(edges[b]), s);
            c.extra.insert("hi_s".into(), edges[b + 1]);
            c
        })
        .collect();
    Ok(SweepReport {
        axis: "duration_s".into(),
        conditions,
        metadata: metadata(dataset, &[("outside_bins", outside.to_string())]),
    })
}

/// Corpus WER after scaling every clip by each gain.
pub fn gain_sweep(rec: &dyn Recognizer, dataset: &Dataset, gains_db: &[f64]) -> Result<SweepReport> {
    let gains = sorted_grid(gains_db, "gain")?;
    if let Some(g) = gains.iter().find(|g| !g.is_finite()) {
        return Err(Error::Argument(format!("gain {g} dB is not finite")));
    }
    let mut conditions = Vec::with_capacity(gains.len());
    for &g in &gains {
        let clips: Vec<AudioClip> = dataset.items.iter().map(|i| apply_gain(&i.audio, g)).collect();
        let pairs: Vec<(&AudioClip, &str)> = clips.iter().zip(&dataset.items).map(|(c, i)| (c, i.reference.as_str())).collect();
        conditions.push(condition(format!("{g}"), Some(g), &score_clips(rec, &pairs)?));
    }
    Ok(SweepReport {
        axis: "gain_db".into(),
        conditions,
        metadata: metadata(dataset, &[]),
    })
}

/// Corpus WER with `noise` mixed in at each SNR. `+inf` is the clean
/// condition and is reported last with a null x.
pub fn snr_sweep(rec: &dyn Recognizer, dataset: &Dataset, noise: &AudioClip, snrs_db: &[f64]) -> Result<SweepReport> {
    let snrs = sorted_grid(snrs_db, "snr")?;
    if snrs.contains(&f64::NEG_INFINITY) {
        return Err(Error::Argument("snr of -inf dB is not a condition".into()));
    }
    let mut conditions = Vec::with_capacity(snrs.len());
    for &snr in &snrs {
        if snr.is_infinite() {
            let pairs: Vec<(&AudioClip, &str)> = dataset.items.iter().map(|i| (&i.audio, i.reference.as_str())).collect();
            conditions.push(condition("clean".into(), None, &score_clips(rec, &pairs)?));
            continue;
        }
        let mixed = dataset
            .items
            .iter()
            .map(|i| mix_at_snr(&i.audio, noise, snr))
            .collect::<Result<Vec<_>>>()?;
        let max_err = mixed.iter().map(|m| (m.measured_snr_db - snr).abs()).fold(0.0, f64::max);
        let pairs: Vec<(&AudioClip, &str)> = mixed.iter().zip(&dataset.items).map(|(m, i)| (&m.audio, i.reference.as_str())).collect();
        let mut c = condition(format!("{snr}"), Some(snr), &score_clips(rec, &pairs)?);
        c.extra.insert("max_snr_error_db".into(), max_err);
        conditions.push(c);
    }
    Ok(SweepReport {
        axis: "snr_db".into(),
        conditions,
        metadata: metadata(dataset, &[]),
    })
}
