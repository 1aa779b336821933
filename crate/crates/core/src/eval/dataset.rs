//! Evaluation datasets: in-memory clips with references, or a manifest of
//! instance records pointing at WAV files.

use std::path::Path;

use crate::audio::{self, AudioClip, LoadOptions};
use crate::datapipe::{manifest, TrainingInstance};
use crate::{Error, Result, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub audio: AudioClip,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub id: String,
    pub items: Vec<EvalItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Loads every record of an instance manifest. Audio paths are resolved
    /// relative to the manifest's directory and cut to `[start_s, end_s)`.
    pub fn from_manifest(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<TrainingInstance> = manifest::read_jsonl(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut items = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let clip = audio::load_wav(base.join(&rec.audio), opts)?;
            items.push(EvalItem {
                id: format!("{}:{i}", rec.audio),
                audio: cut(&clip, rec.start_s, rec.end_s)?,
                reference: rec.label.clone(),
            });
        }
        Ok(Dataset {
            id: path.display().to_string(),
            items,
        })
    }
}

fn cut(clip: &AudioClip, start_s: f64, end_s: f64) -> Result<AudioClip> {
    let rate = f64::from(SAMPLE_RATE);
    let a = (start_s * rate).round().max(0.0) as usize;
    let b = ((end_s * rate).round() as usize).min(clip.len());
    if a >= b {
        return Err(Error::Argument(format!("empty span [{start_s}, {end_s}) in a {} s clip", clip.duration_s())));
    }
    AudioClip::new(clip.samples()[a..b].to_vec())
}
