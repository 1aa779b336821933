//! RIFF/WAVE reading and writing. PCM16 and 32-bit float, including the
//! extensible header, any channel count (averaged to mono).

use std::path::Path;

use super::AudioClip;
use crate::{Error, Result, SAMPLE_RATE};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Linearly resample other rates to 16 kHz instead of rejecting them.
    pub resample: bool,
}

#[derive(Debug, Clone, Copy)]
struct Format {
    codec: SampleFormat,
    channels: usize,
    sample_rate: u32,
    block_align: usize,
}

fn err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "wav",
        location: format!("byte {offset}"),
        detail: detail.into(),
    }
}

fn u16_at(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| err(at, "unexpected end of data"))
}

fn u32_at(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| err(at, "unexpected end of data"))
}

fn parse_fmt(b: &[u8], at: usize, len: usize) -> Result<Format> {
    if len < 16 {
        return Err(err(at, format!("fmt chunk of {len} bytes, need 16")));
    }
    let mut tag = u16_at(b, at)?;
    let channels = u16_at(b, at + 2)? as usize;
    let sample_rate = u32_at(b, at + 4)?;
    let block_align = u16_at(b, at + 12)? as usize;
    let bits = u16_at(b, at + 14)?;
    if tag == FORMAT_EXTENSIBLE {
        if len < 40 {
            return Err(err(at, "extensible fmt chunk shorter than 40 bytes"));
        }
        // The sub-format GUID starts with the plain format tag.
        tag = u16_at(b, at + 24)?;
    }
    let codec = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        _ => return Err(err(at, format!("unsupported codec: format tag {tag:#06x}, {bits} bits"))),
    };
    if channels == 0 {
        return Err(err(at + 2, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(err(at + 4, "zero sample rate"));
    }
    let width = if codec == SampleFormat::Pcm16 { 2 } else { 4 };
    if block_align != channels * width {
        return Err(err(at + 12, format!("block align {block_align} for {channels} channels of {width} bytes")));
    }
    Ok(Format {
        codec,
        channels,
        sample_rate,
        block_align,
    })
}

/// Decodes a WAV byte buffer to mono samples at the file's native rate.
pub fn decode(bytes: &[u8]) -> Result<(Vec<f32>, u32)> {
    if bytes.len() < 12 {
        return Err(err(bytes.len(), "file shorter than the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(err(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(err(8, "missing WAVE tag"));
    }
    let mut at = 12;
    let mut format: Option<Format> = None;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let len = u32_at(bytes, at + 4)? as usize;
        let body = at + 8;
        match id {
            b"fmt " => {
                if body + len > bytes.len() {
                    return Err(err(at, format!("fmt chunk of {len} bytes runs past end of file")));
                }
                format = Some(parse_fmt(bytes, body, len)?);
            }
            b"data" => {
                let fmt = format.ok_or_else(|| err(at, "data chunk before fmt chunk"))?;
                let end = body + len;
                if end > bytes.len() {
                    return Err(err(at, format!("data chunk of {len} bytes runs past end of file")));
                }
                if !len.is_multiple_of(fmt.block_align) {
                    return Err(err(at, format!("data length {len} not a multiple of block align {}", fmt.block_align)));
                }
                return Ok((read_frames(&bytes[body..end], fmt), fmt.sample_rate));
            }
            _ => {}
        }
        at = body + len + (len & 1);
    }
    Err(err(at.min(bytes.len()), "no data chunk"))
}

fn read_frames(data: &[u8], fmt: Format) -> Vec<f32> {
    let inv = 1.0 / fmt.channels as f64;
    data.chunks_exact(fmt.block_align)
        .map(|frame| {
            let sum: f64 = match fmt.codec {
                SampleFormat::Pcm16 => frame
                    .chunks_exact(2)
                    .map(|s| f64::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0)
                    .sum(),
                SampleFormat::Float32 => frame
                    .chunks_exact(4)
                    .map(|s| f64::from(f32::from_le_bytes([s[0], s[1], s[2], s[3]])))
                    .sum(),
            };
            (sum * inv) as f32
        })
        .collect()
}

/// Linear interpolation onto a 16 kHz grid.
pub fn resample_linear(samples: &[f32], from_rate: u32) -> Vec<f32> {
    if from_rate == SAMPLE_RATE || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = f64::from(from_rate) / f64::from(SAMPLE_RATE);
    let out_len = ((samples.len() as f64) / ratio).round().max(1.0) as usize;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * ratio;
            let i0 = (t.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = t - i0 as f64;
            (f64::from(samples[i0]) * (1.0 - frac) + f64::from(samples[i1]) * frac) as f32
        })
        .collect()
}

pub fn parse(bytes: &[u8], opts: LoadOptions) -> Result<AudioClip> {
    let (samples, rate) = decode(bytes)?;
    let samples = if rate == SAMPLE_RATE {
        samples
    } else if opts.resample {
        resample_linear(&samples, rate)
    } else {
        return Err(err(24, format!("sample rate {rate} Hz, expected {SAMPLE_RATE} (enable resampling to convert)")));
    };
    AudioClip::new(samples)
}

pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, opts)
}

/// `round(x · 32768)` clamped to the i16 range.
pub fn to_pcm16(x: f32) -> i16 {
    (f64::from(x) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Mono WAV bytes at the given rate.
pub fn encode(samples: &[f32], sample_rate: u32, format: SampleFormat) -> Vec<u8> {
    let (tag, width) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 2u16),
        SampleFormat::Float32 => (FORMAT_FLOAT, 4u16),
    };
    let data_len = samples.len() * usize::from(width);
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * u32::from(width)).to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &x in samples {
        match format {
            SampleFormat::Pcm16 => out.extend_from_slice(&to_pcm16(x).to_le_bytes()),
            SampleFormat::Float32 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out
}

pub fn save(path: impl AsRef<Path>, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(clip.samples(), SAMPLE_RATE, format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stereo_pcm16(frames: &[(i16, i16)]) -> Vec<u8> {
        let mut b = encode(&[], SAMPLE_RATE, SampleFormat::Pcm16);
        b[22..24].copy_from_slice(&2u16.to_le_bytes());
        b[28..32].copy_from_slice(&(SAMPLE_RATE * 4).to_le_bytes());
        b[32..34].copy_from_slice(&4u16.to_le_bytes());
        let len = (frames.len() * 4) as u32;
        b[40..44].copy_from_slice(&len.to_le_bytes());
        for (l, r) in frames {
            b.extend_from_slice(&l.to_le_bytes());
            b.extend_from_slice(&r.to_le_bytes());
        }
        b
    }

    #[test]
    fn pcm16_scaling_and_stereo_average() {
        let b = stereo_pcm16(&[(16384, 16384), (to_pcm16(0.2), to_pcm16(0.4))]);
        let (s, rate) = decode(&b).unwrap();
        assert_eq!(rate, SAMPLE_RATE);
        assert_eq!(s[0], 0.5);
        assert!((s[1] - 0.3).abs() <= 1.0 / 32768.0);
    }

    #[test]
    fn float_round_trip_is_exact() {
        let x = vec![0.25f32, -1.5, 1e-7];
        let (s, _) = decode(&encode(&x, SAMPLE_RATE, SampleFormat::Float32)).unwrap();
        assert_eq!(s, x);
    }

    #[test]
    fn extensible_float() {
        let mut b = encode(&[0.75], SAMPLE_RATE, SampleFormat::Float32);
        // Rewrite the fmt chunk as 40-byte WAVE_FORMAT_EXTENSIBLE.
        let data = b.split_off(36);
        b[16..20].copy_from_slice(&40u32.to_le_bytes());
        b[20..22].copy_from_slice(&FORMAT_EXTENSIBLE.to_le_bytes());
        b.extend_from_slice(&22u16.to_le_bytes());
        b.extend_from_slice(&32u16.to_le_bytes());
        b.extend_from_slice(&4u32.to_le_bytes());
        b.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
        b.extend_from_slice(&[0, 0, 0, 0, 0x10, 0, 0x80, 0, 0, 0xAA, 0, 0x38, 0x9B, 0x71]);
        b.extend_from_slice(&data);
        assert_eq!(decode(&b).unwrap().0, vec![0.75]);
    }

    #[test]
    fn errors_carry_offsets() {
        let good = encode(&[0.1, 0.2], SAMPLE_RATE, SampleFormat::Pcm16);
        let loc = |b: &[u8]| match decode(b) {
            Err(Error::Parse { location, .. }) => location,
            other => panic!("expected parse error, got {other:?}"),
        };
        let mut bad = good.clone();
        bad[8] = b'X';
        assert_eq!(loc(&bad), "byte 8");
        let mut bad = good.clone();
        bad[20] = 2; // ADPCM
        assert_eq!(loc(&bad), "byte 20");
        assert_eq!(loc(&good[..good.len() - 1]), "byte 36");
        assert_eq!(loc(&good[..5]), "byte 5");
    }

    #[test]
    fn rate_check_and_resample() {
        let b = encode(&[0.0, 1.0, 0.0, -1.0], 8000, SampleFormat::Float32);
        assert!(matches!(parse(&b, LoadOptions::default()), Err(Error::Parse { .. })));
        let clip = parse(&b, LoadOptions { resample: true }).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.5, 1.0, 0.5, 0.0, -0.5, -1.0, -1.0]);
    }
}
