//! Variable-length speech recognition built from first principles.
//!
//! The crate covers the whole loop around a small RoPE encoder-decoder ASR
//! model that reads raw 16 kHz PCM through a strided convolution stem:
//!
//! - [`numerics`]: dense tensors, a reverse-mode autograd tape, AdamW.
//! - [`model`]: the architecture, presets, parameter and MAC counters.
//! - [`tokenizer`]: byte-level BPE with a reserved special-token block.
//! - [`audio`]: WAV I/O, gain, voiced signal power, SNR mixing.
//! - [`datapipe`]: subtitle ingestion, caption/pseudo-label filtering,
//!   duration-controlled instance assembly.
//! - [`eval`]: capped greedy decoding, WER, and the robustness/compute harnesses.
//! - [`train`]: teacher-forced toy training.

pub mod audio;
pub mod datapipe;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};

/// Sample rate every clip is held at after ingestion.
pub const SAMPLE_RATE: u32 = 16_000;
