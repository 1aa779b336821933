//! Decoding and evaluation: greedy decoding under a tokens-per-second cap,
//! word error rate, sweeps over duration, gain and SNR, and analytic
//! compute comparisons. Harnesses are registered by name.

pub mod dataset;
pub mod decode;
pub mod flops;
pub mod harness;
pub mod report;
pub mod sweeps;
pub mod synth;
pub mod wer;

pub use dataset::{Dataset, EvalItem};
pub use decode::{
    argmax, decode_all, greedy_decode, token_cap, DecodeResult, DecodeStep, Recognizer, ScriptedRecognizer,
    Termination, Transcriber, TOKENS_PER_SECOND,
};
pub use flops::{compare_flops, FlopsRow, FlopsTable, DEFAULT_DURATIONS_S, DEFAULT_OUT_TOKENS_PER_S};
pub use harness::{registry, wer_report, FlopsRequest, Harness, HarnessInputs, HarnessOutput, HarnessRegistry, WerReport};
pub use report::{Condition, SweepReport};
pub use sweeps::{gain_sweep, snr_sweep, wer_by_duration, DEFAULT_BINS_S, DEFAULT_GAINS_DB, DEFAULT_SNRS_DB};
pub use wer::{align_counts, wer, WerBreakdown};
