//! Training-data preparation: subtitle ingestion, text normalization,
//! caption and pseudo-label quality filters, assembly of successive
//! segments into 4–30 s instances, and duration histograms.

pub mod assemble;
pub mod filter;
pub mod histogram;
pub mod manifest;
pub mod pipeline;
pub mod segment;
pub mod srt;
pub mod text;

pub use assemble::{assemble_instances, Assembly, AssemblyStats, TrainingInstance, MAX_GAP_S, MAX_INSTANCE_S, MIN_INSTANCE_S};
pub use filter::{
    filter_captions, filter_pseudolabels, pair_by_overlap, FilterDecision, Reason, DEFAULT_CAPTION_THRESHOLD,
    DEFAULT_LOGPROB_THRESHOLD,
};
pub use histogram::{duration_histogram, Histogram, HistogramBin};
pub use pipeline::{process_file, run_pipeline, FileInput, PipelineConfig, PipelineOutput, PseudoRecord};
pub use segment::{CaptionedSegment, Source};
pub use srt::{parse_srt, SrtDocument};
pub use text::{levenshtein, norm_levenshtein, normalize_bytes, normalize_text};
