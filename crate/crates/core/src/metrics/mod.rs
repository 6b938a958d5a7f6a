//! Objective scores (STOI, SI-SDR), per-subset evaluation reports,
//! complexity/real-time-factor benchmarking and a toy enrollment embedder.

mod bench;
mod embed;
mod eval;
mod score;
mod stoi;

pub use bench::{measure_rtf, ComplexityReport};
pub use embed::{toy_embed, MEL_BANDS, MIN_ENROLLMENT_SECS};
pub use eval::{
    check_speakers, evaluate, load_embeddings, ClipScore, EvalReport, SubsetSummary, Summary,
};
pub use score::{si_sdr, SI_SDR_CAP_DB};
pub use stoi::{resample, stoi, STOI_RATE};
