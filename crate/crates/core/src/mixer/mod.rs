//! Mixture synthesis: target speech with noise and/or an interfering talker
//! at drawn SNR/SIR levels, and dataset generation with a TSV manifest.

mod dataset;
mod mix;
pub mod toy;

pub use dataset::{
    clip_seed, draw_clip_spec, draw_mix_spec, generate_dataset, synthesize_mixture, CorpusIndex, DatasetConfig,
    Manifest, ManifestEntry, MixSpec, Role, RoleDirs, SourceFile, SourceRef, DEFAULT_CLIP_SECS,
    MANIFEST_FILE, MANIFEST_HEADER,
};
pub use mix::{
    active_power, level_db, mix_sources, scale_for_snr, Category, CategoryDistribution, DrawMode,
    Mixture, SourceAudio, ACTIVITY_FRAME_SECS, ACTIVITY_THRESHOLD_DB, PEAK_LIMIT, SIR_RANGE_DB,
    SNR_RANGE_DB,
};
