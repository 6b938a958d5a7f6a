//! Signal-processing front end: framing, features, and the two enhancement stages.

mod config;
mod df;
mod erb;
mod stft;
mod types;
pub mod wav;

pub use config::{DspConfig, StftParams, EPS, NORM_TAU_SECONDS};
pub use df::{deep_filter, deep_filter_backward, identity_tap, tap_offset, DfCoeffs};
pub use erb::{
    apply_erb_gains, apply_erb_gains_backward, apply_gains_frame, build_erb_filterbank,
    complex_features, complex_features_frame, erb_features, erb_features_frame, erb_rate,
    erb_rate_to_hz, ComplexFeature, ErbFeature, ErbFilterbank, NormState, MIN_BAND_BINS,
};
pub use stft::{hann_periodic, istft, stft, StreamingAnalysis, StreamingSynthesis, Stft};
pub use types::{AudioBuffer, ComplexSpectrogram, Matrix};
