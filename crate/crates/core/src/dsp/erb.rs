//! ERB band partition, log-power band features, and band-gain application.

use num_complex::Complex;

use super::config::{DspConfig, EPS};
use super::types::{ComplexSpectrogram, Matrix};
use crate::error::{Error, Result};
use crate::real::Real;

/// ERB-rate of a frequency in Hz.
pub fn erb_rate(f: f64) -> f64 {
    9.265 * (1.0 + f / (24.7 * 9.16)).ln()
}

/// Inverse of [`erb_rate`].
pub fn erb_rate_to_hz(e: f64) -> f64 {
    24.7 * 9.16 * ((e / 9.265).exp() - 1.0)
}

/// Minimum number of STFT bins per band.
pub const MIN_BAND_BINS: usize = 2;

/// Contiguous rectangular bands over all STFT bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErbFilterbank {
    edges: Vec<usize>,
    band_of_bin: Vec<usize>,
}

impl ErbFilterbank {
    /// Builds a filterbank from explicit band edges (`bands + 1` values, first 0).
    pub fn from_edges(edges: Vec<usize>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0 {
            return Err(Error::config("band edges must start at bin 0"));
        }
        let mut band_of_bin = Vec::with_capacity(*edges.last().unwrap());
        for (b, w) in edges.windows(2).enumerate() {
            if w[1] < w[0] + MIN_BAND_BINS {
                return Err(Error::config(format!(
                    "band {b} spans {} bins, minimum is {MIN_BAND_BINS}",
                    w[1] as isize - w[0] as isize
                )));
            }
            band_of_bin.extend(std::iter::repeat_n(b, w[1] - w[0]));
        }
        Ok(Self { edges, band_of_bin })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn bands(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bins(&self) -> usize {
        *self.edges.last().unwrap()
    }

    pub fn band_range(&self, b: usize) -> std::ops::Range<usize> {
        self.edges[b]..self.edges[b + 1]
    }

    pub fn width(&self, b: usize) -> usize {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn band_of_bin(&self, f: usize) -> usize {
        self.band_of_bin[f]
    }
}

/// Bands uniformly spaced on the ERB-rate scale between 0 Hz and Nyquist,
/// each widened to at least [`MIN_BAND_BINS`] bins.
pub fn build_erb_filterbank(cfg: &DspConfig) -> Result<ErbFilterbank> {
    cfg.validate()?;
    let bins = cfg.bins();
    let bands = cfg.erb_bands;
    if bands * MIN_BAND_BINS > bins {
        return Err(Error::config(format!(
            "{bands} bands of at least {MIN_BAND_BINS} bins do not fit into {bins} bins"
        )));
    }
    let step = erb_rate(cfg.sample_rate as f64 / 2.0) / bands as f64;
    let mut edges: Vec<usize> = (0..=bands)
        .map(|b| (erb_rate_to_hz(b as f64 * step) / cfg.bin_hz()).round() as usize)
        .collect();
    edges[0] = 0;
    edges[bands] = bins;
    for b in 1..bands {
        edges[b] = edges[b].max(edges[b - 1] + MIN_BAND_BINS);
    }
    for b in (1..bands).rev() {
        edges[b] = edges[b].min(edges[b + 1] - MIN_BAND_BINS);
    }
    ErbFilterbank::from_edges(edges)
}

/// Running statistic of an exponential normalizer; one value per band or bin.
///
/// Decay `alpha` per frame. The ERB features track a running mean, the complex
/// features a running mean square; both start from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState<T> {
    alpha: T,
    values: Vec<T>,
    enabled: bool,
}

impl<T: Real> NormState<T> {
    pub fn new(len: usize, alpha: f64) -> Self {
        Self {
            alpha: T::of(alpha),
            values: vec![T::zero(); len],
            enabled: true,
        }
    }

    /// State for ERB features under `cfg`.
    pub fn for_erb(cfg: &DspConfig) -> Self {
        Self::new(cfg.erb_bands, cfg.norm_alpha())
    }

    /// State for complex features under `cfg`.
    pub fn for_complex(cfg: &DspConfig) -> Self {
        Self::new(cfg.df_bins(), cfg.norm_alpha())
    }

    /// Pass-through normalizer.
    pub fn disabled(len: usize) -> Self {
        Self {
            alpha: T::zero(),
            values: vec![T::zero(); len],
            enabled: false,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErbFeature<T> {
    /// `[frames x erb_bands]`
    pub values: Matrix<T>,
    pub normalized: bool,
}

/// Log band power of one frame, mean-normalized in place of `state`.
pub fn erb_features_frame<T: Real>(
    frame: &[Complex<T>],
    fb: &ErbFilterbank,
    state: &mut NormState<T>,
    out: &mut [T],
) {
    let eps = T::of(EPS);
    for (b, o) in out.iter_mut().enumerate().take(fb.bands()) {
        let range = fb.band_range(b);
        let width = T::of(range.len() as f64);
        let power: T = frame[range].iter().map(|c| c.norm_sqr()).sum::<T>() / width;
        let v = (power + eps).log10();
        *o = if state.enabled {
            let m = &mut state.values[b];
            *m = state.alpha * *m + (T::one() - state.alpha) * v;
            v - *m
        } else {
            v
        };
    }
}

pub fn erb_features<T: Real>(
    spec: &ComplexSpectrogram<T>,
    fb: &ErbFilterbank,
    state: &mut NormState<T>,
) -> Result<ErbFeature<T>> {
    if spec.bins != fb.bins() {
        return Err(Error::domain(format!(
            "spectrogram has {} bins, filterbank covers {}",
            spec.bins,
            fb.bins()
        )));
    }
    if state.values.len() != fb.bands() {
        return Err(Error::domain("normalizer length differs from band count"));
    }
    let mut values = Matrix::zeros(spec.frames, fb.bands());
    for k in 0..spec.frames {
        erb_features_frame(spec.frame(k), fb, state, values.row_mut(k));
    }
    Ok(ErbFeature {
        values,
        normalized: state.enabled,
    })
}

/// Lower `df_bins` of the spectrum, each divided by its running RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFeature<T> {
    pub frames: usize,
    pub df_bins: usize,
    pub values: Vec<Complex<T>>,
}

pub fn complex_features_frame<T: Real>(
    frame: &[Complex<T>],
    state: &mut NormState<T>,
    out: &mut [Complex<T>],
) {
    let eps = T::of(EPS);
    for ((o, &x), ms) in out.iter_mut().zip(frame).zip(state.values.iter_mut()) {
        if state.enabled {
            *ms = state.alpha * *ms + (T::one() - state.alpha) * x.norm_sqr();
            *o = x / ms.sqrt().max(eps);
        } else {
            *o = x;
        }
    }
}

pub fn complex_features<T: Real>(
    spec: &ComplexSpectrogram<T>,
    cfg: &DspConfig,
    state: &mut NormState<T>,
) -> Result<ComplexFeature<T>> {
    let df_bins = cfg.df_bins();
    if spec.bins < df_bins || state.values.len() != df_bins {
        return Err(Error::domain(format!(
            "complex features need {df_bins} bins and a matching normalizer"
        )));
    }
    let mut values = vec![Complex::new(T::zero(), T::zero()); spec.frames * df_bins];
    for k in 0..spec.frames {
        complex_features_frame(
            &spec.frame(k)[..df_bins],
            state,
            &mut values[k * df_bins..(k + 1) * df_bins],
        );
    }
    Ok(ComplexFeature {
        frames: spec.frames,
        df_bins,
        values,
    })
}

/// Multiplies every bin of `frame` by the gain of its band.
pub fn apply_gains_frame<T: Real>(
    frame: &[Complex<T>],
    gains: &[T],
    fb: &ErbFilterbank,
    out: &mut [Complex<T>],
) {
    for (b, &g) in gains.iter().enumerate().take(fb.bands()) {
        for f in fb.band_range(b) {
            out[f] = frame[f] * g;
        }
    }
}

pub fn apply_erb_gains<T: Real>(
    spec: &ComplexSpectrogram<T>,
    gains: &Matrix<T>,
    fb: &ErbFilterbank,
) -> Result<ComplexSpectrogram<T>> {
    if spec.bins != fb.bins() || gains.rows != spec.frames || gains.cols != fb.bands() {
        return Err(Error::domain(format!(
            "gains {}x{} do not match a {}x{} spectrogram with {} bands",
            gains.rows,
            gains.cols,
            spec.frames,
            spec.bins,
            fb.bands()
        )));
    }
    if let Some(g) = gains
        .data
        .iter()
        .find(|g| !(**g >= T::zero() && **g <= T::one()))
    {
        return Err(Error::domain(format!("gain {g} outside [0, 1]")));
    }
    let mut out = ComplexSpectrogram::zeros(spec.frames, spec.bins);
    for k in 0..spec.frames {
        apply_gains_frame(spec.frame(k), gains.row(k), fb, out.frame_mut(k));
    }
    Ok(out)
}

/// Gradient of a loss with respect to the gains, given its gradient on the
/// gained spectrogram.
pub fn apply_erb_gains_backward<T: Real>(
    spec: &ComplexSpectrogram<T>,
    fb: &ErbFilterbank,
    grad_out: &ComplexSpectrogram<T>,
) -> Matrix<T> {
    let mut grad = Matrix::zeros(spec.frames, fb.bands());
    for k in 0..spec.frames {
        let x = spec.frame(k);
        let g = grad_out.frame(k);
        for b in 0..fb.bands() {
            grad.data[k * fb.bands() + b] = fb
                .band_range(b)
                .map(|f| g[f].re * x[f].re + g[f].im * x[f].im)
                .sum();
        }
    }
    grad
}
