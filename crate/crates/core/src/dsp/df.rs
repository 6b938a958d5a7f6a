//! Deep filtering: per-bin complex FIR filters across neighbouring frames.
//!
//! For bins below the deep-filter edge,
//! `Y(k, f) = sum_i taps(k, i, f) * X(k - (N - 1) + i + lookahead, f)`;
//! frames outside the spectrogram read as zero and higher bins pass through.

use num_complex::Complex;

use super::config::DspConfig;
use super::types::ComplexSpectrogram;
use crate::error::{Error, Result};
use crate::real::Real;

/// Filter taps, laid out `[frames][order][df_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfCoeffs<T> {
    pub frames: usize,
    pub order: usize,
    pub df_bins: usize,
    pub taps: Vec<Complex<T>>,
}

impl<T: Real> DfCoeffs<T> {
    pub fn zeros(frames: usize, order: usize, df_bins: usize) -> Self {
        Self {
            frames,
            order,
            df_bins,
            taps: vec![Complex::new(T::zero(), T::zero()); frames * order * df_bins],
        }
    }

    /// Taps that reproduce the input: 1 on the tap addressing frame `k`.
    pub fn identity(frames: usize, order: usize, df_bins: usize, lookahead: usize) -> Result<Self> {
        let centre = identity_tap(order, lookahead)?;
        let mut c = Self::zeros(frames, order, df_bins);
        for k in 0..frames {
            for f in 0..df_bins {
                c.taps[(k * order + centre) * df_bins + f] = Complex::new(T::one(), T::zero());
            }
        }
        Ok(c)
    }

    #[inline]
    pub fn frame(&self, k: usize) -> &[Complex<T>] {
        let n = self.order * self.df_bins;
        &self.taps[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize, f: usize) -> Complex<T> {
        self.taps[(k * self.order + i) * self.df_bins + f]
    }
}

/// Index of the tap that addresses the current frame.
pub fn identity_tap(order: usize, lookahead: usize) -> Result<usize> {
    (order - 1)
        .checked_sub(lookahead)
        .ok_or_else(|| Error::config("lookahead exceeds deep-filter order - 1"))
}

/// Signed frame offset addressed by tap `i`.
#[inline]
pub fn tap_offset(i: usize, order: usize, lookahead: usize) -> isize {
    i as isize - (order as isize - 1) + lookahead as isize
}

pub fn deep_filter<T: Real>(
    spec: &ComplexSpectrogram<T>,
    coeffs: &DfCoeffs<T>,
    cfg: &DspConfig,
) -> Result<ComplexSpectrogram<T>> {
    check_dims(spec, coeffs, cfg)?;
    let (order, df_bins, la) = (coeffs.order, coeffs.df_bins, cfg.lookahead_frames);
    let mut out = spec.clone();
    for k in 0..spec.frames {
        let taps = coeffs.frame(k);
        let y = &mut out.values[k * spec.bins..k * spec.bins + df_bins];
        y.iter_mut().for_each(|v| *v = Complex::new(T::zero(), T::zero()));
        for i in 0..order {
            let src = k as isize + tap_offset(i, order, la);
            if src < 0 || src >= spec.frames as isize {
                continue;
            }
            let x = &spec.frame(src as usize)[..df_bins];
            let t = &taps[i * df_bins..(i + 1) * df_bins];
            for ((yv, &tv), &xv) in y.iter_mut().zip(t).zip(x) {
                *yv += tv * xv;
            }
        }
    }
    Ok(out)
}

fn check_dims<T: Real>(
    spec: &ComplexSpectrogram<T>,
    coeffs: &DfCoeffs<T>,
    cfg: &DspConfig,
) -> Result<()> {
    if coeffs.order != cfg.df_order {
        return Err(Error::domain(format!(
            "filter order {} differs from configured {}",
            coeffs.order, cfg.df_order
        )));
    }
    identity_tap(cfg.df_order, cfg.lookahead_frames)?;
    if coeffs.frames != spec.frames || coeffs.df_bins != cfg.df_bins() || spec.bins < coeffs.df_bins
    {
        return Err(Error::domain(format!(
            "coefficients {}x{}x{} do not match a {}x{} spectrogram",
            coeffs.frames, coeffs.order, coeffs.df_bins, spec.frames, spec.bins
        )));
    }
    if coeffs.taps.len() != coeffs.frames * coeffs.order * coeffs.df_bins {
        return Err(Error::domain("coefficient buffer has the wrong length"));
    }
    Ok(())
}

/// Gradients of a loss with respect to the filter input and the taps.
pub fn deep_filter_backward<T: Real>(
    spec: &ComplexSpectrogram<T>,
    coeffs: &DfCoeffs<T>,
    cfg: &DspConfig,
    grad_out: &ComplexSpectrogram<T>,
) -> Result<(ComplexSpectrogram<T>, DfCoeffs<T>)> {
    check_dims(spec, coeffs, cfg)?;
    let (order, df_bins, la) = (coeffs.order, coeffs.df_bins, cfg.lookahead_frames);
    let bins = spec.bins;
    let mut grad_in = grad_out.clone();
    for k in 0..spec.frames {
        grad_in.values[k * bins..k * bins + df_bins]
            .iter_mut()
            .for_each(|v| *v = Complex::new(T::zero(), T::zero()));
    }
    let mut grad_taps = DfCoeffs::zeros(spec.frames, order, df_bins);
    for k in 0..spec.frames {
        let g = &grad_out.frame(k)[..df_bins];
        for i in 0..order {
            let src = k as isize + tap_offset(i, order, la);
            if src < 0 || src >= spec.frames as isize {
                continue;
            }
            let src = src as usize;
            for f in 0..df_bins {
                let x = spec.values[src * bins + f];
                let t = coeffs.taps[(k * order + i) * df_bins + f];
                grad_taps.taps[(k * order + i) * df_bins + f] += g[f] * x.conj();
                grad_in.values[src * bins + f] += g[f] * t.conj();
            }
        }
    }
    Ok((grad_in, grad_taps))
}
