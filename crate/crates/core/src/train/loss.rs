//! Training objective: compressed-spectrum loss, its multi-resolution form on
//! waveforms, and a one-sided over-suppression penalty.
//!
//! Gradients with respect to complex values are returned as
//! `dL/dRe + i dL/dIm`.

use num_complex::Complex;

use crate::dsp::{AudioBuffer, ComplexSpectrogram, Stft, StftParams};
use crate::error::{Error, Result};

/// Magnitude compression exponent.
pub const COMPRESSION: f64 = 0.6;

/// Window lengths of the multi-resolution loss, in milliseconds.
pub const MR_WINDOWS_MS: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

/// Below this magnitude the compressed-spectrum gradient is taken as zero.
const GRAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub spec: f64,
    pub mr: f64,
    pub os: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            spec: 1e3,
            mr: 5e2,
            os: 5e2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.spec, self.mr, self.os]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::config("loss weights must be finite and non-negative"))
        }
    }
}

fn check_dims(est: &ComplexSpectrogram<f64>, clean: &ComplexSpectrogram<f64>) -> Result<()> {
    if est.frames != clean.frames || est.bins != clean.bins {
        return Err(Error::domain(format!(
            "estimate is {}x{}, clean is {}x{}",
            est.frames, est.bins, clean.frames, clean.bins
        )));
    }
    if est.values.is_empty() {
        return Err(Error::domain("empty spectrogram"));
    }
    Ok(())
}

/// `|x|^c e^{j arg x}`, with zero mapped to zero.
#[inline]
fn compress(x: Complex<f64>) -> (f64, Complex<f64>) {
    let m = x.norm();
    if m == 0.0 {
        (0.0, Complex::new(0.0, 0.0))
    } else {
        let mc = m.powf(COMPRESSION);
        (mc, x * (mc / m))
    }
}

/// Mean over bins of `(|Y|^c - |S|^c)^2 + |Y_c - S_c|^2`.
pub fn spectral_loss(est: &ComplexSpectrogram<f64>, clean: &ComplexSpectrogram<f64>) -> Result<f64> {
    Ok(spectral_loss_grad(est, clean, false)?.0)
}

/// Spectral loss and, if `with_grad`, its gradient with respect to `est`.
pub fn spectral_loss_grad(
    est: &ComplexSpectrogram<f64>,
    clean: &ComplexSpectrogram<f64>,
    with_grad: bool,
) -> Result<(f64, Option<ComplexSpectrogram<f64>>)> {
    check_dims(est, clean)?;
    let c = COMPRESSION;
    let n = est.values.len() as f64;
    let mut total = 0.0;
    let mut grad = with_grad.then(|| ComplexSpectrogram::zeros(est.frames, est.bins));
    for (i, (&y, &s)) in est.values.iter().zip(&clean.values).enumerate() {
        let (ym, yc) = compress(y);
        let (sm, sc) = compress(s);
        let dm = ym - sm;
        let d = yc - sc;
        total += dm * dm + d.norm_sqr();
        if let Some(g) = grad.as_mut() {
            let m = y.norm();
            if m > GRAD_FLOOR {
                // d|y|^c = c m^(c-2) y; d(m^(c-1) y) = (c-1) m^(c-3) y y^T + m^(c-1) I.
                let mag = y * (2.0 * dm * c * m.powf(c - 2.0));
                let proj = (d.conj() * y).re;
                let cplx = y * (2.0 * (c - 1.0) * m.powf(c - 3.0) * proj) + d * (2.0 * m.powf(c - 1.0));
                g.values[i] = (mag + cplx) / n;
            }
        }
    }
    Ok((total / n, grad))
}

/// Mean over bins of `max(|S|^c - |Y|^c, 0)^2`.
pub fn oversuppression_loss(
    est: &ComplexSpectrogram<f64>,
    clean: &ComplexSpectrogram<f64>,
) -> Result<f64> {
    Ok(oversuppression_loss_grad(est, clean, false)?.0)
}

pub fn oversuppression_loss_grad(
    est: &ComplexSpectrogram<f64>,
    clean: &ComplexSpectrogram<f64>,
    with_grad: bool,
) -> Result<(f64, Option<ComplexSpectrogram<f64>>)> {
    check_dims(est, clean)?;
    let c = COMPRESSION;
    let n = est.values.len() as f64;
    let mut total = 0.0;
    let mut grad = with_grad.then(|| ComplexSpectrogram::zeros(est.frames, est.bins));
    for (i, (&y, &s)) in est.values.iter().zip(&clean.values).enumerate() {
        let m = y.norm();
        let under = (s.norm().powf(c) - m.powf(c)).max(0.0);
        total += under * under;
        if let Some(g) = grad.as_mut() {
            if under > 0.0 && m > GRAD_FLOOR {
                g.values[i] = y * (-2.0 * under * c * m.powf(c - 2.0) / n);
            }
        }
    }
    Ok((total / n, grad))
}

fn check_audio(est: &AudioBuffer<f64>, clean: &AudioBuffer<f64>) -> Result<()> {
    if est.len() != clean.len() || est.sample_rate != clean.sample_rate {
        return Err(Error::domain(format!(
            "estimate has {} samples at {} Hz, clean has {} at {} Hz",
            est.len(),
            est.sample_rate,
            clean.len(),
            clean.sample_rate
        )));
    }
    if est.is_empty() {
        return Err(Error::domain("empty audio"));
    }
    Ok(())
}

/// Sum over [`MR_WINDOWS_MS`] of the spectral loss between re-analyzed signals.
pub fn multires_loss(est: &AudioBuffer<f64>, clean: &AudioBuffer<f64>) -> Result<f64> {
    Ok(multires_loss_with(est, clean, &MR_WINDOWS_MS, false)?.0)
}

/// Multi-resolution loss over arbitrary window lengths, optionally with the
/// gradient with respect to the estimate's samples.
pub fn multires_loss_with(
    est: &AudioBuffer<f64>,
    clean: &AudioBuffer<f64>,
    windows_ms: &[f64],
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_audio(est, clean)?;
    let mut total = 0.0;
    let mut grad = with_grad.then(|| vec![0.0; est.len()]);
    for &ms in windows_ms {
        let mut st = Stft::new(StftParams::half_overlap(est.sample_rate, ms)?)?;
        let y = st.forward(&est.samples)?;
        let s = st.forward(&clean.samples)?;
        let (l, g) = spectral_loss_grad(&y, &s, with_grad)?;
        total += l;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            for (a, v) in acc.iter_mut().zip(st.forward_adjoint(&g, est.len())) {
                *a += v;
            }
        }
    }
    Ok((total, grad))
}

/// Individual terms and weighted total of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub spec: f64,
    pub mr: f64,
    pub os: f64,
    pub total: f64,
}

/// `w.spec * L_spec + w.mr * L_mr + w.os * L_os`.
pub fn combined_loss(
    est: &ComplexSpectrogram<f64>,
    clean: &ComplexSpectrogram<f64>,
    est_audio: &AudioBuffer<f64>,
    clean_audio: &AudioBuffer<f64>,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let spec = spectral_loss(est, clean)?;
    let os = oversuppression_loss(est, clean)?;
    let mr = multires_loss(est_audio, clean_audio)?;
    Ok(LossBreakdown {
        spec,
        mr,
        os,
        total: w.spec * spec + w.mr * mr + w.os * os,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: Complex<f64>) -> ComplexSpectrogram<f64> {
        ComplexSpectrogram::from_values(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn hand_evaluable_cases() {
        let zero = one(Complex::new(0.0, 0.0));
        let unit = one(Complex::new(0.6, 0.8));
        assert_eq!(spectral_loss(&unit, &zero).unwrap(), 2.0);
        assert_eq!(spectral_loss(&unit, &unit).unwrap(), 0.0);
        assert_eq!(oversuppression_loss(&zero, &unit).unwrap(), 1.0);
        assert_eq!(oversuppression_loss(&unit, &zero).unwrap(), 0.0);
    }

    fn fd_check(f: impl Fn(&ComplexSpectrogram<f64>) -> f64, g: &ComplexSpectrogram<f64>, at: &ComplexSpectrogram<f64>) {
        let h = 1e-6;
        for i in 0..at.values.len() {
            for (k, dir) in [Complex::new(h, 0.0), Complex::new(0.0, h)].into_iter().enumerate() {
                let mut p = at.clone();
                p.values[i] += dir;
                let mut m = at.clone();
                m.values[i] -= dir;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                let an = if k == 0 { g.values[i].re } else { g.values[i].im };
                assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1e-3), "bin {i} part {k}: {fd} vs {an}");
            }
        }
    }

    fn pair() -> (ComplexSpectrogram<f64>, ComplexSpectrogram<f64>) {
        let v: Vec<Complex<f64>> = (0..12)
            .map(|i| Complex::new((i as f64 * 1.3).sin(), (i as f64 * 0.7).cos() * 0.5))
            .collect();
        let w: Vec<Complex<f64>> = (0..12)
            .map(|i| Complex::new((i as f64 * 0.4).cos(), (i as f64 * 2.1).sin()))
            .collect();
        (
            ComplexSpectrogram::from_values(3, 4, v).unwrap(),
            ComplexSpectrogram::from_values(3, 4, w).unwrap(),
        )
    }

    #[test]
    fn spectral_gradient_matches_finite_differences() {
        let (y, s) = pair();
        let (_, g) = spectral_loss_grad(&y, &s, true).unwrap();
        fd_check(|e| spectral_loss(e, &s).unwrap(), &g.unwrap(), &y);
    }

    #[test]
    fn oversuppression_gradient_matches_finite_differences() {
        let (y, s) = pair();
        let y = ComplexSpectrogram::from_values(3, 4, y.values.iter().map(|v| v * 0.5).collect()).unwrap();
        let (_, g) = oversuppression_loss_grad(&y, &s, true).unwrap();
        fd_check(|e| oversuppression_loss(e, &s).unwrap(), &g.unwrap(), &y);
    }

    #[test]
    fn multires_gradient_matches_finite_differences() {
        let sr = 8000;
        let n = 300;
        let y = AudioBuffer::new((0..n).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(), sr).unwrap();
        let s = AudioBuffer::new((0..n).map(|i| (i as f64 * 0.11).cos() * 0.2).collect(), sr).unwrap();
        let (_, g) = multires_loss_with(&y, &s, &MR_WINDOWS_MS, true).unwrap();
        let g = g.unwrap();
        // Some samples sit where the loss curves sharply; a coarser step
        // leaves truncation error above the tolerance.
        let h = 1e-8;
        for i in (0..n).step_by(17) {
            let mut p = y.clone();
            p.samples[i] += h;
            let mut m = y.clone();
            m.samples[i] -= h;
            let fd = (multires_loss(&p, &s).unwrap() - multires_loss(&m, &s).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1e-3), "sample {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn losses_reject_mismatched_inputs() {
        let a = ComplexSpectrogram::<f64>::zeros(2, 3);
        let b = ComplexSpectrogram::<f64>::zeros(3, 3);
        assert!(matches!(spectral_loss(&a, &b), Err(Error::Domain(_))));
        let x = AudioBuffer::<f64>::zeros(100, 8000);
        let y = AudioBuffer::<f64>::zeros(90, 8000);
        assert!(matches!(multires_loss(&x, &y), Err(Error::Domain(_))));
    }
}
