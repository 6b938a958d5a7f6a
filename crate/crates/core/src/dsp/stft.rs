//! Hann-windowed STFT with weighted overlap-add synthesis.
//!
//! Frame `k` covers the original samples `[k*hop - (win - hop), k*hop + hop)`;
//! samples before the start of the signal read as zero. The forward transform
//! is scaled by `1/fft_size` so that the inverse real FFT of a frame returns
//! the windowed samples directly. Synthesis multiplies by the window again and
//! divides by the periodic sum of squared windows, which makes
//! `istft(stft(x))` an identity everywhere except the final hop.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::config::{DspConfig, StftParams};
use super::types::{AudioBuffer, ComplexSpectrogram};
use crate::error::{Error, Result};
use crate::real::Real;

/// Periodic Hann window, `w[i] = 0.5 - 0.5 cos(2 pi i / n)`.
pub fn hann_periodic<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            T::of(0.5 - 0.5 * x.cos())
        })
        .collect()
}

/// Planned transforms and windows for one framing.
pub struct Stft<T: Real> {
    params: StftParams,
    window: Vec<T>,
    /// `1 / sum_m w[j + m*hop]^2` for `j` in `0..hop`.
    inv_norm: Vec<T>,
    fwd: Arc<dyn RealToComplex<T>>,
    inv: Arc<dyn ComplexToReal<T>>,
    time_buf: Vec<T>,
    freq_buf: Vec<Complex<T>>,
    fwd_scratch: Vec<Complex<T>>,
    inv_scratch: Vec<Complex<T>>,
}

impl<T: Real> Stft<T> {
    pub fn new(params: StftParams) -> Result<Self> {
        params.check()?;
        let mut planner = RealFftPlanner::<T>::new();
        let fwd = planner.plan_fft_forward(params.fft_size);
        let inv = planner.plan_fft_inverse(params.fft_size);
        let window = hann_periodic::<T>(params.win_len);
        let inv_norm = (0..params.hop)
            .map(|j| {
                let s: T = (j..params.win_len)
                    .step_by(params.hop)
                    .map(|i| window[i] * window[i])
                    .sum();
                T::one() / s
            })
            .collect();
        Ok(Self {
            time_buf: fwd.make_input_vec(),
            freq_buf: fwd.make_output_vec(),
            fwd_scratch: fwd.make_scratch_vec(),
            inv_scratch: inv.make_scratch_vec(),
            params,
            window,
            inv_norm,
            fwd,
            inv,
        })
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Windowed forward transform of `win_len` samples into `out` (`bins` long).
    pub fn analyze_frame(&mut self, samples: &[T], out: &mut [Complex<T>]) {
        let StftParams {
            win_len, fft_size, ..
        } = self.params;
        debug_assert_eq!(samples.len(), win_len);
        for ((b, &s), &w) in self.time_buf.iter_mut().zip(samples).zip(&self.window) {
            *b = s * w;
        }
        for b in &mut self.time_buf[win_len..] {
            *b = T::zero();
        }
        self.fwd
            .process_with_scratch(&mut self.time_buf, out, &mut self.fwd_scratch)
            .expect("buffer sizes fixed at construction");
        let scale = T::one() / T::of(fft_size as f64);
        for c in out.iter_mut() {
            *c = *c * scale;
        }
    }

    /// Inverse transform of one frame, multiplied by the synthesis window.
    /// Writes `win_len` samples into `out`.
    pub fn synthesize_frame(&mut self, frame: &[Complex<T>], out: &mut [T]) {
        self.freq_buf.copy_from_slice(frame);
        // c2r ignores the imaginary part of the DC and Nyquist bins.
        let n = self.params.fft_size;
        self.freq_buf[0].im = T::zero();
        if n % 2 == 0 {
            let last = self.freq_buf.len() - 1;
            self.freq_buf[last].im = T::zero();
        }
        self.inv
            .process_with_scratch(&mut self.freq_buf, &mut self.time_buf, &mut self.inv_scratch)
            .expect("buffer sizes fixed at construction");
        for ((o, &t), &w) in out.iter_mut().zip(&self.time_buf).zip(&self.window) {
            *o = t * w;
        }
    }

    /// Analysis of a whole signal; `ceil(len / hop)` frames.
    pub fn forward(&mut self, samples: &[T]) -> Result<ComplexSpectrogram<T>> {
        let StftParams { win_len, hop, .. } = self.params;
        if samples.len() < hop {
            return Err(Error::domain(format!(
                "audio of {} samples is shorter than one hop ({hop})",
                samples.len()
            )));
        }
        let frames = samples.len().div_ceil(hop);
        let lead = win_len - hop;
        let mut padded = vec![T::zero(); lead + frames * hop];
        padded[lead..lead + samples.len()].copy_from_slice(samples);
        let bins = self.params.bins();
        let mut spec = ComplexSpectrogram::zeros(frames, bins);
        for k in 0..frames {
            let seg = &padded[k * hop..k * hop + win_len];
            let out = &mut spec.values[k * bins..(k + 1) * bins];
            self.analyze_frame(seg, out);
        }
        Ok(spec)
    }

    /// Weighted overlap-add synthesis; returns `frames * hop` samples.
    pub fn inverse(&mut self, spec: &ComplexSpectrogram<T>) -> Result<Vec<T>> {
        let StftParams { win_len, hop, .. } = self.params;
        if spec.bins != self.params.bins() {
            return Err(Error::domain(format!(
                "spectrogram has {} bins, framing expects {}",
                spec.bins,
                self.params.bins()
            )));
        }
        let frames = spec.frames;
        let lead = win_len - hop;
        let mut acc = vec![T::zero(); lead + frames * hop];
        let mut frame_out = vec![T::zero(); win_len];
        for k in 0..frames {
            self.synthesize_frame(spec.frame(k), &mut frame_out);
            for (a, &v) in acc[k * hop..k * hop + win_len].iter_mut().zip(&frame_out) {
                *a += v;
            }
        }
        Ok((0..frames * hop)
            .map(|n| acc[n + lead] * self.inv_norm[n % hop])
            .collect())
    }

    /// Adjoint of [`Stft::forward`]: maps a gradient on the spectrogram to a
    /// gradient on the `len` input samples.
    pub fn forward_adjoint(&mut self, grad: &ComplexSpectrogram<T>, len: usize) -> Vec<T> {
        let StftParams {
            win_len,
            hop,
            fft_size,
        } = self.params;
        let lead = win_len - hop;
        let mut padded = vec![T::zero(); lead + grad.frames * hop];
        let scale = T::one() / T::of(fft_size as f64);
        let half = T::of(0.5);
        let last = self.freq_buf.len() - 1;
        for k in 0..grad.frames {
            // Re(sum_f g_f e^{+i theta}) over the half spectrum equals c2r of g
            // with the interior bins halved.
            for (i, (b, &g)) in self.freq_buf.iter_mut().zip(grad.frame(k)).enumerate() {
                let edge = i == 0 || (fft_size % 2 == 0 && i == last);
                *b = if edge {
                    Complex::new(g.re, T::zero())
                } else {
                    g * half
                };
            }
            self.inv
                .process_with_scratch(&mut self.freq_buf, &mut self.time_buf, &mut self.inv_scratch)
                .expect("buffer sizes fixed at construction");
            let seg = &mut padded[k * hop..k * hop + win_len];
            for ((p, &t), &w) in seg.iter_mut().zip(&self.time_buf).zip(&self.window) {
                *p += t * w * scale;
            }
        }
        padded[lead..lead + len].to_vec()
    }

    /// Adjoint of [`Stft::inverse`] followed by truncation to `len` samples.
    pub fn inverse_adjoint(&mut self, grad: &[T], frames: usize) -> ComplexSpectrogram<T> {
        let StftParams {
            win_len,
            hop,
            fft_size,
        } = self.params;
        let lead = win_len - hop;
        let mut acc = vec![T::zero(); lead + frames * hop];
        for (n, &g) in grad.iter().enumerate().take(frames * hop) {
            acc[n + lead] = g * self.inv_norm[n % hop];
        }
        let bins = self.params.bins();
        let mut out = ComplexSpectrogram::zeros(frames, bins);
        let two = T::of(2.0);
        for k in 0..frames {
            for ((b, &a), &w) in self
                .time_buf
                .iter_mut()
                .zip(&acc[k * hop..k * hop + win_len])
                .zip(&self.window)
            {
                *b = a * w;
            }
            for b in &mut self.time_buf[win_len..] {
                *b = T::zero();
            }
            let dst = &mut out.values[k * bins..(k + 1) * bins];
            self.fwd
                .process_with_scratch(&mut self.time_buf, dst, &mut self.fwd_scratch)
                .expect("buffer sizes fixed at construction");
            let last = bins - 1;
            for (i, c) in dst.iter_mut().enumerate() {
                let edge = i == 0 || (fft_size % 2 == 0 && i == last);
                if edge {
                    *c = Complex::new(c.re, T::zero());
                } else {
                    *c = *c * two;
                }
            }
        }
        out
    }
}

pub fn stft<T: Real>(audio: &AudioBuffer<T>, cfg: &DspConfig) -> Result<ComplexSpectrogram<T>> {
    cfg.validate()?;
    if audio.sample_rate != cfg.sample_rate {
        return Err(Error::config(format!(
            "audio at {} Hz, configuration expects {} Hz",
            audio.sample_rate, cfg.sample_rate
        )));
    }
    if audio.is_empty() {
        return Err(Error::domain("empty audio"));
    }
    Stft::new(cfg.stft_params())?.forward(&audio.samples)
}

pub fn istft<T: Real>(spec: &ComplexSpectrogram<T>, cfg: &DspConfig) -> Result<AudioBuffer<T>> {
    cfg.validate()?;
    let samples = Stft::new(cfg.stft_params())?.inverse(spec)?;
    Ok(AudioBuffer {
        samples,
        sample_rate: cfg.sample_rate,
    })
}

/// Hop-by-hop analysis with the same framing as [`Stft::forward`].
pub struct StreamingAnalysis<T: Real> {
    stft: Stft<T>,
    history: Vec<T>,
}

impl<T: Real> StreamingAnalysis<T> {
    pub fn new(params: StftParams) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(params)?,
            history: vec![T::zero(); params.win_len],
        })
    }

    /// Consumes exactly one hop of samples and writes the next frame.
    pub fn push(&mut self, hop: &[T], out: &mut [Complex<T>]) {
        let n = self.stft.params.hop;
        assert_eq!(hop.len(), n, "streaming analysis takes one hop at a time");
        self.history.copy_within(n.., 0);
        let win = self.history.len();
        self.history[win - n..].copy_from_slice(hop);
        self.stft.analyze_frame(&self.history, out);
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|s| *s = T::zero());
    }
}

/// Hop-by-hop overlap-add synthesis matching [`Stft::inverse`]. Output lags the
/// input frames by `win_len - hop` samples.
pub struct StreamingSynthesis<T: Real> {
    stft: Stft<T>,
    acc: Vec<T>,
    frame_buf: Vec<T>,
}

impl<T: Real> StreamingSynthesis<T> {
    pub fn new(params: StftParams) -> Result<Self> {
        Ok(Self {
            stft: Stft::new(params)?,
            acc: vec![T::zero(); params.win_len],
            frame_buf: vec![T::zero(); params.win_len],
        })
    }

    /// Adds one frame and emits the `hop` samples that are now complete.
    pub fn push(&mut self, frame: &[Complex<T>], out: &mut [T]) {
        let hop = self.stft.params.hop;
        self.stft.synthesize_frame(frame, &mut self.frame_buf);
        for (a, &v) in self.acc.iter_mut().zip(&self.frame_buf) {
            *a += v;
        }
        // Emitted blocks start on multiples of hop, so the normalizer phase is j.
        for (j, o) in out.iter_mut().enumerate().take(hop) {
            *o = self.acc[j] * self.stft.inv_norm[j];
        }
        self.acc.copy_within(hop.., 0);
        let len = self.acc.len();
        self.acc[len - hop..].iter_mut().for_each(|a| *a = T::zero());
    }

    pub fn latency(&self) -> usize {
        self.stft.params.win_len - self.stft.params.hop
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|a| *a = T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_has_481_bins() {
        let cfg = DspConfig::default();
        let mut x = vec![0.0f64; 48_000];
        x[0] = 1.0;
        let spec = stft(&AudioBuffer::new(x, 48_000).unwrap(), &cfg).unwrap();
        assert_eq!(spec.bins, 481);
        assert_eq!(spec.frames, 100);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let cfg = DspConfig::default();
        let spec = stft(&AudioBuffer::<f64>::zeros(4800, 48_000), &cfg).unwrap();
        assert!(spec.values.iter().all(|c| c.norm() == 0.0));
        let y = istft(&spec, &cfg).unwrap();
        assert!(y.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn round_trip_white_noise() {
        let cfg = DspConfig::default();
        let x = noise(48_000, 1);
        let spec = stft(&AudioBuffer::new(x.clone(), 48_000).unwrap(), &cfg).unwrap();
        let y = istft(&spec, &cfg).unwrap();
        assert_eq!(y.len(), spec.frames * cfg.hop());
        let interior = x.len() - cfg.hop();
        let err = (0..interior).map(|i| (x[i] - y.samples[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "max err {err}");
    }

    #[test]
    fn one_frame_gives_one_hop() {
        let cfg = DspConfig::default();
        let spec = ComplexSpectrogram::<f64>::zeros(1, cfg.bins());
        assert_eq!(istft(&spec, &cfg).unwrap().len(), cfg.hop());
    }

    #[test]
    fn errors() {
        let cfg = DspConfig::default();
        let wrong_rate = AudioBuffer::<f64>::zeros(1000, 16_000);
        assert!(matches!(stft(&wrong_rate, &cfg), Err(Error::Config(_))));
        let empty = AudioBuffer::<f64>::zeros(0, 48_000);
        assert!(matches!(stft(&empty, &cfg), Err(Error::Domain(_))));
        let bad = ComplexSpectrogram::<f64>::zeros(3, 100);
        assert!(matches!(istft(&bad, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn streaming_matches_offline() {
        let params = StftParams::half_overlap(16_000, 20.0).unwrap();
        let hop = params.hop;
        let x = noise(hop * 40, 3);
        let mut offline = Stft::<f64>::new(params).unwrap();
        let spec = offline.forward(&x).unwrap();
        let y = offline.inverse(&spec).unwrap();

        let mut ana = StreamingAnalysis::<f64>::new(params).unwrap();
        let mut syn = StreamingSynthesis::<f64>::new(params).unwrap();
        let mut frame = vec![Complex::new(0.0, 0.0); params.bins()];
        let mut out = vec![0.0; hop];
        let mut streamed = Vec::new();
        for (k, chunk) in x.chunks(hop).enumerate() {
            ana.push(chunk, &mut frame);
            assert_eq!(frame.as_slice(), spec.frame(k));
            syn.push(&frame, &mut out);
            streamed.extend_from_slice(&out);
        }
        let lat = syn.latency();
        for n in 0..x.len() - lat {
            assert!((streamed[n + lat] - y[n]).abs() < 1e-12);
        }
    }

    /// <A x, g> == <x, A* g> for forward and inverse transforms.
    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        let params = StftParams::half_overlap(8_000, 10.0).unwrap();
        let mut s = Stft::<f64>::new(params).unwrap();
        let len = 333;
        let x = noise(len, 5);
        let fx = s.forward(&x).unwrap();
        let g: Vec<Complex<f64>> = noise(fx.values.len() * 2, 6)
            .chunks(2)
            .map(|c| Complex::new(c[0], c[1]))
            .collect();
        let g = ComplexSpectrogram::from_values(fx.frames, fx.bins, g).unwrap();
        let lhs: f64 = fx.values.iter().zip(&g.values).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        let adj = s.forward_adjoint(&g, len);
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        let y = s.inverse(&g).unwrap();
        let h = noise(y.len(), 7);
        let lhs: f64 = y.iter().zip(&h).map(|(a, b)| a * b).sum();
        let adj = s.inverse_adjoint(&h, g.frames);
        let rhs: f64 = g.values.iter().zip(&adj.values).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
