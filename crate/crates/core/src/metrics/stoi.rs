//! Classic short-time objective intelligibility at a 10 kHz internal rate.

use realfft::RealFftPlanner;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per intermediate-intelligibility segment (384 ms).
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// STOI of `est` against `clean`, both resampled to 10 kHz first.
pub fn stoi(clean: &AudioBuffer<f64>, est: &AudioBuffer<f64>) -> Result<f64> {
    if clean.len() != est.len() || clean.sample_rate != est.sample_rate {
        return Err(Error::domain("stoi needs equal-length signals at one rate"));
    }
    let x = resample(&clean.samples, STOI_RATE, clean.sample_rate);
    let y = resample(&est.samples, STOI_RATE, est.sample_rate);
    let (x, y) = remove_silent_frames(&x, &y)?;
    let xs = third_octave(&x);
    let ys = third_octave(&y);
    let frames = xs.len();
    if frames < SEGMENT {
        return Err(Error::domain(format!(
            "{frames} active frames, stoi needs at least {SEGMENT}"
        )));
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - SEGMENT + 1;
    for m in SEGMENT..=frames {
        for b in 0..BANDS {
            let xv: Vec<f64> = (m - SEGMENT..m).map(|t| xs[t][b]).collect();
            let yv: Vec<f64> = (m - SEGMENT..m).map(|t| ys[t][b]).collect();
            let c = norm(&xv) / (norm(&yv) + EPS);
            let yp: Vec<f64> = yv
                .iter()
                .zip(&xv)
                .map(|(y, x)| (y * c).min(x * (1.0 + clip)))
                .collect();
            total += correlation(&xv, &yp);
        }
    }
    Ok(total / (segments * BANDS) as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let (nx, ny) = (norm(&xc) + EPS, norm(&yc) + EPS);
    xc.iter().zip(&yc).map(|(a, b)| (a / nx) * (b / ny)).sum()
}

/// Hann window of `n` points without the zero endpoints.
fn hanning_inner(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Drops frames of both signals where `x` is more than 40 dB below its
/// loudest frame and overlap-adds the remaining windowed frames.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() <= FRAME {
        return Err(Error::domain("signal shorter than one stoi frame"));
    }
    let w = hanning_inner(FRAME);
    let starts: Vec<usize> = (0..x.len() - FRAME).step_by(HOP).collect();
    let energy = |s: usize| -> f64 {
        let e: f64 = (0..FRAME).map(|n| (w[n] * x[s + n]).powi(2)).sum();
        20.0 * (e.sqrt() + EPS).log10()
    };
    let energies: Vec<f64> = starts.iter().map(|&s| energy(s)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, e)| max - DYN_RANGE_DB - **e < 0.0)
        .map(|(s, _)| *s)
        .collect();
    let len = (kept.len() - 1) * HOP + FRAME;
    let mut xo = vec![0.0; len];
    let mut yo = vec![0.0; len];
    for (k, &s) in kept.iter().enumerate() {
        for n in 0..FRAME {
            xo[k * HOP + n] += w[n] * x[s + n];
            yo[k * HOP + n] += w[n] * y[s + n];
        }
    }
    Ok((xo, yo))
}

/// Per-frame third-octave band magnitudes.
fn third_octave(x: &[f64]) -> Vec<[f64; BANDS]> {
    let bands = band_edges();
    let w = hanning_inner(FRAME);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let mut input = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut out = Vec::new();
    if x.len() <= FRAME {
        return out;
    }
    for s in (0..x.len() - FRAME).step_by(HOP) {
        input.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..FRAME {
            input[n] = w[n] * x[s + n];
        }
        fft.process(&mut input, &mut spec).expect("fft sizes match");
        let mut row = [0.0; BANDS];
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            row[b] = spec[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        }
        out.push(row);
    }
    out
}

/// Bin ranges `[lo, hi)` of the 15 third-octave bands from 150 Hz.
fn band_edges() -> [(usize, usize); BANDS] {
    let freqs: Vec<f64> = (0..=NFFT / 2)
        .map(|j| j as f64 * STOI_RATE as f64 / NFFT as f64)
        .collect();
    let nearest = |f: f64| -> usize {
        let mut best = 0;
        for (j, v) in freqs.iter().enumerate() {
            if (v - f).powi(2) < (freqs[best] - f).powi(2) {
                best = j;
            }
        }
        best
    };
    let mut edges = [(0, 0); BANDS];
    for (k, e) in edges.iter_mut().enumerate() {
        let k = k as f64;
        *e = (
            nearest(MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0)),
            nearest(MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0)),
        );
    }
    edges
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Rational-rate polyphase resampling by `up / down` with a Kaiser-windowed
/// sinc lowpass (60 dB rejection, transition a tenth of the cutoff), normalized
/// to unit DC gain per output phase on average. Output length is
/// `ceil(len * up / down)`; output sample 0 is aligned with input sample 0.
pub fn resample(x: &[f64], up: u32, down: u32) -> Vec<f64> {
    let g = gcd(up as u64, down as u64);
    let (p, q) = ((up as u64 / g) as usize, (down as u64 / g) as usize);
    if p == q {
        return x.to_vec();
    }
    let rejection_db = 60.0;
    let cutoff = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = cutoff / 10.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as usize;
    let beta = 0.1102 * (rejection_db - 8.7);
    let taps = 2 * half + 1;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - half as f64;
            let arg = 2.0 * cutoff * t;
            let sinc = if arg == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
            };
            let r = 2.0 * i as f64 / (taps - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta);
            2.0 * p as f64 * cutoff * sinc * kaiser
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= p as f64 / sum);
    let n_out = (x.len() * p).div_ceil(q);
    (0..n_out)
        .map(|n| {
            // y[n] = sum_k x[k] h[n q - k p + half]
            let centre = n * q + half;
            let k_hi = (centre / p).min(x.len().saturating_sub(1));
            let k_lo = centre.saturating_sub(taps - 1).div_ceil(p);
            (k_lo..=k_hi)
                .filter(|_| !x.is_empty())
                .map(|k| x[k] * h[centre - k * p])
                .sum()
        })
        .collect()
}
