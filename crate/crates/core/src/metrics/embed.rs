use realfft::RealFftPlanner;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::model::SpeakerEmbedding;

pub const MEL_BANDS: usize = 48;
pub const MIN_ENROLLMENT_SECS: f64 = 2.0;
const WIN_SECS: f64 = 0.025;
const HOP_SECS: f64 = 0.010;
const LOG_FLOOR: f64 = 1e-10;
/// Frames further than this below the loudest frame are left out.
const ACTIVE_RANGE_DB: f64 = 40.0;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale from 0 Hz to Nyquist, as
/// `(first_bin, weights)` per band.
fn mel_filters(sr: u32, nfft: usize) -> Vec<(usize, Vec<f64>)> {
    let top = hz_to_mel(sr as f64 / 2.0);
    let centres: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    let bin_hz = sr as f64 / nfft as f64;
    (0..MEL_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (centres[b], centres[b + 1], centres[b + 2]);
            let first = (lo / bin_hz).ceil() as usize;
            let last = ((hi / bin_hz).floor() as usize).min(nfft / 2);
            let w = (first..=last)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                    .max(0.0)
                })
                .collect();
            (first, w)
        })
        .collect()
}

/// Enrollment embedding from log-mel statistics: per-band mean and standard
/// deviation of 48 log-mel energies and their frame-to-frame deltas over the
/// active frames (25 ms Hann frames, 10 ms hop). Each block of 48 values is
/// centred on its own mean, so level and the common offset drop out, and the
/// result is L2-normalized. A stand-in for a trained speaker encoder, good
/// enough to tell the toy voices apart.
pub fn toy_embed(enrollment: &AudioBuffer<f64>) -> Result<SpeakerEmbedding> {
    if enrollment.duration_secs() < MIN_ENROLLMENT_SECS {
        return Err(Error::domain(format!(
            "enrollment is {:.2} s, at least {MIN_ENROLLMENT_SECS} s required",
            enrollment.duration_secs()
        )));
    }
    let sr = enrollment.sample_rate;
    let win = (WIN_SECS * sr as f64).round() as usize;
    let hop = (HOP_SECS * sr as f64).round() as usize;
    let nfft = win.next_power_of_two();
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
        .collect();
    let filters = mel_filters(sr, nfft);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut input = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let x = &enrollment.samples;
    let mut logmel: Vec<[f64; MEL_BANDS]> = Vec::new();
    let mut frame_energy = Vec::new();
    for start in (0..=x.len() - win).step_by(hop) {
        input.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..win {
            input[n] = window[n] * x[start + n];
        }
        fft.process(&mut input, &mut spec).expect("fft sizes match");
        let mut row = [0.0; MEL_BANDS];
        let mut total = 0.0;
        for (r, (first, w)) in row.iter_mut().zip(&filters) {
            let e: f64 = w.iter().enumerate().map(|(i, g)| g * spec[first + i].norm_sqr()).sum();
            total += e;
            *r = (e + LOG_FLOOR).ln();
        }
        logmel.push(row);
        frame_energy.push(total);
    }
    let loudest = frame_energy.iter().cloned().fold(0.0, f64::max);
    let gate = loudest * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);
    let logmel: Vec<[f64; MEL_BANDS]> = logmel
        .into_iter()
        .zip(&frame_energy)
        .filter(|(_, e)| **e >= gate)
        .map(|(row, _)| row)
        .collect();
    let t = logmel.len();
    let delta = |i: usize, b: usize| {
        let next = logmel[(i + 1).min(t - 1)][b];
        let prev = logmel[i.saturating_sub(1)][b];
        (next - prev) / 2.0
    };
    let mut values = vec![0.0; 4 * MEL_BANDS];
    for b in 0..MEL_BANDS {
        for (slot, series) in [
            (0, (0..t).map(|i| logmel[i][b]).collect::<Vec<_>>()),
            (1, (0..t).map(|i| delta(i, b)).collect()),
        ] {
            let mean = series.iter().sum::<f64>() / t as f64;
            let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            values[slot * MEL_BANDS + b] = mean;
            values[(2 + slot) * MEL_BANDS + b] = var.sqrt();
        }
    }
    for block in values.chunks_mut(MEL_BANDS) {
        let mean = block.iter().sum::<f64>() / MEL_BANDS as f64;
        block.iter_mut().for_each(|v| *v -= mean);
    }
    SpeakerEmbedding::new(values)
}
