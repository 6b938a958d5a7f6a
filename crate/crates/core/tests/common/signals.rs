//! Deterministic test signals and straight-line metric oracles.

use std::f64::consts::PI;

/// pystoi (classic STOI, its Octave-style resampler) on `gated_tones` plus
/// `amp * lcg_noise(seed)`, 3 s at each rate: (rate, amp, seed, score).
pub const PYSTOI_CASES: [(u32, f64, u64, f64); 5] = [
    (10_000, 0.5, 1, 0.7895698626458129),
    (16_000, 0.3, 2, 0.8791644556336341),
    (16_000, 2.0, 3, 0.6959973673236827),
    (48_000, 0.5, 4, 0.8810495054371857),
    (8_000, 0.5, 5, 0.7807118504553574),
];

pub fn lcg_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / 2f64.powi(53) - 0.5
        })
        .collect()
}

pub fn gated_tones(n: usize, sr: u32) -> Vec<f64> {
    let srf = sr as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / srf;
            let x: f64 = [(220.0, 3.0), (660.0, 4.5), (1500.0, 2.0)]
                .iter()
                .map(|&(f, r)| (2.0 * PI * f * t).sin() * (0.5 + 0.5 * (2.0 * PI * r * t).sin()))
                .sum();
            let seg = (i / (sr as usize / 5)) % 3;
            x * if seg == 2 { 0.001 } else { 1.0 }
        })
        .collect()
}

/// Continuous voicing with vibrato and 4 Hz amplitude modulation.
pub fn voiced(n: usize, sr: u32) -> Vec<f64> {
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            phase += 2.0 * PI * 120.0 * (1.0 + 0.05 * (2.0 * PI * 3.0 * t).sin()) / sr as f64;
            let v: f64 = (1..30).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            v * (1.0 - 0.6 * (0.5 + 0.5 * (2.0 * PI * 4.0 * t).sin()))
        })
        .collect()
}

/// Straight-line STOI at 10 kHz: naive DFT, explicit loops, no shared code.
pub fn oracle_stoi(x: &[f64], y: &[f64]) -> f64 {
    let eps = f64::EPSILON;
    let w: Vec<f64> = (0..256).map(|n| 0.5 - 0.5 * (2.0 * PI * (n + 1) as f64 / 257.0).cos()).collect();
    let mut starts = Vec::new();
    let mut s = 0;
    while s + 256 < x.len() {
        starts.push(s);
        s += 128;
    }
    let mut en = Vec::new();
    for &s in &starts {
        let mut e = 0.0;
        for n in 0..256 {
            e += (w[n] * x[s + n]) * (w[n] * x[s + n]);
        }
        en.push(20.0 * (e.sqrt() + eps).log10());
    }
    let mx = en.iter().cloned().fold(f64::MIN, f64::max);
    let keep: Vec<usize> = (0..starts.len()).filter(|&i| en[i] > mx - 40.0).collect();
    let len = (keep.len() - 1) * 128 + 256;
    let mut xs = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for (k, &i) in keep.iter().enumerate() {
        for n in 0..256 {
            xs[k * 128 + n] += w[n] * x[starts[i] + n];
            ys[k * 128 + n] += w[n] * y[starts[i] + n];
        }
    }
    let mut lo = [0usize; 15];
    let mut hi = [0usize; 15];
    for b in 0..15 {
        let fl = 150.0 * 2f64.powf((2.0 * b as f64 - 1.0) / 6.0);
        let fh = 150.0 * 2f64.powf((2.0 * b as f64 + 1.0) / 6.0);
        let mut bl = 0;
        let mut bh = 0;
        for j in 0..257 {
            let f = j as f64 * 10_000.0 / 512.0;
            if (f - fl).abs() < (bl as f64 * 10_000.0 / 512.0 - fl).abs() {
                bl = j;
            }
            if (f - fh).abs() < (bh as f64 * 10_000.0 / 512.0 - fh).abs() {
                bh = j;
            }
        }
        lo[b] = bl;
        hi[b] = bh;
    }
    let tob = |sig: &[f64]| -> Vec<[f64; 15]> {
        let mut out = Vec::new();
        let mut s = 0;
        while s + 256 < sig.len() {
            let mut p = [0.0; 257];
            for (j, pj) in p.iter_mut().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..256 {
                    let ang = -2.0 * PI * (j * n) as f64 / 512.0;
                    re += w[n] * sig[s + n] * ang.cos();
                    im += w[n] * sig[s + n] * ang.sin();
                }
                *pj = re * re + im * im;
            }
            let mut row = [0.0; 15];
            for b in 0..15 {
                row[b] = p[lo[b]..hi[b]].iter().sum::<f64>().sqrt();
            }
            out.push(row);
            s += 128;
        }
        out
    };
    let (xt, yt) = (tob(&xs), tob(&ys));
    let clip = 10f64.powf(15.0 / 20.0);
    let mut total = 0.0;
    let mut count = 0;
    for m in 30..=xt.len() {
        for b in 0..15 {
            let xv: Vec<f64> = (m - 30..m).map(|t| xt[t][b]).collect();
            let yv: Vec<f64> = (m - 30..m).map(|t| yt[t][b]).collect();
            let nx = xv.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = yv.iter().map(|v| v * v).sum::<f64>().sqrt();
            let yp: Vec<f64> = (0..30).map(|i| (yv[i] * nx / (ny + eps)).min(xv[i] * (1.0 + clip))).collect();
            let mxv = xv.iter().sum::<f64>() / 30.0;
            let myv = yp.iter().sum::<f64>() / 30.0;
            let xc: Vec<f64> = xv.iter().map(|v| v - mxv).collect();
            let yc: Vec<f64> = yp.iter().map(|v| v - myv).collect();
            let nxc = xc.iter().map(|v| v * v).sum::<f64>().sqrt() + eps;
            let nyc = yc.iter().map(|v| v * v).sum::<f64>().sqrt() + eps;
            total += (0..30).map(|i| xc[i] / nxc * yc[i] / nyc).sum::<f64>();
            count += 1;
        }
    }
    total / count as f64
}

pub fn oracle_si_sdr(s: &[f64], e: &[f64]) -> f64 {
    let dot: f64 = s.iter().zip(e).map(|(a, b)| a * b).sum();
    let ss: f64 = s.iter().map(|a| a * a).sum();
    let proj: Vec<f64> = s.iter().map(|a| a * dot / ss).collect();
    let num: f64 = proj.iter().map(|a| a * a).sum();
    let den: f64 = e.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (num / den).log10()
}
