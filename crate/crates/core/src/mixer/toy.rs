//! Synthetic speech-like corpora for self-contained experiments.
//!
//! A toy voice is a harmonic source with a wobbling pitch shaped by three
//! resonances, cut into syllables separated by short pauses. Two voices with
//! different pitch and resonances are easy to tell apart spectrally, which is
//! all the toy experiments need.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::RoleDirs;
use crate::dsp::wav::{write_wav, WavFormat};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub name: String,
    pub f0_hz: f64,
    /// Resonance centre frequencies and bandwidths, Hz.
    pub formants: [(f64, f64); 3],
}

impl VoiceProfile {
    pub fn low() -> Self {
        Self {
            name: "spk_a".into(),
            f0_hz: 110.0,
            formants: [(400.0, 80.0), (1200.0, 120.0), (2600.0, 200.0)],
        }
    }

    pub fn high() -> Self {
        Self {
            name: "spk_b".into(),
            f0_hz: 220.0,
            formants: [(800.0, 100.0), (1800.0, 150.0), (3400.0, 250.0)],
        }
    }

    fn envelope(&self, f: f64, shift: &[f64; 3]) -> f64 {
        let res: f64 = self
            .formants
            .iter()
            .zip(shift)
            .map(|(&(c, bw), s)| {
                let x = (f - c * s) / bw;
                1.0 / (1.0 + x * x)
            })
            .sum();
        res + 0.01
    }
}

/// Speech-like utterance of `secs` seconds, peak 0.5.
pub fn synth_utterance<R: Rng>(voice: &VoiceProfile, secs: f64, sr: u32, rng: &mut R) -> Vec<f64> {
    let n = (secs * sr as f64).round() as usize;
    let fs = sr as f64;
    let mut out = vec![0.0; n];
    let mut pos = rng.gen_range(0..(0.1 * fs) as usize);
    let mut phase = 0.0f64;
    while pos < n {
        let len = ((rng.gen_range(0.15..0.35)) * fs) as usize;
        let end = (pos + len).min(n);
        let base = voice.f0_hz * rng.gen_range(0.92..1.08);
        let rate = rng.gen_range(2.0..5.0);
        let shift = [
            rng.gen_range(0.85..1.15),
            rng.gen_range(0.85..1.15),
            rng.gen_range(0.9..1.1),
        ];
        let n_harm = ((0.45 * fs) / (base * 1.1)).floor() as usize;
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| voice.envelope(k as f64 * base, &shift) / (k as f64).sqrt())
            .collect();
        let gain = rng.gen_range(0.5..1.0);
        for (j, o) in out[pos..end].iter_mut().enumerate() {
            let t = j as f64 / fs;
            let f0 = base * (1.0 + 0.05 * (2.0 * PI * rate * t).sin());
            phase = (phase + 2.0 * PI * f0 / fs) % (2.0 * PI * 1e6);
            let env = (PI * j as f64 / len as f64).sin().powi(2);
            let mut v = 0.0;
            for (k, a) in amps.iter().enumerate() {
                v += a * ((k + 1) as f64 * phase).sin();
            }
            let breath: f64 = StandardNormal.sample(rng);
            *o = gain * env * (v + 0.02 * breath);
        }
        pos = end + ((rng.gen_range(0.03..0.12)) * fs) as usize;
    }
    normalize_peak(&mut out, 0.5);
    out
}

/// Coloured, slowly modulated noise, peak 0.5.
pub fn synth_noise<R: Rng>(secs: f64, sr: u32, rng: &mut R) -> Vec<f64> {
    let n = (secs * sr as f64).round() as usize;
    let fs = sr as f64;
    let pole: f64 = rng.gen_range(0.0..0.97);
    let hum = rng.gen_bool(0.3);
    let hum_f = if rng.gen_bool(0.5) { 50.0 } else { 60.0 };
    let mod_rate = rng.gen_range(0.1..1.0);
    let mod_depth = rng.gen_range(0.0..0.6);
    let mut state = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let w: f64 = StandardNormal.sample(rng);
            state = pole * state + (1.0 - pole) * w;
            let t = i as f64 / fs;
            let mut v = state / (1.0 - pole).sqrt().max(0.1);
            if hum {
                v += 0.3 * (2.0 * PI * hum_f * t).sin() + 0.15 * (6.0 * PI * hum_f * t).sin();
            }
            v * (1.0 - mod_depth * (0.5 + 0.5 * (2.0 * PI * mod_rate * t).sin()))
        })
        .collect();
    normalize_peak(&mut out, 0.5);
    out
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub sample_rate: u32,
    pub target_speakers: Vec<VoiceProfile>,
    pub interferer_speakers: Vec<VoiceProfile>,
    pub utterances_per_speaker: usize,
    pub utterance_secs: f64,
    pub noise_files: usize,
    pub noise_secs: f64,
    /// Length of the per-speaker enrollment utterance.
    pub enroll_secs: f64,
    pub seed: u64,
}

impl ToyCorpus {
    /// Two voices, each usable as target and as interferer.
    pub fn two_speakers(sample_rate: u32, seed: u64) -> Self {
        let voices = vec![VoiceProfile::low(), VoiceProfile::high()];
        Self {
            sample_rate,
            target_speakers: voices.clone(),
            interferer_speakers: voices,
            utterances_per_speaker: 8,
            utterance_secs: 12.0,
            noise_files: 8,
            noise_secs: 12.0,
            enroll_secs: 4.0,
            seed,
        }
    }
}

/// Paths of a written toy corpus.
#[derive(Debug, Clone)]
pub struct ToyCorpusPaths {
    pub dirs: RoleDirs,
    /// One enrollment utterance per target speaker, not used in any mixture.
    pub enrollment: Vec<(String, PathBuf)>,
}

/// Writes `target/<speaker>/`, `interferer/<speaker>/`, `noise/noise/` and
/// `enroll/<speaker>.wav` under `root`.
pub fn write_toy_corpus(root: impl AsRef<Path>, c: &ToyCorpus) -> Result<ToyCorpusPaths> {
    if c.utterance_secs <= 0.0 || c.noise_secs <= 0.0 || c.enroll_secs <= 0.0 {
        return Err(Error::config("toy corpus durations must be positive"));
    }
    let root = root.as_ref();
    let dirs = RoleDirs {
        target: root.join("target"),
        interferer: root.join("interferer"),
        noise: root.join("noise"),
    };
    let sr = c.sample_rate;
    let mut stream = 0u64;
    let mut next_rng = || {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(stream);
        stream += 1;
        rng
    };
    let write = |path: PathBuf, samples: Vec<f64>| -> Result<()> {
        std::fs::create_dir_all(path.parent().expect("nested path"))?;
        let audio = AudioBuffer::new(samples.into_iter().map(|v| v as f32).collect(), sr)?;
        write_wav(path, &audio, WavFormat::Float32)
    };
    for (dir, voices) in [
        (&dirs.target, &c.target_speakers),
        (&dirs.interferer, &c.interferer_speakers),
    ] {
        for v in voices {
            for u in 0..c.utterances_per_speaker {
                let x = synth_utterance(v, c.utterance_secs, sr, &mut next_rng());
                write(dir.join(&v.name).join(format!("utt_{u:03}.wav")), x)?;
            }
        }
    }
    for k in 0..c.noise_files {
        let x = synth_noise(c.noise_secs, sr, &mut next_rng());
        write(dirs.noise.join("noise").join(format!("noise_{k:03}.wav")), x)?;
    }
    let mut enrollment = Vec::new();
    for v in &c.target_speakers {
        let p = root.join("enroll").join(format!("{}.wav", v.name));
        write(p.clone(), synth_utterance(v, c.enroll_secs, sr, &mut next_rng()))?;
        enrollment.push((v.name.clone(), p));
    }
    Ok(ToyCorpusPaths { dirs, enrollment })
}
