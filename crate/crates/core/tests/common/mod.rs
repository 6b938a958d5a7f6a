#![allow(dead_code)]

pub mod signals;

use pse_core::dsp::{AudioBuffer, DspConfig};
use pse_core::model::{Model, ModelConfig, SpeakerEmbedding, VariantKind, EMBEDDING_DIM};
use pse_core::train::{example_gradient, example_loss, LossWeights, TrainExample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8 kHz framing with a narrow deep-filter region, for fast gradient checks.
pub fn mini_dsp() -> DspConfig {
    let mut d = DspConfig::with_sample_rate(8000);
    d.erb_bands = 8;
    d.f_df = 1000.0;
    d
}

pub fn mini_model(variant: VariantKind, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(mini_dsp(), variant).with_seed(seed);
    cfg.conv_channels = 2;
    cfg.linear_width = 4;
    cfg.linear_groups = 2;
    cfg.erb_gru_hidden = 4;
    cfg.df_gru_hidden = 4;
    Model::new(cfg).unwrap()
}

pub fn random_embedding(rng: &mut ChaCha8Rng) -> SpeakerEmbedding {
    SpeakerEmbedding::new((0..EMBEDDING_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn mini_example(model: &Model, seed: u64) -> TrainExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = model.dsp().sample_rate;
    let n = 800;
    let clean: Vec<f64> = (0..n)
        .map(|i| 0.3 * (i as f64 * 0.07).sin() * (i as f64 * 0.004).sin())
        .collect();
    let noisy: Vec<f64> = clean.iter().map(|c| c + rng.gen_range(-0.1..0.1)).collect();
    TrainExample {
        noisy: AudioBuffer::new(noisy, sr).unwrap(),
        clean: AudioBuffer::new(clean, sr).unwrap(),
        embedding: model
            .variant()
            .is_personalized()
            .then(|| random_embedding(&mut rng)),
    }
}

pub struct GradCheck {
    /// Coordinates whose gradient stands clear of finite-difference round-off.
    pub resolvable: usize,
    /// Worst relative error over the resolvable coordinates.
    pub worst: f64,
    /// Coordinates below the round-off floor that disagree by more than it.
    pub floor_violations: usize,
    pub kinds: Vec<&'static str>,
}

/// Compares analytic parameter gradients with central differences on
/// `per_tensor` random coordinates of every parameter tensor.
///
/// A central difference of a loss `L` carries absolute round-off of roughly
/// `eps * |L| / h` times the error growth of the loss summation; we take
/// `100 * eps * |L| / h` as the floor. Gradients at least 1000 times larger
/// are checked for relative error; smaller ones must agree within the floor.
pub fn check_gradients(
    model: &Model,
    ex: &TrainExample,
    weights: &LossWeights,
    per_tensor: usize,
    h: f64,
) -> GradCheck {
    let (loss, grad) = example_gradient(model, ex, weights).unwrap();
    let floor = 100.0 * f64::EPSILON * loss.abs() / h;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut r = GradCheck {
        resolvable: 0,
        worst: 0.0,
        floor_violations: 0,
        kinds: Vec::new(),
    };
    for (name, layer) in model.weights().iter() {
        if layer.params.is_empty() {
            continue;
        }
        if !r.kinds.contains(&layer.spec.kind()) {
            r.kinds.push(layer.spec.kind());
        }
        for (pi, p) in layer.params.iter().enumerate() {
            for _ in 0..per_tensor {
                let k = rng.gen_range(0..p.len());
                let eval = |delta: f64| {
                    let mut w = model.weights().clone();
                    w.get_mut(name).unwrap().params[pi][k] += delta;
                    let mut m = model.clone();
                    m.set_weights(w).unwrap();
                    example_loss(&m, ex, weights).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grad.get(name).unwrap().params[pi][k];
                let scale = fd.abs().max(an.abs());
                if scale >= 1e3 * floor {
                    let rel = (fd - an).abs() / scale;
                    if std::env::var("GRAD_DEBUG").is_ok() && rel > 1e-3 {
                        eprintln!("{name}[{pi}][{k}] fd {fd:e} an {an:e} loss {loss:e}");
                    }
                    r.worst = r.worst.max(rel);
                    r.resolvable += 1;
                } else if (fd - an).abs() > floor {
                    r.floor_violations += 1;
                }
            }
        }
    }
    r
}

/// Small two-voice corpus: 3 utterances of 6 s per voice and role, 3 noise files.
pub fn small_toy_corpus(root: &std::path::Path, seed: u64) -> pse_core::mixer::toy::ToyCorpusPaths {
    let mut c = pse_core::mixer::toy::ToyCorpus::two_speakers(16_000, seed);
    c.utterances_per_speaker = 3;
    c.utterance_secs = 6.0;
    c.noise_files = 3;
    c.noise_secs = 6.0;
    c.enroll_secs = 3.0;
    pse_core::mixer::toy::write_toy_corpus(root, &c).unwrap()
}

/// Straight-line active-power level ratio: 20 ms frames, frames within 50 dB
/// of the loudest frame, mean power over their samples.
pub fn oracle_level_db(signal: &[f64], contaminant: &[f64], sr: u32) -> f64 {
    let frame = (sr as f64 * 0.02).round() as usize;
    let power = |x: &[f64]| {
        let mut energies = Vec::new();
        let mut i = 0;
        while i < x.len() {
            let end = (i + frame).min(x.len());
            let mut e = 0.0;
            for v in &x[i..end] {
                e += v * v;
            }
            energies.push((e / (end - i) as f64, end - i));
            i = end;
        }
        let loud = energies.iter().map(|e| e.0).fold(0.0, f64::max);
        let (mut sum, mut n) = (0.0, 0);
        for (p, len) in energies {
            if p >= loud * 1e-5 {
                sum += p * len as f64;
                n += len;
            }
        }
        sum / n as f64
    };
    10.0 * (power(signal) / power(contaminant)).log10()
}
