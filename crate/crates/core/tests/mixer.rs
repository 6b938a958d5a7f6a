mod common;

use std::path::PathBuf;

use common::{oracle_level_db, small_toy_corpus};
use pse_core::dsp::wav::read_wav;
use pse_core::dsp::AudioBuffer;
use pse_core::metrics::si_sdr;
use pse_core::mixer::{
    clip_seed, draw_clip_spec, draw_mix_spec, generate_dataset, mix_sources, synthesize_mixture,
    Category, CategoryDistribution, CorpusIndex, DatasetConfig, Manifest, RoleDirs, SourceAudio,
    SourceFile, MANIFEST_FILE, PEAK_LIMIT,
};
use pse_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fake_index() -> CorpusIndex {
    let file = |s: &str, i: usize| SourceFile {
        path: PathBuf::from(format!("{s}/{i}.wav")),
        speaker: s.to_string(),
        len: 100_000,
    };
    CorpusIndex {
        sample_rate: 16_000,
        clip_len: 80_000,
        target: (0..4).map(|i| file(["a", "b"][i % 2], i)).collect(),
        interferer: (0..4).map(|i| file(["a", "b", "c", "d"][i], i)).collect(),
        noise: vec![file("noise", 0)],
    }
}

#[test]
fn category_frequencies_and_levels_follow_the_recipe() {
    let index = fake_index();
    let dist = CategoryDistribution::training();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs: Vec<_> = (0..10_000)
        .map(|_| draw_mix_spec(&mut rng, &dist, &index).unwrap())
        .collect();
    for (c, w) in Category::ALL.into_iter().zip(dist.weights) {
        let f = specs.iter().filter(|s| s.category == c).count() as f64 / 1e4;
        assert!((f - w).abs() < 0.02, "{c}: {f}");
    }
    let snrs: Vec<f64> = specs.iter().filter_map(|s| s.snr_db).collect();
    assert!(snrs.iter().all(|v| (-5.0..=35.0).contains(v)));
    let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
    assert!((mean - 15.0).abs() < 1.0, "{mean}");
    for s in &specs {
        assert!(s.sir_db.is_none_or(|v| (-5.0..=25.0).contains(&v)));
        assert_eq!(s.sir_db.is_some(), s.category.has_interferer());
        assert_eq!(s.snr_db.is_some(), s.category.has_noise());
        if let Some(i) = &s.interferer {
            assert_ne!(i.speaker, s.target.speaker);
        }
        assert!(s.target.offset <= 20_000);
    }
    let mut again = ChaCha8Rng::seed_from_u64(11);
    for s in specs.iter().take(100) {
        assert_eq!(&draw_mix_spec(&mut again, &dist, &index).unwrap(), s);
    }
}

#[test]
fn uniform_recipe_draws_equal_thirds() {
    let index = fake_index();
    let dist = CategoryDistribution::test_recipe();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let specs: Vec<_> = (0..10_000)
        .map(|_| draw_mix_spec(&mut rng, &dist, &index).unwrap())
        .collect();
    for c in Category::ALL {
        let f = specs.iter().filter(|s| s.category == c).count() as f64 / 1e4;
        assert!((f - 1.0 / 3.0).abs() < 0.02, "{c}: {f}");
    }
    let sirs: Vec<f64> = specs.iter().filter_map(|s| s.sir_db).collect();
    let mean = sirs.iter().sum::<f64>() / sirs.len() as f64;
    let below_zero = sirs.iter().filter(|v| **v < 0.0).count() as f64 / sirs.len() as f64;
    assert!((mean - 10.0).abs() < 0.5);
    assert!((below_zero - 1.0 / 6.0).abs() < 0.02);
}

#[test]
fn empty_roles_are_usage_errors() {
    let mut index = fake_index();
    index.noise.clear();
    let dist = CategoryDistribution {
        weights: [1.0, 0.0, 0.0],
        ..CategoryDistribution::training()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(draw_mix_spec(&mut rng, &dist, &index), Err(Error::Usage(_))));
    let mut index = fake_index();
    index.interferer.retain(|f| f.speaker == "a");
    index.target.retain(|f| f.speaker == "a");
    let dist = CategoryDistribution {
        weights: [0.0, 1.0, 0.0],
        ..CategoryDistribution::training()
    };
    assert!(matches!(draw_mix_spec(&mut rng, &dist, &index), Err(Error::Usage(_))));
}

fn read64(p: &std::path::Path) -> AudioBuffer<f64> {
    read_wav(p).unwrap().cast()
}

#[test]
fn mixtures_hit_their_levels() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_toy_corpus(dir.path(), 3);
    let index = CorpusIndex::scan(&corpus.dirs, None, 5.0).unwrap();
    assert_eq!((index.target.len(), index.interferer.len(), index.noise.len()), (6, 6, 3));
    let dist = CategoryDistribution::training();
    let mut seen = [false; 3];
    for k in 0..60 {
        let spec = draw_clip_spec(k, &dist, &index).unwrap();
        let m = synthesize_mixture(&spec, index.clip_len).unwrap();
        seen[spec.category as usize] = true;
        assert!(m.mixture.peak() <= PEAK_LIMIT);
        let target = &m.clean.samples;
        let mut signal = target.clone();
        if let (Some(i), Some(sir)) = (&m.interferer, spec.sir_db) {
            let got = oracle_level_db(target, &i.samples, 16_000);
            assert!((got - sir).abs() < 0.1, "sir {got} vs {sir}");
            signal.iter_mut().zip(&i.samples).for_each(|(s, v)| *s += v);
        }
        if let (Some(n), Some(snr)) = (&m.noise, spec.snr_db) {
            let got = oracle_level_db(&signal, &n.samples, 16_000);
            assert!((got - snr).abs() < 0.1, "snr {got} vs {snr}");
        }
        let sum: Vec<f64> = (0..target.len())
            .map(|t| {
                signal[t] + m.noise.as_ref().map_or(0.0, |n| n.samples[t])
            })
            .collect();
        for (a, b) in sum.iter().zip(&m.mixture.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(seen, [true; 3]);
}

#[test]
fn high_snr_mixture_is_close_to_clean() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_toy_corpus(dir.path(), 4);
    let index = CorpusIndex::scan(&corpus.dirs, None, 5.0).unwrap();
    let t = read64(&index.target[0].path);
    let n = read64(&index.noise[0].path);
    let clip = |a: &AudioBuffer<f64>| AudioBuffer::new(a.samples[..index.clip_len].to_vec(), 16_000).unwrap();
    let src = SourceAudio {
        target: clip(&t),
        interferer: None,
        noise: Some(clip(&n)),
    };
    let m = mix_sources(Category::TargetNoise, Some(35.0), None, &src).unwrap();
    assert!(si_sdr(&m.clean, &m.mixture).unwrap() >= 30.0);
    let silent = SourceAudio {
        target: AudioBuffer::zeros(index.clip_len, 16_000),
        ..src
    };
    assert!(matches!(
        mix_sources(Category::TargetNoise, Some(10.0), None, &silent),
        Err(Error::Domain(_))
    ));
}

#[test]
fn dataset_generation_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_toy_corpus(&dir.path().join("corpus"), 5);
    let cfg = DatasetConfig::new(corpus.dirs.clone(), 0.1, 7);
    let m = generate_dataset(&cfg, dir.path().join("a")).unwrap();
    assert_eq!(m.len(), 72);
    let text = std::fs::read_to_string(dir.path().join("a").join(MANIFEST_FILE)).unwrap();
    assert_eq!(text.lines().count(), 73);
    let loaded = Manifest::load(dir.path().join("a").join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.entries, m.entries);
    for e in &m.entries {
        assert!(m.clip_path(e).exists() && m.clean_path(e).exists());
        assert_ne!(Some(&e.target_speaker), e.interferer_speaker.as_ref());
        let mix = read64(&m.clip_path(e));
        assert!(mix.peak() <= PEAK_LIMIT);
    }
    let m2 = generate_dataset(&cfg, dir.path().join("b")).unwrap();
    assert_eq!(m2.entries, m.entries);
    let text2 = std::fs::read_to_string(dir.path().join("b").join(MANIFEST_FILE)).unwrap();
    assert_eq!(text, text2);
    let e = &m.entries[3];
    assert_eq!(
        std::fs::read(m.clip_path(e)).unwrap(),
        std::fs::read(m2.clip_path(e)).unwrap()
    );
    let index = CorpusIndex::scan(&corpus.dirs, None, 5.0).unwrap();
    assert_eq!(e.seed, clip_seed(7, 3));
    let regen = synthesize_mixture(&draw_clip_spec(e.seed, &cfg.dist, &index).unwrap(), index.clip_len).unwrap();
    let mix = read64(&m.clip_path(e));
    for (a, b) in regen.mixture.samples.iter().zip(&mix.samples) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn unreadable_files_are_skipped_and_empty_corpora_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_toy_corpus(dir.path(), 6);
    std::fs::write(corpus.dirs.target.join("spk_a").join("broken.wav"), b"not audio").unwrap();
    let index = CorpusIndex::scan(&corpus.dirs, None, 5.0).unwrap();
    assert_eq!(index.target.len(), 6);
    let too_long = CorpusIndex::scan(&corpus.dirs, None, 10.0).unwrap();
    assert!(too_long.target.is_empty());
    let cfg = DatasetConfig {
        clip_secs: 10.0,
        ..DatasetConfig::new(corpus.dirs.clone(), 0.01, 1)
    };
    assert!(matches!(
        generate_dataset(&cfg, dir.path().join("out")),
        Err(Error::Usage(_))
    ));
    let missing = RoleDirs {
        noise: dir.path().join("nope"),
        ..corpus.dirs
    };
    assert!(matches!(CorpusIndex::scan(&missing, None, 5.0), Err(Error::Usage(_))));
}
