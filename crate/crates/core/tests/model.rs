use num_complex::Complex;
use pse_core::dsp::{apply_erb_gains, stft, AudioBuffer, DspConfig};
use pse_core::model::{
    enhance_streaming, Model, ModelConfig, SpeakerEmbedding, VariantKind, EMBEDDING_DIM,
};
use pse_core::tensor::{encode, DType};
use pse_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(variant: VariantKind, seed: u64) -> Model {
    Model::new(ModelConfig::small(DspConfig::default(), variant).with_seed(seed)).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, secs: f64, sr: u32) -> AudioBuffer<f32> {
    let n = (secs * sr as f64) as usize;
    let level: f32 = rng.gen_range(0.01..0.5);
    AudioBuffer::new((0..n).map(|_| rng.gen_range(-level..level)).collect(), sr).unwrap()
}

fn embedding(rng: &mut ChaCha8Rng) -> SpeakerEmbedding {
    SpeakerEmbedding::new((0..EMBEDDING_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn emb_for(v: VariantKind, rng: &mut ChaCha8Rng) -> Option<SpeakerEmbedding> {
    v.is_personalized().then(|| embedding(rng))
}

fn max_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn streaming_matches_offline_for_every_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for v in VariantKind::ALL {
        let model = small(v, 3);
        for _ in 0..100 {
            let audio = noise(&mut rng, 3.0, 48_000);
            let emb = emb_for(v, &mut rng);
            let off = model.enhance_offline(&audio, emb.as_ref()).unwrap();
            let st = enhance_streaming(&model, &audio, emb.as_ref()).unwrap();
            assert_eq!(off.len(), audio.len());
            assert_eq!(st.len(), audio.len());
            let d = max_diff(&off.samples, &st.samples);
            assert!(d < 1e-5, "{v}: max difference {d}");
        }
    }
}

#[test]
fn embedding_reaches_only_its_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let audio = noise(&mut rng, 1.0, 48_000).cast::<f64>();
    let (e1, e2) = (embedding(&mut rng), embedding(&mut rng));
    for v in VariantKind::ALL.into_iter().filter(|v| v.is_personalized()) {
        let model = small(v, 8);
        let spec = stft(&audio, model.dsp()).unwrap();
        let a = model.analyze(&spec, Some(&e1)).unwrap();
        let b = model.analyze(&spec, Some(&e2)).unwrap();
        let gains_same = a.gains == b.gains;
        let taps_same = a.taps == b.taps;
        match v {
            VariantKind::DualErb => assert!(taps_same && !gains_same, "{v}"),
            VariantKind::DualDf => assert!(gains_same && !taps_same, "{v}"),
            _ => assert!(!gains_same && !taps_same, "{v}"),
        }
        let ya = model.enhance_offline(&audio, Some(&e1)).unwrap();
        let yb = model.enhance_offline(&audio, Some(&e2)).unwrap();
        let l2: f64 = ya.samples.iter().zip(&yb.samples).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(l2 > 0.0, "{v}");
    }
}

#[test]
fn embedding_must_match_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let audio = noise(&mut rng, 0.2, 48_000);
    let e = embedding(&mut rng);
    let err = small(VariantKind::Unified, 0).enhance_offline(&audio, None).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    let err = small(VariantKind::Baseline, 0).enhance_offline(&audio, Some(&e)).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn zeros_in_zeros_out() {
    let model = small(VariantKind::DualBoth, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = embedding(&mut rng);
    let mut state = model.new_state::<f32>();
    let bins = model.dsp().bins();
    let zero = vec![Complex::new(0.0f32, 0.0); bins];
    let mut out = vec![Complex::new(1.0f32, 1.0); bins];
    for _ in 0..20 {
        model.enhance_frame(&mut state, &zero, Some(&e), &mut out).unwrap();
        assert!(out.iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }
}

#[test]
fn state_reset_and_depth() {
    let model = small(VariantKind::Baseline, 2);
    let mut state = model.new_state::<f64>();
    let d = model.dsp();
    assert_eq!(state.depth(), d.df_order - 1 + d.lookahead_frames);
    assert!(state.is_zero());
    let frame = vec![Complex::new(0.3, -0.1); d.bins()];
    let mut out = frame.clone();
    model.enhance_frame(&mut state, &frame, None, &mut out).unwrap();
    assert!(!state.is_zero());
    state.reset();
    assert!(state.is_zero());
}

#[test]
fn gains_stay_in_unit_range_and_high_bins_pass_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = small(VariantKind::Unified, 4);
    let e = embedding(&mut rng);
    let audio = AudioBuffer::new(
        (0..48_000).map(|_| rng.gen_range(-50.0..50.0)).collect::<Vec<f64>>(),
        48_000,
    )
    .unwrap();
    let spec = stft(&audio, model.dsp()).unwrap();
    let out = model.analyze(&spec, Some(&e)).unwrap();
    assert!(out.gains.data.iter().all(|&g| (0.0..=1.0).contains(&g)));
    let stage1 = apply_erb_gains(&spec, &out.gains, model.filterbank()).unwrap();
    let y = model.enhance_spectrogram(&spec, Some(&e)).unwrap();
    let df = model.dsp().df_bins();
    for k in 0..spec.frames {
        assert_eq!(&y.frame(k)[df..], &stage1.frame(k)[df..]);
    }
}

#[test]
fn passthrough_model_reproduces_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ModelConfig::small(DspConfig::default(), VariantKind::Baseline);
    let model = Model::passthrough(cfg).unwrap();
    let audio = noise(&mut rng, 1.0, 48_000).cast::<f64>();
    let y = model.enhance_offline(&audio, None).unwrap();
    let err = y
        .samples
        .iter()
        .zip(&audio.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn parameter_and_mac_ordering() {
    let dsp = DspConfig::default();
    let count = |v| Model::new(ModelConfig::new(dsp.clone(), v)).unwrap();
    let m: Vec<Model> = VariantKind::ALL.into_iter().map(count).collect();
    let p: Vec<usize> = m.iter().map(Model::param_count).collect();
    let macs: Vec<f64> = m.iter().map(Model::macs_per_second).collect();
    let (base, uni, both, erb, df) = (p[0], p[1], p[2], p[3], p[4]);
    assert!(base <= uni && uni < erb && uni < df && erb <= both && df <= both);
    assert!((erb as f64 - df as f64).abs() / (erb.min(df) as f64) < 0.02);
    assert!(((uni as f64) - 2.31e6).abs() / 2.31e6 < 0.25, "{uni}");
    for dual in &macs[2..] {
        assert!(macs[1] < *dual);
    }
}

#[test]
fn save_load_round_trip_and_schema_check() {
    let model = small(VariantKind::DualErb, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pdf2");
    model.save(&path, DType::F64).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.weights(), model.weights());

    let again = small(VariantKind::DualErb, 6);
    let bytes = |m: &Model| encode(&m.to_store(DType::F32).unwrap()).unwrap();
    assert_eq!(bytes(&model), bytes(&again));
    assert_ne!(bytes(&model), bytes(&small(VariantKind::DualErb, 7)));

    let mut store = model.to_store(DType::F32).unwrap();
    store.set_meta("schema_version", "0");
    assert!(matches!(Model::from_store(&store), Err(Error::Domain(_))));
}
