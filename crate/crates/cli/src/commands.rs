use std::collections::BTreeMap;
use std::path::Path;

use pse_core::dsp::wav::{read_wav, write_wav, WavFormat};
use pse_core::dsp::DspConfig;
use pse_core::metrics::{evaluate, load_embeddings, measure_rtf, toy_embed, ComplexityReport};
use pse_core::mixer::toy::{write_toy_corpus, ToyCorpus};
use pse_core::mixer::{generate_dataset, CategoryDistribution, DatasetConfig, Manifest, RoleDirs};
use pse_core::model::{Model, ModelConfig, SpeakerEmbedding, VariantKind};
use pse_core::tensor::{load_container, DType};
use pse_core::train::{load_examples, toy_train, CheckpointDir, TrainConfig};
use pse_core::{Error, Result};

use crate::args::{
    BenchArgs, Dist, EmbedArgs, EnhanceArgs, EvalArgs, InspectArgs, MixArgs, Size, ToyCorpusArgs,
    TrainArgs,
};

pub fn enhance(a: &EnhanceArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    if let Some(v) = &a.variant {
        let wanted: VariantKind = v.parse()?;
        if wanted != model.variant() {
            return Err(Error::Usage(format!(
                "--variant {wanted} contradicts the model file, which is {}",
                model.variant()
            )));
        }
    }
    let emb = a.embedding.as_ref().map(SpeakerEmbedding::load).transpose()?;
    model.check_embedding(emb.as_ref())?;
    let audio = read_wav(&a.input)?;
    let out = model.enhance_offline::<f32>(&audio, emb.as_ref())?;
    write_wav(&a.out, &out, WavFormat::Float32)?;
    log::info!("wrote {} ({} samples)", a.out.display(), out.len());
    Ok(())
}

pub fn mix(a: &MixArgs, seed: u64) -> Result<()> {
    let dirs = RoleDirs {
        target: a.target_dir.clone(),
        interferer: a.interf_dir.clone(),
        noise: a.noise_dir.clone(),
    };
    let cfg = DatasetConfig {
        clip_secs: a.clip_secs,
        dist: match a.dist {
            Dist::Gaussian => CategoryDistribution::training(),
            Dist::Uniform => CategoryDistribution::test_recipe(),
        },
        sample_rate: a.sample_rate,
        ..DatasetConfig::new(dirs, a.hours, seed)
    };
    let m = generate_dataset(&cfg, &a.out)?;
    println!("{} clips, manifest {}", m.len(), a.out.join(pse_core::mixer::MANIFEST_FILE).display());
    Ok(())
}

fn embeddings_for(variant: VariantKind, dir: Option<&Path>) -> Result<Option<BTreeMap<String, SpeakerEmbedding>>> {
    match (variant.is_personalized(), dir) {
        (false, _) => Ok(None),
        (true, Some(d)) => load_embeddings(d).map(Some),
        (true, None) => Err(Error::Usage(format!(
            "variant {variant} needs --embeddings-dir"
        ))),
    }
}

pub fn train(a: &TrainArgs, seed: u64) -> Result<()> {
    let variant: VariantKind = a.variant.parse()?;
    let manifest = Manifest::load(&a.manifest)?;
    if manifest.is_empty() {
        return Err(Error::Usage("training manifest is empty".into()));
    }
    let (train_m, val_m) = match &a.val_manifest {
        Some(p) => (manifest, Manifest::load(p)?),
        None => {
            let n_val = (manifest.len() / 10).max(1);
            if manifest.len() <= n_val {
                return Err(Error::Usage(
                    "manifest too small to split off validation clips; pass --val-manifest".into(),
                ));
            }
            let mut train = manifest.clone();
            let val_entries = train.entries.split_off(manifest.len() - n_val);
            let val = Manifest {
                root: manifest.root.clone(),
                entries: val_entries,
            };
            (train, val)
        }
    };
    let embs = embeddings_for(variant, a.embeddings_dir.as_deref())?;
    let train_set = load_examples(&train_m, embs.as_ref())?;
    let val_set = load_examples(&val_m, embs.as_ref())?;
    let dsp = DspConfig::with_sample_rate(train_set[0].noisy.sample_rate);
    let cfg = match a.size {
        Size::Small => ModelConfig::small(dsp, variant),
        Size::Full => ModelConfig::new(dsp, variant),
    }
    .with_seed(seed);
    let model = Model::new(cfg)?;
    let tc = TrainConfig {
        max_epochs: a.epochs,
        lr: a.lr,
        seed,
        ..TrainConfig::default()
    };
    let ckpt = CheckpointDir(a.out.clone());
    let outcome = toy_train(&model, &train_set, &val_set, &tc, Some(&ckpt))?;
    outcome.history.save_csv(a.out.join("history.csv"))?;
    outcome.model.save(a.out.join("model.pdf2"), DType::F32)?;
    let h = &outcome.history;
    println!(
        "epochs {}, train loss {:.5} -> {:.5}, best val {:.5} at epoch {}",
        h.epochs.len(),
        h.initial_train_loss,
        h.final_train_loss().unwrap_or(f64::NAN),
        h.best_val_loss,
        h.best_epoch
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let manifest = Manifest::load(&a.manifest)?;
    let embs = embeddings_for(model.variant(), a.embeddings_dir.as_deref())?.unwrap_or_default();
    let report = evaluate(&model, &manifest, &embs)?;
    report.save(&a.report)?;
    print!("{}", report.summary_text());
    Ok(())
}

pub fn bench(a: &BenchArgs, seed: u64) -> Result<()> {
    let model = match &a.model {
        Some(p) => Model::load(p)?,
        None => Model::new(ModelConfig::new(DspConfig::default(), a.variant.parse()?).with_seed(seed))?,
    };
    let r = measure_rtf(&model, a.secs, a.reps, seed)?;
    println!("{}", ComplexityReport::CSV_HEADER);
    println!("{}", r.csv_row());
    Ok(())
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let audio = read_wav(&a.input)?;
    let emb = toy_embed(&audio.cast())?;
    emb.save_container(&a.out)
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let store = load_container(&a.model)?;
    println!("metadata:");
    for (k, v) in store.metadata() {
        println!("  {k} = {v}");
    }
    println!("tensors:");
    for (name, t) in store.iter() {
        println!("  {name} {:?} {:?}", t.dtype(), t.shape());
    }
    println!("scalars: {}", store.scalar_count());
    if store.meta("variant").is_some() {
        let model = Model::from_store(&store)?;
        println!(
            "model: {} params, {:.3e} MAC/s",
            model.param_count(),
            model.macs_per_second()
        );
    }
    Ok(())
}

pub fn toy_corpus(a: &ToyCorpusArgs, seed: u64) -> Result<()> {
    let c = ToyCorpus {
        utterances_per_speaker: a.utterances,
        utterance_secs: a.utterance_secs,
        ..ToyCorpus::two_speakers(a.sample_rate, seed)
    };
    let paths = write_toy_corpus(&a.out, &c)?;
    println!("target {}", paths.dirs.target.display());
    println!("interferer {}", paths.dirs.interferer.display());
    println!("noise {}", paths.dirs.noise.display());
    for (spk, p) in &paths.enrollment {
        println!("enroll {spk} {}", p.display());
    }
    Ok(())
}
