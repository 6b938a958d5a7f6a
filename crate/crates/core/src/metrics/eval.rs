use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::score::si_sdr;
use super::stoi::stoi;
use crate::dsp::wav::read_wav;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::mixer::{Category, Manifest};
use crate::model::{enhance_streaming, Model, SpeakerEmbedding};

#[derive(Debug, Clone, PartialEq)]
pub struct ClipScore {
    pub clip: String,
    pub category: Category,
    pub stoi: f64,
    pub si_sdr_db: f64,
    /// Scores of the unprocessed mixture.
    pub input_stoi: f64,
    pub input_si_sdr_db: f64,
}

/// Five-number summary plus mean. Quartiles interpolate linearly between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if i + 1 < v.len() {
                v[i] + frac * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSummary {
    pub category: Category,
    pub stoi: Summary,
    pub si_sdr_db: Summary,
    pub input_stoi: Summary,
    pub input_si_sdr_db: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub clips: Vec<ClipScore>,
}

impl EvalReport {
    /// Per-subset aggregates in pn, ps, psn order; empty subsets are omitted.
    pub fn subsets(&self) -> Vec<SubsetSummary> {
        Category::ALL
            .into_iter()
            .filter_map(|c| {
                let rows: Vec<&ClipScore> = self.clips.iter().filter(|s| s.category == c).collect();
                let col = |f: fn(&ClipScore) -> f64| {
                    Summary::of(&rows.iter().map(|s| f(s)).collect::<Vec<_>>())
                };
                Some(SubsetSummary {
                    category: c,
                    stoi: col(|s| s.stoi)?,
                    si_sdr_db: col(|s| s.si_sdr_db)?,
                    input_stoi: col(|s| s.input_stoi)?,
                    input_si_sdr_db: col(|s| s.input_si_sdr_db)?,
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("clip,subset,category,stoi,si_sdr_db,input_stoi,input_si_sdr_db\n");
        for c in &self.clips {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.4},{:.6},{:.4}",
                c.clip,
                c.category.subset(),
                c.category,
                c.stoi,
                c.si_sdr_db,
                c.input_stoi,
                c.input_si_sdr_db
            );
        }
        s
    }

    /// Fixed-width table of per-subset statistics.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:<14} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "subset", "metric", "n", "mean", "min", "q1", "median", "q3", "max"
        );
        for sub in self.subsets() {
            for (name, m) in [
                ("stoi", sub.stoi),
                ("si_sdr_db", sub.si_sdr_db),
                ("input_stoi", sub.input_stoi),
                ("input_si_sdr_db", sub.input_si_sdr_db),
            ] {
                let _ = writeln!(
                    s,
                    "{:<6} {:<14} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                    sub.category.subset(),
                    name,
                    m.count,
                    m.mean,
                    m.min,
                    m.q1,
                    m.median,
                    m.q3,
                    m.max
                );
            }
        }
        s
    }

    /// Writes the CSV to `csv_path` and the summary next to it with a `.txt`
    /// extension.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let csv = self.to_csv();
        let text = self.summary_text();
        write_atomic(csv_path, |f| Ok(f.write_all(csv.as_bytes())?))?;
        write_atomic(&csv_path.with_extension("txt"), |f| Ok(f.write_all(text.as_bytes())?))
    }
}

/// Embeddings from `<speaker>.emb` files in a directory.
pub fn load_embeddings(dir: impl AsRef<Path>) -> Result<BTreeMap<String, SpeakerEmbedding>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "emb") {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), SpeakerEmbedding::load(&path)?);
            }
        }
    }
    Ok(out)
}

/// Speakers of `manifest` without an embedding, as a usage error.
pub fn check_speakers(
    manifest: &Manifest,
    embeddings: &BTreeMap<String, SpeakerEmbedding>,
) -> Result<()> {
    let missing: Vec<String> = manifest
        .target_speakers()
        .into_iter()
        .filter(|s| !embeddings.contains_key(s))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "no enrollment embedding for speaker(s): {}",
            missing.join(", ")
        )))
    }
}

fn read_f64(path: &Path) -> Result<AudioBuffer<f64>> {
    Ok(read_wav(path)?.cast())
}

/// Streams every clip through the model with its target speaker's embedding
/// (each clip with fresh state) and scores enhanced and raw audio.
pub fn evaluate(
    model: &Model,
    manifest: &Manifest,
    embeddings: &BTreeMap<String, SpeakerEmbedding>,
) -> Result<EvalReport> {
    let personalized = model.variant().is_personalized();
    if personalized {
        check_speakers(manifest, embeddings)?;
    }
    let clips = manifest
        .entries
        .par_iter()
        .map(|e| {
            let noisy = read_f64(&manifest.clip_path(e))?;
            let clean = read_f64(&manifest.clean_path(e))?;
            let emb = personalized.then(|| &embeddings[&e.target_speaker]);
            let enhanced: AudioBuffer<f64> =
                enhance_streaming::<f32>(model, &noisy.cast(), emb)?.cast();
            Ok(ClipScore {
                clip: e.clip_path.to_string_lossy().replace('\\', "/"),
                category: e.category,
                stoi: stoi(&clean, &enhanced)?,
                si_sdr_db: si_sdr(&clean, &enhanced)?,
                input_stoi: stoi(&clean, &noisy)?,
                input_si_sdr_db: si_sdr(&clean, &noisy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { clips })
}
