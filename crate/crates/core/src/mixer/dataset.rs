use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mix::{mix_sources, Category, CategoryDistribution, Mixture, SourceAudio};
use super::mix::{SIR_RANGE_DB, SNR_RANGE_DB};
use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const DEFAULT_CLIP_SECS: f64 = 5.0;
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_HEADER: &str =
    "clip_path\tclean_path\tcategory\tsnr_db\tsir_db\ttarget_speaker\tinterferer_speaker\tseed";
const ABSENT: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Target,
    Interferer,
    Noise,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Interferer => "interferer",
            Role::Noise => "noise",
        }
    }
}

/// One usable source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    /// Name of the top-level subfolder under the role directory.
    pub speaker: String,
    pub len: usize,
}

/// An excerpt of a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRef {
    pub path: PathBuf,
    pub speaker: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub category: Category,
    /// Present whenever noise is part of the mixture.
    pub snr_db: Option<f64>,
    /// Present whenever an interferer is part of the mixture.
    pub sir_db: Option<f64>,
    pub target: SourceRef,
    pub interferer: Option<SourceRef>,
    pub noise: Option<SourceRef>,
    /// Seed that regenerates this spec through [`draw_clip_spec`]; 0 when
    /// drawn from a caller-supplied generator.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RoleDirs {
    pub target: PathBuf,
    pub interferer: PathBuf,
    pub noise: PathBuf,
}

/// Usable sources per role, all at one sample rate and at least one clip long.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    pub sample_rate: u32,
    pub clip_len: usize,
    pub target: Vec<SourceFile>,
    pub interferer: Vec<SourceFile>,
    pub noise: Vec<SourceFile>,
}

impl CorpusIndex {
    /// Scans the role directories. Unreadable, multichannel, short or
    /// mismatched-rate files are skipped with a warning. When `sample_rate`
    /// is `None` the rate of the first readable target file is used.
    pub fn scan(dirs: &RoleDirs, sample_rate: Option<u32>, clip_secs: f64) -> Result<Self> {
        if !(clip_secs > 0.0) {
            return Err(Error::config(format!("clip length {clip_secs} s must be positive")));
        }
        let mut headers = Vec::new();
        for (role, dir) in [
            (Role::Target, &dirs.target),
            (Role::Interferer, &dirs.interferer),
            (Role::Noise, &dirs.noise),
        ] {
            if !dir.is_dir() {
                return Err(Error::usage(format!(
                    "{} directory {} does not exist",
                    role.as_str(),
                    dir.display()
                )));
            }
            let mut files = Vec::new();
            list_wavs(dir, &mut files)?;
            files.sort();
            headers.push((role, dir, files));
        }
        let mut rate = sample_rate;
        let mut index = Self {
            sample_rate: 0,
            clip_len: 0,
            target: Vec::new(),
            interferer: Vec::new(),
            noise: Vec::new(),
        };
        let mut pending = Vec::new();
        for (role, dir, files) in headers {
            for path in files {
                let speaker = match speaker_of(dir, &path) {
                    Some(s) => s,
                    None if role == Role::Noise => "noise".to_string(),
                    None => {
                        log::warn!("skipping {}: not inside a speaker folder", path.display());
                        continue;
                    }
                };
                match probe(&path) {
                    Ok((sr, len)) => {
                        rate.get_or_insert(sr);
                        pending.push((role, SourceFile { path, speaker, len }, sr));
                    }
                    Err(e) => log::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        let sr = rate.ok_or_else(|| Error::usage("no readable audio files found"))?;
        index.sample_rate = sr;
        index.clip_len = (clip_secs * sr as f64).round() as usize;
        for (role, file, file_sr) in pending {
            if file_sr != sr {
                log::warn!("skipping {}: sample rate {file_sr} != {sr}", file.path.display());
                continue;
            }
            if file.len < index.clip_len {
                log::warn!(
                    "skipping {}: {} samples, shorter than one clip ({})",
                    file.path.display(),
                    file.len,
                    index.clip_len
                );
                continue;
            }
            match role {
                Role::Target => index.target.push(file),
                Role::Interferer => index.interferer.push(file),
                Role::Noise => index.noise.push(file),
            }
        }
        Ok(index)
    }

    fn role(&self, role: Role) -> &[SourceFile] {
        match role {
            Role::Target => &self.target,
            Role::Interferer => &self.interferer,
            Role::Noise => &self.noise,
        }
    }
}

fn list_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn speaker_of(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut parts = rel.components();
    let first = parts.next()?;
    parts.next()?;
    Some(first.as_os_str().to_string_lossy().into_owned())
}

fn probe(path: &Path) -> Result<(u32, usize)> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::domain(format!("{} channels, expected mono", spec.channels)));
    }
    Ok((spec.sample_rate, reader.duration() as usize))
}

fn pick<'a, R: Rng>(
    rng: &mut R,
    files: &'a [SourceFile],
    role: Role,
) -> Result<&'a SourceFile> {
    files
        .choose(rng)
        .ok_or_else(|| Error::usage(format!("no usable {} files", role.as_str())))
}

fn excerpt<R: Rng>(rng: &mut R, file: &SourceFile, clip_len: usize) -> SourceRef {
    SourceRef {
        path: file.path.clone(),
        speaker: file.speaker.clone(),
        offset: rng.gen_range(0..=file.len - clip_len),
    }
}

/// Draws one mixture specification. The interferer is drawn among files whose
/// speaker differs from the target's.
pub fn draw_mix_spec<R: Rng>(
    rng: &mut R,
    dist: &CategoryDistribution,
    index: &CorpusIndex,
) -> Result<MixSpec> {
    dist.validate()?;
    let category = dist.draw_category(rng);
    let target_file = pick(rng, index.role(Role::Target), Role::Target)?;
    let target = excerpt(rng, target_file, index.clip_len);
    let (mut interferer, mut sir_db) = (None, None);
    if category.has_interferer() {
        let others: Vec<&SourceFile> = index
            .interferer
            .iter()
            .filter(|f| f.speaker != target.speaker)
            .collect();
        let file = others.choose(rng).ok_or_else(|| {
            Error::usage(format!(
                "no usable interferer files from a speaker other than {:?}",
                target.speaker
            ))
        })?;
        interferer = Some(excerpt(rng, file, index.clip_len));
        sir_db = Some(dist.draw_level(rng, SIR_RANGE_DB));
    }
    let (mut noise, mut snr_db) = (None, None);
    if category.has_noise() {
        let file = pick(rng, index.role(Role::Noise), Role::Noise)?;
        noise = Some(excerpt(rng, file, index.clip_len));
        snr_db = Some(dist.draw_level(rng, SNR_RANGE_DB));
    }
    Ok(MixSpec {
        category,
        snr_db,
        sir_db,
        target,
        interferer,
        noise,
        seed: 0,
    })
}

/// Draws the spec of one clip from its own seed.
pub fn draw_clip_spec(
    seed: u64,
    dist: &CategoryDistribution,
    index: &CorpusIndex,
) -> Result<MixSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = draw_mix_spec(&mut rng, dist, index)?;
    spec.seed = seed;
    Ok(spec)
}

fn load_excerpt(r: &SourceRef, clip_len: usize) -> Result<AudioBuffer<f64>> {
    let audio = read_wav(&r.path)?;
    if r.offset + clip_len > audio.len() {
        return Err(Error::domain(format!(
            "{}: excerpt [{}, {}) exceeds {} samples",
            r.path.display(),
            r.offset,
            r.offset + clip_len,
            audio.len()
        )));
    }
    let samples = audio.samples[r.offset..r.offset + clip_len]
        .iter()
        .map(|&v| v as f64)
        .collect();
    AudioBuffer::new(samples, audio.sample_rate)
}

/// Reads the referenced excerpts and mixes them.
pub fn synthesize_mixture(spec: &MixSpec, clip_len: usize) -> Result<Mixture> {
    let src = SourceAudio {
        target: load_excerpt(&spec.target, clip_len)?,
        interferer: spec
            .interferer
            .as_ref()
            .map(|r| load_excerpt(r, clip_len))
            .transpose()?,
        noise: spec.noise.as_ref().map(|r| load_excerpt(r, clip_len)).transpose()?,
    };
    mix_sources(spec.category, spec.snr_db, spec.sir_db, &src)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub clip_path: PathBuf,
    pub clean_path: PathBuf,
    pub category: Category,
    pub snr_db: Option<f64>,
    pub sir_db: Option<f64>,
    pub target_speaker: String,
    pub interferer_speaker: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    /// Directory the entry paths are relative to.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clip_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.clip_path)
    }

    pub fn clean_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.clean_path)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str(MANIFEST_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or(ABSENT.to_string(), |x| x.to_string());
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                portable(&e.clip_path),
                portable(&e.clean_path),
                e.category,
                opt(e.snr_db),
                opt(e.sir_db),
                e.target_speaker,
                e.interferer_speaker.as_deref().unwrap_or(ABSENT),
                e.seed
            );
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(MANIFEST_HEADER) {
            return Err(Error::domain("manifest header missing or malformed"));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::domain(format!("manifest line {}: {what}", n + 2));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(bad(&format!("expected 8 fields, found {}", f.len())));
            }
            let level = |s: &str| -> Result<Option<f64>> {
                if s == ABSENT {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(&format!("bad level {s:?}")))
                }
            };
            entries.push(ManifestEntry {
                clip_path: PathBuf::from(f[0]),
                clean_path: PathBuf::from(f[1]),
                category: f[2].parse().map_err(|_| bad(&format!("bad category {:?}", f[2])))?,
                snr_db: level(f[3])?,
                sir_db: level(f[4])?,
                target_speaker: f[5].to_string(),
                interferer_speaker: (f[6] != ABSENT).then(|| f[6].to_string()),
                seed: f[7].parse().map_err(|_| bad(&format!("bad seed {:?}", f[7])))?,
            });
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_tsv();
        write_atomic(path.as_ref(), |f| Ok(f.write_all(text.as_bytes())?))
    }

    /// Target speakers in first-appearance order, deduplicated.
    pub fn target_speakers(&self) -> Vec<String> {
        let mut seen = BTreeMap::new();
        for e in &self.entries {
            let next = seen.len();
            seen.entry(e.target_speaker.clone()).or_insert(next);
        }
        let mut v: Vec<_> = seen.into_iter().collect();
        v.sort_by_key(|(_, i)| *i);
        v.into_iter().map(|(s, _)| s).collect()
    }
}

fn portable(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub dirs: RoleDirs,
    pub hours: f64,
    pub clip_secs: f64,
    pub dist: CategoryDistribution,
    pub seed: u64,
    /// `None` takes the rate of the first readable target file.
    pub sample_rate: Option<u32>,
}

impl DatasetConfig {
    pub fn new(dirs: RoleDirs, hours: f64, seed: u64) -> Self {
        Self {
            dirs,
            hours,
            clip_secs: DEFAULT_CLIP_SECS,
            dist: CategoryDistribution::training(),
            seed,
            sample_rate: None,
        }
    }

    pub fn clip_count(&self) -> usize {
        (self.hours * 3600.0 / self.clip_secs).round() as usize
    }
}

/// Seed of clip `index`: first value of stream `index` of the dataset seed.
pub fn clip_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Writes `clips/mix_NNNNN.wav`, `clean/clean_NNNNN.wav` (32-bit float) and
/// `manifest.tsv` under `out_dir`, returning the manifest.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    if !(cfg.hours > 0.0) {
        return Err(Error::config(format!("hours {} must be positive", cfg.hours)));
    }
    cfg.dist.validate()?;
    let out_dir = out_dir.as_ref();
    let index = CorpusIndex::scan(&cfg.dirs, cfg.sample_rate, cfg.clip_secs)?;
    if index.target.is_empty() {
        return Err(Error::usage("no usable target files"));
    }
    let n = cfg.clip_count();
    std::fs::create_dir_all(out_dir.join("clips"))?;
    std::fs::create_dir_all(out_dir.join("clean"))?;
    let entries: Vec<ManifestEntry> = (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = draw_clip_spec(clip_seed(cfg.seed, i as u64), &cfg.dist, &index)?;
            let mix = synthesize_mixture(&spec, index.clip_len)?;
            let clip_path = PathBuf::from("clips").join(format!("mix_{i:05}.wav"));
            let clean_path = PathBuf::from("clean").join(format!("clean_{i:05}.wav"));
            write_wav(out_dir.join(&clip_path), &mix.mixture.cast(), WavFormat::Float32)?;
            write_wav(out_dir.join(&clean_path), &mix.clean.cast(), WavFormat::Float32)?;
            Ok(ManifestEntry {
                clip_path,
                clean_path,
                category: spec.category,
                snr_db: spec.snr_db,
                sir_db: spec.sir_db,
                target_speaker: spec.target.speaker,
                interferer_speaker: spec.interferer.map(|r| r.speaker),
                seed: spec.seed,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
