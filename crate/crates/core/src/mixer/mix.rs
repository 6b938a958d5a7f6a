use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Frame length of the activity detector, in seconds.
pub const ACTIVITY_FRAME_SECS: f64 = 0.020;

/// Frames quieter than the loudest frame by more than this are silence.
pub const ACTIVITY_THRESHOLD_DB: f64 = -50.0;

pub const SNR_RANGE_DB: (f64, f64) = (-5.0, 35.0);
pub const SIR_RANGE_DB: (f64, f64) = (-5.0, 25.0);

/// Peak ceiling of emitted mixtures.
pub const PEAK_LIMIT: f64 = 0.99;

const SILENCE_POWER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    TargetNoise,
    TargetInterferer,
    TargetInterfererNoise,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::TargetNoise,
        Category::TargetInterferer,
        Category::TargetInterfererNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::TargetNoise => "target_noise",
            Category::TargetInterferer => "target_interferer",
            Category::TargetInterfererNoise => "target_interferer_noise",
        }
    }

    /// Evaluation subset tag: pn, ps or psn.
    pub fn subset(self) -> &'static str {
        match self {
            Category::TargetNoise => "pn",
            Category::TargetInterferer => "ps",
            Category::TargetInterfererNoise => "psn",
        }
    }

    pub fn has_noise(self) -> bool {
        self != Category::TargetInterferer
    }

    pub fn has_interferer(self) -> bool {
        self != Category::TargetNoise
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.subset() == s)
            .ok_or_else(|| Error::domain(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    /// Normal with mean at the interval midpoint and sd a quarter of its
    /// width, redrawn until inside the interval.
    Gaussian,
    Uniform,
}

impl FromStr for DrawMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DrawMode::Gaussian),
            "uniform" => Ok(DrawMode::Uniform),
            _ => Err(Error::config(format!(
                "unknown distribution {s:?} (expected gaussian or uniform)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryDistribution {
    /// Probabilities of target+noise, target+interferer, target+interferer+noise.
    pub weights: [f64; 3],
    pub mode: DrawMode,
}

impl CategoryDistribution {
    /// Training recipe: 20/30/50 with truncated-normal levels.
    pub fn training() -> Self {
        Self {
            weights: [0.2, 0.3, 0.5],
            mode: DrawMode::Gaussian,
        }
    }

    /// Test recipe: categories in equal shares with uniform levels.
    pub fn test_recipe() -> Self {
        Self {
            weights: [1.0 / 3.0; 3],
            mode: DrawMode::Uniform,
        }
    }

    pub fn for_mode(mode: DrawMode) -> Self {
        match mode {
            DrawMode::Gaussian => Self::training(),
            DrawMode::Uniform => Self::test_recipe(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "category weights {:?} must be non-negative and sum to 1",
                self.weights
            )));
        }
        Ok(())
    }

    pub fn draw_category<R: Rng>(&self, rng: &mut R) -> Category {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (c, w) in Category::ALL.into_iter().zip(self.weights) {
            acc += w;
            if u < acc {
                return c;
            }
        }
        Category::ALL
            .into_iter()
            .zip(self.weights)
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map_or(Category::TargetInterfererNoise, |(c, _)| c)
    }

    /// A level in `[lo, hi]` dB according to the draw mode.
    pub fn draw_level<R: Rng>(&self, rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
        match self.mode {
            DrawMode::Uniform => rng.gen_range(lo..=hi),
            DrawMode::Gaussian => {
                let normal = Normal::new((lo + hi) / 2.0, (hi - lo) / 4.0).expect("positive sd");
                loop {
                    let v = normal.sample(rng);
                    if (lo..=hi).contains(&v) {
                        return v;
                    }
                }
            }
        }
    }
}

/// Mean power over the samples of frames within [`ACTIVITY_THRESHOLD_DB`] of
/// the loudest 20 ms frame. The gate is relative, so scaling a signal by `g`
/// scales its active power by exactly `g^2`.
pub fn active_power(audio: &AudioBuffer<f64>) -> f64 {
    let frame = ((audio.sample_rate as f64 * ACTIVITY_FRAME_SECS).round() as usize).max(1);
    let energies: Vec<(f64, usize)> = audio
        .samples
        .chunks(frame)
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64, c.len()))
        .collect();
    let loudest = energies.iter().map(|e| e.0).fold(0.0, f64::max);
    if loudest == 0.0 {
        return 0.0;
    }
    let gate = loudest * 10f64.powf(ACTIVITY_THRESHOLD_DB / 10.0);
    let (sum, count) = energies
        .iter()
        .filter(|e| e.0 >= gate)
        .fold((0.0, 0usize), |(s, n), &(p, len)| (s + p * len as f64, n + len));
    sum / count as f64
}

/// Level of `signal` over `contaminant` in dB, by active power.
pub fn level_db(signal: &AudioBuffer<f64>, contaminant: &AudioBuffer<f64>) -> Result<f64> {
    let (ps, pc) = (active_power(signal), active_power(contaminant));
    if ps <= SILENCE_POWER || pc <= SILENCE_POWER {
        return Err(Error::domain("cannot measure a level against silence"));
    }
    Ok(10.0 * (ps / pc).log10())
}

/// Gain for `contaminant` that puts `target` `level_db` dB above it.
pub fn scale_for_snr(
    target: &AudioBuffer<f64>,
    contaminant: &AudioBuffer<f64>,
    level_db: f64,
) -> Result<f64> {
    let pt = active_power(target);
    let pc = active_power(contaminant);
    if pc <= SILENCE_POWER {
        return Err(Error::domain("contaminant is silent"));
    }
    if pt <= SILENCE_POWER {
        return Err(Error::domain("target is silent"));
    }
    Ok((pt / (pc * 10f64.powf(level_db / 10.0))).sqrt())
}

/// A synthesized mixture and its scaled parts (all after peak limiting).
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: AudioBuffer<f64>,
    pub clean: AudioBuffer<f64>,
    pub interferer: Option<AudioBuffer<f64>>,
    pub noise: Option<AudioBuffer<f64>>,
    /// Scalar applied to every part by the peak limiter (1 if untouched).
    pub peak_scale: f64,
}

/// Equal-length source excerpts for one mixture.
#[derive(Debug, Clone)]
pub struct SourceAudio {
    pub target: AudioBuffer<f64>,
    pub interferer: Option<AudioBuffer<f64>>,
    pub noise: Option<AudioBuffer<f64>>,
}

/// Target plus interferer scaled to `sir_db`, plus noise scaled to `snr_db`
/// against that sum; the whole set is then scaled down if the mixture would
/// peak above [`PEAK_LIMIT`].
pub fn mix_sources(
    category: Category,
    snr_db: Option<f64>,
    sir_db: Option<f64>,
    src: &SourceAudio,
) -> Result<Mixture> {
    let t = &src.target;
    let sr = t.sample_rate;
    if active_power(t) <= SILENCE_POWER {
        return Err(Error::domain("target excerpt is silent"));
    }
    let need = |present: bool, what: &str| -> Result<()> {
        if present {
            Ok(())
        } else {
            Err(Error::domain(format!("{category} needs {what}")))
        }
    };
    let mut signal = t.samples.clone();
    let mut interferer = None;
    if category.has_interferer() {
        let i = src.interferer.as_ref().filter(|_| sir_db.is_some());
        need(i.is_some(), "an interferer and an SIR")?;
        let i = i.expect("checked");
        check_len(t, i)?;
        let g = scale_for_snr(t, i, sir_db.expect("checked"))?;
        let scaled: Vec<f64> = i.samples.iter().map(|v| v * g).collect();
        for (s, v) in signal.iter_mut().zip(&scaled) {
            *s += v;
        }
        interferer = Some(scaled);
    }
    let mut noise = None;
    let mut mixture = signal.clone();
    if category.has_noise() {
        let n = src.noise.as_ref().filter(|_| snr_db.is_some());
        need(n.is_some(), "noise and an SNR")?;
        let n = n.expect("checked");
        check_len(t, n)?;
        let g = scale_for_snr(&AudioBuffer::new(signal, sr)?, n, snr_db.expect("checked"))?;
        let scaled: Vec<f64> = n.samples.iter().map(|v| v * g).collect();
        for (m, v) in mixture.iter_mut().zip(&scaled) {
            *m += v;
        }
        noise = Some(scaled);
    }
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > PEAK_LIMIT { PEAK_LIMIT / peak } else { 1.0 };
    let apply = |v: Vec<f64>| -> Result<AudioBuffer<f64>> {
        AudioBuffer::new(v.into_iter().map(|x| x * scale).collect(), sr)
    };
    Ok(Mixture {
        mixture: apply(mixture)?,
        clean: apply(t.samples.clone())?,
        interferer: interferer.map(apply).transpose()?,
        noise: noise.map(apply).transpose()?,
        peak_scale: scale,
    })
}

fn check_len(a: &AudioBuffer<f64>, b: &AudioBuffer<f64>) -> Result<()> {
    if a.len() != b.len() || a.sample_rate != b.sample_rate {
        return Err(Error::domain("source excerpts differ in length or rate"));
    }
    Ok(())
}
