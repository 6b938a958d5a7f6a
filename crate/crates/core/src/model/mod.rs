//! The two-stage enhancement network: ERB gains, then deep filtering of the
//! gained spectrum, in offline and frame-by-frame form.

mod arch;
mod config;
mod embedding;
mod stream;

use std::path::Path;

use num_complex::Complex;

pub use arch::{build_description, forward, taps_from_rows, taps_to_rows, taps_width, Heads};
pub use config::{ModelConfig, VariantKind, EMBEDDING_DIM};
pub use embedding::{SpeakerEmbedding, EMBEDDING_TENSOR, RAW_EMBEDDING_BYTES};
pub use stream::{enhance_streaming, ModelState, StreamProcessor};

use crate::dsp::{
    apply_erb_gains, build_erb_filterbank, complex_features_frame, deep_filter, erb_features_frame,
    istft, stft, AudioBuffer, ComplexSpectrogram, DfCoeffs, DspConfig, ErbFilterbank, Matrix,
    NormState,
};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{
    count_macs, load_container, save_container, DType, Description, Evaluator, ParamStore,
    Weights,
};

/// Version of the model-file metadata layout.
pub const SCHEMA_VERSION: &str = "1";

/// Scalar types the model can run in, each with its own copy of the weights.
pub trait Precision: Real {
    fn weights(model: &Model) -> &Weights<Self>;
}

impl Precision for f32 {
    fn weights(model: &Model) -> &Weights<f32> {
        &model.weights32
    }
}

impl Precision for f64 {
    fn weights(model: &Model) -> &Weights<f64> {
        &model.weights
    }
}

/// A built network with its parameters. Immutable once built; share freely.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    fb: ErbFilterbank,
    weights: Weights<f64>,
    weights32: Weights<f32>,
}

/// Per-frame network inputs for a whole spectrogram.
pub struct NetworkInputs<T> {
    pub frames: usize,
    /// `[frames x erb_bands]`
    pub erb: Vec<T>,
    /// `[frames x 2 * df_bins]`, real parts then imaginary parts per frame.
    pub cplx: Vec<T>,
}

/// Network outputs for a whole spectrogram.
pub struct NetworkOutputs<T> {
    pub gains: Matrix<T>,
    pub taps: DfCoeffs<T>,
}

impl Model {
    /// Builds the network and draws seeded initial weights.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let desc = build_description(&cfg)?;
        let weights = Weights::init(&desc, cfg.seed)?;
        Self::from_weights(cfg, weights)
    }

    pub fn from_weights(cfg: ModelConfig, weights: Weights<f64>) -> Result<Self> {
        let desc = build_description(&cfg)?;
        if weights.description() != desc {
            return Err(Error::domain("weights do not match the configured architecture"));
        }
        let fb = build_erb_filterbank(&cfg.dsp)?;
        Ok(Self {
            weights32: weights.cast(),
            cfg,
            fb,
            weights,
        })
    }

    /// A model whose gains are exactly one and whose taps are the identity
    /// filter, so the output reproduces the input up to STFT round-off.
    pub fn passthrough(cfg: ModelConfig) -> Result<Self> {
        let mut w = Self::new(cfg.clone())?.weights;
        set_output_biases(&mut w, &cfg, 40.0, true)?;
        Self::from_weights(cfg, w)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn dsp(&self) -> &DspConfig {
        &self.cfg.dsp
    }

    pub fn variant(&self) -> VariantKind {
        self.cfg.variant
    }

    pub fn filterbank(&self) -> &ErbFilterbank {
        &self.fb
    }

    pub fn weights(&self) -> &Weights<f64> {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Weights<f64>) -> Result<()> {
        if weights.description() != self.weights.description() {
            return Err(Error::domain("weights do not match the model architecture"));
        }
        self.weights32 = weights.cast();
        self.weights = weights;
        Ok(())
    }

    pub fn description(&self) -> Description {
        self.weights.description()
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    pub fn macs_per_second(&self) -> f64 {
        count_macs(&self.description(), self.cfg.dsp.frames_per_second())
    }

    /// Checks that an embedding is given exactly when the variant uses one.
    pub fn check_embedding(&self, emb: Option<&SpeakerEmbedding>) -> Result<()> {
        match (self.cfg.variant.is_personalized(), emb) {
            (true, None) => Err(Error::usage(format!(
                "the {} model needs a speaker embedding",
                self.cfg.variant
            ))),
            (false, Some(_)) => Err(Error::usage(
                "the baseline model takes no speaker embedding",
            )),
            _ => Ok(()),
        }
    }

    pub fn embedding_row<T: Real>(&self, emb: Option<&SpeakerEmbedding>) -> Option<Vec<T>> {
        emb.map(|e| e.values().iter().map(|&v| T::of(v)).collect())
    }

    /// Normalized features of a spectrogram, starting from zero normalizer state.
    pub fn network_inputs<T: Real>(&self, spec: &ComplexSpectrogram<T>) -> Result<NetworkInputs<T>> {
        if spec.bins != self.cfg.dsp.bins() {
            return Err(Error::domain(format!(
                "spectrogram has {} bins, model expects {}",
                spec.bins,
                self.cfg.dsp.bins()
            )));
        }
        let bands = self.cfg.dsp.erb_bands;
        let df_bins = self.cfg.dsp.df_bins();
        let mut erb_norm = NormState::for_erb(&self.cfg.dsp);
        let mut cplx_norm = NormState::for_complex(&self.cfg.dsp);
        let mut erb = vec![T::zero(); spec.frames * bands];
        let mut cplx = Vec::with_capacity(spec.frames * 2 * df_bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); df_bins];
        for k in 0..spec.frames {
            let frame = spec.frame(k);
            erb_features_frame(frame, &self.fb, &mut erb_norm, &mut erb[k * bands..(k + 1) * bands]);
            complex_features_frame(&frame[..df_bins], &mut cplx_norm, &mut buf);
            push_split(&buf, &mut cplx);
        }
        Ok(NetworkInputs {
            frames: spec.frames,
            erb,
            cplx,
        })
    }

    /// Runs the network over a whole spectrogram.
    pub fn analyze<T: Precision>(
        &self,
        spec: &ComplexSpectrogram<T>,
        emb: Option<&SpeakerEmbedding>,
    ) -> Result<NetworkOutputs<T>> {
        self.check_embedding(emb)?;
        let inputs = self.network_inputs(spec)?;
        let frames = inputs.frames;
        let mut ev = Evaluator::new(T::weights(self), frames);
        let erb = ev.input(self.cfg.dsp.erb_bands, inputs.erb)?;
        let cplx = ev.input(2 * self.cfg.dsp.df_bins(), inputs.cplx)?;
        let emb = match self.embedding_row::<T>(emb) {
            Some(row) => Some(ev.input(row.len(), row.repeat(frames))?),
            None => None,
        };
        let heads = forward(&mut ev, self.cfg.variant, erb, cplx, emb)?;
        let gains = Matrix::from_vec(frames, self.cfg.dsp.erb_bands, ev.value(heads.gains).to_vec())?;
        let taps = taps_from_rows(
            ev.value(heads.taps),
            frames,
            self.cfg.dsp.df_order,
            self.cfg.dsp.df_bins(),
        );
        Ok(NetworkOutputs { gains, taps })
    }

    /// Both enhancement stages on a spectrogram, frame-aligned with the input.
    pub fn enhance_spectrogram<T: Precision>(
        &self,
        spec: &ComplexSpectrogram<T>,
        emb: Option<&SpeakerEmbedding>,
    ) -> Result<ComplexSpectrogram<T>> {
        let out = self.analyze(spec, emb)?;
        let stage1 = apply_erb_gains(spec, &out.gains, &self.fb)?;
        deep_filter(&stage1, &out.taps, &self.cfg.dsp)
    }

    /// Frames needed so every input sample is fully synthesized and the deep
    /// filter's lookahead sees real (zero-padded) frames.
    pub fn padded_frames(&self, len: usize) -> usize {
        let d = &self.cfg.dsp;
        len.div_ceil(d.hop()) + d.win_len() / d.hop() - 1 + d.lookahead_frames
    }

    /// Whole-clip enhancement; the output has the input's length and alignment.
    pub fn enhance_offline<T: Precision>(
        &self,
        audio: &AudioBuffer<T>,
        emb: Option<&SpeakerEmbedding>,
    ) -> Result<AudioBuffer<T>> {
        self.check_embedding(emb)?;
        if audio.sample_rate != self.cfg.dsp.sample_rate {
            return Err(Error::config(format!(
                "audio is {} Hz, model runs at {} Hz",
                audio.sample_rate, self.cfg.dsp.sample_rate
            )));
        }
        if audio.is_empty() {
            return Err(Error::domain("cannot enhance empty audio"));
        }
        let len = audio.len();
        let mut padded = audio.samples.clone();
        padded.resize(self.padded_frames(len) * self.cfg.dsp.hop(), T::zero());
        let spec = stft(&AudioBuffer::new(padded, audio.sample_rate)?, &self.cfg.dsp)?;
        let enhanced = self.enhance_spectrogram(&spec, emb)?;
        let mut out = istft(&enhanced, &self.cfg.dsp)?;
        out.samples.truncate(len);
        Ok(out)
    }

    /// Parameters plus architecture metadata.
    pub fn to_store(&self, dtype: DType) -> Result<ParamStore> {
        let mut store = self.weights.to_store(dtype)?;
        let c = &self.cfg;
        let d = &c.dsp;
        let meta: [(&str, String); 17] = [
            ("schema_version", SCHEMA_VERSION.to_string()),
            ("variant", c.variant.to_string()),
            ("sample_rate", d.sample_rate.to_string()),
            ("erb_bands", d.erb_bands.to_string()),
            ("f_df", d.f_df.to_string()),
            ("df_order", d.df_order.to_string()),
            ("win_ms", d.win_ms.to_string()),
            ("overlap", d.overlap.to_string()),
            ("fft_size", d.fft_size.to_string()),
            ("lookahead_frames", d.lookahead_frames.to_string()),
            ("conv_channels", c.conv_channels.to_string()),
            ("linear_width", c.linear_width.to_string()),
            ("linear_groups", c.linear_groups.to_string()),
            ("erb_gru_hidden", c.erb_gru_hidden.to_string()),
            ("df_gru_hidden", c.df_gru_hidden.to_string()),
            ("embedding_dim", c.embedding_dim.to_string()),
            ("seed", c.seed.to_string()),
        ];
        for (k, v) in meta {
            store.set_meta(k, v);
        }
        Ok(store)
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let cfg = config_from_metadata(store)?;
        let weights = Weights::from_store(&build_description(&cfg)?, store)?;
        Self::from_weights(cfg, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
        save_container(&self.to_store(dtype)?, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(&load_container(path)?)
    }
}

fn push_split<T: Real>(frame: &[Complex<T>], out: &mut Vec<T>) {
    out.extend(frame.iter().map(|c| c.re));
    out.extend(frame.iter().map(|c| c.im));
}

/// Sets the gain-layer bias to `gain_bias` and the tap-layer bias to the
/// identity filter, optionally zeroing both layers' weights.
fn set_output_biases(
    w: &mut Weights<f64>,
    cfg: &ModelConfig,
    gain_bias: f64,
    zero_weights: bool,
) -> Result<()> {
    let centre = crate::dsp::identity_tap(cfg.dsp.df_order, cfg.dsp.lookahead_frames)?;
    let df_bins = cfg.dsp.df_bins();
    for (layer, bias) in [("erb_dec.fc1", gain_bias), ("df_dec.fc1", 0.0)] {
        let l = w
            .get_mut(layer)
            .ok_or_else(|| Error::domain(format!("no layer {layer}")))?;
        if zero_weights {
            l.params[0].iter_mut().for_each(|v| *v = 0.0);
        }
        l.params[1].iter_mut().for_each(|v| *v = bias);
        if layer == "df_dec.fc1" {
            for f in 0..df_bins {
                l.params[1][centre * df_bins + f] = 1.0;
            }
        }
    }
    Ok(())
}

/// Reads the model configuration recorded in a container's metadata.
pub fn config_from_metadata(store: &ParamStore) -> Result<ModelConfig> {
    let get = |k: &str| -> Result<&str> {
        store
            .meta(k)
            .ok_or_else(|| Error::domain(format!("model file lacks metadata key {k:?}")))
    };
    fn num<V: std::str::FromStr>(k: &str, v: &str) -> Result<V> {
        v.parse()
            .map_err(|_| Error::domain(format!("metadata {k}={v:?} is not a valid number")))
    }
    let version = get("schema_version")?;
    if version != SCHEMA_VERSION {
        return Err(Error::domain(format!(
            "model schema version {version}, this build reads {SCHEMA_VERSION}"
        )));
    }
    let variant: VariantKind = get("variant")?.parse().map_err(|e: Error| Error::domain(e.to_string()))?;
    let mut dsp = DspConfig::with_sample_rate(num("sample_rate", get("sample_rate")?)?);
    dsp.erb_bands = num("erb_bands", get("erb_bands")?)?;
    dsp.f_df = num("f_df", get("f_df")?)?;
    dsp.df_order = num("df_order", get("df_order")?)?;
    let opt = |k: &str| store.meta(k);
    if let Some(v) = opt("win_ms") {
        dsp.win_ms = num("win_ms", v)?;
    }
    if let Some(v) = opt("overlap") {
        dsp.overlap = num("overlap", v)?;
    }
    dsp.fft_size = match opt("fft_size") {
        Some(v) => num("fft_size", v)?,
        None => dsp.win_len(),
    };
    if let Some(v) = opt("lookahead_frames") {
        dsp.lookahead_frames = num("lookahead_frames", v)?;
    }
    let mut cfg = ModelConfig::new(dsp, variant);
    let widths: [(&str, &mut usize); 6] = [
        ("conv_channels", &mut cfg.conv_channels),
        ("linear_width", &mut cfg.linear_width),
        ("linear_groups", &mut cfg.linear_groups),
        ("erb_gru_hidden", &mut cfg.erb_gru_hidden),
        ("df_gru_hidden", &mut cfg.df_gru_hidden),
        ("embedding_dim", &mut cfg.embedding_dim),
    ];
    for (k, slot) in widths {
        if let Some(v) = store.meta(k) {
            *slot = num(k, v)?;
        }
    }
    if let Some(v) = opt("seed") {
        cfg.seed = num("seed", v)?;
    }
    cfg.validate().map_err(|e| Error::domain(e.to_string()))?;
    Ok(cfg)
}
