use std::collections::VecDeque;

use num_complex::Complex;

use super::{forward, push_split, Model, Precision, SpeakerEmbedding};
use crate::dsp::{
    apply_gains_frame, complex_features_frame, erb_features_frame, AudioBuffer, NormState,
    StreamingAnalysis, StreamingSynthesis,
};
use crate::error::{Error, Result};
use crate::tensor::{FrameRecorder, LayerStates};

/// Everything one stream carries between frames.
///
/// Besides the layer and normalizer states, the deep filter needs the last
/// `N - 1` stage-one frames and the taps of the `lookahead` frames whose
/// output is still pending, so `depth() = N - 1 + lookahead`.
#[derive(Debug, Clone)]
pub struct ModelState<T: Precision> {
    layers: LayerStates<T>,
    erb_norm: NormState<T>,
    cplx_norm: NormState<T>,
    /// Stage-one frames, oldest first; the newest is the current frame.
    history: VecDeque<Vec<Complex<T>>>,
    pending_taps: VecDeque<Vec<Complex<T>>>,
}

impl<T: Precision> ModelState<T> {
    pub fn new(model: &Model) -> Self {
        let d = model.dsp();
        let mut s = Self {
            layers: LayerStates::new(T::weights(model)),
            erb_norm: NormState::for_erb(d),
            cplx_norm: NormState::for_complex(d),
            history: VecDeque::new(),
            pending_taps: VecDeque::new(),
        };
        s.fill(d.bins(), d.df_order, d.df_bins(), d.lookahead_frames);
        s
    }

    fn fill(&mut self, bins: usize, order: usize, df_bins: usize, lookahead: usize) {
        let zero = Complex::new(T::zero(), T::zero());
        self.history = (0..order - 1).map(|_| vec![zero; bins]).collect();
        self.pending_taps = (0..lookahead).map(|_| vec![zero; order * df_bins]).collect();
    }

    /// Buffered frames: past stage-one frames plus pending tap sets.
    pub fn depth(&self) -> usize {
        self.history.len() + self.pending_taps.len()
    }

    /// Returns to the all-zero initial state.
    pub fn reset(&mut self) {
        self.layers.reset();
        self.erb_norm.reset();
        self.cplx_norm.reset();
        let zero = Complex::new(T::zero(), T::zero());
        for f in self.history.iter_mut().chain(self.pending_taps.iter_mut()) {
            f.iter_mut().for_each(|v| *v = zero);
        }
    }

    pub fn is_zero(&self) -> bool {
        let zero = Complex::new(T::zero(), T::zero());
        self.layers.iter().all(|(_, s)| s.iter().all(|v| v.is_zero()))
            && self.erb_norm.values().iter().all(|v| v.is_zero())
            && self.cplx_norm.values().iter().all(|v| v.is_zero())
            && self
                .history
                .iter()
                .chain(&self.pending_taps)
                .all(|f| f.iter().all(|v| *v == zero))
    }
}

impl Model {
    pub fn new_state<T: Precision>(&self) -> ModelState<T> {
        ModelState::new(self)
    }

    /// Consumes one analysis frame and writes the enhanced frame from
    /// `lookahead_frames` frames earlier (zeros until that many have arrived).
    pub fn enhance_frame<T: Precision>(
        &self,
        state: &mut ModelState<T>,
        frame: &[Complex<T>],
        emb: Option<&SpeakerEmbedding>,
        out: &mut [Complex<T>],
    ) -> Result<()> {
        self.check_embedding(emb)?;
        let d = self.dsp();
        let (bins, df_bins, order, la) = (d.bins(), d.df_bins(), d.df_order, d.lookahead_frames);
        if frame.len() != bins || out.len() != bins {
            return Err(Error::domain(format!(
                "frames must have {bins} bins, got {} in and {} out",
                frame.len(),
                out.len()
            )));
        }
        let mut erb = vec![T::zero(); d.erb_bands];
        erb_features_frame(frame, self.filterbank(), &mut state.erb_norm, &mut erb);
        let mut cf = vec![Complex::new(T::zero(), T::zero()); df_bins];
        complex_features_frame(&frame[..df_bins], &mut state.cplx_norm, &mut cf);
        let mut cplx = Vec::with_capacity(2 * df_bins);
        push_split(&cf, &mut cplx);

        let mut rec = FrameRecorder::new(T::weights(self), &mut state.layers);
        let erb_n = rec.input(erb);
        let cplx_n = rec.input(cplx);
        let emb_n = self.embedding_row::<T>(emb).map(|row| rec.input(row));
        let heads = forward(&mut rec, self.variant(), erb_n, cplx_n, emb_n)?;
        let gains = rec.value(heads.gains);
        let rows = rec.value(heads.taps);
        let n = order * df_bins;
        let taps: Vec<Complex<T>> = (0..n).map(|j| Complex::new(rows[j], rows[n + j])).collect();

        let mut stage1 = vec![Complex::new(T::zero(), T::zero()); bins];
        apply_gains_frame(frame, gains, self.filterbank(), &mut stage1);
        state.history.push_back(stage1);
        state.pending_taps.push_back(taps);
        let taps = state.pending_taps.pop_front().expect("queue is never empty here");

        // Output frame k = t - la; tap i reads stage-one frame k - (N-1) + i + la,
        // which is history[i] because history ends at frame t.
        let current = &state.history[order - 1 - la];
        out[df_bins..].copy_from_slice(&current[df_bins..]);
        for (f, y) in out[..df_bins].iter_mut().enumerate() {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (i, h) in state.history.iter().enumerate() {
                acc += taps[i * df_bins + f] * h[f];
            }
            *y = acc;
        }
        state.history.pop_front();
        Ok(())
    }
}

/// Hop-in, hop-out streaming enhancement of audio.
pub struct StreamProcessor<'m, T: Precision> {
    model: &'m Model,
    emb: Option<SpeakerEmbedding>,
    state: ModelState<T>,
    analysis: StreamingAnalysis<T>,
    synthesis: StreamingSynthesis<T>,
    frame: Vec<Complex<T>>,
    enhanced: Vec<Complex<T>>,
}

impl<'m, T: Precision> StreamProcessor<'m, T> {
    pub fn new(model: &'m Model, emb: Option<SpeakerEmbedding>) -> Result<Self> {
        model.check_embedding(emb.as_ref())?;
        let params = model.dsp().stft_params();
        let bins = model.dsp().bins();
        Ok(Self {
            model,
            emb,
            state: ModelState::new(model),
            analysis: StreamingAnalysis::new(params)?,
            synthesis: StreamingSynthesis::new(params)?,
            frame: vec![Complex::new(T::zero(), T::zero()); bins],
            enhanced: vec![Complex::new(T::zero(), T::zero()); bins],
        })
    }

    pub fn hop(&self) -> usize {
        self.model.dsp().hop()
    }

    /// Samples between an input sample and its enhanced counterpart.
    pub fn delay(&self) -> usize {
        let d = self.model.dsp();
        self.synthesis.latency() + d.lookahead_frames * d.hop()
    }

    pub fn process_hop(&mut self, input: &[T], output: &mut [T]) -> Result<()> {
        let hop = self.hop();
        if input.len() != hop || output.len() != hop {
            return Err(Error::domain(format!("streaming works in hops of {hop} samples")));
        }
        self.analysis.push(input, &mut self.frame);
        self.model
            .enhance_frame(&mut self.state, &self.frame, self.emb.as_ref(), &mut self.enhanced)?;
        self.synthesis.push(&self.enhanced, output);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.analysis.reset();
        self.synthesis.reset();
    }
}

/// Streams a whole clip through [`StreamProcessor`] and removes the delay, so
/// the result lines up with [`Model::enhance_offline`].
pub fn enhance_streaming<T: Precision>(
    model: &Model,
    audio: &AudioBuffer<T>,
    emb: Option<&SpeakerEmbedding>,
) -> Result<AudioBuffer<T>> {
    if audio.sample_rate != model.dsp().sample_rate {
        return Err(Error::config(format!(
            "audio is {} Hz, model runs at {} Hz",
            audio.sample_rate,
            model.dsp().sample_rate
        )));
    }
    let mut p = StreamProcessor::new(model, emb.cloned())?;
    let hop = p.hop();
    let delay = p.delay();
    let hops = (audio.len() + delay).div_ceil(hop);
    let mut input = audio.samples.clone();
    input.resize(hops * hop, T::zero());
    let mut out = vec![T::zero(); hops * hop];
    for (i, o) in input.chunks_exact(hop).zip(out.chunks_exact_mut(hop)) {
        p.process_hop(i, o)?;
    }
    AudioBuffer::new(out[delay..delay + audio.len()].to_vec(), audio.sample_rate)
}
