//! The training objective of one example, differentiated through both
//! enhancement stages and the synthesis back to the network outputs.

use super::loss::{
    multires_loss_with, oversuppression_loss_grad, spectral_loss_grad, LossWeights, MR_WINDOWS_MS,
};
use crate::dsp::{
    apply_erb_gains, apply_erb_gains_backward, deep_filter, deep_filter_backward, istft, stft,
    AudioBuffer, ComplexSpectrogram, DspConfig, ErbFilterbank, Matrix, Stft,
};
use crate::error::{Error, Result};
use crate::model::{forward, taps_from_rows, taps_to_rows, Model, NetworkInputs, SpeakerEmbedding};
use crate::tensor::{DiffOp, Evaluator, Tape, Weights};

/// One training triplet.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub noisy: AudioBuffer<f64>,
    pub clean: AudioBuffer<f64>,
    pub embedding: Option<SpeakerEmbedding>,
}

/// Spectra and features of an example, padded the way offline enhancement pads.
struct Prepared {
    noisy_spec: ComplexSpectrogram<f64>,
    clean_spec: ComplexSpectrogram<f64>,
    clean: AudioBuffer<f64>,
    inputs: NetworkInputs<f64>,
}

fn prepare(model: &Model, ex: &TrainExample) -> Result<Prepared> {
    model.check_embedding(ex.embedding.as_ref())?;
    let d = model.dsp();
    if ex.noisy.len() != ex.clean.len() || ex.noisy.sample_rate != ex.clean.sample_rate {
        return Err(Error::domain("noisy and clean signals differ in length or rate"));
    }
    if ex.noisy.sample_rate != d.sample_rate {
        return Err(Error::config(format!(
            "example is {} Hz, model runs at {} Hz",
            ex.noisy.sample_rate, d.sample_rate
        )));
    }
    let padded = model.padded_frames(ex.noisy.len()) * d.hop();
    let pad = |a: &AudioBuffer<f64>| -> Result<AudioBuffer<f64>> {
        let mut s = a.samples.clone();
        s.resize(padded, 0.0);
        AudioBuffer::new(s, a.sample_rate)
    };
    let noisy_spec = stft(&pad(&ex.noisy)?, d)?;
    let clean_spec = stft(&pad(&ex.clean)?, d)?;
    let inputs = model.network_inputs(&noisy_spec)?;
    Ok(Prepared {
        noisy_spec,
        clean_spec,
        clean: ex.clean.clone(),
        inputs,
    })
}

/// Loss of an example given the network outputs, plus gradients on those outputs.
struct Objective {
    cfg: DspConfig,
    fb: ErbFilterbank,
    noisy_spec: ComplexSpectrogram<f64>,
    clean_spec: ComplexSpectrogram<f64>,
    clean: AudioBuffer<f64>,
    weights: LossWeights,
    with_grad: bool,
    grads: Option<(Vec<f64>, Vec<f64>)>,
}

impl Objective {
    fn evaluate(&mut self, gains_rows: &[f64], tap_rows: &[f64]) -> Result<f64> {
        let d = &self.cfg;
        let frames = self.noisy_spec.frames;
        let gains = Matrix::from_vec(frames, d.erb_bands, gains_rows.to_vec())?;
        let taps = taps_from_rows(tap_rows, frames, d.df_order, d.df_bins());
        let stage1 = apply_erb_gains(&self.noisy_spec, &gains, &self.fb)?;
        let est = deep_filter(&stage1, &taps, d)?;
        let mut est_audio = istft(&est, d)?;
        est_audio.samples.truncate(self.clean.len());

        let w = self.weights;
        let g = self.with_grad;
        let (spec, g_spec) = spectral_loss_grad(&est, &self.clean_spec, g)?;
        let (os, g_os) = oversuppression_loss_grad(&est, &self.clean_spec, g)?;
        let (mr, g_mr) = multires_loss_with(&est_audio, &self.clean, &MR_WINDOWS_MS, g)?;
        let total = w.spec * spec + w.mr * mr + w.os * os;

        if let (Some(g_spec), Some(g_os), Some(mut g_mr)) = (g_spec, g_os, g_mr) {
            g_mr.resize(frames * d.hop(), 0.0);
            let g_est_mr = Stft::new(d.stft_params())?.inverse_adjoint(&g_mr, frames);
            let mut g_est = ComplexSpectrogram::zeros(frames, est.bins);
            for (i, v) in g_est.values.iter_mut().enumerate() {
                *v = g_spec.values[i] * w.spec + g_os.values[i] * w.os + g_est_mr.values[i] * w.mr;
            }
            let (g_stage1, g_taps) = deep_filter_backward(&stage1, &taps, d, &g_est)?;
            let g_gains = apply_erb_gains_backward(&self.noisy_spec, &self.fb, &g_stage1);
            self.grads = Some((g_gains.data, taps_to_rows(&g_taps)));
        }
        Ok(total)
    }
}

impl DiffOp for Objective {
    fn name(&self) -> &str {
        "enhancement-objective"
    }

    fn forward(&mut self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(vec![self.evaluate(inputs[0], inputs[1])?])
    }

    fn backward(&self, _inputs: &[&[f64]], grad_out: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (g, t) = self
            .grads
            .as_ref()
            .ok_or_else(|| Error::Capability("objective evaluated without gradients".into()))?;
        let s = grad_out[0];
        Ok(vec![
            g.iter().map(|v| v * s).collect(),
            t.iter().map(|v| v * s).collect(),
        ])
    }
}

fn objective(model: &Model, p: &Prepared, weights: LossWeights, with_grad: bool) -> Objective {
    Objective {
        cfg: model.dsp().clone(),
        fb: model.filterbank().clone(),
        noisy_spec: p.noisy_spec.clone(),
        clean_spec: p.clean_spec.clone(),
        clean: p.clean.clone(),
        weights,
        with_grad,
        grads: None,
    }
}

/// Weighted loss of one example without gradients.
pub fn example_loss(model: &Model, ex: &TrainExample, weights: &LossWeights) -> Result<f64> {
    let p = prepare(model, ex)?;
    let d = model.dsp();
    let frames = p.inputs.frames;
    let mut ev = Evaluator::new(model.weights(), frames);
    let erb = ev.input(d.erb_bands, p.inputs.erb.clone())?;
    let cplx = ev.input(2 * d.df_bins(), p.inputs.cplx.clone())?;
    let emb = match model.embedding_row::<f64>(ex.embedding.as_ref()) {
        Some(row) => Some(ev.input(row.len(), row.repeat(frames))?),
        None => None,
    };
    let heads = forward(&mut ev, model.variant(), erb, cplx, emb)?;
    objective(model, &p, *weights, false).evaluate(ev.value(heads.gains), ev.value(heads.taps))
}

/// Weighted loss of one example and its gradient for every parameter.
pub fn example_gradient(
    model: &Model,
    ex: &TrainExample,
    weights: &LossWeights,
) -> Result<(f64, Weights<f64>)> {
    let p = prepare(model, ex)?;
    let d = model.dsp();
    let frames = p.inputs.frames;
    let mut tape = Tape::new(model.weights(), frames);
    let erb = tape.input(d.erb_bands, p.inputs.erb.clone())?;
    let cplx = tape.input(2 * d.df_bins(), p.inputs.cplx.clone())?;
    let emb = match model.embedding_row::<f64>(ex.embedding.as_ref()) {
        Some(row) => Some(tape.input(row.len(), row.repeat(frames))?),
        None => None,
    };
    let heads = forward(&mut tape, model.variant(), erb, cplx, emb)?;
    let op = objective(model, &p, *weights, true);
    let loss = tape.custom(Box::new(op), &[heads.gains, heads.taps])?;
    let value = tape.value(loss)[0];
    let grads = tape.backward(loss)?;
    Ok((value, grads.params))
}
