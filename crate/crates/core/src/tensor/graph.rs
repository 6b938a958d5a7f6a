//! Evaluating a network description with interchangeable backends.
//!
//! Model code builds its dataflow once against [`Recorder`]; the same code
//! then runs as a batch evaluation ([`Evaluator`]), a frame-by-frame
//! streaming step ([`FrameRecorder`]), or a differentiable trace ([`Tape`]).

use std::collections::BTreeMap;

use super::layers::{frame_forward, seq_backward, seq_forward, LayerCache};
use super::weights::Weights;
use crate::error::{Error, Result};
use crate::real::Real;

/// Handle to a value produced while recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node(usize);

pub trait Recorder {
    /// Applies the named layer to `inputs`.
    fn layer(&mut self, name: &str, inputs: &[Node]) -> Result<Node>;
}

fn check_inputs(name: &str, widths: &[usize], got: &[usize]) -> Result<()> {
    if widths != got {
        return Err(Error::domain(format!(
            "layer {name} expects input widths {widths:?}, got {got:?}"
        )));
    }
    Ok(())
}

/// Whole-sequence evaluation without gradient bookkeeping.
pub struct Evaluator<'w, T> {
    weights: &'w Weights<T>,
    frames: usize,
    values: Vec<(usize, Vec<T>)>,
}

impl<'w, T: Real> Evaluator<'w, T> {
    pub fn new(weights: &'w Weights<T>, frames: usize) -> Self {
        Self {
            weights,
            frames,
            values: Vec::new(),
        }
    }

    /// Registers a `frames x width` input, frame-major.
    pub fn input(&mut self, width: usize, data: Vec<T>) -> Result<Node> {
        if data.len() != width * self.frames {
            return Err(Error::domain(format!(
                "input of {} values is not {} frames of width {width}",
                data.len(),
                self.frames
            )));
        }
        self.values.push((width, data));
        Ok(Node(self.values.len() - 1))
    }

    pub fn value(&self, node: Node) -> &[T] {
        &self.values[node.0].1
    }

    pub fn width(&self, node: Node) -> usize {
        self.values[node.0].0
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
}

impl<T: Real> Recorder for Evaluator<'_, T> {
    fn layer(&mut self, name: &str, inputs: &[Node]) -> Result<Node> {
        let l = self.weights.get(name)?;
        let got: Vec<usize> = inputs.iter().map(|n| self.values[n.0].0).collect();
        check_inputs(name, &l.spec.input_widths(), &got)?;
        let xs: Vec<&[T]> = inputs.iter().map(|n| self.values[n.0].1.as_slice()).collect();
        let (out, _) = seq_forward(&l.spec, &l.params, &xs, self.frames, false);
        self.values.push((l.spec.output_width(), out));
        Ok(Node(self.values.len() - 1))
    }
}

/// Recurrent state of every stateful layer, kept between streaming frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates<T> {
    slots: BTreeMap<String, Vec<T>>,
}

impl<T: Real> LayerStates<T> {
    pub fn new(weights: &Weights<T>) -> Self {
        let slots = weights
            .iter()
            .filter(|(_, l)| l.spec.state_len() > 0)
            .map(|(n, l)| (n.to_string(), vec![T::zero(); l.spec.state_len()]))
            .collect();
        Self { slots }
    }

    pub fn reset(&mut self) {
        for s in self.slots.values_mut() {
            s.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn get(&self, layer: &str) -> Option<&[T]> {
        self.slots.get(layer).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.slots.iter().map(|(n, s)| (n.as_str(), s.as_slice()))
    }
}

/// One streaming frame; layer states are read and advanced in place.
pub struct FrameRecorder<'a, T> {
    weights: &'a Weights<T>,
    states: &'a mut LayerStates<T>,
    values: Vec<Vec<T>>,
}

impl<'a, T: Real> FrameRecorder<'a, T> {
    pub fn new(weights: &'a Weights<T>, states: &'a mut LayerStates<T>) -> Self {
        Self {
            weights,
            states,
            values: Vec::new(),
        }
    }

    pub fn input(&mut self, data: Vec<T>) -> Node {
        self.values.push(data);
        Node(self.values.len() - 1)
    }

    pub fn value(&self, node: Node) -> &[T] {
        &self.values[node.0]
    }
}

impl<T: Real> Recorder for FrameRecorder<'_, T> {
    fn layer(&mut self, name: &str, inputs: &[Node]) -> Result<Node> {
        let l = self.weights.get(name)?;
        let got: Vec<usize> = inputs.iter().map(|n| self.values[n.0].len()).collect();
        check_inputs(name, &l.spec.input_widths(), &got)?;
        let mut out = vec![T::zero(); l.spec.output_width()];
        let xs: Vec<&[T]> = inputs.iter().map(|n| self.values[n.0].as_slice()).collect();
        let mut none = Vec::new();
        let state = match self.states.slots.get_mut(name) {
            Some(s) => s,
            None => &mut none,
        };
        frame_forward(&l.spec, &l.params, &xs, state, &mut out);
        self.values.push(out);
        Ok(Node(self.values.len() - 1))
    }
}

/// A differentiable operation outside the layer set (signal processing,
/// losses). Operations without a gradient keep the default `backward`.
pub trait DiffOp {
    fn name(&self) -> &str;

    /// Computes the output; may cache whatever `backward` needs.
    fn forward(&mut self, inputs: &[&[f64]]) -> Result<Vec<f64>>;

    /// Gradients with respect to each input, given the output gradient.
    fn backward(&self, inputs: &[&[f64]], grad_out: &[f64]) -> Result<Vec<Vec<f64>>> {
        let _ = (inputs, grad_out);
        Err(Error::Capability(format!(
            "operation {} has no gradient",
            self.name()
        )))
    }
}

enum Op {
    Input,
    Layer {
        name: String,
        inputs: Vec<Node>,
        cache: LayerCache<f64>,
    },
    Custom {
        op: Box<dyn DiffOp + Send>,
        inputs: Vec<Node>,
    },
}

/// Records a forward pass in f64 for reverse-mode differentiation.
pub struct Tape<'w> {
    weights: &'w Weights<f64>,
    frames: usize,
    values: Vec<Vec<f64>>,
    widths: Vec<usize>,
    ops: Vec<Op>,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    /// Parameter gradients laid out like the weights; zero for unused layers.
    pub params: Weights<f64>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a recorded value, if it influenced the loss.
    pub fn node(&self, node: Node) -> Option<&[f64]> {
        self.nodes[node.0].as_deref()
    }
}

impl<'w> Tape<'w> {
    pub fn new(weights: &'w Weights<f64>, frames: usize) -> Self {
        Self {
            weights,
            frames,
            values: Vec::new(),
            widths: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Registers a `frames x width` sequence input.
    pub fn input(&mut self, width: usize, data: Vec<f64>) -> Result<Node> {
        if data.len() != width * self.frames {
            return Err(Error::domain(format!(
                "input of {} values is not {} frames of width {width}",
                data.len(),
                self.frames
            )));
        }
        Ok(self.push(width, data, Op::Input))
    }

    /// Registers an arbitrary flat value (not frame-structured).
    pub fn constant(&mut self, data: Vec<f64>) -> Node {
        self.push(0, data, Op::Input)
    }

    fn push(&mut self, width: usize, data: Vec<f64>, op: Op) -> Node {
        self.values.push(data);
        self.widths.push(width);
        self.ops.push(op);
        Node(self.values.len() - 1)
    }

    pub fn value(&self, node: Node) -> &[f64] {
        &self.values[node.0]
    }

    pub fn custom(&mut self, mut op: Box<dyn DiffOp + Send>, inputs: &[Node]) -> Result<Node> {
        let xs: Vec<&[f64]> = inputs.iter().map(|n| self.values[n.0].as_slice()).collect();
        let out = op.forward(&xs)?;
        Ok(self.push(
            0,
            out,
            Op::Custom {
                op,
                inputs: inputs.to_vec(),
            },
        ))
    }

    /// Backpropagates from a scalar `loss` node.
    pub fn backward(&self, loss: Node) -> Result<Gradients> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::domain("backward needs a scalar loss"));
        }
        let mut params = self.weights.zeros_like();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let input_grads: Vec<(Node, Vec<f64>)> = match &self.ops[idx] {
                Op::Input => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Layer {
                    name,
                    inputs,
                    cache,
                } => {
                    let l = self.weights.get(name)?;
                    let lg = seq_backward(&l.spec, &l.params, cache, &g, self.frames)?;
                    if let Some(dst) = params.get_mut(name) {
                        for (d, s) in dst.params.iter_mut().zip(lg.params) {
                            for (a, b) in d.iter_mut().zip(s) {
                                *a += b;
                            }
                        }
                    }
                    inputs.iter().copied().zip(lg.inputs).collect()
                }
                Op::Custom { op, inputs } => {
                    let xs: Vec<&[f64]> =
                        inputs.iter().map(|n| self.values[n.0].as_slice()).collect();
                    let gs = op.backward(&xs, &g)?;
                    if gs.len() != inputs.len() {
                        return Err(Error::Capability(format!(
                            "operation {} returned {} gradients for {} inputs",
                            op.name(),
                            gs.len(),
                            inputs.len()
                        )));
                    }
                    inputs.iter().copied().zip(gs).collect()
                }
            };
            grads[idx] = Some(g);
            for (n, gi) in input_grads {
                match &mut grads[n.0] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&gi) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(Gradients {
            params,
            nodes: grads,
        })
    }
}

impl Recorder for Tape<'_> {
    fn layer(&mut self, name: &str, inputs: &[Node]) -> Result<Node> {
        let l = self.weights.get(name)?;
        let got: Vec<usize> = inputs.iter().map(|n| self.widths[n.0]).collect();
        check_inputs(name, &l.spec.input_widths(), &got)?;
        let xs: Vec<&[f64]> = inputs.iter().map(|n| self.values[n.0].as_slice()).collect();
        let (out, cache) = seq_forward(&l.spec, &l.params, &xs, self.frames, true);
        Ok(self.push(
            l.spec.output_width(),
            out,
            Op::Layer {
                name: name.to_string(),
                inputs: inputs.to_vec(),
                cache,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::layers::{Activation, LayerSpec};

    struct SumSquares;

    impl DiffOp for SumSquares {
        fn name(&self) -> &str {
            "sum-squares"
        }
        fn forward(&mut self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
            Ok(vec![inputs[0].iter().map(|v| v * v).sum()])
        }
        fn backward(&self, inputs: &[&[f64]], g: &[f64]) -> Result<Vec<Vec<f64>>> {
            Ok(vec![inputs[0].iter().map(|v| 2.0 * v * g[0]).collect()])
        }
    }

    struct NoGrad;

    impl DiffOp for NoGrad {
        fn name(&self) -> &str {
            "opaque"
        }
        fn forward(&mut self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
            Ok(vec![inputs[0].iter().sum()])
        }
    }

    fn net() -> Weights<f64> {
        Weights::init(
            &[
                (
                    "conv".into(),
                    LayerSpec::Conv2d {
                        in_ch: 1,
                        out_ch: 2,
                        in_freq: 6,
                        k_freq: 3,
                        k_time: 2,
                        stride_freq: 2,
                    },
                ),
                (
                    "act".into(),
                    LayerSpec::Pointwise {
                        act: Activation::Relu,
                        width: 6,
                    },
                ),
                ("cat".into(), LayerSpec::Concat { widths: vec![6, 2] }),
                ("gru".into(), LayerSpec::GruCell { input: 8, hidden: 3 }),
                (
                    "fc".into(),
                    LayerSpec::GroupedLinear {
                        input: 3,
                        output: 3,
                        groups: 1,
                        bias: true,
                    },
                ),
                (
                    "sig".into(),
                    LayerSpec::Pointwise {
                        act: Activation::Sigmoid,
                        width: 3,
                    },
                ),
                (
                    "unused".into(),
                    LayerSpec::GroupedLinear {
                        input: 2,
                        output: 2,
                        groups: 1,
                        bias: false,
                    },
                ),
            ],
            11,
        )
        .unwrap()
    }

    fn forward<R: Recorder>(r: &mut R, x: Node, e: Node) -> Result<Node> {
        let c = r.layer("conv", &[x])?;
        let c = r.layer("act", &[c])?;
        let c = r.layer("cat", &[c, e])?;
        let h = r.layer("gru", &[c])?;
        let y = r.layer("fc", &[h])?;
        r.layer("sig", &[y])
    }

    const FRAMES: usize = 5;

    fn data() -> (Vec<f64>, Vec<f64>) {
        let x = (0..FRAMES * 6).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect();
        let e = (0..FRAMES * 2).map(|i| (i as f64).sin()).collect();
        (x, e)
    }

    fn loss_of(w: &Weights<f64>) -> f64 {
        let (x, e) = data();
        let mut tape = Tape::new(w, FRAMES);
        let x = tape.input(6, x).unwrap();
        let e = tape.input(2, e).unwrap();
        let y = forward(&mut tape, x, e).unwrap();
        let l = tape.custom(Box::new(SumSquares), &[y]).unwrap();
        tape.value(l)[0]
    }

    #[test]
    fn backends_agree() {
        let w = net();
        let (x, e) = data();
        let mut ev = Evaluator::new(&w, FRAMES);
        let xn = ev.input(6, x.clone()).unwrap();
        let en = ev.input(2, e.clone()).unwrap();
        let y = forward(&mut ev, xn, en).unwrap();
        let batch = ev.value(y).to_vec();

        let mut states = LayerStates::new(&w);
        let mut streamed = Vec::new();
        for t in 0..FRAMES {
            let mut fr = FrameRecorder::new(&w, &mut states);
            let xn = fr.input(x[t * 6..(t + 1) * 6].to_vec());
            let en = fr.input(e[t * 2..(t + 1) * 2].to_vec());
            let y = forward(&mut fr, xn, en).unwrap();
            streamed.extend_from_slice(fr.value(y));
        }
        assert_eq!(batch, streamed);
    }

    #[test]
    fn tape_gradients_match_finite_differences() {
        let w = net();
        let (x, e) = data();
        let mut tape = Tape::new(&w, FRAMES);
        let xn = tape.input(6, x).unwrap();
        let en = tape.input(2, e).unwrap();
        let y = forward(&mut tape, xn, en).unwrap();
        let l = tape.custom(Box::new(SumSquares), &[y]).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.node(xn).is_some());
        assert!(g.params.get("unused").unwrap().params[0].iter().all(|&v| v == 0.0));

        let h = 1e-6;
        for (name, layer) in w.iter() {
            for (pi, p) in layer.params.iter().enumerate() {
                for k in (0..p.len()).step_by(3) {
                    let mut wp = w.clone();
                    wp.get_mut(name).unwrap().params[pi][k] += h;
                    let mut wm = w.clone();
                    wm.get_mut(name).unwrap().params[pi][k] -= h;
                    let fd = (loss_of(&wp) - loss_of(&wm)) / (2.0 * h);
                    let an = g.params.get(name).unwrap().params[pi][k];
                    let denom = fd.abs().max(an.abs()).max(1e-4);
                    assert!((fd - an).abs() / denom < 1e-4, "{name}[{pi}][{k}]: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn missing_gradient_is_capability_error() {
        let w = net();
        let mut tape = Tape::new(&w, 1);
        let x = tape.constant(vec![1.0, 2.0]);
        let s = tape.custom(Box::new(NoGrad), &[x]).unwrap();
        let l = tape.custom(Box::new(SumSquares), &[s]).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::Capability(_))));
    }
}
