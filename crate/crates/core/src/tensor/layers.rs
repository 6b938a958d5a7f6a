//! The layer kinds the enhancement network is built from.
//!
//! Every layer exists in two forms: a per-frame kernel that carries its own
//! recurrent state (streaming inference), and a whole-sequence kernel with a
//! matching backward pass (offline inference and training). Values are laid
//! out frame-major; convolution frames are channel-major `[channels][freq]`.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::{axpy, dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// 2-D convolution over (frequency, time): zero-padded and strided in
    /// frequency, causal in time.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        in_freq: usize,
        k_freq: usize,
        k_time: usize,
        stride_freq: usize,
    },
    /// Block-diagonal linear map: input and output split into `groups` slices.
    GroupedLinear {
        input: usize,
        output: usize,
        groups: usize,
        bias: bool,
    },
    /// Gated recurrent unit; output is the new hidden state.
    GruCell { input: usize, hidden: usize },
    Pointwise { act: Activation, width: usize },
    Concat { widths: Vec<usize> },
}

/// Name suffix, shape, and fan-in of one parameter tensor of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamShape {
    pub suffix: &'static str,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::GroupedLinear { .. } => "grouped-linear",
            LayerSpec::GruCell { .. } => "gru-cell",
            LayerSpec::Pointwise { .. } => "pointwise",
            LayerSpec::Concat { .. } => "concat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                in_freq,
                k_freq,
                k_time,
                stride_freq,
            } => {
                *in_ch > 0
                    && *out_ch > 0
                    && *in_freq > 0
                    && *k_freq > 0
                    && k_freq % 2 == 1
                    && *k_time > 0
                    && *stride_freq > 0
            }
            LayerSpec::GroupedLinear {
                input,
                output,
                groups,
                ..
            } => *input > 0 && *output > 0 && *groups > 0 && input % groups == 0 && output % groups == 0,
            LayerSpec::GruCell { input, hidden } => *input > 0 && *hidden > 0,
            LayerSpec::Pointwise { width, .. } => *width > 0,
            LayerSpec::Concat { widths } => !widths.is_empty() && widths.iter().all(|&w| w > 0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid layer dimensions {self:?}")))
        }
    }

    /// Output frequency bins of a convolution.
    pub fn conv_out_freq(in_freq: usize, k_freq: usize, stride: usize) -> usize {
        let pad = (k_freq - 1) / 2;
        (in_freq + 2 * pad - k_freq) / stride + 1
    }

    pub fn input_widths(&self) -> Vec<usize> {
        match self {
            LayerSpec::Conv2d { in_ch, in_freq, .. } => vec![in_ch * in_freq],
            LayerSpec::GroupedLinear { input, .. } => vec![*input],
            LayerSpec::GruCell { input, .. } => vec![*input],
            LayerSpec::Pointwise { width, .. } => vec![*width],
            LayerSpec::Concat { widths } => widths.clone(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            LayerSpec::Conv2d {
                out_ch,
                in_freq,
                k_freq,
                stride_freq,
                ..
            } => out_ch * Self::conv_out_freq(*in_freq, *k_freq, *stride_freq),
            LayerSpec::GroupedLinear { output, .. } => *output,
            LayerSpec::GruCell { hidden, .. } => *hidden,
            LayerSpec::Pointwise { width, .. } => *width,
            LayerSpec::Concat { widths } => widths.iter().sum(),
        }
    }

    pub fn param_shapes(&self) -> Vec<ParamShape> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                k_freq,
                k_time,
                ..
            } => {
                let fan_in = in_ch * k_freq * k_time;
                vec![
                    ParamShape {
                        suffix: "weight",
                        shape: vec![out_ch, in_ch, k_freq, k_time],
                        fan_in,
                    },
                    ParamShape {
                        suffix: "bias",
                        shape: vec![out_ch],
                        fan_in,
                    },
                ]
            }
            LayerSpec::GroupedLinear {
                input,
                output,
                groups,
                bias,
            } => {
                let fan_in = input / groups;
                let mut v = vec![ParamShape {
                    suffix: "weight",
                    shape: vec![groups, output / groups, input / groups],
                    fan_in,
                }];
                if bias {
                    v.push(ParamShape {
                        suffix: "bias",
                        shape: vec![output],
                        fan_in,
                    });
                }
                v
            }
            LayerSpec::GruCell { input, hidden } => vec![
                ParamShape {
                    suffix: "weight_ih",
                    shape: vec![3 * hidden, input],
                    fan_in: input,
                },
                ParamShape {
                    suffix: "weight_hh",
                    shape: vec![3 * hidden, hidden],
                    fan_in: hidden,
                },
                ParamShape {
                    suffix: "bias_ih",
                    shape: vec![3 * hidden],
                    fan_in: hidden,
                },
                ParamShape {
                    suffix: "bias_hh",
                    shape: vec![3 * hidden],
                    fan_in: hidden,
                },
            ],
            LayerSpec::Pointwise { .. } | LayerSpec::Concat { .. } => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum()
    }

    /// Multiply-accumulates to process one frame (activations excluded).
    pub fn macs_per_frame(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                in_freq,
                k_freq,
                k_time,
                stride_freq,
            } => {
                out_ch * in_ch * k_freq * k_time * Self::conv_out_freq(in_freq, k_freq, stride_freq)
            }
            LayerSpec::GroupedLinear {
                input,
                output,
                groups,
                ..
            } => input * output / groups,
            LayerSpec::GruCell { input, hidden } => 3 * hidden * (input + hidden),
            LayerSpec::Pointwise { .. } | LayerSpec::Concat { .. } => 0,
        }
    }

    /// Length of the state a streaming evaluation carries between frames.
    pub fn state_len(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                in_freq,
                k_time,
                ..
            } => (k_time - 1) * in_ch * in_freq,
            LayerSpec::GruCell { hidden, .. } => hidden,
            _ => 0,
        }
    }

    /// Seeded uniform initialization in `+-sqrt(1 / fan_in)`.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        self.param_shapes()
            .iter()
            .map(|p| {
                let bound = (1.0 / p.fan_in as f64).sqrt();
                let n: usize = p.shape.iter().product();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            })
            .collect()
    }
}

struct ConvGeom {
    in_ch: usize,
    out_ch: usize,
    in_freq: usize,
    out_freq: usize,
    k_freq: usize,
    k_time: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn of(spec: &LayerSpec) -> Self {
        let LayerSpec::Conv2d {
            in_ch,
            out_ch,
            in_freq,
            k_freq,
            k_time,
            stride_freq,
        } = *spec
        else {
            unreachable!()
        };
        Self {
            in_ch,
            out_ch,
            in_freq,
            out_freq: LayerSpec::conv_out_freq(in_freq, k_freq, stride_freq),
            k_freq,
            k_time,
            stride: stride_freq,
            pad: (k_freq - 1) / 2,
        }
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.k_freq * self.k_time
    }

    /// Gathers the receptive field of output position `fo`; `frame(j)` returns
    /// the input `k_time - 1 - j` frames back, or `None` before the start.
    fn gather<'a, T: Real>(&self, frame: impl Fn(usize) -> Option<&'a [T]>, fo: usize, patch: &mut [T]) {
        let mut idx = 0;
        for c in 0..self.in_ch {
            for i in 0..self.k_freq {
                let ff = (fo * self.stride + i) as isize - self.pad as isize;
                let valid = ff >= 0 && (ff as usize) < self.in_freq;
                for j in 0..self.k_time {
                    patch[idx] = match frame(j) {
                        Some(x) if valid => x[c * self.in_freq + ff as usize],
                        _ => T::zero(),
                    };
                    idx += 1;
                }
            }
        }
    }

    /// Adds `patch` back into `dx`; `offset(j)` is the start of frame `j`'s
    /// slice in `dx`, mirroring [`ConvGeom::gather`].
    fn scatter<T: Real>(&self, dx: &mut [T], offset: impl Fn(usize) -> Option<usize>, fo: usize, patch: &[T]) {
        let mut idx = 0;
        for c in 0..self.in_ch {
            for i in 0..self.k_freq {
                let ff = (fo * self.stride + i) as isize - self.pad as isize;
                let valid = ff >= 0 && (ff as usize) < self.in_freq;
                for j in 0..self.k_time {
                    if let (true, Some(base)) = (valid, offset(j)) {
                        dx[base + c * self.in_freq + ff as usize] += patch[idx];
                    }
                    idx += 1;
                }
            }
        }
    }

    fn apply<T: Real>(&self, w: &[Vec<T>], patch: &[T], fo: usize, out: &mut [T]) {
        let n = self.patch_len();
        for o in 0..self.out_ch {
            out[o * self.out_freq + fo] = w[1][o] + dot(&w[0][o * n..(o + 1) * n], patch);
        }
    }
}

#[inline]
fn gru_gates<T: Real>(
    w: &[Vec<T>],
    input: usize,
    hidden: usize,
    x: &[T],
    h: &[T],
    gi: &mut [T],
    gh: &mut [T],
) {
    for q in 0..3 * hidden {
        gi[q] = w[2][q] + dot(&w[0][q * input..(q + 1) * input], x);
        gh[q] = w[3][q] + dot(&w[1][q * hidden..(q + 1) * hidden], h);
    }
}

fn grouped_linear<T: Real>(w: &[Vec<T>], input: usize, output: usize, groups: usize, x: &[T], y: &mut [T]) {
    let (ig, og) = (input / groups, output / groups);
    for g in 0..groups {
        let xg = &x[g * ig..(g + 1) * ig];
        for o in 0..og {
            let row = (g * og + o) * ig;
            let b = w.get(1).map_or(T::zero(), |b| b[g * og + o]);
            y[g * og + o] = b + dot(&w[0][row..row + ig], xg);
        }
    }
}

/// Advances one frame. `state` must be `spec.state_len()` long and `out`
/// `spec.output_width()` long; shapes are the caller's responsibility.
pub fn frame_forward<T: Real>(
    spec: &LayerSpec,
    w: &[Vec<T>],
    inputs: &[&[T]],
    state: &mut [T],
    out: &mut [T],
) {
    match *spec {
        LayerSpec::Conv2d { .. } => {
            let g = ConvGeom::of(spec);
            let in_w = g.in_ch * g.in_freq;
            let x = inputs[0];
            let mut patch = vec![T::zero(); g.patch_len()];
            for fo in 0..g.out_freq {
                g.gather(
                    |j| {
                        if j + 1 == g.k_time {
                            Some(x)
                        } else {
                            Some(&state[j * in_w..(j + 1) * in_w])
                        }
                    },
                    fo,
                    &mut patch,
                );
                g.apply(w, &patch, fo, out);
            }
            if g.k_time > 1 {
                state.copy_within(in_w.., 0);
                let n = state.len();
                state[n - in_w..].copy_from_slice(x);
            }
        }
        LayerSpec::GroupedLinear {
            input,
            output,
            groups,
            ..
        } => grouped_linear(w, input, output, groups, inputs[0], out),
        LayerSpec::GruCell { input, hidden } => {
            let mut gi = vec![T::zero(); 3 * hidden];
            let mut gh = vec![T::zero(); 3 * hidden];
            gru_gates(w, input, hidden, inputs[0], state, &mut gi, &mut gh);
            for u in 0..hidden {
                let r = sigmoid(gi[u] + gh[u]);
                let z = sigmoid(gi[hidden + u] + gh[hidden + u]);
                let n = (gi[2 * hidden + u] + r * gh[2 * hidden + u]).tanh();
                out[u] = (T::one() - z) * n + z * state[u];
            }
            state.copy_from_slice(&out[..hidden]);
        }
        LayerSpec::Pointwise { act, .. } => {
            for (o, &x) in out.iter_mut().zip(inputs[0]) {
                *o = act.apply(x);
            }
        }
        LayerSpec::Concat { ref widths } => {
            let mut at = 0;
            for (x, &wd) in inputs.iter().zip(widths) {
                out[at..at + wd].copy_from_slice(&x[..wd]);
                at += wd;
            }
        }
    }
}

/// Values kept from a sequence forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Empty,
    Inputs(Vec<Vec<T>>),
    Output(Vec<T>),
    Gru {
        input: Vec<T>,
        h_prev: Vec<T>,
        r: Vec<T>,
        z: Vec<T>,
        n: Vec<T>,
        gh_n: Vec<T>,
    },
}

/// Runs a layer over `frames` frames with zero initial state.
pub fn seq_forward<T: Real>(
    spec: &LayerSpec,
    w: &[Vec<T>],
    inputs: &[&[T]],
    frames: usize,
    keep_cache: bool,
) -> (Vec<T>, LayerCache<T>) {
    let out_w = spec.output_width();
    let mut out = vec![T::zero(); frames * out_w];
    let cache = match *spec {
        LayerSpec::Conv2d { .. } => {
            let g = ConvGeom::of(spec);
            let in_w = g.in_ch * g.in_freq;
            let x = inputs[0];
            let mut patch = vec![T::zero(); g.patch_len()];
            for t in 0..frames {
                let y = &mut out[t * out_w..(t + 1) * out_w];
                for fo in 0..g.out_freq {
                    g.gather(
                        |j| {
                            let back = g.k_time - 1 - j;
                            (t >= back).then(|| &x[(t - back) * in_w..(t - back + 1) * in_w])
                        },
                        fo,
                        &mut patch,
                    );
                    g.apply(w, &patch, fo, y);
                }
            }
            if keep_cache {
                LayerCache::Inputs(vec![x.to_vec()])
            } else {
                LayerCache::Empty
            }
        }
        LayerSpec::GroupedLinear {
            input,
            output,
            groups,
            ..
        } => {
            let x = inputs[0];
            for t in 0..frames {
                grouped_linear(
                    w,
                    input,
                    output,
                    groups,
                    &x[t * input..(t + 1) * input],
                    &mut out[t * output..(t + 1) * output],
                );
            }
            if keep_cache {
                LayerCache::Inputs(vec![x.to_vec()])
            } else {
                LayerCache::Empty
            }
        }
        LayerSpec::GruCell { input, hidden } => {
            let x = inputs[0];
            let mut h = vec![T::zero(); hidden];
            let mut gi = vec![T::zero(); 3 * hidden];
            let mut gh = vec![T::zero(); 3 * hidden];
            let cap = if keep_cache { frames * hidden } else { 0 };
            let (mut hp, mut rs, mut zs, mut ns, mut ghn) = (
                Vec::with_capacity(cap),
                Vec::with_capacity(cap),
                Vec::with_capacity(cap),
                Vec::with_capacity(cap),
                Vec::with_capacity(cap),
            );
            for t in 0..frames {
                gru_gates(w, input, hidden, &x[t * input..(t + 1) * input], &h, &mut gi, &mut gh);
                if keep_cache {
                    hp.extend_from_slice(&h);
                }
                let y = &mut out[t * hidden..(t + 1) * hidden];
                for u in 0..hidden {
                    let r = sigmoid(gi[u] + gh[u]);
                    let z = sigmoid(gi[hidden + u] + gh[hidden + u]);
                    let n = (gi[2 * hidden + u] + r * gh[2 * hidden + u]).tanh();
                    y[u] = (T::one() - z) * n + z * h[u];
                    if keep_cache {
                        rs.push(r);
                        zs.push(z);
                        ns.push(n);
                        ghn.push(gh[2 * hidden + u]);
                    }
                }
                h.copy_from_slice(y);
            }
            if keep_cache {
                LayerCache::Gru {
                    input: x.to_vec(),
                    h_prev: hp,
                    r: rs,
                    z: zs,
                    n: ns,
                    gh_n: ghn,
                }
            } else {
                LayerCache::Empty
            }
        }
        LayerSpec::Pointwise { act, .. } => {
            for (o, &x) in out.iter_mut().zip(inputs[0]) {
                *o = act.apply(x);
            }
            if keep_cache {
                LayerCache::Output(out.clone())
            } else {
                LayerCache::Empty
            }
        }
        LayerSpec::Concat { ref widths } => {
            for t in 0..frames {
                let mut at = t * out_w;
                for (x, &wd) in inputs.iter().zip(widths) {
                    out[at..at + wd].copy_from_slice(&x[t * wd..(t + 1) * wd]);
                    at += wd;
                }
            }
            LayerCache::Empty
        }
    };
    (out, cache)
}

/// Gradients of a sequence layer: one per input, one per parameter tensor.
pub struct LayerGrads<T> {
    pub inputs: Vec<Vec<T>>,
    pub params: Vec<Vec<T>>,
}

pub fn seq_backward<T: Real>(
    spec: &LayerSpec,
    w: &[Vec<T>],
    cache: &LayerCache<T>,
    grad_out: &[T],
    frames: usize,
) -> Result<LayerGrads<T>> {
    let missing = || Error::Capability(format!("{} backward without a forward cache", spec.kind()));
    let mut params: Vec<Vec<T>> = w.iter().map(|p| vec![T::zero(); p.len()]).collect();
    let out_w = spec.output_width();
    let inputs = match *spec {
        LayerSpec::Conv2d { .. } => {
            let LayerCache::Inputs(xs) = cache else {
                return Err(missing());
            };
            let x = &xs[0];
            let g = ConvGeom::of(spec);
            let in_w = g.in_ch * g.in_freq;
            let n = g.patch_len();
            let mut dx = vec![T::zero(); frames * in_w];
            let mut patch = vec![T::zero(); n];
            let mut dpatch = vec![T::zero(); n];
            let (dw, rest) = params.split_at_mut(1);
            let (dw, db) = (&mut dw[0], &mut rest[0]);
            for t in 0..frames {
                let gy = &grad_out[t * out_w..(t + 1) * out_w];
                for fo in 0..g.out_freq {
                    g.gather(
                        |j| {
                            let back = g.k_time - 1 - j;
                            (t >= back).then(|| &x[(t - back) * in_w..(t - back + 1) * in_w])
                        },
                        fo,
                        &mut patch,
                    );
                    dpatch.iter_mut().for_each(|v| *v = T::zero());
                    for o in 0..g.out_ch {
                        let go = gy[o * g.out_freq + fo];
                        db[o] += go;
                        axpy(go, &patch, &mut dw[o * n..(o + 1) * n]);
                        axpy(go, &w[0][o * n..(o + 1) * n], &mut dpatch);
                    }
                    g.scatter(
                        &mut dx,
                        |j| {
                            let back = g.k_time - 1 - j;
                            (t >= back).then(|| (t - back) * in_w)
                        },
                        fo,
                        &dpatch,
                    );
                }
            }
            vec![dx]
        }
        LayerSpec::GroupedLinear {
            input,
            output,
            groups,
            bias,
        } => {
            let LayerCache::Inputs(xs) = cache else {
                return Err(missing());
            };
            let x = &xs[0];
            let (ig, og) = (input / groups, output / groups);
            let mut dx = vec![T::zero(); frames * input];
            for t in 0..frames {
                let xt = &x[t * input..(t + 1) * input];
                let gy = &grad_out[t * output..(t + 1) * output];
                let dxt = &mut dx[t * input..(t + 1) * input];
                for g in 0..groups {
                    for o in 0..og {
                        let go = gy[g * og + o];
                        let row = (g * og + o) * ig;
                        axpy(go, &xt[g * ig..(g + 1) * ig], &mut params[0][row..row + ig]);
                        axpy(go, &w[0][row..row + ig], &mut dxt[g * ig..(g + 1) * ig]);
                        if bias {
                            params[1][g * og + o] += go;
                        }
                    }
                }
            }
            vec![dx]
        }
        LayerSpec::GruCell { input, hidden } => {
            let LayerCache::Gru {
                input: x,
                h_prev,
                r,
                z,
                n,
                gh_n,
            } = cache
            else {
                return Err(missing());
            };
            let hd = hidden;
            let mut dx = vec![T::zero(); frames * input];
            let mut dh = vec![T::zero(); hd];
            let mut da_i = vec![T::zero(); 3 * hd];
            let mut da_h = vec![T::zero(); 3 * hd];
            for t in (0..frames).rev() {
                let gy = &grad_out[t * hd..(t + 1) * hd];
                let hp = &h_prev[t * hd..(t + 1) * hd];
                for u in 0..hd {
                    let i = t * hd + u;
                    let dht = dh[u] + gy[u];
                    let dn = dht * (T::one() - z[i]);
                    let dz = dht * (hp[u] - n[i]);
                    let da_n = dn * (T::one() - n[i] * n[i]);
                    let dr = da_n * gh_n[i];
                    let da_r = dr * r[i] * (T::one() - r[i]);
                    let da_z = dz * z[i] * (T::one() - z[i]);
                    da_i[u] = da_r;
                    da_i[hd + u] = da_z;
                    da_i[2 * hd + u] = da_n;
                    da_h[u] = da_r;
                    da_h[hd + u] = da_z;
                    da_h[2 * hd + u] = da_n * r[i];
                    dh[u] = dht * z[i];
                }
                let xt = &x[t * input..(t + 1) * input];
                let dxt = &mut dx[t * input..(t + 1) * input];
                for q in 0..3 * hd {
                    let (gi, gh) = (da_i[q], da_h[q]);
                    axpy(gi, xt, &mut params[0][q * input..(q + 1) * input]);
                    axpy(gi, &w[0][q * input..(q + 1) * input], dxt);
                    axpy(gh, hp, &mut params[1][q * hd..(q + 1) * hd]);
                    axpy(gh, &w[1][q * hd..(q + 1) * hd], &mut dh);
                    params[2][q] += gi;
                    params[3][q] += gh;
                }
            }
            vec![dx]
        }
        LayerSpec::Pointwise { act, .. } => {
            let LayerCache::Output(y) = cache else {
                return Err(missing());
            };
            vec![grad_out
                .iter()
                .zip(y)
                .map(|(&g, &y)| g * act.grad_from_output(y))
                .collect()]
        }
        LayerSpec::Concat { ref widths } => {
            let mut outs: Vec<Vec<T>> = widths.iter().map(|&wd| Vec::with_capacity(frames * wd)).collect();
            for t in 0..frames {
                let mut at = t * out_w;
                for (o, &wd) in outs.iter_mut().zip(widths) {
                    o.extend_from_slice(&grad_out[at..at + wd]);
                    at += wd;
                }
            }
            outs
        }
    };
    Ok(LayerGrads { inputs, params })
}

/// Single-frame evaluation on tensors, for inspection and tests.
///
/// `params` follow [`LayerSpec::param_shapes`] order; inputs are 1-D. Returns
/// the output and, for stateful layers, the updated state.
pub fn layer_forward(
    spec: &LayerSpec,
    params: &[&Tensor],
    inputs: &[&Tensor],
    recurrent_state: Option<&Tensor>,
) -> Result<(Tensor, Option<Tensor>)> {
    spec.validate()?;
    let shapes = spec.param_shapes();
    if params.len() != shapes.len() {
        return Err(Error::domain(format!(
            "{} takes {} parameter tensors, got {}",
            spec.kind(),
            shapes.len(),
            params.len()
        )));
    }
    for (p, s) in params.iter().zip(&shapes) {
        if p.shape() != s.shape.as_slice() {
            return Err(Error::domain(format!(
                "{} {}: expected shape {:?}, got {:?}",
                spec.kind(),
                s.suffix,
                s.shape,
                p.shape()
            )));
        }
    }
    let widths = spec.input_widths();
    if inputs.len() != widths.len() || inputs.iter().zip(&widths).any(|(x, &w)| x.len() != w) {
        return Err(Error::domain(format!(
            "{} expects inputs of widths {widths:?}",
            spec.kind()
        )));
    }
    let w: Vec<Vec<f64>> = params.iter().map(|p| p.to_vec()).collect();
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| x.to_vec()).collect();
    let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let mut state = match recurrent_state {
        Some(s) if s.len() == spec.state_len() => s.to_vec(),
        Some(s) => {
            return Err(Error::domain(format!(
                "state of {} values, layer keeps {}",
                s.len(),
                spec.state_len()
            )))
        }
        None => vec![0.0; spec.state_len()],
    };
    let mut out = vec![0.0; spec.output_width()];
    frame_forward(spec, &w, &xr, &mut state, &mut out);
    let state = (spec.state_len() > 0)
        .then(|| Tensor::from_f64(vec![state.len()], state))
        .transpose()?;
    Ok((Tensor::from_f64(vec![out.len()], out)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::from_f64(vec![v.len()], v).unwrap()
    }

    #[test]
    fn grouped_linear_identity() {
        let spec = LayerSpec::GroupedLinear {
            input: 4,
            output: 4,
            groups: 2,
            bias: true,
        };
        let w = Tensor::from_f64(vec![2, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = t(vec![0.0; 4]);
        let x = t(vec![0.5, -1.0, 2.0, 3.0]);
        let (y, s) = layer_forward(&spec, &[&w, &b], &[&x], None).unwrap();
        assert_eq!(y, x);
        assert!(s.is_none());
    }

    #[test]
    fn gru_with_zero_weights_stays_zero() {
        let spec = LayerSpec::GruCell { input: 3, hidden: 2 };
        let zeros: Vec<Tensor> = spec
            .param_shapes()
            .iter()
            .map(|p| Tensor::zeros(p.shape.clone(), DType::F64))
            .collect();
        let refs: Vec<&Tensor> = zeros.iter().collect();
        let (y, h) = layer_forward(&spec, &refs, &[&t(vec![1.0, -2.0, 3.0])], None).unwrap();
        assert_eq!(y.to_vec::<f64>(), vec![0.0, 0.0]);
        assert_eq!(h.unwrap().to_vec::<f64>(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_conv_is_identity() {
        let spec = LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 1,
            in_freq: 5,
            k_freq: 1,
            k_time: 1,
            stride_freq: 1,
        };
        let w = Tensor::from_f64(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = t(vec![0.0]);
        let x = t(vec![1.0, 2.0, -3.0, 4.0, 0.5]);
        let (y, _) = layer_forward(&spec, &[&w, &b], &[&x], None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn shape_mismatch_is_domain_error() {
        let spec = LayerSpec::GroupedLinear {
            input: 4,
            output: 2,
            groups: 1,
            bias: false,
        };
        let w = Tensor::zeros(vec![1, 2, 4], DType::F64);
        let err = layer_forward(&spec, &[&w], &[&t(vec![1.0; 3])], None).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn counts() {
        let gl = LayerSpec::GroupedLinear {
            input: 192,
            output: 64,
            groups: 1,
            bias: true,
        };
        assert_eq!(gl.param_count(), 12_352);
        assert_eq!(gl.macs_per_frame(), 12_288);
        let gru = LayerSpec::GruCell {
            input: 64,
            hidden: 128,
        };
        assert_eq!(gru.param_count(), 74_496);
    }

    fn random_spec_inputs(spec: &LayerSpec, frames: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        spec.input_widths()
            .iter()
            .map(|&w| (0..frames * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    /// The per-frame and sequence kernels must produce identical numbers.
    #[test]
    fn frame_and_sequence_kernels_agree() {
        let specs = [
            LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 3,
                in_freq: 7,
                k_freq: 3,
                k_time: 2,
                stride_freq: 2,
            },
            LayerSpec::GroupedLinear {
                input: 6,
                output: 4,
                groups: 2,
                bias: true,
            },
            LayerSpec::GruCell { input: 5, hidden: 4 },
            LayerSpec::Pointwise {
                act: Activation::Tanh,
                width: 3,
            },
            LayerSpec::Concat { widths: vec![2, 3] },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames = 6;
        for spec in &specs {
            let w = spec.init_params(&mut rng);
            let xs = random_spec_inputs(spec, frames, &mut rng);
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let (seq, _) = seq_forward(spec, &w, &refs, frames, false);
            let mut state = vec![0.0; spec.state_len()];
            let ow = spec.output_width();
            let mut out = vec![0.0; ow];
            for t in 0..frames {
                let frame_inputs: Vec<&[f64]> = xs
                    .iter()
                    .zip(spec.input_widths())
                    .map(|(x, wd)| &x[t * wd..(t + 1) * wd])
                    .collect();
                frame_forward(spec, &w, &frame_inputs, &mut state, &mut out);
                assert_eq!(&seq[t * ow..(t + 1) * ow], out.as_slice(), "{spec:?} frame {t}");
            }
        }
    }

    /// Perturbing frame k+1 leaves outputs up to frame k unchanged.
    #[test]
    fn causal_layers_ignore_the_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = [
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 2,
                in_freq: 8,
                k_freq: 3,
                k_time: 2,
                stride_freq: 2,
            },
            LayerSpec::GruCell { input: 3, hidden: 3 },
        ];
        for spec in &specs {
            let w = spec.init_params(&mut rng);
            let frames = 8;
            let x = random_spec_inputs(spec, frames, &mut rng).remove(0);
            let iw = spec.input_widths()[0];
            let ow = spec.output_width();
            let k = 4;
            let mut x2 = x.clone();
            for v in &mut x2[(k + 1) * iw..(k + 2) * iw] {
                *v += 1.0;
            }
            let (a, _) = seq_forward(spec, &w, &[&x], frames, false);
            let (b, _) = seq_forward(spec, &w, &[&x2], frames, false);
            assert_eq!(a[..(k + 1) * ow], b[..(k + 1) * ow]);
            assert_ne!(a[(k + 1) * ow..], b[(k + 1) * ow..]);
        }
    }
}
