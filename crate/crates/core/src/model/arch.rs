//! Layer layout of the two-stage network and its single forward definition.
//!
//! Inputs per frame: ERB features (one channel of `erb_bands`), complex
//! features (two channels, real then imaginary, of `df_bins`), and for
//! personalized variants the embedding. Outputs per frame: `erb_bands` gains
//! and `df_order x df_bins` complex taps, laid out real parts then imaginary.

use num_complex::Complex;

use super::config::{ModelConfig, VariantKind};
use crate::dsp::DfCoeffs;
use crate::error::Result;
use crate::real::Real;
use crate::tensor::{Activation, Description, LayerSpec, Node, Recorder};

const CONV_LAYERS: usize = 3;
const CONV_K_FREQ: usize = 3;
const CONV_K_TIME: usize = 2;
const CONV_STRIDE: usize = 2;

/// Output nodes of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub gains: Node,
    pub taps: Node,
}

/// Width of the network's tap output per frame.
pub fn taps_width(cfg: &ModelConfig) -> usize {
    2 * cfg.dsp.df_order * cfg.dsp.df_bins()
}

struct Builder {
    desc: Description,
}

impl Builder {
    fn push(&mut self, name: &str, spec: LayerSpec) -> Result<usize> {
        spec.validate()?;
        let w = spec.output_width();
        self.desc.push((name.to_string(), spec));
        Ok(w)
    }

    fn act(&mut self, name: &str, act: Activation, width: usize) -> Result<usize> {
        self.push(name, LayerSpec::Pointwise { act, width })
    }

    /// Three strided causal convolutions with ReLU; returns the flattened width.
    fn conv_stack(&mut self, prefix: &str, in_ch: usize, in_freq: usize, ch: usize) -> Result<usize> {
        let (mut c, mut f) = (in_ch, in_freq);
        let mut width = 0;
        for i in 0..CONV_LAYERS {
            let spec = LayerSpec::Conv2d {
                in_ch: c,
                out_ch: ch,
                in_freq: f,
                k_freq: CONV_K_FREQ,
                k_time: CONV_K_TIME,
                stride_freq: CONV_STRIDE,
            };
            f = LayerSpec::conv_out_freq(f, CONV_K_FREQ, CONV_STRIDE);
            c = ch;
            width = self.push(&format!("{prefix}.conv{i}"), spec)?;
            self.act(&format!("{prefix}.relu{i}"), Activation::Relu, width)?;
        }
        Ok(width)
    }

    fn linear(&mut self, name: &str, input: usize, output: usize, groups: usize) -> Result<usize> {
        self.push(
            name,
            LayerSpec::GroupedLinear {
                input,
                output,
                groups,
                bias: true,
            },
        )
    }

    fn gru(&mut self, name: &str, input: usize, hidden: usize) -> Result<usize> {
        self.push(name, LayerSpec::GruCell { input, hidden })
    }
}

/// The ordered layer list for `cfg`.
pub fn build_description(cfg: &ModelConfig) -> Result<Description> {
    cfg.validate()?;
    let v = cfg.variant;
    let (e, g, d) = (cfg.linear_width, cfg.linear_groups, cfg.embedding_dim);
    let (herb, hdf) = (cfg.erb_gru_hidden, cfg.df_gru_hidden);
    let mut b = Builder { desc: Vec::new() };

    let erb_w = b.conv_stack("erb_enc", 1, cfg.dsp.erb_bands, cfg.conv_channels)?;
    let df_w = b.conv_stack("df_enc", 2, cfg.dsp.df_bins(), cfg.conv_channels)?;

    let (erb_latent, df_latent) = if v.is_dual() {
        let mut branch = |name: &str, conv_w: usize, with_emb: bool, hidden: usize| -> Result<usize> {
            let mut w = conv_w;
            if with_emb {
                w = b.push(&format!("{name}.cat"), LayerSpec::Concat { widths: vec![conv_w, d] })?;
            }
            let w = b.linear(&format!("{name}.fc"), w, e, g)?;
            b.act(&format!("{name}.fc_relu"), Activation::Relu, w)?;
            b.gru(&format!("{name}.gru"), e, hidden)
        };
        let erb = branch("erb_enc", erb_w, v.embedding_in_erb_branch(), herb)?;
        let df = branch("df_enc", df_w, v.embedding_in_df_branch(), hdf)?;
        (erb, df)
    } else {
        for (name, w) in [("erb_enc", erb_w), ("df_enc", df_w)] {
            let w = b.linear(&format!("{name}.fc"), w, e, g)?;
            b.act(&format!("{name}.fc_relu"), Activation::Relu, w)?;
        }
        let mut widths = vec![e, e];
        if v == VariantKind::Unified {
            widths.push(d);
        }
        let w = b.push("junction.cat", LayerSpec::Concat { widths })?;
        let w = b.linear("junction.fc", w, e, g)?;
        b.act("junction.fc_relu", Activation::Relu, w)?;
        let h = b.gru("junction.gru", e, herb)?;
        (h, h)
    };

    b.gru("erb_dec.gru", erb_latent, herb)?;
    b.linear("erb_dec.fc0", herb, herb, 1)?;
    b.act("erb_dec.relu0", Activation::Relu, herb)?;
    let bands = b.linear("erb_dec.fc1", herb, cfg.dsp.erb_bands, 1)?;
    b.act("erb_dec.sigmoid", Activation::Sigmoid, bands)?;

    b.gru("df_dec.gru0", df_latent, hdf)?;
    b.gru("df_dec.gru1", hdf, hdf)?;
    b.linear("df_dec.fc0", hdf, hdf, 1)?;
    b.act("df_dec.relu0", Activation::Relu, hdf)?;
    b.linear("df_dec.fc1", hdf, taps_width(cfg), 1)?;
    Ok(b.desc)
}

fn seq<R: Recorder>(r: &mut R, names: &[&str], mut x: Node) -> Result<Node> {
    for n in names {
        x = r.layer(n, &[x])?;
    }
    Ok(x)
}

fn conv_stack<R: Recorder>(r: &mut R, prefix: &str, x: Node) -> Result<Node> {
    let mut x = x;
    for i in 0..CONV_LAYERS {
        x = r.layer(&format!("{prefix}.conv{i}"), &[x])?;
        x = r.layer(&format!("{prefix}.relu{i}"), &[x])?;
    }
    Ok(x)
}

/// Records the network on `r`. `emb` is required exactly for personalized variants.
pub fn forward<R: Recorder>(
    r: &mut R,
    variant: VariantKind,
    erb: Node,
    cplx: Node,
    emb: Option<Node>,
) -> Result<Heads> {
    let erb_c = conv_stack(r, "erb_enc", erb)?;
    let df_c = conv_stack(r, "df_enc", cplx)?;
    let need = |want: bool| -> Result<Option<Node>> {
        match (want, emb) {
            (true, Some(e)) => Ok(Some(e)),
            (true, None) => Err(crate::error::Error::usage(format!(
                "variant {variant} needs a speaker embedding"
            ))),
            (false, _) => Ok(None),
        }
    };

    let (erb_latent, df_latent) = if variant.is_dual() {
        let mut branch = |name: &str, x: Node, e: Option<Node>| -> Result<Node> {
            let x = match e {
                Some(e) => r.layer(&format!("{name}.cat"), &[x, e])?,
                None => x,
            };
            let x = r.layer(&format!("{name}.fc"), &[x])?;
            let x = r.layer(&format!("{name}.fc_relu"), &[x])?;
            r.layer(&format!("{name}.gru"), &[x])
        };
        let erb = branch("erb_enc", erb_c, need(variant.embedding_in_erb_branch())?)?;
        let df = branch("df_enc", df_c, need(variant.embedding_in_df_branch())?)?;
        (erb, df)
    } else {
        let a = seq(r, &["erb_enc.fc", "erb_enc.fc_relu"], erb_c)?;
        let b = seq(r, &["df_enc.fc", "df_enc.fc_relu"], df_c)?;
        let mut parts = vec![a, b];
        if let Some(e) = need(variant == VariantKind::Unified)? {
            parts.push(e);
        }
        let j = r.layer("junction.cat", &parts)?;
        let h = seq(r, &["junction.fc", "junction.fc_relu", "junction.gru"], j)?;
        (h, h)
    };

    let gains = seq(
        r,
        &[
            "erb_dec.gru",
            "erb_dec.fc0",
            "erb_dec.relu0",
            "erb_dec.fc1",
            "erb_dec.sigmoid",
        ],
        erb_latent,
    )?;
    let taps = seq(
        r,
        &["df_dec.gru0", "df_dec.gru1", "df_dec.fc0", "df_dec.relu0", "df_dec.fc1"],
        df_latent,
    )?;
    Ok(Heads { gains, taps })
}

/// Unpacks per-frame tap rows into filter coefficients.
pub fn taps_from_rows<T: Real>(rows: &[T], frames: usize, order: usize, df_bins: usize) -> DfCoeffs<T> {
    let n = order * df_bins;
    let mut c = DfCoeffs::zeros(frames, order, df_bins);
    for k in 0..frames {
        let row = &rows[k * 2 * n..(k + 1) * 2 * n];
        for (j, t) in c.taps[k * n..(k + 1) * n].iter_mut().enumerate() {
            *t = Complex::new(row[j], row[n + j]);
        }
    }
    c
}

/// Inverse of [`taps_from_rows`], used to route tap gradients back.
pub fn taps_to_rows<T: Real>(c: &DfCoeffs<T>) -> Vec<T> {
    let n = c.order * c.df_bins;
    let mut rows = vec![T::zero(); c.frames * 2 * n];
    for k in 0..c.frames {
        for (j, t) in c.taps[k * n..(k + 1) * n].iter().enumerate() {
            rows[k * 2 * n + j] = t.re;
            rows[k * 2 * n + n + j] = t.im;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::DspConfig;
    use crate::tensor::count_params;

    #[test]
    fn taps_layout_round_trips() {
        let rows: Vec<f64> = (0..2 * 3 * 2 * 4).map(|v| v as f64).collect();
        let c = taps_from_rows(&rows, 2, 3, 4);
        assert_eq!(c.at(1, 2, 3), Complex::new(35.0, 47.0));
        assert_eq!(taps_to_rows(&c), rows);
    }

    #[test]
    fn unified_adds_only_the_junction_widening() {
        let dsp = DspConfig::default();
        let base = build_description(&ModelConfig::new(dsp.clone(), VariantKind::Baseline)).unwrap();
        let uni = build_description(&ModelConfig::new(dsp, VariantKind::Unified)).unwrap();
        // 192 extra inputs into a 256-wide layer split into 8 groups.
        assert_eq!(count_params(&uni) - count_params(&base), 192 * 256 / 8);
    }
}
