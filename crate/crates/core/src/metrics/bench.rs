use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Model, SpeakerEmbedding, StreamProcessor, VariantKind, EMBEDDING_DIM};

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub variant: VariantKind,
    pub params: usize,
    pub macs_per_s: f64,
    /// Median wall time over audio time, single stream.
    pub rtf: f64,
}

impl ComplexityReport {
    pub const CSV_HEADER: &'static str = "variant,params,macs_per_s,rtf";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.0},{:.5}",
            self.variant.as_str(),
            self.params,
            self.macs_per_s,
            self.rtf
        )
    }
}

/// Streams `seconds` of seeded noise through the model `repetitions` times
/// (after one untimed warm-up second) on the calling thread and reports the
/// median real-time factor. File I/O is not involved.
pub fn measure_rtf(
    model: &Model,
    seconds: f64,
    repetitions: usize,
    seed: u64,
) -> Result<ComplexityReport> {
    if !(seconds > 0.0) || repetitions == 0 {
        return Err(Error::config("bench needs positive duration and repetitions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 0.1).expect("valid normal");
    let sr = model.dsp().sample_rate as f64;
    let hop = model.dsp().hop();
    let hops = ((seconds * sr) as usize).div_ceil(hop);
    let audio: Vec<f32> = (0..hops * hop).map(|_| dist.sample(&mut rng) as f32).collect();
    let emb = model.variant().is_personalized().then(|| {
        let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| dist.sample(&mut rng)).collect();
        SpeakerEmbedding::new(v).expect("non-zero random vector")
    });
    let mut proc = StreamProcessor::<f32>::new(model, emb)?;
    let mut out = vec![0.0f32; hop];
    let warm = (sr as usize).div_ceil(hop).min(hops);
    for chunk in audio.chunks_exact(hop).take(warm) {
        proc.process_hop(chunk, &mut out)?;
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        proc.reset();
        let start = Instant::now();
        for chunk in audio.chunks_exact(hop) {
            proc.process_hop(chunk, &mut out)?;
        }
        times.push(start.elapsed().as_secs_f64() / (hops * hop) as f64 * sr);
    }
    times.sort_by(f64::total_cmp);
    Ok(ComplexityReport {
        variant: model.variant(),
        params: model.param_count(),
        macs_per_s: model.macs_per_second(),
        rtf: median(&times),
    })
}
