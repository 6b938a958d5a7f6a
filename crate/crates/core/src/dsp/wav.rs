//! Mono WAV input and output (16-bit PCM or 32-bit float, little-endian).

use std::io::BufReader;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::types::AudioBuffer;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer<f32>> {
    let path = path.as_ref();
    let reader = WavReader::new(BufReader::new(std::fs::File::open(path)?))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::domain(format!(
            "{}: {} channels, only mono input is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::domain(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bit",
                path.display()
            )))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer<f32>, format: WavFormat) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    write_atomic(path.as_ref(), |file| {
        let mut w = WavWriter::new(std::io::BufWriter::new(file), spec)?;
        for &s in &audio.samples {
            match format {
                WavFormat::Pcm16 => {
                    w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?
                }
                WavFormat::Float32 => w.write_sample(s)?,
            }
        }
        w.finalize()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = AudioBuffer::new(vec![0.0f32, 0.25, -0.5, 1e-7], 16_000).unwrap();
        write_wav(&p, &a, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), a);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let a = AudioBuffer::new(vec![0.0f32, 0.3, -0.7], 48_000).unwrap();
        write_wav(&p, &a, WavFormat::Pcm16).unwrap();
        let b = read_wav(&p).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1.0 / 16_000.0);
        }
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&p).unwrap_err();
        assert!(err.to_string().contains("mono"), "{err}");
    }
}
