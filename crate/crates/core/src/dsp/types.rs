use num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::Real;

/// Mono linear PCM in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn cast<U: Real>(&self) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self.samples.iter().map(|s| U::of(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }
}

/// Complex time-frequency matrix, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            values: vec![Complex::new(T::zero(), T::zero()); frames * bins],
        }
    }

    pub fn from_values(frames: usize, bins: usize, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::domain(format!(
                "{} values for a {frames}x{bins} spectrogram",
                values.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    #[inline]
    pub fn frame(&self, k: usize) -> &[Complex<T>] {
        &self.values[k * self.bins..(k + 1) * self.bins]
    }

    #[inline]
    pub fn frame_mut(&mut self, k: usize) -> &mut [Complex<T>] {
        &mut self.values[k * self.bins..(k + 1) * self.bins]
    }

    #[inline]
    pub fn at(&self, k: usize, f: usize) -> Complex<T> {
        self.values[k * self.bins + f]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn energy(&self) -> T {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn cast<U: Real>(&self) -> ComplexSpectrogram<U> {
        ComplexSpectrogram {
            frames: self.frames,
            bins: self.bins,
            values: self
                .values
                .iter()
                .map(|c| Complex::new(U::of(c.re.as_f64()), U::of(c.im.as_f64())))
                .collect(),
        }
    }
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}
