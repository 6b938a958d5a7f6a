use crate::error::{Error, Result};

/// Time-constant of the feature normalizers, in seconds.
pub const NORM_TAU_SECONDS: f64 = 1.0;

/// Guard added to logarithms and denominators.
pub const EPS: f64 = 1e-10;

/// Framing and feature parameters shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub overlap: f64,
    /// FFT length in samples; at least the window length.
    pub fft_size: usize,
    pub lookahead_frames: usize,
    pub erb_bands: usize,
    /// Upper edge (exclusive) of the deep-filtered region, in Hz.
    pub f_df: f64,
    pub df_order: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self::with_sample_rate(48_000)
    }
}

impl DspConfig {
    /// Default framing (20 ms Hann, 50 % overlap, 2 frames lookahead, 32 ERB bands,
    /// deep filter of order 5 below 5 kHz) at the given rate.
    pub fn with_sample_rate(sample_rate: u32) -> Self {
        let win_ms = 20.0;
        Self {
            sample_rate,
            win_ms,
            overlap: 0.5,
            fft_size: (sample_rate as f64 * win_ms / 1000.0).round() as usize,
            lookahead_frames: 2,
            erb_bands: 32,
            f_df: 5000.0,
            df_order: 5,
        }
    }

    pub fn win_len(&self) -> usize {
        (self.sample_rate as f64 * self.win_ms / 1000.0).round() as usize
    }

    pub fn hop(&self) -> usize {
        (self.win_len() as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    /// Number of STFT bins whose center frequency lies below `f_df`.
    pub fn df_bins(&self) -> usize {
        let n = (self.f_df / self.bin_hz() - 1e-9).ceil().max(0.0) as usize;
        n.min(self.bins())
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop() as f64 / self.sample_rate as f64
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop() as f64
    }

    /// Per-frame decay of the exponential feature normalizers.
    pub fn norm_alpha(&self) -> f64 {
        (-self.hop_seconds() / NORM_TAU_SECONDS).exp()
    }

    pub fn stft_params(&self) -> StftParams {
        StftParams {
            win_len: self.win_len(),
            hop: self.hop(),
            fft_size: self.fft_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive"));
        }
        let win = self.sample_rate as f64 * self.win_ms / 1000.0;
        if win < 2.0 || (win - win.round()).abs() > 1e-6 {
            return Err(Error::config(format!(
                "window of {} ms is not a whole number of samples at {} Hz",
                self.win_ms, self.sample_rate
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config("overlap must lie in [0, 1)"));
        }
        let hop = self.win_len() as f64 * (1.0 - self.overlap);
        if (hop - hop.round()).abs() > 1e-6 || hop < 1.0 {
            return Err(Error::config("hop is not a whole number of samples"));
        }
        if self.win_len() % self.hop() != 0 {
            return Err(Error::config(format!(
                "hop {} does not divide window {}",
                self.hop(),
                self.win_len()
            )));
        }
        if self.fft_size < self.win_len() {
            return Err(Error::config("fft_size shorter than the window"));
        }
        if !(self.f_df > 0.0 && self.f_df <= self.sample_rate as f64 / 2.0) {
            return Err(Error::config("f_df must lie in (0, sample_rate/2]"));
        }
        if self.erb_bands < 2 {
            return Err(Error::config("erb_bands must be at least 2"));
        }
        if self.df_order < 1 {
            return Err(Error::config("df_order must be at least 1"));
        }
        Ok(())
    }
}

/// Framing of a single STFT resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl StftParams {
    /// Hann window of `win_ms` with 50 % overlap and an FFT the size of the window.
    pub fn half_overlap(sample_rate: u32, win_ms: f64) -> Result<Self> {
        let win = sample_rate as f64 * win_ms / 1000.0;
        let win_len = win.round() as usize;
        if (win - win.round()).abs() > 1e-6 || win_len < 2 || win_len % 2 != 0 {
            return Err(Error::config(format!(
                "{win_ms} ms is not an even number of samples at {sample_rate} Hz"
            )));
        }
        Ok(Self {
            win_len,
            hop: win_len / 2,
            fft_size: win_len,
        })
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.hop == 0 || self.win_len % self.hop != 0 || self.fft_size < self.win_len {
            return Err(Error::config(format!("invalid STFT framing {self:?}")));
        }
        Ok(())
    }
}
