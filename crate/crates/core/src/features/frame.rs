//! Framing, windowing and the shared FFT power-spectrum helper.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            win_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl FrameConfig {
    pub fn win_samples(&self, fs: u32) -> usize {
        (self.win_ms * fs as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, fs: u32) -> usize {
        ((self.hop_ms * fs as f64 / 1000.0).round() as usize).max(1)
    }
}

/// Hann-windowed frames of one signal.
#[derive(Debug, Clone)]
pub struct Frames {
    pub frames: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
}

impl Frames {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn center_s(&self, i: usize) -> f64 {
        (i * self.hop) as f64 / self.sample_rate as f64
            + self.win_len as f64 / (2.0 * self.sample_rate as f64)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec<f64>> {
        self.frames.iter()
    }
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Cut `samples` into `floor((len - win) / hop) + 1` Hann-windowed frames.
pub fn frame_signal(samples: &[f64], fs: u32, cfg: &FrameConfig) -> Result<Frames, FeatureError> {
    let win = cfg.win_samples(fs);
    let hop = cfg.hop_samples(fs);
    if win == 0 {
        return Err(FeatureError::Config("zero-length window".into()));
    }
    if samples.len() < win {
        return Err(FeatureError::TooShort {
            len: samples.len(),
            win,
        });
    }
    let w = hann(win);
    let count = (samples.len() - win) / hop + 1;
    let frames = (0..count)
        .map(|i| {
            samples[i * hop..i * hop + win]
                .iter()
                .zip(&w)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    Ok(Frames {
        frames,
        sample_rate: fs,
        win_len: win,
        hop,
    })
}

/// Zero-padded real FFT returning the one-sided power spectrum `|X_k|^2`, `k = 0..=nfft/2`.
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    nfft: usize,
    buf: Vec<Complex<f64>>,
}

impl PowerSpectrum {
    pub fn new(nfft: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Self {
            fft,
            nfft,
            buf: vec![Complex::default(); nfft],
        }
    }

    /// Smallest power of two that is at least `max(min, len)`.
    pub fn size_for(len: usize, min: usize) -> usize {
        len.max(min).next_power_of_two()
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn bin_hz(&self, fs: u32) -> f64 {
        fs as f64 / self.nfft as f64
    }

    pub fn compute(&mut self, frame: &[f64]) -> Vec<f64> {
        self.transform(frame);
        self.buf[..=self.nfft / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Complex spectrum left in the internal buffer (full length).
    pub(crate) fn transform(&mut self, frame: &[f64]) -> &[Complex<f64>] {
        assert!(frame.len() <= self.nfft, "frame longer than FFT size");
        for (dst, &x) in self.buf.iter_mut().zip(frame) {
            *dst = Complex::new(x, 0.0);
        }
        for dst in self.buf[frame.len()..].iter_mut() {
            *dst = Complex::default();
        }
        self.fft.process(&mut self.buf);
        &self.buf
    }
}
