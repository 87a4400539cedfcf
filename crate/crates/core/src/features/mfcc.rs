//! Mel-frequency cepstral coefficients.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::frame::{Frames, PowerSpectrum};
use super::{FeatureError, FrameTrack, TrackKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
    pub min_fft: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            n_mels: 26,
            f_min: 50.0,
            f_max: None,
            min_fft: 512,
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided spectrum, one row of bin weights per filter.
pub fn mel_filterbank(n_mels: usize, nfft: usize, fs: u32, f_min: f64, f_max: f64) -> Vec<Vec<f64>> {
    let n_bins = nfft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = fs as f64 / nfft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Coefficients `c1..c_n` (c0 excluded) of one power spectrum.
pub fn mfcc_from_power(power: &[f64], bank: &[Vec<f64>], n_coeffs: usize) -> Vec<f64> {
    let energies: Vec<f64> = bank
        .iter()
        .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
        .collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return vec![0.0; n_coeffs];
    }
    // floor relative to the loudest band so a gain change only shifts c0
    let floor = peak * 1e-10;
    let logs: Vec<f64> = energies.iter().map(|e| e.max(floor).ln()).collect();
    let m = logs.len() as f64;
    let scale = (2.0 / m).sqrt();
    (1..=n_coeffs)
        .map(|k| {
            scale
                * logs
                    .iter()
                    .enumerate()
                    .map(|(j, l)| l * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

pub fn extract_mfcc(frames: &Frames, cfg: &MfccConfig) -> Result<Vec<FrameTrack>, FeatureError> {
    let fs = frames.sample_rate;
    if fs < 8000 {
        return Err(FeatureError::Config(format!("MFCC needs fs >= 8 kHz, got {fs}")));
    }
    let nfft = PowerSpectrum::size_for(frames.win_len, cfg.min_fft);
    let mut ps = PowerSpectrum::new(nfft);
    let f_max = cfg.f_max.unwrap_or(fs as f64 / 2.0);
    let bank = mel_filterbank(cfg.n_mels, nfft, fs, cfg.f_min, f_max);
    let mut columns = vec![Vec::with_capacity(frames.len()); cfg.n_coeffs];
    for frame in frames.iter() {
        let c = mfcc_from_power(&ps.compute(frame), &bank, cfg.n_coeffs);
        for (col, v) in columns.iter_mut().zip(c) {
            col.push(v);
        }
    }
    Ok(columns
        .into_iter()
        .enumerate()
        .map(|(k, values)| FrameTrack::new(TrackKind::Mfcc(k as u8 + 1), frames, values))
        .collect())
}
