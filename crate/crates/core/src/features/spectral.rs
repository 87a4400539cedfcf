//! Spectral balance descriptors: low-band slope, alpha ratio and Hammarberg index.

use serde::{Deserialize, Serialize};

use super::frame::{Frames, PowerSpectrum};
use super::{FeatureError, FrameTrack, TrackKind};

/// Powers below this fraction of the frame maximum are floored before taking logs.
/// Relative, so every measure stays invariant to signal gain.
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub min_fft: usize,
    pub slope_band_hz: (f64, f64),
    /// Alpha ratio: energy in `high` over energy in `low`. `low` is half-open `[lo, hi)`.
    pub alpha_low_hz: (f64, f64),
    pub alpha_high_hz: (f64, f64),
    /// Hammarberg: peak level in `low` minus peak level in `high` (`high` excludes its lower edge).
    pub hammarberg_low_hz: (f64, f64),
    pub hammarberg_high_hz: (f64, f64),
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            min_fft: 512,
            slope_band_hz: (0.0, 500.0),
            alpha_low_hz: (50.0, 1000.0),
            alpha_high_hz: (1000.0, 5000.0),
            hammarberg_low_hz: (0.0, 2000.0),
            hammarberg_high_hz: (2000.0, 5000.0),
        }
    }
}

/// Measures of a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFrame {
    /// dB per Hz.
    pub slope_v0_500: f64,
    pub alpha_ratio_db: f64,
    pub hammarberg_db: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralTracks {
    pub slope_v0_500: FrameTrack,
    pub alpha_ratio_db: FrameTrack,
    pub hammarberg_db: FrameTrack,
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Measures of one power spectrum with bin spacing `bin_hz`.
pub fn spectral_measures(power: &[f64], bin_hz: f64, cfg: &SpectralConfig) -> Result<SpectralFrame, FeatureError> {
    let peak = power.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(FeatureError::ZeroSpectrum);
    }
    let floor = peak * REL_FLOOR;
    let db = |p: f64| 10.0 * p.max(floor).log10();
    let freq = |k: usize| k as f64 * bin_hz;

    let (s_lo, s_hi) = cfg.slope_band_hz;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..power.len())
        .filter(|&k| freq(k) >= s_lo && freq(k) <= s_hi)
        .map(|k| (freq(k), db(power[k])))
        .unzip();
    let slope = ls_slope(&xs, &ys);

    let band_sum = |lo: f64, hi: f64, hi_inclusive: bool| -> f64 {
        (0..power.len())
            .filter(|&k| {
                let f = freq(k);
                f >= lo && (f < hi || (hi_inclusive && f <= hi))
            })
            .map(|k| power[k])
            .sum()
    };
    let low = band_sum(cfg.alpha_low_hz.0, cfg.alpha_low_hz.1, false).max(floor);
    let high = band_sum(cfg.alpha_high_hz.0, cfg.alpha_high_hz.1, true).max(floor);
    let alpha = 10.0 * (high / low).log10();

    let band_max = |lo: f64, hi: f64, lo_inclusive: bool| -> f64 {
        (0..power.len())
            .filter(|&k| {
                let f = freq(k);
                (f > lo || (lo_inclusive && f >= lo)) && f <= hi
            })
            .map(|k| power[k])
            .fold(0.0, f64::max)
    };
    let h_low = band_max(cfg.hammarberg_low_hz.0, cfg.hammarberg_low_hz.1, true);
    let h_high = band_max(cfg.hammarberg_high_hz.0, cfg.hammarberg_high_hz.1, false);
    let hammarberg = db(h_low) - db(h_high);

    Ok(SpectralFrame {
        slope_v0_500: slope,
        alpha_ratio_db: alpha,
        hammarberg_db: hammarberg,
    })
}

/// Per-frame spectral measures. The slope is kept only on frames voiced according
/// to `voicing` (looked up at the frame centre); all-zero frames yield NaN.
pub fn extract_spectral_measures(
    frames: &Frames,
    voicing: &FrameTrack,
    cfg: &SpectralConfig,
) -> Result<SpectralTracks, FeatureError> {
    let nfft = PowerSpectrum::size_for(frames.win_len, cfg.min_fft);
    let mut ps = PowerSpectrum::new(nfft);
    let bin_hz = ps.bin_hz(frames.sample_rate);
    let n = frames.len();
    let (mut slope, mut alpha, mut hamm) = (vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n]);
    let mut any = false;
    for (i, frame) in frames.iter().enumerate() {
        match spectral_measures(&ps.compute(frame), bin_hz, cfg) {
            Ok(m) => {
                any = true;
                if !voicing.value_at(frames.center_s(i)).is_nan() {
                    slope[i] = m.slope_v0_500;
                }
                alpha[i] = m.alpha_ratio_db;
                hamm[i] = m.hammarberg_db;
            }
            Err(FeatureError::ZeroSpectrum) => {}
            Err(e) => return Err(e),
        }
    }
    if !any && n > 0 {
        return Err(FeatureError::ZeroSpectrum);
    }
    Ok(SpectralTracks {
        slope_v0_500: FrameTrack::new(TrackKind::SlopeV0To500, frames, slope),
        alpha_ratio_db: FrameTrack::new(TrackKind::AlphaRatioDb, frames, alpha),
        hammarberg_db: FrameTrack::new(TrackKind::HammarbergDb, frames, hamm),
    })
}
