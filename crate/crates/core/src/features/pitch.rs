//! F0 estimation by normalised autocorrelation.
//!
//! Each Hann-windowed frame's autocorrelation is normalised by `r(0)` and divided
//! by the window's own normalised autocorrelation, so a perfectly periodic signal
//! peaks at 1 regardless of lag. The best local maximum in the lag range of the
//! search band (minus a small octave cost that favours shorter lags) is refined
//! by windowed-sinc interpolation of the autocorrelation (a plain parabola through
//! integer lags badly underestimates the peak of sharp, non-integer-period pulses
//! and invites octave-down errors).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::frame::{hann, FrameConfig, Frames};
use super::{FrameTrack, TrackKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub frame: FrameConfig,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Minimum normalised autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// Score penalty per octave of lag.
    pub octave_cost: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig {
                win_ms: 60.0,
                hop_ms: 10.0,
            },
            min_hz: 50.0,
            max_hz: 600.0,
            voicing_threshold: 0.45,
            octave_cost: 0.01,
        }
    }
}

/// F0 and per-frame harmonicity of one signal.
#[derive(Debug, Clone)]
pub struct PitchTrack {
    pub f0: FrameTrack,
    /// Interpolated normalised autocorrelation peak per frame (0 for silent frames).
    pub strength: Vec<f64>,
    /// `10 log10(r / (1 - r))` on voiced frames, clamped to `[-20, 40]` dB; NaN elsewhere.
    pub hnr: FrameTrack,
}

pub const HNR_FLOOR_DB: f64 = -20.0;
pub const HNR_CEIL_DB: f64 = 40.0;

pub fn hnr_db(r: f64) -> f64 {
    if r <= 0.0 {
        return HNR_FLOOR_DB;
    }
    if r >= 1.0 {
        return HNR_CEIL_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_FLOOR_DB, HNR_CEIL_DB)
}

/// FFT-based autocorrelation of frames of a fixed length.
pub(crate) struct Autocorrelator {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Autocorrelator {
    pub(crate) fn new(frame_len: usize) -> Self {
        let nfft = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(nfft),
            inv: planner.plan_fft_inverse(nfft),
            buf: vec![Complex::default(); nfft],
        }
    }

    /// Biased autocorrelation `r(k) = sum_n x[n] x[n+k]` for `k = 0..=max_lag`.
    pub(crate) fn compute(&mut self, x: &[f64], max_lag: usize) -> Vec<f64> {
        let n = self.buf.len();
        for (dst, &v) in self.buf.iter_mut().zip(x) {
            *dst = Complex::new(v, 0.0);
        }
        for dst in self.buf[x.len()..].iter_mut() {
            *dst = Complex::default();
        }
        self.fwd.process(&mut self.buf);
        for c in self.buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inv.process(&mut self.buf);
        self.buf[..=max_lag.min(x.len() - 1)]
            .iter()
            .map(|c| c.re / n as f64)
            .collect()
    }
}

fn lag_range(fs: u32, cfg: &PitchConfig, win: usize) -> (usize, usize) {
    let lo = (fs as f64 / cfg.max_hz).floor().max(2.0) as usize;
    let hi = ((fs as f64 / cfg.min_hz).ceil() as usize).min(win.saturating_sub(2));
    (lo, hi)
}

/// Per-frame F0 over frames produced by [`super::frame_signal`] with a Hann window.
pub fn extract_f0(frames: &Frames, cfg: &PitchConfig) -> PitchTrack {
    let fs = frames.sample_rate;
    let win = frames.win_len;
    let (lo, hi) = lag_range(fs, cfg, win);
    let mut ac = Autocorrelator::new(win);
    let window = hann(win);
    let w_sum: f64 = window.iter().sum();
    let rw = ac.compute(&window, hi + 2 + SINC_HALF);
    let mut buf = vec![0.0; win];
    let mut f0 = Vec::with_capacity(frames.len());
    let mut strength = Vec::with_capacity(frames.len());
    for frame in frames.iter() {
        // remove the window-weighted local mean so a DC offset cannot look periodic
        let m = frame.iter().sum::<f64>() / w_sum;
        for ((b, &v), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = v - w * m;
        }
        let (hz, r) = if hi <= lo {
            (f64::NAN, 0.0)
        } else {
            frame_pitch(&ac.compute(&buf, hi + 2 + SINC_HALF), &rw, lo, hi, fs, cfg)
        };
        f0.push(hz);
        strength.push(r);
    }
    let hnr = f0
        .iter()
        .zip(&strength)
        .map(|(hz, &r)| if hz.is_nan() { f64::NAN } else { hnr_db(r) })
        .collect();
    PitchTrack {
        f0: FrameTrack::new(TrackKind::F0Hz, frames, f0),
        strength,
        hnr: FrameTrack::new(TrackKind::HnrDb, frames, hnr),
    }
}

/// Half-width in lags of the windowed-sinc interpolation kernel.
const SINC_HALF: usize = 8;

/// Band-limited interpolation of `r` at fractional lag `tau` (`r` is even in the lag).
fn sinc_interp(r: &[f64], tau: f64) -> f64 {
    let c = tau.floor() as isize;
    let h = SINC_HALF as isize;
    let mut acc = 0.0;
    for j in (c - h + 1)..=(c + h) {
        let v = match r.get(j.unsigned_abs()) {
            Some(&v) => v,
            None => continue,
        };
        let d = tau - j as f64;
        let sinc = if d.abs() < 1e-12 { 1.0 } else { (PI * d).sin() / (PI * d) };
        let win = 0.5 + 0.5 * (PI * d / SINC_HALF as f64).cos();
        acc += v * sinc * win;
    }
    acc
}

fn lin_interp(r: &[f64], tau: f64) -> f64 {
    let k = tau.floor() as usize;
    let f = tau - k as f64;
    match (r.get(k), r.get(k + 1)) {
        (Some(a), Some(b)) => a + (b - a) * f,
        (Some(a), None) => *a,
        _ => 0.0,
    }
}

fn frame_pitch(r: &[f64], rw: &[f64], lo: usize, hi: usize, fs: u32, cfg: &PitchConfig) -> (f64, f64) {
    let energy = r[0];
    if !(energy > 1e-20) {
        return (f64::NAN, 0.0);
    }
    let norm = |k: usize| (r[k] / energy) / (rw[k] / rw[0]);
    let norm_at = |tau: f64| (sinc_interp(r, tau) / energy) / (lin_interp(rw, tau) / rw[0]);
    let fs = fs as f64;
    let mut best: Option<(f64, f64, f64)> = None; // (score, lag, peak)
    for k in lo.max(1)..=hi {
        let (y0, y1, y2) = (norm(k - 1), norm(k), norm(k + 1));
        if !(y1 > y0 && y1 >= y2 && y1 > 0.0) {
            continue;
        }
        // refine on a 1/20-lag grid with band-limited interpolation, then a parabola
        let step = 0.05;
        let grid: Vec<(f64, f64)> = (-20..=20)
            .map(|i| {
                let tau = k as f64 + i as f64 * step;
                (tau, norm_at(tau))
            })
            .collect();
        let (gi, &(mut lag, mut peak)) = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty grid");
        if gi > 0 && gi + 1 < grid.len() {
            let (g0, g2) = (grid[gi - 1].1, grid[gi + 1].1);
            let denom = g0 - 2.0 * peak + g2;
            if denom < 0.0 {
                let delta = (0.5 * (g0 - g2) / denom).clamp(-0.5, 0.5);
                lag += delta * step;
                peak -= 0.25 * (g0 - g2) * delta;
            }
        }
        let score = peak - cfg.octave_cost * (cfg.min_hz * lag / fs).log2();
        if best.is_none_or(|b| score > b.0) {
            best = Some((score, lag, peak));
        }
    }
    match best {
        Some((_, lag, peak)) => {
            let hz = fs / lag;
            let voiced = peak >= cfg.voicing_threshold && hz >= cfg.min_hz && hz <= cfg.max_hz;
            (if voiced { hz } else { f64::NAN }, peak.clamp(0.0, 1.0))
        }
        None => (f64::NAN, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::frame_signal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const FS: u32 = 16_000;

    fn track(x: &[f64]) -> PitchTrack {
        let cfg = PitchConfig::default();
        extract_f0(&frame_signal(x, FS, &cfg.frame).unwrap(), &cfg)
    }

    #[test]
    fn sine_220() {
        let x: Vec<f64> = (0..FS).map(|i| 0.5 * (2.0 * PI * 220.0 * i as f64 / FS as f64).sin()).collect();
        let t = track(&x);
        assert!(t.f0.values.iter().all(|v| !v.is_nan()));
        for v in &t.f0.values {
            assert!((v / 220.0 - 1.0).abs() < 0.02, "{v}");
        }
        assert!(t.hnr.defined().all(|h| h > 20.0));
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..FS).map(|_| rng.random_range(-0.5..0.5)).collect();
        let t = track(&x);
        let unvoiced = t.f0.values.iter().filter(|v| v.is_nan()).count();
        assert!(unvoiced as f64 >= 0.9 * t.f0.len() as f64, "{unvoiced}/{}", t.f0.len());
    }

    #[test]
    fn pulse_train_110_without_octave_error() {
        // Rosenberg glottal flow pulses (40 % opening, 16 % closing), one every 1/110 s
        let rosenberg = |phase: f64| {
            let (tp, tn) = (0.4, 0.16);
            if phase < tp {
                0.5 * (1.0 - (PI * phase / tp).cos())
            } else if phase < tp + tn {
                (PI * (phase - tp) / (2.0 * tn)).cos()
            } else {
                0.0
            }
        };
        let period = FS as f64 / 110.0;
        let x: Vec<f64> = (0..FS).map(|i| rosenberg((i as f64 % period) / period)).collect();
        let t = track(&x);
        for v in &t.f0.values {
            assert!((v / 110.0 - 1.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let t = track(&vec![0.0; 4000]);
        assert!(t.f0.values.iter().all(|v| v.is_nan()));
        assert!(t.strength.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn amplitude_invariant() {
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * 150.0 * i as f64 / FS as f64).sin() * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.01).collect();
        let (a, b) = (track(&x), track(&y));
        for (p, q) in a.f0.values.iter().zip(&b.f0.values) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn hnr_clamps() {
        assert_eq!(hnr_db(1.0), HNR_CEIL_DB);
        assert_eq!(hnr_db(0.0), HNR_FLOOR_DB);
        assert!((hnr_db(0.5)).abs() < 1e-12);
    }
}
