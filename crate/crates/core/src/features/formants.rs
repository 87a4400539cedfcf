//! Formant centres and bandwidths from LPC polynomial roots.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::frame::Frames;
use super::{FeatureError, FrameTrack, TrackKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantConfig {
    pub lpc_order: usize,
    pub max_bandwidth_hz: f64,
    pub min_freq_hz: f64,
    /// First-order pre-emphasis `y[n] = x[n] - a x[n-1]` applied before LPC; 0 disables it.
    /// Off here; the GeMLite pipeline turns it on to flatten the falling voice source.
    pub pre_emphasis: f64,
}

impl FormantConfig {
    /// Coefficient giving +6 dB/octave above 50 Hz at `fs`.
    pub fn pre_emphasis_50hz(fs: u32) -> f64 {
        (-2.0 * PI * 50.0 / fs as f64).exp()
    }
}

impl Default for FormantConfig {
    fn default() -> Self {
        Self {
            lpc_order: 12,
            max_bandwidth_hz: 1000.0,
            min_freq_hz: 90.0,
            pre_emphasis: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone)]
pub struct FormantTracks {
    pub f1: FrameTrack,
    pub f1_bw: FrameTrack,
    pub f2: FrameTrack,
    pub f3: FrameTrack,
}

pub(crate) fn autocorr(x: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|k| x.iter().zip(x.iter().skip(k)).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson-Durbin recursion. Returns `a[0..=order]` with `a[0] = 1` for
/// `A(z) = 1 + a1 z^-1 + ... + ap z^-p`, or `None` for a zero or singular input.
pub fn levinson_durbin(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r.len() <= order || !(r[0] > 0.0) {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| a[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
    }
    Some(a)
}

/// LPC coefficients of one (already windowed) frame.
pub fn lpc(frame: &[f64], order: usize) -> Option<Vec<f64>> {
    let mut r = autocorr(frame, order);
    // tiny white-noise correction keeps the recursion stable on near-singular frames
    r[0] *= 1.0 + 1e-9;
    levinson_durbin(&r, order)
}

/// Formants from LPC coefficients, lowest frequency first.
pub fn formants_from_lpc(a: &[f64], fs: u32, cfg: &FormantConfig) -> Vec<Formant> {
    let p = a.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            -a[j + 1]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let fs = fs as f64;
    let mut out: Vec<Formant> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| Formant {
            freq_hz: z.im.atan2(z.re) * fs / (2.0 * PI),
            bandwidth_hz: -(fs / PI) * z.norm().ln(),
        })
        .filter(|f| f.freq_hz > cfg.min_freq_hz && f.bandwidth_hz > 0.0 && f.bandwidth_hz < cfg.max_bandwidth_hz)
        .collect();
    out.sort_by(|x, y| x.freq_hz.total_cmp(&y.freq_hz));
    out
}

/// Formants of one frame; at most three are returned.
pub fn frame_formants(frame: &[f64], fs: u32, cfg: &FormantConfig) -> Result<Vec<Formant>, FeatureError> {
    let emphasised: Vec<f64>;
    let frame = if cfg.pre_emphasis != 0.0 {
        emphasised = std::iter::once(frame[0])
            .chain(frame.windows(2).map(|w| w[1] - cfg.pre_emphasis * w[0]))
            .collect();
        &emphasised[..]
    } else {
        frame
    };
    let a = lpc(frame, cfg.lpc_order).ok_or(FeatureError::UnstablePolynomial)?;
    let mut f = formants_from_lpc(&a, fs, cfg);
    if f.is_empty() {
        return Err(FeatureError::UnstablePolynomial);
    }
    f.truncate(3);
    Ok(f)
}

/// F1-F3 centres and the F1 bandwidth per frame. Frames marked unvoiced in
/// `voicing` (when given) or without qualifying roots are NaN.
pub fn extract_formants(frames: &Frames, voicing: Option<&FrameTrack>, cfg: &FormantConfig) -> FormantTracks {
    let n = frames.len();
    let (mut f1, mut bw1, mut f2, mut f3) = (vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n]);
    for (i, frame) in frames.iter().enumerate() {
        if voicing.is_some_and(|v| v.value_at(frames.center_s(i)).is_nan()) {
            continue;
        }
        if let Ok(fm) = frame_formants(frame, frames.sample_rate, cfg) {
            f1[i] = fm[0].freq_hz;
            bw1[i] = fm[0].bandwidth_hz;
            if let Some(f) = fm.get(1) {
                f2[i] = f.freq_hz;
            }
            if let Some(f) = fm.get(2) {
                f3[i] = f.freq_hz;
            }
        }
    }
    FormantTracks {
        f1: FrameTrack::new(TrackKind::F1Hz, frames, f1),
        f1_bw: FrameTrack::new(TrackKind::F1BwHz, frames, bw1),
        f2: FrameTrack::new(TrackKind::F2Hz, frames, f2),
        f3: FrameTrack::new(TrackKind::F3Hz, frames, f3),
    }
}
