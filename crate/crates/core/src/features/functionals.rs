//! Statistics summarising a frame track over one segment.

use super::FrameTrack;

/// Functional suffixes in output order.
pub const FUNCTIONALS: [&str; 5] = ["mean", "stddev", "20th", "50th", "80th"];

/// Percentile `q` in `[0, 100]` of ascending `sorted` values, linear interpolation
/// between closest ranks (position `q/100 * (n-1)`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// The five functionals over the defined frames of `track`, and whether any frame
/// was defined. Fully undefined tracks give zeros.
pub fn summarise(track: &FrameTrack) -> ([f64; 5], bool) {
    let mut v: Vec<f64> = track.defined().collect();
    if v.is_empty() {
        return ([0.0; 5], false);
    }
    v.sort_by(f64::total_cmp);
    (
        [
            mean(&v),
            std_pop(&v),
            percentile_sorted(&v, 20.0),
            percentile_sorted(&v, 50.0),
            percentile_sorted(&v, 80.0),
        ],
        true,
    )
}

/// Voicing statistics of a pitch track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoicingStats {
    pub voiced_fraction: f64,
    pub voiced_segments_per_s: f64,
    pub mean_voiced_run_ms: f64,
}

pub fn voicing_stats(f0: &FrameTrack, duration_s: f64) -> VoicingStats {
    let mask = f0.voiced_mask();
    if mask.is_empty() {
        return VoicingStats { voiced_fraction: 0.0, voiced_segments_per_s: 0.0, mean_voiced_run_ms: 0.0 };
    }
    let mut runs = Vec::new();
    let mut len = 0usize;
    for &m in mask.iter().chain(std::iter::once(&false)) {
        if m {
            len += 1;
        } else if len > 0 {
            runs.push(len);
            len = 0;
        }
    }
    let voiced: usize = runs.iter().sum();
    let frame_ms = 1000.0 / f0.frame_rate;
    VoicingStats {
        voiced_fraction: voiced as f64 / mask.len() as f64,
        voiced_segments_per_s: if duration_s > 0.0 { runs.len() as f64 / duration_s } else { 0.0 },
        mean_voiced_run_ms: if runs.is_empty() { 0.0 } else { voiced as f64 / runs.len() as f64 * frame_ms },
    }
}
