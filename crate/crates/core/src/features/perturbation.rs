//! Cycle-to-cycle perturbation: local jitter, local shimmer and mean HNR.

use serde::{Deserialize, Serialize};

use super::pitch::PitchTrack;
use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub jitter_local: f64,
    pub shimmer_local: f64,
    pub mean_hnr_db: f64,
}

/// Minimum number of consecutive voiced frames for a run to be analysed.
const MIN_RUN_FRAMES: usize = 3;

/// Sub-sample position and height of the maximum of `x[lo..hi]`.
fn interpolated_peak(x: &[f64], lo: usize, hi: usize) -> Option<(f64, f64)> {
    let hi = hi.min(x.len());
    if lo >= hi {
        return None;
    }
    let (k, &y1) = x[lo..hi]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, v)| (i + lo, v))?;
    if k == 0 || k + 1 >= x.len() {
        return Some((k as f64, y1));
    }
    let (y0, y2) = (x[k - 1], x[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return Some((k as f64, y1));
    }
    let delta = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
    Some((k as f64 + delta, y1 - 0.25 * (y0 - y2) * delta))
}

/// Period marks (peak positions in samples) and peak amplitudes over `[start, end)`,
/// following the local period from the F0 track.
fn period_marks(x: &[f64], start: usize, end: usize, period_at: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut marks = Vec::new();
    let t0 = period_at(start as f64);
    let Some(first) = interpolated_peak(x, start, start + t0.ceil() as usize) else {
        return marks;
    };
    marks.push(first);
    loop {
        let (pos, _) = *marks.last().unwrap();
        let t = period_at(pos);
        let lo = (pos + 0.75 * t).ceil() as usize;
        let hi = (pos + 1.25 * t).floor() as usize + 1;
        if hi > end {
            break;
        }
        match interpolated_peak(x, lo, hi) {
            Some(m) if m.0 > pos => marks.push(m),
            _ => break,
        }
    }
    marks
}

/// Jitter and shimmer over every run of at least three voiced frames, plus mean HNR.
pub fn extract_perturbation(samples: &[f64], fs: u32, pitch: &PitchTrack) -> Result<PerturbationStats, FeatureError> {
    let f0 = &pitch.f0;
    let fs_f = fs as f64;
    let hop_s = 1.0 / f0.frame_rate;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < f0.values.len() {
        if f0.values[i].is_nan() {
            i += 1;
            continue;
        }
        let s = i;
        while i < f0.values.len() && !f0.values[i].is_nan() {
            i += 1;
        }
        if i - s >= MIN_RUN_FRAMES {
            runs.push((s, i));
        }
    }
    if runs.is_empty() {
        return Err(FeatureError::NoVoicedRun);
    }

    let (mut dt_sum, mut da_sum, mut n_diff) = (0.0, 0.0, 0usize);
    let (mut t_sum, mut a_sum, mut n_periods, mut n_amps) = (0.0, 0.0, 0usize, 0usize);
    for &(s, e) in &runs {
        let t_start = f0.start_s + s as f64 * hop_s - 0.5 * hop_s;
        let t_end = f0.start_s + (e - 1) as f64 * hop_s + 0.5 * hop_s;
        let lo = (t_start * fs_f).max(0.0).round() as usize;
        let hi = ((t_end * fs_f).round() as usize).min(samples.len());
        let period_at = |pos: f64| {
            let hz = f0.value_at(pos / fs_f);
            if hz.is_nan() {
                fs_f / f0.values[s]
            } else {
                fs_f / hz
            }
        };
        let marks = period_marks(samples, lo, hi, period_at);
        let periods: Vec<f64> = marks.windows(2).map(|w| w[1].0 - w[0].0).collect();
        for w in periods.windows(2) {
            dt_sum += (w[1] - w[0]).abs();
            n_diff += 1;
        }
        for w in marks.windows(2) {
            da_sum += (w[1].1 - w[0].1).abs();
        }
        t_sum += periods.iter().sum::<f64>();
        n_periods += periods.len();
        a_sum += marks.iter().map(|m| m.1).sum::<f64>();
        n_amps += marks.len();
    }

    let mean_t = t_sum / n_periods.max(1) as f64;
    let mean_a = a_sum / n_amps.max(1) as f64;
    let jitter = if n_diff == 0 || mean_t <= 0.0 { 0.0 } else { dt_sum / n_diff as f64 / mean_t };
    let n_adiff = n_amps.saturating_sub(runs.len());
    let shimmer = if n_adiff == 0 || mean_a <= 0.0 { 0.0 } else { da_sum / n_adiff as f64 / mean_a };
    let hnr: Vec<f64> = pitch.hnr.defined().collect();
    let mean_hnr = hnr.iter().sum::<f64>() / hnr.len().max(1) as f64;
    Ok(PerturbationStats {
        jitter_local: jitter,
        shimmer_local: shimmer,
        mean_hnr_db: mean_hnr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::frame_signal;
    use crate::features::pitch::{extract_f0, PitchConfig, HNR_CEIL_DB};
    use std::f64::consts::PI;

    const FS: u32 = 16_000;

    fn analyse(x: &[f64]) -> Result<PerturbationStats, FeatureError> {
        let cfg = PitchConfig::default();
        let p = extract_f0(&frame_signal(x, FS, &cfg.frame).unwrap(), &cfg);
        extract_perturbation(x, FS, &p)
    }

    /// Cosine whose successive cycles last `periods[i % len]` seconds; peaks sit at cycle starts.
    fn cycles(periods: &[f64], secs: f64) -> Vec<f64> {
        let n = (secs * FS as f64) as usize;
        let mut out = Vec::with_capacity(n);
        let (mut cycle, mut t_cycle_start) = (0usize, 0.0);
        for i in 0..n {
            let t = i as f64 / FS as f64;
            while t - t_cycle_start >= periods[cycle % periods.len()] {
                t_cycle_start += periods[cycle % periods.len()];
                cycle += 1;
            }
            let p = periods[cycle % periods.len()];
            out.push(0.5 * (2.0 * PI * (t - t_cycle_start) / p).cos());
        }
        out
    }

    #[test]
    fn periodic_sine_has_no_perturbation() {
        let x: Vec<f64> = (0..FS).map(|i| 0.5 * (2.0 * PI * 200.0 * i as f64 / FS as f64).sin()).collect();
        let s = analyse(&x).unwrap();
        assert!(s.jitter_local < 0.002, "{s:?}");
        assert!(s.shimmer_local < 0.005, "{s:?}");
        assert!((s.mean_hnr_db - HNR_CEIL_DB).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn alternating_periods_give_expected_jitter() {
        let t0 = 1.0 / 200.0;
        let periods = [t0 * 1.02, t0 * 0.98];
        // oracle: mean |T_i - T_{i-1}| / mean T over the constructed sequence
        let seq: Vec<f64> = (0..200).map(|i| periods[i % 2]).collect();
        let diffs: f64 = seq.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / 199.0;
        let expected = diffs / (seq.iter().sum::<f64>() / 200.0);
        assert!((expected - 0.04).abs() < 1e-12);
        let s = analyse(&cycles(&periods, 1.0)).unwrap();
        assert!((s.jitter_local - expected).abs() < 0.01, "{s:?}");
    }

    #[test]
    fn unvoiced_input_has_no_run() {
        assert_eq!(analyse(&vec![0.0; 8000]), Err(FeatureError::NoVoicedRun));
    }

    #[test]
    fn random_cycle_gains_show_as_shimmer() {
        use rand::{Rng, SeedableRng};
        let f0 = 150.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let gains: Vec<f64> = (0..=160).map(|_| rng.random_range(0.9..1.1)).collect();
        // gain k covers the cycle around the k-th cosine peak (switching at troughs)
        let x: Vec<f64> = (0..FS)
            .map(|i| {
                let t = i as f64 / FS as f64;
                let k = (t * f0 + 0.5).floor() as usize;
                0.4 * gains[k] * (2.0 * PI * f0 * t).cos()
            })
            .collect();
        let used = &gains[1..150];
        let expected = used.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (used.len() - 1) as f64
            / (used.iter().sum::<f64>() / used.len() as f64);
        let s = analyse(&x).unwrap();
        assert!((s.shimmer_local - expected).abs() < 0.2 * expected, "{s:?} vs {expected}");
        assert!(s.jitter_local < 0.01, "{s:?}");
    }
}
