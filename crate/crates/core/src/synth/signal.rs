//! Harmonic-plus-noise phrase synthesis with a tilted source and formant resonators.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Klatt-style two-pole resonator with unity gain at DC.
#[derive(Debug, Clone)]
pub struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    pub fn new(freq_hz: f64, bw_hz: f64, fs: u32) -> Self {
        let t = 1.0 / fs as f64;
        let c = -(-2.0 * PI * bw_hz * t).exp();
        let b = 2.0 * (-PI * bw_hz * t).exp() * (2.0 * PI * freq_hz * t).cos();
        Self { a: 1.0 - b - c, b, c, y1: 0.0, y2: 0.0 }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Voice parameters of one phrase; these are the generation ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub f1_bw_hz: f64,
    pub f2_hz: f64,
    pub f2_bw_hz: f64,
    /// Source harmonic roll-off in dB per octave (positive = falling).
    pub tilt_db_per_oct: f64,
    /// Aspiration noise level relative to the voiced RMS, in dB.
    pub noise_db: f64,
}

impl Default for VoiceParams {
    fn default() -> Self {
        Self {
            f0_hz: 120.0,
            f1_hz: 700.0,
            f1_bw_hz: 80.0,
            f2_hz: 1200.0,
            f2_bw_hz: 100.0,
            tilt_db_per_oct: 6.0,
            noise_db: -30.0,
        }
    }
}

/// Voiced-run layout of a synthetic phrase: syllable-like voiced stretches with short gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhraseShape {
    pub min_voiced_ms: f64,
    pub max_voiced_ms: f64,
    pub min_gap_ms: f64,
    pub max_gap_ms: f64,
    /// Relative depth of the sinusoidal intonation contour around the mean F0.
    pub intonation_depth: f64,
    pub intonation_hz: f64,
}

impl Default for PhraseShape {
    fn default() -> Self {
        Self {
            min_voiced_ms: 180.0,
            max_voiced_ms: 420.0,
            min_gap_ms: 40.0,
            max_gap_ms: 110.0,
            intonation_depth: 0.06,
            intonation_hz: 1.3,
        }
    }
}

/// A synthesised phrase and its generation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPhrase {
    pub samples: Vec<f64>,
    /// Instantaneous F0 per sample; NaN where the source is silent.
    pub f0_hz: Vec<f64>,
}

impl SynthPhrase {
    /// Median instantaneous F0 over voiced samples.
    pub fn median_f0(&self) -> f64 {
        let mut v: Vec<f64> = self.f0_hz.iter().copied().filter(|f| !f.is_nan()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

/// Synthesise `duration_s` of speech-like signal with peak level 0.5.
pub fn synthesize_phrase(p: &VoiceParams, shape: &PhraseShape, duration_s: f64, fs: u32, rng: &mut impl Rng) -> SynthPhrase {
    let n = (duration_s * fs as f64).round() as usize;
    let fsf = fs as f64;
    // voiced mask with smooth 15 ms ramps
    let mut gain = vec![0.0; n];
    let ramp = (0.015 * fsf) as usize;
    let mut pos = (rng.random_range(shape.min_gap_ms..=shape.max_gap_ms) * fsf / 1000.0) as usize;
    while pos < n {
        let len = (rng.random_range(shape.min_voiced_ms..=shape.max_voiced_ms) * fsf / 1000.0) as usize;
        let end = (pos + len).min(n);
        for (i, g) in gain[pos..end].iter_mut().enumerate() {
            let to_end = end - pos - 1 - i;
            let r = i.min(to_end) as f64 / ramp as f64;
            *g = if r >= 1.0 { 1.0 } else { 0.5 - 0.5 * (PI * r).cos() };
        }
        pos = end + (rng.random_range(shape.min_gap_ms..=shape.max_gap_ms) * fsf / 1000.0) as usize;
    }

    let contour_phase = rng.random_range(0.0..2.0 * PI);
    let f0: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fsf;
            p.f0_hz * (1.0 + shape.intonation_depth * (2.0 * PI * shape.intonation_hz * t + contour_phase).sin())
        })
        .collect();
    let f0_max = p.f0_hz * (1.0 + shape.intonation_depth.abs());
    let n_harm = ((0.45 * fsf) / f0_max).floor().max(1.0) as usize;
    let amps: Vec<f64> = (1..=n_harm)
        .map(|h| 10f64.powf(-p.tilt_db_per_oct * (h as f64).log2() / 20.0))
        .collect();
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut phase = 0.0;
    let mut voiced = Vec::with_capacity(n);
    for i in 0..n {
        let v = if gain[i] == 0.0 {
            0.0
        } else {
            gain[i] * amps.iter().zip(&phases).enumerate().map(|(h, (a, p0))| a * (phase * (h + 1) as f64 + p0).sin()).sum::<f64>()
        };
        voiced.push(v);
        phase = (phase + 2.0 * PI * f0[i] / fsf) % (2.0 * PI);
    }
    let mut r1 = Resonator::new(p.f1_hz, p.f1_bw_hz, fs);
    let mut r2 = Resonator::new(p.f2_hz, p.f2_bw_hz, fs);
    for v in voiced.iter_mut() {
        *v = r2.process(r1.process(*v));
    }
    let rms = (voiced.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt().max(1e-12);
    let noise_sd = rms * 10f64.powf(p.noise_db / 20.0);
    let normal = Normal::new(0.0, noise_sd).expect("finite sd");
    let mut out: Vec<f64> = voiced.iter().map(|v| v + normal.sample(rng)).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in out.iter_mut() {
        *v *= 0.5 / peak;
    }
    let f0_hz = f0.iter().zip(&gain).map(|(&f, &g)| if g > 0.0 { f } else { f64::NAN }).collect();
    SynthPhrase { samples: out, f0_hz }
}
