//! GeMLite: the fixed-order functional feature set.
//!
//! Layout (124 values):
//! - 22 tracks x {mean, stddev, 20th, 50th, 80th}: F0, Loudness, SlopeV0-500,
//!   AlphaRatio, HammarbergIndex, F1, F1Bandwidth, F2, F3, MFCC1..MFCC13
//! - Jitter_local, Shimmer_local, HNR_mean
//! - VoicedFraction, VoicedSegmentsPerSec, MeanVoicedRunMs
//! - one `<track>_coverage` flag (1 = some frame defined) for each track that can be
//!   entirely undefined: F0, SlopeV0-500, AlphaRatio, HammarbergIndex, F1,
//!   F1Bandwidth, F2, F3

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::formants::{extract_formants, FormantConfig};
use super::functionals::{summarise, voicing_stats, FUNCTIONALS};
use super::mfcc::{extract_mfcc, MfccConfig};
use super::perturbation::extract_perturbation;
use super::pitch::{extract_f0, PitchConfig, PitchTrack};
use super::spectral::{extract_spectral_measures, SpectralConfig};
use super::{frame_signal, FeatureError, FeatureSetId, FeatureVector, FrameConfig, FrameTrack, TrackKind};
use crate::audio::AudioBuffer;

pub const GEMLITE_LEN: usize = 124;

const N_MFCC: u8 = 13;

fn track_order() -> Vec<TrackKind> {
    let mut t = vec![
        TrackKind::F0Hz,
        TrackKind::LoudnessRms,
        TrackKind::SlopeV0To500,
        TrackKind::AlphaRatioDb,
        TrackKind::HammarbergDb,
        TrackKind::F1Hz,
        TrackKind::F1BwHz,
        TrackKind::F2Hz,
        TrackKind::F3Hz,
    ];
    t.extend((1..=N_MFCC).map(TrackKind::Mfcc));
    t
}

const FLAGGED: [TrackKind; 8] = [
    TrackKind::F0Hz,
    TrackKind::SlopeV0To500,
    TrackKind::AlphaRatioDb,
    TrackKind::HammarbergDb,
    TrackKind::F1Hz,
    TrackKind::F1BwHz,
    TrackKind::F2Hz,
    TrackKind::F3Hz,
];

/// Feature names in vector order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(GEMLITE_LEN);
        for kind in track_order() {
            for f in FUNCTIONALS {
                names.push(format!("{}_{f}", kind.feature_prefix()));
            }
        }
        for n in ["Jitter_local", "Shimmer_local", "HNR_mean", "VoicedFraction", "VoicedSegmentsPerSec", "MeanVoicedRunMs"] {
            names.push(n.to_string());
        }
        for kind in FLAGGED {
            names.push(format!("{}_coverage", kind.feature_prefix()));
        }
        assert_eq!(names.len(), GEMLITE_LEN);
        names
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemliteConfig {
    pub frame: FrameConfig,
    pub pitch: PitchConfig,
    pub spectral: SpectralConfig,
    pub formant: FormantConfig,
    pub mfcc: MfccConfig,
}

impl Default for GemliteConfig {
    /// Formant analysis is pre-emphasised: voice sources fall by roughly 6 dB per
    /// octave, which otherwise drags the LPC F1 estimate below the resonance.
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            pitch: PitchConfig::default(),
            spectral: SpectralConfig::default(),
            formant: FormantConfig {
                pre_emphasis: FormantConfig::pre_emphasis_50hz(crate::audio::PIPELINE_RATE),
                ..FormantConfig::default()
            },
            mfcc: MfccConfig::default(),
        }
    }
}

/// All frame tracks of one segment, keyed by kind, in GeMLite order.
#[derive(Debug, Clone)]
pub struct SegmentTracks {
    pub tracks: Vec<FrameTrack>,
    pub pitch: PitchTrack,
}

/// Compute every frame track of a segment.
pub fn extract_tracks(a: &AudioBuffer, cfg: &GemliteConfig) -> Result<SegmentTracks, FeatureError> {
    let fs = a.sample_rate;
    let frames = frame_signal(&a.samples, fs, &cfg.frame)?;
    let pitch_frames = frame_signal(&a.samples, fs, &cfg.pitch.frame)?;
    let pitch = extract_f0(&pitch_frames, &cfg.pitch);
    let loud = frames
        .iter()
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    let loudness = FrameTrack::new(TrackKind::LoudnessRms, &frames, loud);
    let spec = extract_spectral_measures(&frames, &pitch.f0, &cfg.spectral)?;
    let fm = extract_formants(&frames, Some(&pitch.f0), &cfg.formant);
    let mfcc = extract_mfcc(&frames, &cfg.mfcc)?;
    let mut tracks = vec![
        pitch.f0.clone(),
        loudness,
        spec.slope_v0_500,
        spec.alpha_ratio_db,
        spec.hammarberg_db,
        fm.f1,
        fm.f1_bw,
        fm.f2,
        fm.f3,
    ];
    tracks.extend(mfcc);
    Ok(SegmentTracks { tracks, pitch })
}

/// The GeMLite vector of one segment.
pub fn extract_gemlite(a: &AudioBuffer, cfg: &GemliteConfig) -> Result<FeatureVector, FeatureError> {
    let st = extract_tracks(a, cfg)?;
    gemlite_from_tracks(&st, &a.samples, a.sample_rate)
}

fn gemlite_from_tracks(st: &SegmentTracks, samples: &[f64], fs: u32) -> Result<FeatureVector, FeatureError> {
    let pitch = &st.pitch;
    if st.tracks.is_empty() {
        return Err(FeatureError::EmptyTrackSet);
    }
    let mut values = Vec::with_capacity(GEMLITE_LEN);
    let mut coverage = Vec::with_capacity(FLAGGED.len());
    for t in &st.tracks {
        let (f, cov) = summarise(t);
        values.extend(f);
        if FLAGGED.contains(&t.kind) {
            coverage.push(if cov { 1.0 } else { 0.0 });
        }
    }
    let (jitter, shimmer, hnr) = match extract_perturbation(samples, fs, pitch) {
        Ok(p) => (p.jitter_local, p.shimmer_local, p.mean_hnr_db),
        Err(FeatureError::NoVoicedRun) => {
            let h: Vec<f64> = pitch.hnr.defined().collect();
            let hnr = if h.is_empty() { 0.0 } else { h.iter().sum::<f64>() / h.len() as f64 };
            (0.0, 0.0, hnr)
        }
        Err(e) => return Err(e),
    };
    let vs = voicing_stats(&pitch.f0, samples.len() as f64 / fs as f64);
    values.extend([jitter, shimmer, hnr, vs.voiced_fraction, vs.voiced_segments_per_s, vs.mean_voiced_run_ms]);
    values.extend(coverage);
    debug_assert_eq!(values.len(), GEMLITE_LEN);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::Config(format!("non-finite value for {}", feature_names()[i])));
    }
    Ok(FeatureVector {
        set_id: FeatureSetId::Gemlite,
        names: feature_names().to_vec(),
        values,
    })
}
