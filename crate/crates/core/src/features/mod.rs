//! Frame-level acoustic descriptors and segment-level functionals.
//!
//! The descriptors follow the interpretable parameter groups of the usual
//! paralinguistic feature sets: frequency (F0, jitter, formants), energy
//! (loudness, shimmer, HNR), spectral balance (alpha ratio, Hammarberg index,
//! low-band slope, MFCCs) and voicing statistics. [`gemlite`] bundles them into
//! one fixed-order vector per segment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod formants;
pub mod frame;
pub mod functionals;
pub mod gemlite;
pub mod mfcc;
pub mod perturbation;
pub mod pitch;
pub mod spectral;

pub use frame::{frame_signal, FrameConfig, Frames};
pub use gemlite::{extract_gemlite, feature_names, GemliteConfig, GEMLITE_LEN};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("signal of {len} samples is shorter than one {win}-sample window")]
    TooShort { len: usize, win: usize },
    #[error("all-zero spectrum")]
    ZeroSpectrum,
    #[error("LPC polynomial has no qualifying roots")]
    UnstablePolynomial,
    #[error("no run of at least 3 voiced frames")]
    NoVoicedRun,
    #[error("no frame tracks to summarise")]
    EmptyTrackSet,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    F0Hz,
    LoudnessRms,
    SlopeV0To500,
    AlphaRatioDb,
    HammarbergDb,
    F1Hz,
    F1BwHz,
    F2Hz,
    F3Hz,
    HnrDb,
    /// 1-based cepstral coefficient index.
    Mfcc(u8),
}

impl TrackKind {
    /// Prefix used in functional feature names.
    pub fn feature_prefix(self) -> String {
        match self {
            TrackKind::F0Hz => "F0".into(),
            TrackKind::LoudnessRms => "Loudness".into(),
            TrackKind::SlopeV0To500 => "SlopeV0-500".into(),
            TrackKind::AlphaRatioDb => "AlphaRatio".into(),
            TrackKind::HammarbergDb => "HammarbergIndex".into(),
            TrackKind::F1Hz => "F1".into(),
            TrackKind::F1BwHz => "F1Bandwidth".into(),
            TrackKind::F2Hz => "F2".into(),
            TrackKind::F3Hz => "F3".into(),
            TrackKind::HnrDb => "HNR".into(),
            TrackKind::Mfcc(k) => format!("MFCC{k}"),
        }
    }
}

/// Per-frame values of one descriptor. `NaN` marks frames where it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrack {
    pub kind: TrackKind,
    /// Frames per second.
    pub frame_rate: f64,
    /// Centre time of the first frame in seconds.
    pub start_s: f64,
    pub values: Vec<f64>,
}

impl FrameTrack {
    pub fn new(kind: TrackKind, frames: &Frames, values: Vec<f64>) -> Self {
        Self {
            kind,
            frame_rate: frames.frame_rate(),
            start_s: frames.center_s(0),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of the frame whose centre is nearest to `t`, or NaN outside the track.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let pos = ((t - self.start_s) * self.frame_rate).round();
        if pos < 0.0 {
            return if pos > -1.0 { self.values[0] } else { f64::NAN };
        }
        self.values.get(pos as usize).copied().unwrap_or(f64::NAN)
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }

    pub fn voiced_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| !v.is_nan()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetId {
    Gemlite,
    Embedding(String),
}

impl FeatureSetId {
    /// Parse `gemlite` or `embedding:<name>`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gemlite" => Some(FeatureSetId::Gemlite),
            _ => s
                .strip_prefix("embedding:")
                .filter(|n| !n.is_empty())
                .map(|n| FeatureSetId::Embedding(n.to_string())),
        }
    }

    /// Conventional file name of the set inside a feature directory.
    pub fn file_name(&self) -> String {
        match self {
            FeatureSetId::Gemlite => "gemlite.csv".into(),
            FeatureSetId::Embedding(n) => format!("embedding_{n}.csv"),
        }
    }
}

impl std::fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSetId::Gemlite => f.write_str("gemlite"),
            FeatureSetId::Embedding(n) => write!(f, "embedding:{n}"),
        }
    }
}

/// Named, ordered feature values of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub set_id: FeatureSetId,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_id_parsing() {
        assert_eq!(FeatureSetId::parse("gemlite"), Some(FeatureSetId::Gemlite));
        assert_eq!(
            FeatureSetId::parse("embedding:w2v-emo"),
            Some(FeatureSetId::Embedding("w2v-emo".into()))
        );
        assert_eq!(FeatureSetId::parse("embedding:"), None);
        assert_eq!(FeatureSetId::parse("egemaps"), None);
        assert_eq!(
            FeatureSetId::Embedding("w2v-emo".into()).file_name(),
            "embedding_w2v-emo.csv"
        );
    }

    #[test]
    fn nearest_frame_lookup() {
        let t = FrameTrack {
            kind: TrackKind::F0Hz,
            frame_rate: 100.0,
            start_s: 0.03,
            values: vec![1.0, 2.0, f64::NAN],
        };
        assert_eq!(t.value_at(0.03), 1.0);
        assert_eq!(t.value_at(0.044), 2.0);
        assert!(t.value_at(0.06).is_nan());
        assert!(t.value_at(0.5).is_nan());
        assert_eq!(t.value_at(0.026), 1.0);
        assert!(t.value_at(0.0).is_nan());
    }
}
