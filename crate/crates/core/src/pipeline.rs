//! Recording → phrase segments → GeMLite functionals, over a whole manifest.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{normalize_loudness, resample_linear, AudioBuffer, AudioError, DEFAULT_TARGET_RMS_DB, PIPELINE_RATE};
use crate::feature_store::StoreError;
use crate::features::gemlite::{extract_gemlite, GemliteConfig};
use crate::segmentation::{
    segment_by_alignment, segment_by_energy, spans_to_alignment, AlignmentEntry, EnergyConfig, RecordingMeta, SegmentKey,
    SegmentationError,
};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("alignment file {0} not found (use the energy fallback to segment without it)")]
    MissingAlignment(PathBuf),
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: AudioError },
    #[error("{recording}: {source}")]
    Segmentation { recording: String, source: SegmentationError },
    #[error("{recording}: alignment lacks sentence(s) {missing:?}")]
    IncompleteAlignment { recording: String, missing: Vec<usize> },
    #[error("{} segment(s) failed: {}", .0.len(), .0.iter().map(|(k, e)| format!("{k}: {e}")).collect::<Vec<_>>().join("; "))]
    Segments(Vec<(String, String)>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub target_rms_db: f64,
    /// Segment by energy when a recording has no alignment file.
    pub fallback_vad: bool,
    pub energy: EnergyConfig,
    pub gemlite: GemliteConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            target_rms_db: DEFAULT_TARGET_RMS_DB,
            fallback_vad: false,
            energy: EnergyConfig::default(),
            gemlite: GemliteConfig::default(),
        }
    }
}

/// Rows of one recording, or the per-segment failures.
pub type RecordingRows = Result<Vec<(SegmentKey, Vec<f64>)>, ExtractError>;

/// Resample, loudness-normalise, segment and extract one recording.
/// `alignment = None` uses the energy fallback.
pub fn extract_recording(audio: &AudioBuffer, alignment: Option<Vec<AlignmentEntry>>, meta: &RecordingMeta, cfg: &ExtractConfig) -> RecordingRows {
    let recording = format!("{}/{}/{}", meta.subject_id, meta.story, meta.repetition);
    let seg_err = |source| ExtractError::Segmentation { recording: recording.clone(), source };
    let audio_err = |source| ExtractError::Audio { path: PathBuf::from(&meta.audio_path), source };
    let a = resample_linear(audio, PIPELINE_RATE).map_err(audio_err)?;
    let a = normalize_loudness(&a, cfg.target_rms_db).map_err(audio_err)?.audio;
    let entries = match alignment {
        Some(e) => e,
        None => {
            let spans = segment_by_energy(&a, &cfg.energy).map_err(seg_err)?;
            spans_to_alignment(spans, meta.story).map_err(seg_err)?
        }
    };
    let entries: Vec<AlignmentEntry> = entries.into_iter().filter(|e| e.story == meta.story).collect();
    let missing: Vec<usize> = (0..meta.story.sentence_count())
        .filter(|&i| !entries.iter().any(|e| e.sentence_index == i))
        .collect();
    if !missing.is_empty() {
        return Err(ExtractError::IncompleteAlignment { recording, missing });
    }
    let segments = segment_by_alignment(&a, &entries, meta).map_err(seg_err)?;
    let mut rows = Vec::with_capacity(segments.len());
    let mut failures = Vec::new();
    for s in segments {
        let key = s.key();
        match extract_gemlite(&s.audio, &cfg.gemlite) {
            Ok(v) => rows.push((key, v.values)),
            Err(e) => failures.push((key.0, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(rows)
    } else {
        Err(ExtractError::Segments(failures))
    }
}

/// Extract GeMLite rows for every manifest segment, in manifest order. Recordings
/// run in parallel; every failure is collected before returning the first hard one.
#[cfg(feature = "wav")]
pub fn extract_manifest(manifest: &crate::segmentation::Manifest, cfg: &ExtractConfig) -> Result<crate::feature_store::FeatureTable, ExtractError> {
    use crate::audio::read_wav;
    use crate::feature_store::FeatureTable;
    use crate::features::gemlite::feature_names;
    use crate::features::FeatureSetId;
    use crate::segmentation::load_alignment;

    let results = crate::par_map(&manifest.recordings, |meta| -> RecordingRows {
        let audio_path = manifest.resolve(&meta.audio_path);
        let al_path = manifest.resolve(&meta.alignment_path);
        let alignment = if !meta.alignment_path.is_empty() && al_path.is_file() {
            Some(load_alignment(&al_path).map_err(|source| ExtractError::Segmentation {
                recording: al_path.display().to_string(),
                source,
            })?)
        } else if cfg.fallback_vad {
            None
        } else {
            return Err(ExtractError::MissingAlignment(al_path));
        };
        let audio = read_wav(&audio_path).map_err(|source| ExtractError::Audio { path: audio_path.clone(), source })?;
        let rows = extract_recording(&audio, alignment, meta, cfg)?;
        log::info!("extracted {} segments from {}", rows.len(), audio_path.display());
        Ok(rows)
    });
    let mut table = FeatureTable::new(FeatureSetId::Gemlite, feature_names().to_vec());
    let mut failures = Vec::new();
    let mut first_hard = None;
    for r in results {
        match r {
            Ok(rows) => {
                for (k, v) in rows {
                    table.push(k, v)?;
                }
            }
            Err(ExtractError::Segments(f)) => failures.extend(f),
            Err(e) => {
                log::error!("{e}");
                first_hard.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_hard {
        return Err(e);
    }
    if !failures.is_empty() {
        return Err(ExtractError::Segments(failures));
    }
    Ok(table)
}
