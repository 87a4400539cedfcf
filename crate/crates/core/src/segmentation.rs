//! Phrase segmentation of story readings.
//!
//! Sentence boundaries come from externally produced alignment files. When no
//! alignment exists, [`segment_by_energy`] finds voiced runs separated by pauses.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("overlapping alignment entries: {0}")]
    Overlap(String),
    #[error("sentence index {index} out of range for {story} ({count} sentences)")]
    IndexOutOfRange {
        story: Story,
        index: usize,
        count: usize,
    },
    #[error("segment [{start_s}, {end_s}) s exceeds audio duration {duration_s} s")]
    OutOfBounds {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("input is silent")]
    SilentInput,
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three read texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Story {
    Story1,
    Story2,
    Story3,
}

impl Story {
    pub const ALL: [Story; 3] = [Story::Story1, Story::Story2, Story::Story3];

    pub fn sentence_count(self) -> usize {
        match self {
            Story::Story1 => 6,
            Story::Story2 => 7,
            Story::Story3 => 16,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Story::Story1 => "story1",
            Story::Story2 => "story2",
            Story::Story3 => "story3",
        }
    }
}

impl fmt::Display for Story {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Story {
    type Err = SegmentationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "story1" => Ok(Story::Story1),
            "story2" => Ok(Story::Story2),
            "story3" => Ok(Story::Story3),
            _ => Err(SegmentationError::Schema(format!("unknown story id '{s}'"))),
        }
    }
}

/// Identity of one sentence of one story.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhraseId {
    pub story: Story,
    pub sentence_index: usize,
}

impl PhraseId {
    pub fn new(story: Story, sentence_index: usize) -> Result<Self, SegmentationError> {
        let count = story.sentence_count();
        if sentence_index >= count {
            return Err(SegmentationError::IndexOutOfRange {
                story,
                index: sentence_index,
                count,
            });
        }
        Ok(Self {
            story,
            sentence_index,
        })
    }

    /// Every phrase of every story, in story then sentence order.
    pub fn all() -> impl Iterator<Item = PhraseId> {
        Story::ALL.into_iter().flat_map(|story| {
            (0..story.sentence_count()).map(move |sentence_index| PhraseId {
                story,
                sentence_index,
            })
        })
    }
}

impl fmt::Display for PhraseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.story, self.sentence_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = SegmentationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            _ => Err(SegmentationError::Manifest(format!("unknown gender '{s}'"))),
        }
    }
}

/// Binary target: high, near-term risk (score 5-6) vs. lower risk (1-4).
pub fn risk_label(score: u8) -> bool {
    score >= 5
}

/// `subject/story/sentence/repetition`, the join key for every feature file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey(pub String);

impl SegmentKey {
    pub fn new(subject_id: &str, phrase: PhraseId, repetition: u8) -> Self {
        SegmentKey(format!(
            "{subject_id}/{}/{}/{repetition}",
            phrase.story, phrase.sentence_index
        ))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    #[serde(rename = "story_id")]
    pub story: Story,
    pub sentence_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub text: String,
}

impl AlignmentEntry {
    pub fn phrase(&self) -> PhraseId {
        PhraseId {
            story: self.story,
            sentence_index: self.sentence_index,
        }
    }
}

/// Validate, sort by start time and check for overlaps.
pub fn validate_alignment(
    mut entries: Vec<AlignmentEntry>,
) -> Result<Vec<AlignmentEntry>, SegmentationError> {
    for e in &entries {
        if !(e.start_s.is_finite() && e.end_s.is_finite()) || e.start_s < 0.0 {
            return Err(SegmentationError::Schema(format!(
                "invalid times for {}: [{}, {})",
                e.phrase(),
                e.start_s,
                e.end_s
            )));
        }
        if e.end_s <= e.start_s {
            return Err(SegmentationError::Schema(format!(
                "end_s {} <= start_s {} for {}",
                e.end_s,
                e.start_s,
                e.phrase()
            )));
        }
        PhraseId::new(e.story, e.sentence_index)?;
    }
    entries.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for w in entries.windows(2) {
        if w[1].start_s < w[0].end_s {
            return Err(SegmentationError::Overlap(format!(
                "{} [{}, {}) and {} [{}, {})",
                w[0].phrase(),
                w[0].start_s,
                w[0].end_s,
                w[1].phrase(),
                w[1].start_s,
                w[1].end_s
            )));
        }
    }
    Ok(entries)
}

pub fn parse_alignment(json: &str) -> Result<Vec<AlignmentEntry>, SegmentationError> {
    let entries: Vec<AlignmentEntry> =
        serde_json::from_str(json).map_err(|e| SegmentationError::Schema(e.to_string()))?;
    validate_alignment(entries)
}

pub fn load_alignment(path: impl AsRef<Path>) -> Result<Vec<AlignmentEntry>, SegmentationError> {
    parse_alignment(&std::fs::read_to_string(path)?)
}

pub fn write_alignment(
    path: impl AsRef<Path>,
    entries: &[AlignmentEntry],
) -> Result<(), SegmentationError> {
    let json = serde_json::to_string_pretty(entries)
        .map_err(|e| SegmentationError::Schema(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// One row of the dataset manifest: a single reading of one story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub gender: Gender,
    pub risk_score: u8,
    #[serde(rename = "story_id")]
    pub story: Story,
    pub repetition: u8,
    #[serde(default)]
    pub audio_path: String,
    #[serde(default)]
    pub alignment_path: String,
}

impl RecordingMeta {
    pub fn risk_label(&self) -> bool {
        risk_label(self.risk_score)
    }

    /// Keys of every segment this recording yields, in sentence order.
    pub fn segment_keys(&self) -> impl Iterator<Item = (PhraseId, SegmentKey)> + '_ {
        (0..self.story.sentence_count()).map(move |i| {
            let phrase = PhraseId {
                story: self.story,
                sentence_index: i,
            };
            (phrase, SegmentKey::new(&self.subject_id, phrase, self.repetition))
        })
    }

    fn validate(&self) -> Result<(), SegmentationError> {
        if !(1..=6).contains(&self.risk_score) {
            return Err(SegmentationError::Manifest(format!(
                "{}: risk_score {} outside 1-6",
                self.subject_id, self.risk_score
            )));
        }
        if !(1..=2).contains(&self.repetition) {
            return Err(SegmentationError::Manifest(format!(
                "{}: repetition {} outside 1-2",
                self.subject_id, self.repetition
            )));
        }
        if self.subject_id.is_empty() || self.subject_id.contains('/') {
            return Err(SegmentationError::Manifest(format!(
                "invalid subject id '{}'",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// A dataset manifest together with the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub recordings: Vec<RecordingMeta>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(recordings: Vec<RecordingMeta>) -> Result<Self, SegmentationError> {
        let mut seen = std::collections::HashSet::new();
        for r in &recordings {
            r.validate()?;
            if !seen.insert((r.subject_id.clone(), r.story, r.repetition)) {
                return Err(SegmentationError::Manifest(format!(
                    "duplicate recording {}/{}/{}",
                    r.subject_id, r.story, r.repetition
                )));
            }
        }
        // one gender and one score per subject
        let mut subjects: std::collections::HashMap<&str, (Gender, u8)> = Default::default();
        for r in &recordings {
            let entry = subjects
                .entry(r.subject_id.as_str())
                .or_insert((r.gender, r.risk_score));
            if *entry != (r.gender, r.risk_score) {
                return Err(SegmentationError::Manifest(format!(
                    "subject {} has inconsistent gender/risk score",
                    r.subject_id
                )));
            }
        }
        Ok(Self {
            recordings,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SegmentationError> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| SegmentationError::Manifest(format!("{}: {e}", path.display())))?;
        let recordings = rdr
            .deserialize()
            .collect::<Result<Vec<RecordingMeta>, _>>()
            .map_err(|e| SegmentationError::Manifest(format!("{}: {e}", path.display())))?;
        let mut m = Self::new(recordings)?;
        m.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SegmentationError> {
        let mut w = csv::Writer::from_path(path.as_ref())
            .map_err(|e| SegmentationError::Manifest(e.to_string()))?;
        for r in &self.recordings {
            w.serialize(r)
                .map_err(|e| SegmentationError::Manifest(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Number of segments the manifest expands to.
    pub fn segment_count(&self) -> usize {
        self.recordings
            .iter()
            .map(|r| r.story.sentence_count())
            .sum()
    }
}

/// One phrase utterance with its labels.
#[derive(Debug, Clone)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub gender: Gender,
    pub risk_score: u8,
    pub risk_label: bool,
    pub phrase: PhraseId,
    pub repetition: u8,
    pub audio: AudioBuffer,
}

impl SegmentRecord {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(&self.subject_id, self.phrase, self.repetition)
    }
}

/// Cut one segment per alignment entry.
pub fn segment_by_alignment(
    a: &AudioBuffer,
    entries: &[AlignmentEntry],
    meta: &RecordingMeta,
) -> Result<Vec<SegmentRecord>, SegmentationError> {
    let duration = a.duration_s();
    // half a sample of slack for times rounded by the aligner
    let slack = 0.5 / a.sample_rate as f64;
    entries
        .iter()
        .map(|e| {
            if e.end_s > duration + slack {
                return Err(SegmentationError::OutOfBounds {
                    start_s: e.start_s,
                    end_s: e.end_s,
                    duration_s: duration,
                });
            }
            let phrase = PhraseId::new(e.story, e.sentence_index)?;
            let key = SegmentKey::new(&meta.subject_id, phrase, meta.repetition);
            let audio = a.slice_seconds(e.start_s, e.end_s, key.0);
            if audio.is_empty() {
                return Err(SegmentationError::Schema(format!("{phrase}: empty segment")));
            }
            Ok(SegmentRecord {
                subject_id: meta.subject_id.clone(),
                gender: meta.gender,
                risk_score: meta.risk_score,
                risk_label: meta.risk_label(),
                phrase,
                repetition: meta.repetition,
                audio,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub min_pause_ms: f64,
    pub min_seg_ms: f64,
    /// Frame level threshold relative to the loudest frame.
    pub threshold_db: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            min_pause_ms: 300.0,
            min_seg_ms: 500.0,
            threshold_db: -40.0,
            frame_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

/// Voiced spans `(start_s, end_s)` separated by pauses of at least `min_pause_ms`.
pub fn segment_by_energy(
    a: &AudioBuffer,
    cfg: &EnergyConfig,
) -> Result<Vec<(f64, f64)>, SegmentationError> {
    let fs = a.sample_rate as f64;
    let win = ((cfg.frame_ms * fs / 1000.0).round() as usize).max(1);
    let hop = ((cfg.hop_ms * fs / 1000.0).round() as usize).max(1);
    if a.samples.iter().all(|&s| s == 0.0) {
        return Err(SegmentationError::SilentInput);
    }
    let n = a.len();
    let mut levels = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + win).min(n);
        levels.push(crate::audio::rms(&a.samples[start..end]));
        if end == n {
            break;
        }
        start += hop;
    }
    let peak = levels.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 10f64.powf(cfg.threshold_db / 20.0);

    // frame runs above the floor, as sample ranges
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &lvl) in levels.iter().enumerate() {
        if lvl <= floor || lvl == 0.0 {
            continue;
        }
        let s = i * hop;
        let e = (s + win).min(n);
        match runs.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => runs.push((s, e)),
        }
    }
    let min_pause = (cfg.min_pause_ms * fs / 1000.0).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some(last) if r.0.saturating_sub(last.1) < min_pause => last.1 = r.1,
            _ => merged.push(r),
        }
    }
    let min_seg = (cfg.min_seg_ms * fs / 1000.0).round() as usize;
    Ok(merged
        .into_iter()
        .filter(|(s, e)| e - s >= min_seg)
        .map(|(s, e)| (s as f64 / fs, e as f64 / fs))
        .collect())
}

/// Turn fallback spans into alignment entries for one story.
///
/// Surplus spans are merged across their shortest pauses until there is one span
/// per sentence; too few spans is an error.
pub fn spans_to_alignment(
    mut spans: Vec<(f64, f64)>,
    story: Story,
) -> Result<Vec<AlignmentEntry>, SegmentationError> {
    let count = story.sentence_count();
    if spans.len() < count {
        return Err(SegmentationError::Schema(format!(
            "energy segmentation found {} spans, {story} needs {count}",
            spans.len()
        )));
    }
    while spans.len() > count {
        let (i, _) = spans
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1].0 - w[0].1))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("at least two spans");
        let next = spans.remove(i + 1);
        spans[i].1 = next.1;
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| AlignmentEntry {
            story,
            sentence_index: i,
            start_s: s,
            end_s: e,
            text: String::new(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(story: Story, idx: usize, s: f64, e: f64) -> AlignmentEntry {
        AlignmentEntry {
            story,
            sentence_index: idx,
            start_s: s,
            end_s: e,
            text: String::new(),
        }
    }

    fn meta() -> RecordingMeta {
        RecordingMeta {
            subject_id: "s01".into(),
            gender: Gender::Female,
            risk_score: 5,
            story: Story::Story1,
            repetition: 1,
            audio_path: String::new(),
            alignment_path: String::new(),
        }
    }

    fn tone(secs: f64, fs: u32) -> Vec<f64> {
        (0..(secs * fs as f64) as usize)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / fs as f64).sin())
            .collect()
    }

    #[test]
    fn alignment_sorted_by_start() {
        let json = r#"[
            {"story_id":"story1","sentence_index":1,"start_s":4.0,"end_s":10.0,"text":"b"},
            {"story_id":"story1","sentence_index":0,"start_s":0.0,"end_s":4.0,"text":"a"}
        ]"#;
        let e = parse_alignment(json).unwrap();
        assert_eq!(e[0].sentence_index, 0);
        assert_eq!(e[1].sentence_index, 1);
    }

    #[test]
    fn alignment_rejects_inverted_span() {
        let json = r#"[{"story_id":"story1","sentence_index":0,"start_s":2.0,"end_s":2.0,"text":""}]"#;
        assert!(matches!(parse_alignment(json), Err(SegmentationError::Schema(_))));
    }

    #[test]
    fn alignment_rejects_index_beyond_story() {
        let json = r#"[{"story_id":"story1","sentence_index":7,"start_s":0.0,"end_s":1.0,"text":""}]"#;
        assert!(matches!(
            parse_alignment(json),
            Err(SegmentationError::IndexOutOfRange { index: 7, count: 6, .. })
        ));
    }

    #[test]
    fn alignment_rejects_overlap() {
        let e = vec![entry(Story::Story2, 0, 0.0, 2.0), entry(Story::Story2, 1, 1.5, 3.0)];
        assert!(matches!(validate_alignment(e), Err(SegmentationError::Overlap(_))));
    }

    #[test]
    fn split_ten_seconds_in_two() {
        let fs = 1000;
        let a = AudioBuffer::new(vec![0.1; 10 * fs], fs as u32, "r").unwrap();
        let segs = segment_by_alignment(
            &a,
            &[entry(Story::Story1, 0, 0.0, 4.0), entry(Story::Story1, 1, 4.0, 10.0)],
            &meta(),
        )
        .unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].audio.duration_s(), 4.0);
        assert_eq!(segs[1].audio.duration_s(), 6.0);
        assert!(segs[0].risk_label);
        assert_eq!(segs[1].key().as_str(), "s01/story1/1/1");
    }

    #[test]
    fn entry_past_end_is_out_of_bounds() {
        let a = AudioBuffer::new(vec![0.1; 10_000], 1000, "r").unwrap();
        let r = segment_by_alignment(&a, &[entry(Story::Story1, 0, 0.0, 12.0)], &meta());
        assert!(matches!(r, Err(SegmentationError::OutOfBounds { .. })));
    }

    #[test]
    fn full_session_has_1160_segments() {
        let mut recs = Vec::new();
        for s in 0..20 {
            for story in Story::ALL {
                for rep in 1..=2 {
                    recs.push(RecordingMeta {
                        subject_id: format!("s{s:02}"),
                        gender: if s < 10 { Gender::Female } else { Gender::Male },
                        risk_score: 3,
                        story,
                        repetition: rep,
                        audio_path: String::new(),
                        alignment_path: String::new(),
                    });
                }
            }
        }
        assert_eq!(Manifest::new(recs).unwrap().segment_count(), 1160);
    }

    #[test]
    fn energy_splits_on_long_pause() {
        let fs = 16_000;
        let mut x = tone(1.0, fs);
        x.extend(vec![0.0; 8000]);
        x.extend(tone(1.0, fs));
        let a = AudioBuffer::new(x, fs, "e").unwrap();
        let spans = segment_by_energy(&a, &EnergyConfig::default()).unwrap();
        assert_eq!(spans.len(), 2);
        assert!((spans[0].0 - 0.0).abs() < 0.02);
        assert!((spans[1].0 - 1.5).abs() < 0.03);
    }

    #[test]
    fn energy_bridges_short_gap() {
        let fs = 16_000;
        let mut x = tone(1.0, fs);
        x.extend(vec![0.0; 1600]);
        x.extend(tone(1.0, fs));
        let a = AudioBuffer::new(x, fs, "e").unwrap();
        assert_eq!(segment_by_energy(&a, &EnergyConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn energy_counts_k_pauses() {
        // K pauses of at least the threshold give K + 1 spans, by construction
        let fs = 16_000;
        for k in 0..5 {
            let mut x = Vec::new();
            for i in 0..=k {
                x.extend(tone(0.6 + 0.1 * i as f64, fs));
                if i < k {
                    x.extend(vec![0.0; 5600 + 400 * i]);
                }
            }
            let a = AudioBuffer::new(x, fs, "k").unwrap();
            assert_eq!(segment_by_energy(&a, &EnergyConfig::default()).unwrap().len(), k + 1);
        }
    }

    #[test]
    fn energy_rejects_silence() {
        let a = AudioBuffer::new(vec![0.0; 16_000], 16_000, "z").unwrap();
        assert!(matches!(
            segment_by_energy(&a, &EnergyConfig::default()),
            Err(SegmentationError::SilentInput)
        ));
    }

    #[test]
    fn surplus_spans_merge_across_shortest_pause() {
        let spans = vec![(0.0, 1.0), (1.2, 2.0), (3.0, 4.0), (4.5, 5.0), (6.0, 7.0), (8.0, 9.0), (9.9, 11.0)];
        let e = spans_to_alignment(spans, Story::Story1).unwrap();
        assert_eq!(e.len(), 6);
        // the 0.2 s pause between the first two spans is the shortest
        assert_eq!((e[0].start_s, e[0].end_s), (0.0, 2.0));
        assert_eq!(e[1].start_s, 3.0);
        assert_eq!(e[5].sentence_index, 5);
    }
}
