//! Synthetic cohorts with known injected effects.
//!
//! A [`CohortSpec`] fixes the subjects (gender, risk) and the per-gender shifts;
//! [`generate_features`] emits feature tables directly, [`generate_signal`] renders
//! audio with alignments so the whole extraction stack can be exercised.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, PIPELINE_RATE};
use crate::feature_store::{FeatureTable, StoreError, SCORE_COLUMNS};
use crate::features::FeatureSetId;
use crate::segmentation::{AlignmentEntry, Gender, Manifest, PhraseId, RecordingMeta, SegmentKey, SegmentationError, Story};
use crate::{derive_seed, par_map};

pub mod signal;

use signal::{synthesize_phrase, PhraseShape, VoiceParams};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Signal,
    Feature,
}

/// Per-gender shift applied to high-risk subjects, in σ units of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub male: f64,
    pub female: f64,
}

impl Shift {
    fn for_gender(&self, g: Gender) -> f64 {
        match g {
            Gender::Male => self.male,
            Gender::Female => self.female,
        }
    }
}

fn default_stories() -> Vec<Story> {
    Story::ALL.to_vec()
}
fn default_repetitions() -> u8 {
    2
}
fn default_phrase_sd() -> f64 {
    0.5
}
fn default_subject_sd() -> f64 {
    0.5
}
fn default_embedding_dim() -> usize {
    32
}
fn default_embedding_name() -> String {
    "w2v-emo".into()
}
fn default_phrase_s() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub high_risk_fraction: f64,
    /// Fraction of male subjects.
    pub gender_split: f64,
    /// Target name → shift. Feature level: feature or score column names;
    /// signal level: `f0`, `f1`, `f1_bw`, `tilt`, `noise_db`.
    #[serde(default)]
    pub effect: BTreeMap<String, Shift>,
    /// Within-subject segment noise in σ units.
    pub noise_sd: f64,
    pub seed: u64,
    pub level: Level,
    #[serde(default = "default_stories")]
    pub stories: Vec<Story>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u8,
    /// Between-subject spread within a gender (feature level), σ units. The F0
    /// family always follows its gender prior (spread 1σ).
    #[serde(default = "default_subject_sd")]
    pub subject_sd: f64,
    /// Spread of the shared per-phrase offsets (feature level), σ units.
    #[serde(default = "default_phrase_sd")]
    pub phrase_sd: f64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_embedding_name")]
    pub embedding_name: String,
    /// Phrase length at the signal level.
    #[serde(default = "default_phrase_s")]
    pub phrase_duration_s: f64,
}

/// Targets of the gender-opposed template, with the sign for men (women get the opposite).
pub const GENDER_OPPOSED: [(&str, f64); 6] = [
    ("SlopeV0-500_mean", 1.0),
    ("AlphaRatio_mean", 1.0),
    ("F0_80th", 1.0),
    ("F1Bandwidth_mean", 1.0),
    ("HammarbergIndex_mean", -1.0),
    ("arousal", 1.0),
];

impl CohortSpec {
    /// 20 subjects, 10/10 gender, 7 high-risk, no effects.
    pub fn feature_level(seed: u64) -> Self {
        Self {
            n_subjects: 20,
            high_risk_fraction: 0.35,
            gender_split: 0.5,
            effect: BTreeMap::new(),
            noise_sd: 1.0,
            seed,
            level: Level::Feature,
            stories: default_stories(),
            repetitions: default_repetitions(),
            subject_sd: default_subject_sd(),
            phrase_sd: default_phrase_sd(),
            embedding_dim: default_embedding_dim(),
            embedding_name: default_embedding_name(),
            phrase_duration_s: default_phrase_s(),
        }
    }

    /// Opposite-sign shifts of `k` σ for men and women on the template targets.
    pub fn with_gender_opposed(mut self, k: f64) -> Self {
        self.effect = GENDER_OPPOSED
            .iter()
            .map(|&(n, s)| (n.to_string(), Shift { male: s * k, female: -s * k }))
            .collect();
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_subjects < 4 {
            return bad(format!("n_subjects {} < 4", self.n_subjects));
        }
        for (n, v) in [("high_risk_fraction", self.high_risk_fraction), ("gender_split", self.gender_split)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{n} {v} outside [0, 1]"));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) || !(self.phrase_sd >= 0.0 && self.phrase_sd.is_finite())
            || !(self.subject_sd >= 0.0 && self.subject_sd.is_finite())
        {
            return bad("noise_sd, phrase_sd and subject_sd must be finite and >= 0".into());
        }
        if self.stories.is_empty() || !(1..=2).contains(&self.repetitions) {
            return bad("need at least one story and 1-2 repetitions".into());
        }
        let (n_male, n_high, _) = self.counts();
        if n_male == 0 || n_male == self.n_subjects {
            return bad("gender_split leaves one gender empty".into());
        }
        if n_high == 0 || n_high == self.n_subjects {
            return bad("high_risk_fraction leaves one class empty".into());
        }
        if let Some((k, _)) = self.effect.iter().find(|(_, s)| !(s.male.is_finite() && s.female.is_finite())) {
            return bad(format!("non-finite shift for {k}"));
        }
        match self.level {
            Level::Feature => {
                if self.embedding_dim == 0 {
                    return bad("embedding_dim must be positive".into());
                }
                let known: Vec<&str> = PROTOS.iter().map(|p| p.name).chain(SCORE_COLUMNS).collect();
                if let Some(k) = self.effect.keys().find(|k| !known.contains(&k.as_str())) {
                    return bad(format!("unknown feature-level effect target {k}"));
                }
            }
            Level::Signal => {
                if let Some(k) = self.effect.keys().find(|k| !VOICE_TARGETS.contains(&k.as_str())) {
                    return bad(format!("unknown signal-level effect target {k} (expected one of {VOICE_TARGETS:?})"));
                }
                if !(self.phrase_duration_s >= 0.5 && self.phrase_duration_s <= 10.0) {
                    return bad("phrase_duration_s must be in [0.5, 10]".into());
                }
            }
        }
        Ok(())
    }

    /// (male subjects, high-risk subjects, high-risk men); high-risk subjects are
    /// split between genders in proportion to gender size.
    fn counts(&self) -> (usize, usize, usize) {
        let n = self.n_subjects as f64;
        let n_male = (n * self.gender_split).round() as usize;
        let n_high = (n * self.high_risk_fraction).round() as usize;
        let high_male = ((n_high as f64 * n_male as f64 / n).round() as usize).min(n_male).min(n_high);
        (n_male, n_high, high_male)
    }
}

/// Subject of a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSubject {
    pub id: String,
    pub gender: Gender,
    pub high_risk: bool,
    pub risk_score: u8,
}

/// Subjects with genders and labels assigned by a seeded shuffle.
pub fn subjects(spec: &CohortSpec) -> Result<Vec<SynthSubject>, SynthError> {
    spec.validate()?;
    let (n_male, n_high, high_male) = spec.counts();
    let high_female = n_high - high_male;
    if high_female > spec.n_subjects - n_male {
        return Err(SynthError::InvalidSpec("more high-risk women than women".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "subjects"));
    let mut slots: Vec<(Gender, bool)> = Vec::with_capacity(spec.n_subjects);
    for i in 0..n_male {
        slots.push((Gender::Male, i < high_male));
    }
    for i in 0..spec.n_subjects - n_male {
        slots.push((Gender::Female, i < high_female));
    }
    slots.shuffle(&mut rng);
    let width = spec.n_subjects.to_string().len().max(2);
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(i, (gender, high_risk))| SynthSubject {
            id: format!("s{:0width$}", i + 1),
            gender,
            high_risk,
            risk_score: if high_risk { rng.random_range(5..=6) } else { rng.random_range(1..=4) },
        })
        .collect())
}

fn manifest_for(spec: &CohortSpec, subjects: &[SynthSubject], with_audio: bool) -> Result<Manifest, SynthError> {
    let mut recs = Vec::new();
    for s in subjects {
        for &story in &spec.stories {
            for rep in 1..=spec.repetitions {
                let stem = format!("{}_{}_{rep}", s.id, story.as_str());
                recs.push(RecordingMeta {
                    subject_id: s.id.clone(),
                    gender: s.gender,
                    risk_score: s.risk_score,
                    story,
                    repetition: rep,
                    audio_path: if with_audio { format!("audio/{stem}.wav") } else { String::new() },
                    alignment_path: if with_audio { format!("alignments/{stem}.json") } else { String::new() },
                });
            }
        }
    }
    Ok(Manifest::new(recs)?)
}

/// A generated feature: gender means and σ (the within-gender between-subject sd).
/// Members of the same `family` share the subject deviation, scaled by `factor`.
struct Proto {
    name: &'static str,
    male: f64,
    female: f64,
    sd_male: f64,
    sd_female: f64,
    family: Option<&'static str>,
    factor: f64,
}

const fn p(name: &'static str, male: f64, female: f64, sd: f64) -> Proto {
    Proto { name, male, female, sd_male: sd, sd_female: sd, family: None, factor: 1.0 }
}

const fn f0(name: &'static str, factor: f64) -> Proto {
    Proto { name, male: 120.0, female: 210.0, sd_male: 15.0, sd_female: 20.0, family: Some("f0"), factor }
}

const PROTOS: [Proto; 20] = [
    f0("F0_mean", 1.0),
    f0("F0_50th", 0.98),
    f0("F0_80th", 1.1),
    p("F0_stddev", 12.0, 18.0, 4.0),
    p("Loudness_mean", 0.08, 0.07, 0.02),
    p("SlopeV0-500_mean", -0.02, -0.012, 0.005),
    p("AlphaRatio_mean", -18.0, -15.0, 3.0),
    p("HammarbergIndex_mean", 25.0, 22.0, 4.0),
    p("F1_mean", 650.0, 750.0, 50.0),
    p("F1Bandwidth_mean", 90.0, 110.0, 20.0),
    p("F2_mean", 1300.0, 1600.0, 100.0),
    p("F3_mean", 2500.0, 2800.0, 150.0),
    p("MFCC1_mean", 2.0, -2.0, 5.0),
    p("MFCC2_mean", -1.0, 1.0, 5.0),
    p("MFCC3_mean", 0.0, 0.0, 5.0),
    p("MFCC4_mean", 1.0, 0.0, 5.0),
    p("Jitter_local", 0.012, 0.010, 0.003),
    p("Shimmer_local", 0.06, 0.05, 0.015),
    p("HNR_mean", 12.0, 15.0, 3.0),
    p("VoicedFraction", 0.60, 0.62, 0.05),
];

const SCORE_PROTOS: [Proto; 3] = [p("arousal", 0.5, 0.5, 0.1), p("dominance", 0.5, 0.5, 0.1), p("valence", 0.5, 0.5, 0.1)];

/// Names of the feature-level functionals, in column order.
pub fn feature_level_names() -> Vec<String> {
    PROTOS.iter().map(|p| p.name.to_string()).collect()
}

/// In-memory feature-level cohort.
#[derive(Debug, Clone)]
pub struct FeatureCohort {
    pub subjects: Vec<SynthSubject>,
    pub manifest: Manifest,
    pub gemlite: FeatureTable,
    pub embedding: FeatureTable,
    pub scores: FeatureTable,
}

struct SubjectRows {
    keys: Vec<SegmentKey>,
    features: Vec<Vec<f64>>,
    embedding: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
}

/// value = gender mean + σ·(subject deviation + shift + phrase offset + noise_sd·ε)
fn values_for(
    protos: &[Proto],
    g: Gender,
    dev: &[f64],
    shift: &[f64],
    phrase: &[f64],
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
    z_out: &mut Vec<f64>,
) -> Vec<f64> {
    protos
        .iter()
        .enumerate()
        .map(|(j, pr)| {
            let (mean, sd) = match g {
                Gender::Male => (pr.male, pr.sd_male),
                Gender::Female => (pr.female, pr.sd_female),
            };
            let eps: f64 = StandardNormal.sample(rng);
            let z = dev[j] + shift[j] + phrase[j] + noise_sd * eps;
            z_out.push(z + if g == Gender::Male { 1.0 } else { -1.0 });
            mean * pr.factor + sd * z
        })
        .collect()
}

/// Feature-level generation: functionals, a linearly mixed embedding, and
/// arousal/dominance/valence scores, all seed-deterministic.
pub fn generate_features(spec: &CohortSpec) -> Result<FeatureCohort, SynthError> {
    if spec.level != Level::Feature {
        return Err(SynthError::InvalidSpec("generate_features needs level = feature".into()));
    }
    let subjects = subjects(spec)?;
    let manifest = manifest_for(spec, &subjects, false)?;

    // content offsets shared by every speaker reading the same sentence
    let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "phrases"));
    let phrase_sd = Normal::new(0.0, spec.phrase_sd).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let phrase_off: BTreeMap<PhraseId, (Vec<f64>, Vec<f64>)> = PhraseId::all()
        .map(|ph| {
            let f = PROTOS.iter().map(|_| phrase_sd.sample(&mut prng)).collect();
            let s = SCORE_PROTOS.iter().map(|_| phrase_sd.sample(&mut prng)).collect();
            (ph, (f, s))
        })
        .collect();
    let mut erng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "embedding"));
    let scale = 1.0 / (PROTOS.len() as f64).sqrt();
    let mixing: Vec<Vec<f64>> = (0..spec.embedding_dim)
        .map(|_| PROTOS.iter().map(|_| scale * { let z: f64 = StandardNormal.sample(&mut erng); z }).collect::<Vec<f64>>())
        .collect();

    let rows = par_map(&subjects, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("subject/{}", s.id)));
        let mut family: BTreeMap<&str, f64> = BTreeMap::new();
        let dev: Vec<f64> = PROTOS
            .iter()
            .map(|pr| {
                let z: f64 = StandardNormal.sample(&mut rng);
                match pr.family {
                    Some(f) => *family.entry(f).or_insert(z),
                    None => spec.subject_sd * z,
                }
            })
            .collect();
        let score_dev: Vec<f64> = SCORE_PROTOS
            .iter()
            .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); spec.subject_sd * z })
            .collect();
        let shift_of = |name: &str| {
            if s.high_risk {
                spec.effect.get(name).map_or(0.0, |sh| sh.for_gender(s.gender))
            } else {
                0.0
            }
        };
        let shift: Vec<f64> = PROTOS.iter().map(|pr| shift_of(pr.name)).collect();
        let score_shift: Vec<f64> = SCORE_PROTOS.iter().map(|pr| shift_of(pr.name)).collect();
        let mut out = SubjectRows { keys: vec![], features: vec![], embedding: vec![], scores: vec![] };
        for rec in manifest.recordings.iter().filter(|r| r.subject_id == s.id) {
            for (ph, key) in rec.segment_keys() {
                let (f_off, s_off) = &phrase_off[&ph];
                let mut z = Vec::with_capacity(PROTOS.len());
                let feats = values_for(&PROTOS, s.gender, &dev, &shift, f_off, spec.noise_sd, &mut rng, &mut z);
                let emb: Vec<f64> = mixing
                    .iter()
                    .map(|w| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + 0.1 * e
                    })
                    .collect();
                let mut sink = Vec::new();
                let sc = values_for(&SCORE_PROTOS, s.gender, &score_dev, &score_shift, s_off, spec.noise_sd, &mut rng, &mut sink);
                out.keys.push(key);
                out.features.push(feats);
                out.embedding.push(emb);
                out.scores.push(sc);
            }
        }
        out
    });

    let mut gemlite = FeatureTable::new(FeatureSetId::Gemlite, feature_level_names());
    let mut embedding = FeatureTable::new(
        FeatureSetId::Embedding(spec.embedding_name.clone()),
        (0..spec.embedding_dim).map(|j| format!("d{j}")).collect(),
    );
    let mut scores = FeatureTable::new(FeatureSetId::Embedding("scores".into()), SCORE_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in rows {
        for (((k, f), e), s) in r.keys.into_iter().zip(r.features).zip(r.embedding).zip(r.scores) {
            gemlite.push(k.clone(), f)?;
            embedding.push(k.clone(), e)?;
            scores.push(k, s)?;
        }
    }
    Ok(FeatureCohort { subjects, manifest, gemlite, embedding, scores })
}

/// Effect targets at the signal level and their σ (male, female).
pub const VOICE_TARGETS: [&str; 5] = ["f0", "f1", "f1_bw", "tilt", "noise_db"];

fn voice_sigma(target: &str, g: Gender) -> f64 {
    match (target, g) {
        ("f0", Gender::Male) => 15.0,
        ("f0", Gender::Female) => 20.0,
        ("f1", _) => 40.0,
        ("f1_bw", _) => 15.0,
        ("tilt", _) => 0.5,
        ("noise_db", _) => 3.0,
        _ => 0.0,
    }
}

/// Gender-conditioned voice priors. The source tilt is kept inside the range where
/// the LPC formant estimate is unbiased to within a few percent.
fn draw_voice(g: Gender, rng: &mut ChaCha8Rng, shift: impl Fn(&str) -> f64) -> VoiceParams {
    let mut n = |m: f64, sd: f64| { let z: f64 = StandardNormal.sample(rng); m + sd * z };
    let (f0, f1, f2, tilt) = match g {
        Gender::Male => (n(120.0, 15.0), n(650.0, 40.0), n(1250.0, 80.0), n(6.5, 0.5)),
        Gender::Female => (n(210.0, 20.0), n(760.0, 40.0), n(1500.0, 80.0), n(4.5, 0.5)),
    };
    let bw = n(80.0, 10.0);
    let noise = n(-30.0, 2.0);
    let s = |t: &str| shift(t) * voice_sigma(t, g);
    let (tilt_lo, tilt_hi) = match g {
        Gender::Male => (5.0, 8.0),
        Gender::Female => (3.0, 6.0),
    };
    VoiceParams {
        f0_hz: (f0 + s("f0")).clamp(70.0, 320.0),
        f1_hz: (f1 + s("f1")).clamp(450.0, 950.0),
        f1_bw_hz: (bw + s("f1_bw")).clamp(40.0, 200.0),
        f2_hz: f2,
        f2_bw_hz: 100.0,
        tilt_db_per_oct: (tilt + s("tilt")).clamp(tilt_lo, tilt_hi),
        noise_db: (noise + s("noise_db")).clamp(-45.0, -15.0),
    }
}

/// Generation truth of one signal-level segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_key: String,
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub tilt_db_per_oct: f64,
}

#[derive(Debug, Clone)]
pub struct SignalRecording {
    pub meta: RecordingMeta,
    pub audio: AudioBuffer,
    pub alignment: Vec<AlignmentEntry>,
}

#[derive(Debug, Clone)]
pub struct SignalCohort {
    pub subjects: Vec<SynthSubject>,
    pub manifest: Manifest,
    pub recordings: Vec<SignalRecording>,
    pub truth: Vec<SegmentTruth>,
}

const LEAD_S: f64 = 0.25;
const GAP_S: f64 = 0.35;

/// Signal-level generation: one recording per (subject, story, repetition), each a
/// sequence of synthesised phrases separated by silence, with exact alignments.
pub fn generate_signal(spec: &CohortSpec) -> Result<SignalCohort, SynthError> {
    if spec.level != Level::Signal {
        return Err(SynthError::InvalidSpec("generate_signal needs level = signal".into()));
    }
    let subjects = subjects(spec)?;
    let manifest = manifest_for(spec, &subjects, true)?;
    let fs = PIPELINE_RATE;
    let shape = PhraseShape::default();
    let per_subject = par_map(&subjects, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("voice/{}", s.id)));
        let shift = |t: &str| if s.high_risk { spec.effect.get(t).map_or(0.0, |sh| sh.for_gender(s.gender)) } else { 0.0 };
        let voice = draw_voice(s.gender, &mut rng, shift);
        let mut recs = Vec::new();
        let mut truth = Vec::new();
        for meta in manifest.recordings.iter().filter(|r| r.subject_id == s.id) {
            let mut samples = vec![0.0; (LEAD_S * fs as f64) as usize];
            let mut alignment = Vec::new();
            for (ph, key) in meta.segment_keys() {
                // small per-phrase variation of the speaking pitch
                let mut v = voice;
                let z: f64 = StandardNormal.sample(&mut rng);
                v.f0_hz *= 1.0 + 0.03 * z;
                let phrase = synthesize_phrase(&v, &shape, spec.phrase_duration_s, fs, &mut rng);
                let start_s = samples.len() as f64 / fs as f64;
                samples.extend(phrase.samples.iter().map(|x| x * 0.6));
                let end_s = samples.len() as f64 / fs as f64;
                samples.extend(std::iter::repeat_n(0.0, (GAP_S * fs as f64) as usize));
                alignment.push(AlignmentEntry { story: ph.story, sentence_index: ph.sentence_index, start_s, end_s, text: String::new() });
                truth.push(SegmentTruth {
                    segment_key: key.0,
                    f0_hz: phrase.median_f0(),
                    f1_hz: v.f1_hz,
                    tilt_db_per_oct: v.tilt_db_per_oct,
                });
            }
            let id = format!("{}_{}_{}", meta.subject_id, meta.story.as_str(), meta.repetition);
            recs.push((meta.clone(), samples, alignment, id));
        }
        (recs, truth)
    });
    let mut recordings = Vec::new();
    let mut truth = Vec::new();
    for (recs, t) in per_subject {
        for (meta, samples, alignment, id) in recs {
            recordings.push(SignalRecording { meta, audio: AudioBuffer::new(samples, fs, id)?, alignment });
        }
        truth.extend(t);
    }
    Ok(SignalCohort { subjects, manifest, recordings, truth })
}

/// Files written by [`write_cohort`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortFiles {
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Generate the cohort described by `spec` and write it under `out`:
/// `manifest.csv`, `spec.json`, `subjects.csv`, then either `features/*.csv`
/// (feature level) or `audio/*.wav`, `alignments/*.json` and `truth.csv` (signal level).
pub fn write_cohort(spec: &CohortSpec, out: &Path) -> Result<CohortFiles, SynthError> {
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let manifest_path = out.join("manifest.csv");
    let spec_path = out.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec).expect("spec serialises") + "\n")?;
    files.push(spec_path);
    let subjects_path = out.join("subjects.csv");
    let write_subjects = |subjects: &[SynthSubject]| -> Result<(), SynthError> {
        let mut s = String::from("subject_id,gender,high_risk,risk_score\n");
        for x in subjects {
            s.push_str(&format!("{},{},{},{}\n", x.id, x.gender, x.high_risk, x.risk_score));
        }
        std::fs::write(&subjects_path, s)?;
        Ok(())
    };
    match spec.level {
        Level::Feature => {
            let c = generate_features(spec)?;
            c.manifest.write(&manifest_path)?;
            write_subjects(&c.subjects)?;
            let dir = out.join("features");
            std::fs::create_dir_all(&dir)?;
            for t in [&c.gemlite, &c.embedding] {
                let p = dir.join(t.set_id.file_name());
                t.write_csv(&p)?;
                files.push(p);
            }
            let p = dir.join("scores.csv");
            c.scores.write_csv(&p)?;
            files.push(p);
        }
        Level::Signal => {
            let c = generate_signal(spec)?;
            c.manifest.write(&manifest_path)?;
            write_subjects(&c.subjects)?;
            std::fs::create_dir_all(out.join("audio"))?;
            std::fs::create_dir_all(out.join("alignments"))?;
            for r in &c.recordings {
                let wav = out.join(&r.meta.audio_path);
                write_audio(&wav, &r.audio)?;
                let al = out.join(&r.meta.alignment_path);
                crate::segmentation::write_alignment(&al, &r.alignment)?;
                files.push(wav);
                files.push(al);
            }
            let mut s = String::from("segment_key,f0_hz,f1_hz,tilt_db_per_oct\n");
            for t in &c.truth {
                s.push_str(&format!("{},{},{},{}\n", t.segment_key, t.f0_hz, t.f1_hz, t.tilt_db_per_oct));
            }
            let p = out.join("truth.csv");
            std::fs::write(&p, s)?;
            files.push(p);
        }
    }
    files.push(subjects_path);
    Ok(CohortFiles { manifest: manifest_path, files })
}

#[cfg(feature = "wav")]
fn write_audio(path: &Path, a: &AudioBuffer) -> Result<(), SynthError> {
    Ok(crate::audio::write_wav_i16(path, a)?)
}

#[cfg(not(feature = "wav"))]
fn write_audio(_: &Path, _: &AudioBuffer) -> Result<(), SynthError> {
    Err(SynthError::InvalidSpec("signal-level output needs WAV support".into()))
}
