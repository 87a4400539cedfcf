//! Leave-one-subject-out evaluation with nested tuning, majority voting and
//! bootstrap confidence intervals, over the features × modelling × normalisation grid.
//!
//! Every fold is a pure function of the dataset, the plan and the cell, so folds
//! and cells can run in any order (or concurrently) without changing the report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_store::Dataset;
use crate::features::functionals::percentile_sorted;
use crate::normalization::{fit_global, fit_phrase, NormError, Normalizer};
use crate::segmentation::{Gender, PhraseId};
use crate::svm::{self, LinearModel, SolverOptions, SvmError, WeightingPolicy};
use crate::{derive_seed, par_map};

pub const INNER_FOLDS: usize = 5;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least 3 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("truth contains a single class")]
    SingleClassTruth,
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("bootstrap gave up after {attempts} draws with only {accepted} usable resamples")]
    DegenerateResampling { attempts: usize, accepted: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("fold {test_subject}: {msg}")]
    Fold { test_subject: String, msg: String },
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// Label and gender of one subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    pub high_risk: bool,
    pub gender: Gender,
}

impl SubjectInfo {
    /// Subjects of a dataset in order of first appearance.
    pub fn from_dataset(d: &Dataset) -> Vec<SubjectInfo> {
        let info = d.subject_info();
        d.subject_ids()
            .into_iter()
            .map(|id| {
                let (high_risk, gender) = info[&id];
                SubjectInfo { id, high_risk, gender }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    /// Inner tuning groups; together they partition `train_subjects`.
    pub inner: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One outer fold per subject. Inner groups are dealt round-robin over the train
/// subjects shuffled with a per-fold seed and then stably ordered by (gender, label),
/// so every group gets a near-even share of each gender/label stratum.
pub fn loso_plan(subjects: &[SubjectInfo], seed: u64) -> Result<FoldPlan, EvalError> {
    if subjects.len() < 3 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    if subjects.iter().all(|s| s.high_risk) || subjects.iter().all(|s| !s.high_risk) {
        return Err(EvalError::SingleClassTruth);
    }
    let folds = subjects
        .iter()
        .map(|test| {
            let mut train: Vec<&SubjectInfo> = subjects.iter().filter(|s| s.id != test.id).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("inner/{}", test.id)));
            train.shuffle(&mut rng);
            train.sort_by_key(|s| (s.gender, s.high_risk));
            let k = INNER_FOLDS.min(train.len());
            let mut inner = vec![Vec::new(); k];
            for (i, s) in train.iter().enumerate() {
                inner[i % k].push(s.id.clone());
            }
            Fold {
                test_subject: test.id.clone(),
                train_subjects: subjects.iter().filter(|s| s.id != test.id).map(|s| s.id.clone()).collect(),
                inner,
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

impl FoldPlan {
    /// Check the structural no-leak invariants.
    pub fn validate(&self) -> Result<(), String> {
        let mut tested = std::collections::HashSet::new();
        for f in &self.folds {
            if !tested.insert(&f.test_subject) {
                return Err(format!("{} tested twice", f.test_subject));
            }
            if f.train_subjects.contains(&f.test_subject) {
                return Err(format!("{} in its own training set", f.test_subject));
            }
            let mut inner: Vec<&String> = f.inner.iter().flatten().collect();
            inner.sort();
            let mut train: Vec<&String> = f.train_subjects.iter().collect();
            train.sort();
            if inner != train {
                return Err(format!("inner groups of fold {} do not partition its train set", f.test_subject));
            }
        }
        Ok(())
    }
}

/// Mean of the per-class recalls.
pub fn balanced_accuracy(y_true: &[bool], y_pred: &[bool]) -> Result<f64, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    let mut c = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        c[t as usize][p as usize] += 1;
    }
    ba_from_counts(&c).ok_or(EvalError::SingleClassTruth)
}

/// `c[truth][pred]`.
fn ba_from_counts(c: &[[usize; 2]; 2]) -> Option<f64> {
    let pos = c[1][0] + c[1][1];
    let neg = c[0][0] + c[0][1];
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(0.5 * (c[1][1] as f64 / pos as f64 + c[0][0] as f64 / neg as f64))
}

/// Majority label of each group; an exact tie votes high risk.
pub fn majority_vote(groups: &[Vec<bool>]) -> Result<Vec<bool>, EvalError> {
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.is_empty() {
                return Err(EvalError::EmptyGroup(format!("group {i}")));
            }
            Ok(2 * g.iter().filter(|&&p| p).count() >= g.len())
        })
        .collect()
}

/// A subject's aggregated prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectVote {
    pub subject: String,
    pub gender: Gender,
    pub truth: bool,
    pub predicted: bool,
    pub n_segments: usize,
    pub n_high: usize,
}

/// One segment-level outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRecord {
    pub subject: String,
    pub truth: bool,
    pub predicted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: DEFAULT_BOOTSTRAP, level: DEFAULT_LEVEL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervals {
    pub segment_ci: (f64, f64),
    pub subject_ci: (f64, f64),
}

/// Percentile bootstrap over segment records. Each resample is voted per subject
/// before computing the subject-level score; resamples whose truth lacks a class at
/// either level are redrawn, at most `10 * B` draws in total.
pub fn bootstrap_ci(records: &[PredRecord], cfg: &BootstrapConfig, seed: u64) -> Result<Intervals, EvalError> {
    let n = records.len();
    if n < 2 {
        return Err(EvalError::Invalid(format!("bootstrap needs at least 2 records, got {n}")));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) || cfg.resamples == 0 {
        return Err(EvalError::Invalid(format!("bootstrap config {cfg:?}")));
    }
    let mut subj_index: HashMap<&str, usize> = HashMap::new();
    let mut subj_truth = Vec::new();
    let sidx: Vec<usize> = records
        .iter()
        .map(|r| {
            *subj_index.entry(r.subject.as_str()).or_insert_with(|| {
                subj_truth.push(r.truth);
                subj_truth.len() - 1
            })
        })
        .collect();
    if records.iter().all(|r| r.truth) || records.iter().all(|r| !r.truth) {
        return Err(EvalError::SingleClassTruth);
    }

    let b = cfg.resamples;
    let max_attempts = 10 * b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seg, mut subj) = (Vec::with_capacity(b), Vec::with_capacity(b));
    let mut counts = vec![[0usize; 2]; subj_truth.len()];
    let mut attempts = 0;
    while seg.len() < b {
        if attempts == max_attempts {
            return Err(EvalError::DegenerateResampling { attempts, accepted: seg.len() });
        }
        attempts += 1;
        counts.iter_mut().for_each(|c| *c = [0, 0]);
        let mut c = [[0usize; 2]; 2];
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let r = &records[i];
            c[r.truth as usize][r.predicted as usize] += 1;
            counts[sidx[i]][r.predicted as usize] += 1;
        }
        let Some(seg_ba) = ba_from_counts(&c) else { continue };
        let mut sc = [[0usize; 2]; 2];
        for (cnt, &t) in counts.iter().zip(&subj_truth) {
            let total = cnt[0] + cnt[1];
            if total > 0 {
                sc[t as usize][(2 * cnt[1] >= total) as usize] += 1;
            }
        }
        let Some(subj_ba) = ba_from_counts(&sc) else { continue };
        seg.push(seg_ba);
        subj.push(subj_ba);
    }
    let interval = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let tail = 50.0 * (1.0 - cfg.level);
        (percentile_sorted(v, tail), percentile_sorted(v, 100.0 - tail))
    };
    Ok(Intervals { segment_ci: interval(&mut seg), subject_ci: interval(&mut subj) })
}

/// Modelling mode of a grid column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modelling {
    /// One model for everyone.
    Global,
    /// Per-gender models trained on that gender only.
    Lambda0,
    /// Per-gender models with the other gender weighted 0.1.
    Lambda01,
}

impl Modelling {
    pub const ALL: [Modelling; 3] = [Modelling::Global, Modelling::Lambda0, Modelling::Lambda01];

    pub fn as_str(self) -> &'static str {
        match self {
            Modelling::Global => "global",
            Modelling::Lambda0 => "lambda0",
            Modelling::Lambda01 => "lambda01",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn label(self) -> &'static str {
        match self {
            Modelling::Global => "Global",
            Modelling::Lambda0 => "λ = 0",
            Modelling::Lambda01 => "λ = 0.1",
        }
    }

    fn policy(self, g: Gender) -> WeightingPolicy {
        match self {
            Modelling::Global => WeightingPolicy::global(),
            Modelling::Lambda0 => WeightingPolicy::gender_exclusive(g),
            Modelling::Lambda01 => WeightingPolicy::gender_soft(g, 0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    Global,
    Phrase,
}

impl NormScheme {
    pub const ALL: [NormScheme; 2] = [NormScheme::Global, NormScheme::Phrase];

    pub fn as_str(self) -> &'static str {
        match self {
            NormScheme::Global => "global",
            NormScheme::Phrase => "phrase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    fn fit(self, rows: &[&[f64]], phrases: &[PhraseId]) -> Result<Normalizer, NormError> {
        Ok(match self {
            NormScheme::Global => Normalizer::Global(fit_global(rows)?),
            NormScheme::Phrase => Normalizer::Phrase(fit_phrase(rows, phrases)?),
        })
    }
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub features: String,
    pub modelling: Modelling,
    pub norm: NormScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub modellings: Vec<Modelling>,
    pub norms: Vec<NormScheme>,
    /// Candidate costs; ties in tuning go to the smaller cost.
    pub grid: Vec<f64>,
    pub seed: u64,
    pub bootstrap: BootstrapConfig,
    #[serde(skip, default)]
    pub solver: Option<SolverOptions>,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            modellings: Modelling::ALL.to_vec(),
            norms: NormScheme::ALL.to_vec(),
            grid: svm::TUNING_GRID.to_vec(),
            seed,
            bootstrap: BootstrapConfig::default(),
            solver: None,
        }
    }

    fn solver(&self) -> SolverOptions {
        self.solver.unwrap_or_default()
    }
}

/// Everything one outer fold produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub test_subject: String,
    pub gender: Gender,
    pub cost: f64,
    /// Inner-fold subject balanced accuracy per grid cost (NaN when undefined).
    pub inner_scores: Vec<f64>,
    pub scaler_fingerprint: String,
    pub model_fingerprint: String,
    pub model: LinearModel,
    pub predictions: Vec<bool>,
    pub fallback_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: Cell,
    pub segment_ba: f64,
    pub subject_ba: f64,
    pub segment_ci: (f64, f64),
    pub subject_ci: (f64, f64),
    pub votes: Vec<SubjectVote>,
    pub folds: Vec<FoldOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub grid: Vec<f64>,
    pub bootstrap: BootstrapConfig,
    pub feature_names: BTreeMap<String, Vec<String>>,
    pub cells: Vec<CellResult>,
}

/// Row indices of each subject.
fn subject_rows(d: &Dataset) -> HashMap<&str, Vec<usize>> {
    let mut m: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in d.subjects.iter().enumerate() {
        m.entry(s.as_str()).or_default().push(i);
    }
    m
}

/// Scaler plus model fitted on `train` rows for `policy` at `cost`, with the
/// scaled rows cached so tuning refits only the SVM.
struct Prepared {
    normalizer: Normalizer,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    s: Vec<f64>,
}

/// Fit the normaliser and instance weights. Exclusive modelling fits both on the
/// in-gender rows only; soft and global modelling use every training row.
fn prepare(d: &Dataset, train: &[usize], norm: NormScheme, policy: &WeightingPolicy) -> Result<Prepared, EvalError> {
    let rows: Vec<usize> = match (policy.mode, policy.target_gender) {
        (svm::WeightingMode::GenderExclusive, Some(g)) => train.iter().copied().filter(|&i| d.genders[i] == g).collect(),
        _ => train.to_vec(),
    };
    let raw = d.rows(&rows);
    let phrases: Vec<PhraseId> = rows.iter().map(|&i| d.phrases[i]).collect();
    let normalizer = norm.fit(&raw, &phrases)?;
    let x = normalizer.apply(&raw, &phrases)?.rows;
    let y: Vec<bool> = rows.iter().map(|&i| d.labels[i]).collect();
    let genders: Vec<Gender> = rows.iter().map(|&i| d.genders[i]).collect();
    let cb = svm::class_balance_weights(&y)?;
    let gw = svm::gender_instance_weights(&genders, policy)?;
    let s = cb.iter().zip(&gw).map(|(a, b)| a * b).collect();
    Ok(Prepared { normalizer, x, y, s })
}

impl Prepared {
    fn fit(&self, cost: f64, policy: WeightingPolicy, opts: &SolverOptions) -> Result<LinearModel, SvmError> {
        let xr: Vec<&[f64]> = self.x.iter().map(Vec::as_slice).collect();
        Ok(svm::train(&xr, &self.y, &self.s, cost, policy, opts)?.model)
    }

    fn predict(&self, model: &LinearModel, d: &Dataset, rows: &[usize]) -> Result<(Vec<bool>, usize), EvalError> {
        let phrases: Vec<PhraseId> = rows.iter().map(|&i| d.phrases[i]).collect();
        let applied = self.normalizer.apply(&d.rows(rows), &phrases)?;
        let xr: Vec<&[f64]> = applied.rows.iter().map(Vec::as_slice).collect();
        Ok((model.predict(&xr)?.0, applied.fallback_rows))
    }
}

/// Run one outer fold of one cell. Gender modelling trains only the model of the
/// test subject's gender, which is the one the subject is routed to.
pub fn run_fold(d: &Dataset, fold: &Fold, modelling: Modelling, norm: NormScheme, cfg: &ExperimentConfig) -> Result<FoldOutcome, EvalError> {
    let fold_err = |msg: String| EvalError::Fold { test_subject: fold.test_subject.clone(), msg };
    if cfg.grid.is_empty() {
        return Err(EvalError::Invalid("empty cost grid".into()));
    }
    let by_subject = subject_rows(d);
    let rows_of = |ids: &[String]| -> Vec<usize> {
        ids.iter().flat_map(|s| by_subject.get(s.as_str()).into_iter().flatten().copied()).collect()
    };
    let test_rows = rows_of(std::slice::from_ref(&fold.test_subject));
    if test_rows.is_empty() {
        return Err(fold_err("test subject has no rows".into()));
    }
    let gender = d.genders[test_rows[0]];
    let policy = modelling.policy(gender);
    let opts = cfg.solver();
    let info = d.subject_info();

    // inner tuning: out-of-fold segment predictions per grid cost, voted per subject
    let mut oof: Vec<Vec<(bool, Vec<bool>)>> = vec![Vec::new(); cfg.grid.len()];
    for (k, held) in fold.inner.iter().enumerate() {
        let eval: Vec<String> = held
            .iter()
            .filter(|s| modelling == Modelling::Global || info[s.as_str()].1 == gender)
            .cloned()
            .collect();
        if eval.is_empty() {
            continue;
        }
        let inner_train: Vec<String> = fold.inner.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, g)| g.clone()).collect();
        let prepared = match prepare(d, &rows_of(&inner_train), norm, &policy) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("fold {}: inner group {k} skipped: {e}", fold.test_subject);
                continue;
            }
        };
        for (ci, &cost) in cfg.grid.iter().enumerate() {
            let model = prepared.fit(cost, policy, &opts).map_err(|e| fold_err(e.to_string()))?;
            for s in &eval {
                let (pred, _) = prepared.predict(&model, d, &rows_of(std::slice::from_ref(s)))?;
                oof[ci].push((info[s.as_str()].0, pred));
            }
        }
    }
    let inner_scores: Vec<f64> = oof
        .iter()
        .map(|subjects| {
            let truth: Vec<bool> = subjects.iter().map(|s| s.0).collect();
            let votes = majority_vote(&subjects.iter().map(|s| s.1.clone()).collect::<Vec<_>>()).ok()?;
            balanced_accuracy(&truth, &votes).ok()
        })
        .map(|s| s.unwrap_or(f64::NAN))
        .collect();
    let mut best = 0;
    for i in 1..cfg.grid.len() {
        let (si, sb) = (inner_scores[i], inner_scores[best]);
        let better = si > sb || (sb.is_nan() && !si.is_nan()) || (si == sb && cfg.grid[i] < cfg.grid[best]) || (si.is_nan() && sb.is_nan() && cfg.grid[i] < cfg.grid[best]);
        if better {
            best = i;
        }
    }
    let cost = cfg.grid[best];

    let prepared = prepare(d, &rows_of(&fold.train_subjects), norm, &policy).map_err(|e| fold_err(e.to_string()))?;
    let mut model = prepared.fit(cost, policy, &opts).map_err(|e| fold_err(e.to_string()))?;
    model.meta.fold = Some(fold.test_subject.clone());
    let (predictions, fallback_rows) = prepared.predict(&model, d, &test_rows)?;
    Ok(FoldOutcome {
        test_subject: fold.test_subject.clone(),
        gender,
        cost,
        inner_scores,
        scaler_fingerprint: prepared.normalizer.fingerprint(),
        model_fingerprint: model.fingerprint(),
        model,
        predictions,
        fallback_rows,
    })
}

/// Segment- and subject-level scores of one cell's pooled outer predictions.
fn summarise_cell(cell: Cell, d: &Dataset, folds: Vec<FoldOutcome>, cfg: &ExperimentConfig) -> Result<CellResult, EvalError> {
    let by_subject = subject_rows(d);
    let mut records = Vec::with_capacity(d.len());
    let mut votes = Vec::with_capacity(folds.len());
    for f in &folds {
        let rows = &by_subject[f.test_subject.as_str()];
        let truth = d.labels[rows[0]];
        for &p in &f.predictions {
            records.push(PredRecord { subject: f.test_subject.clone(), truth, predicted: p });
        }
        let n_high = f.predictions.iter().filter(|&&p| p).count();
        votes.push(SubjectVote {
            subject: f.test_subject.clone(),
            gender: f.gender,
            truth,
            predicted: majority_vote(std::slice::from_ref(&f.predictions))?[0],
            n_segments: f.predictions.len(),
            n_high,
        });
    }
    let seg_truth: Vec<bool> = records.iter().map(|r| r.truth).collect();
    let seg_pred: Vec<bool> = records.iter().map(|r| r.predicted).collect();
    let segment_ba = balanced_accuracy(&seg_truth, &seg_pred)?;
    let subject_ba = balanced_accuracy(
        &votes.iter().map(|v| v.truth).collect::<Vec<_>>(),
        &votes.iter().map(|v| v.predicted).collect::<Vec<_>>(),
    )?;
    let label = format!("bootstrap/{}/{}/{}", cell.features, cell.modelling.as_str(), cell.norm.as_str());
    let ci = bootstrap_ci(&records, &cfg.bootstrap, derive_seed(cfg.seed, &label))?;
    Ok(CellResult {
        cell,
        segment_ba,
        subject_ba,
        segment_ci: ci.segment_ci,
        subject_ci: ci.subject_ci,
        votes,
        folds,
    })
}

/// Run the full grid: every feature set × modelling × normalisation cell, every
/// outer fold. Datasets must share subjects; the plan is built from the first.
pub fn run_experiment(datasets: &[(String, &Dataset)], cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    if datasets.is_empty() || cfg.modellings.is_empty() || cfg.norms.is_empty() {
        return Err(EvalError::Invalid("empty experiment grid".into()));
    }
    let subjects = SubjectInfo::from_dataset(datasets[0].1);
    for (name, d) in &datasets[1..] {
        if SubjectInfo::from_dataset(d) != subjects {
            return Err(EvalError::Invalid(format!("feature set {name} has different subjects")));
        }
    }
    let plan = loso_plan(&subjects, cfg.seed)?;
    plan.validate().map_err(EvalError::Invalid)?;

    let mut cells = Vec::new();
    for (di, (name, _)) in datasets.iter().enumerate() {
        for &norm in &cfg.norms {
            for &modelling in &cfg.modellings {
                cells.push((di, Cell { features: name.clone(), modelling, norm }));
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..plan.folds.len()).map(move |f| (c, f))).collect();
    let outcomes = par_map(&tasks, |&(c, f)| {
        let (di, cell) = &cells[c];
        run_fold(datasets[*di].1, &plan.folds[f], cell.modelling, cell.norm, cfg)
    });
    let mut per_cell: Vec<Vec<FoldOutcome>> = vec![Vec::new(); cells.len()];
    for (&(c, _), o) in tasks.iter().zip(outcomes) {
        per_cell[c].push(o?);
    }
    let inputs: Vec<(usize, Cell, Vec<FoldOutcome>)> = cells.into_iter().zip(per_cell).map(|((di, cell), f)| (di, cell, f)).collect();
    let results = par_map(&inputs, |(di, cell, folds)| summarise_cell(cell.clone(), datasets[*di].1, folds.clone(), cfg));
    Ok(EvalReport {
        seed: cfg.seed,
        grid: cfg.grid.clone(),
        bootstrap: cfg.bootstrap,
        feature_names: datasets.iter().map(|(n, d)| (n.clone(), d.feature_names.clone())).collect(),
        cells: results.into_iter().collect::<Result<_, _>>()?,
    })
}

fn pct(v: f64) -> String {
    format!("{:.0}", 100.0 * v)
}

impl EvalReport {
    pub fn cell(&self, features: &str, modelling: Modelling, norm: NormScheme) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.cell.features == features && c.cell.modelling == modelling && c.cell.norm == norm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Table with one row per (features, normalisation) and one column per modelling;
    /// cells read `segment (lo-hi) / subject (lo-hi)` in percent.
    pub fn to_markdown(&self) -> String {
        let mut modellings: Vec<Modelling> = self.cells.iter().map(|c| c.cell.modelling).collect();
        modellings.sort();
        modellings.dedup();
        let mut rows: Vec<(String, NormScheme)> = Vec::new();
        for c in &self.cells {
            let key = (c.cell.features.clone(), c.cell.norm);
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        let mut out = String::new();
        out.push_str("| Features | Normalisation |");
        for m in &modellings {
            let _ = write!(out, " {} |", m.label());
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(modellings.len()));
        out.push('\n');
        for (f, n) in &rows {
            let _ = write!(out, "| {f} | {} |", n.as_str());
            for &m in &modellings {
                match self.cell(f, m, *n) {
                    Some(c) => {
                        let _ = write!(
                            out,
                            " {} ({}-{}) / {} ({}-{}) |",
                            pct(c.segment_ba),
                            pct(c.segment_ci.0),
                            pct(c.segment_ci.1),
                            pct(c.subject_ba),
                            pct(c.subject_ci.0),
                            pct(c.subject_ci.1)
                        );
                    }
                    None => out.push_str(" – |"),
                }
            }
            out.push('\n');
        }
        out
    }
}
