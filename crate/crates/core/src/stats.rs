//! Feature ranking from fold models, redundancy pruning, Mann-Whitney U tests with
//! common-language effect sizes, and per-group distribution summaries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{EvalReport, Modelling, NormScheme};
use crate::feature_store::Dataset;
use crate::features::functionals::percentile_sorted;
use crate::par_map;
use crate::segmentation::Gender;
use crate::svm::LinearModel;

/// Largest `n_low * n_high` for which the exact null distribution is used.
pub const EXACT_MAX_PAIRS: usize = 10_000;
pub const DEFAULT_RHO_MAX: f64 = 0.85;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("models disagree on the feature space: {0}")]
    HeterogeneousModels(String),
    #[error("empty group: {0}")]
    EmptyGroup(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub mean_abs_coef: f64,
    pub rank: usize,
}

/// Mean |coefficient| over the fold models, descending; equal means sorted by name.
pub fn rank_features(models: &[LinearModel], names: &[String]) -> Result<Vec<RankedFeature>, StatsError> {
    if models.is_empty() {
        return Err(StatsError::HeterogeneousModels("no models".into()));
    }
    if let Some(m) = models.iter().find(|m| m.weights.len() != names.len()) {
        return Err(StatsError::HeterogeneousModels(format!("{} names but a model with {} weights", names.len(), m.weights.len())));
    }
    let k = models.len() as f64;
    let mut out: Vec<RankedFeature> = names
        .iter()
        .enumerate()
        .map(|(j, n)| RankedFeature {
            name: n.clone(),
            // summed in sorted order so the result does not depend on fold order
            mean_abs_coef: {
                let mut v: Vec<f64> = models.iter().map(|m| m.weights[j].abs()).collect();
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / k
            },
            rank: 0,
        })
        .collect();
    out.sort_by(|a, b| b.mean_abs_coef.total_cmp(&a.mean_abs_coef).then_with(|| a.name.cmp(&b.name)));
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(out)
}

/// Ranks starting at 1, ties given their mean rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (midranks(a), midranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Walk the ranking top-down, dropping any feature whose |Spearman rho| with an
/// already kept feature exceeds `rho_max`; return the first `top_k` survivors.
pub fn prune_redundant(ranked: &[RankedFeature], names: &[String], rows: &[Vec<f64>], rho_max: f64, top_k: usize) -> Result<Vec<RankedFeature>, StatsError> {
    if ranked.is_empty() {
        return Err(StatsError::Invalid("nothing to prune".into()));
    }
    let column = |name: &str| -> Result<Vec<f64>, StatsError> {
        let j = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| StatsError::Invalid(format!("feature {name} not in matrix")))?;
        Ok(rows.iter().map(|r| r[j]).collect())
    };
    let mut kept: Vec<(RankedFeature, Vec<f64>)> = Vec::new();
    for r in ranked {
        if kept.len() == top_k {
            break;
        }
        let col = column(&r.name)?;
        match kept.iter().find(|(_, c)| spearman(&col, c).abs() > rho_max) {
            Some((k, _)) => log::info!("dropping {} (redundant with {})", r.name, k.name),
            None => kept.push((r.clone(), col)),
        }
    }
    Ok(kept.into_iter().map(|(r, _)| r).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U of the low-risk group: pairs where the low value is larger, ties counting 1/2.
    pub u_statistic: f64,
    pub p_value: f64,
    pub cles: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub method: UMethod,
}

fn check_groups(low: &[f64], high: &[f64]) -> Result<(), StatsError> {
    if low.is_empty() {
        return Err(StatsError::EmptyGroup("low".into()));
    }
    if high.is_empty() {
        return Err(StatsError::EmptyGroup("high".into()));
    }
    Ok(())
}

/// Share of (low, high) pairs where the high value is larger; ties count 1/2.
pub fn cles(low: &[f64], high: &[f64]) -> Result<f64, StatsError> {
    check_groups(low, high)?;
    let mut s = 0.0;
    for &h in high {
        for &l in low {
            s += if h > l {
                1.0
            } else if h == l {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(s / (low.len() * high.len()) as f64)
}

/// Number of arrangements giving each U in `0..=m*n`, for samples of size m and n
/// without ties. Built with `c(m, n) = c(m, n-1) + q^n c(m-1, n)` over a table.
pub fn u_null_counts(m: usize, n: usize) -> Vec<f64> {
    // table[i] holds the count polynomial for sizes (i, nn); with nn = 0 only U = 0 exists
    let mut table: Vec<Vec<f64>> = vec![vec![1.0]; m + 1];
    for nn in 1..=n {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        next.push(vec![1.0]);
        for i in 1..=m {
            let mut poly = vec![0.0; i * nn + 1];
            for (u, &c) in table[i].iter().enumerate() {
                poly[u] += c;
            }
            for (u, &c) in next[i - 1].iter().enumerate() {
                poly[u + nn] += c;
            }
            next.push(poly);
        }
        table = next;
    }
    table.swap_remove(m)
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > 1 {
            out.push(j - i);
        }
        i = j;
    }
    out
}

fn u_low(low: &[f64], high: &[f64]) -> f64 {
    let mut pooled = low.to_vec();
    pooled.extend_from_slice(high);
    let r = midranks(&pooled);
    let n1 = low.len() as f64;
    r[..low.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0
}

/// Two-sided Mann-Whitney U test: exact null distribution when there are no ties and
/// `n_low * n_high <= 10000`, otherwise the normal approximation with tie and
/// continuity corrections.
pub fn mann_whitney_u(low: &[f64], high: &[f64]) -> Result<UTestResult, StatsError> {
    check_groups(low, high)?;
    let mut pooled = low.to_vec();
    pooled.extend_from_slice(high);
    let ties = tie_groups(&pooled);
    if ties.is_empty() && low.len() * high.len() <= EXACT_MAX_PAIRS {
        mwu_exact(low, high)
    } else {
        mwu_normal(low, high)
    }
}

fn mwu_exact(low: &[f64], high: &[f64]) -> Result<UTestResult, StatsError> {
    let (n1, n2) = (low.len(), high.len());
    let u = u_low(low, high);
    let counts = u_null_counts(n1, n2);
    let total: f64 = counts.iter().sum();
    let u_min = u.min((n1 * n2) as f64 - u).round() as usize;
    let tail: f64 = counts[..=u_min].iter().sum::<f64>() / total;
    Ok(UTestResult {
        u_statistic: u,
        p_value: (2.0 * tail).min(1.0),
        cles: cles(low, high)?,
        n_low: n1,
        n_high: n2,
        method: UMethod::Exact,
    })
}

/// Normal approximation regardless of sample size.
pub fn mwu_normal(low: &[f64], high: &[f64]) -> Result<UTestResult, StatsError> {
    check_groups(low, high)?;
    let (n1, n2) = (low.len() as f64, high.len() as f64);
    let mut pooled = low.to_vec();
    pooled.extend_from_slice(high);
    let n = n1 + n2;
    let tie_term: f64 = tie_groups(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let u = u_low(low, high);
    let mu = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(UTestResult {
        u_statistic: u,
        p_value: p,
        cles: cles(low, high)?,
        n_low: low.len(),
        n_high: high.len(),
        method: UMethod::NormalApprox,
    })
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub n: usize,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyGroup("no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: v[0],
        q1: percentile_sorted(&v, 25.0),
        median: percentile_sorted(&v, 50.0),
        q3: percentile_sorted(&v, 75.0),
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
        n: v.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub high_risk: bool,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    #[serde(flatten)]
    pub key: GroupKey,
    #[serde(flatten)]
    pub stats: BoxStats,
}

/// Summaries per group after z-normalising all values jointly (pooled mean and
/// population std over every group).
pub fn group_summary(groups: &[(GroupKey, Vec<f64>)]) -> Result<Vec<GroupSummary>, StatsError> {
    if let Some((k, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(StatsError::EmptyGroup(format!("{k:?}")));
    }
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    if all.is_empty() {
        return Err(StatsError::EmptyGroup("no groups".into()));
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = (all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    groups
        .iter()
        .map(|(k, v)| {
            let z: Vec<f64> = v.iter().map(|x| (x - mean) / sd).collect();
            Ok(GroupSummary { key: *k, stats: box_stats(&z)? })
        })
        .collect()
}

/// Unit of observation for the U tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestLevel {
    /// Every segment is one observation.
    Segment,
    /// One observation per subject: the mean over its segments.
    Subject,
}

impl TestLevel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "segment" => Some(TestLevel::Segment),
            "subject" => Some(TestLevel::Subject),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub features: String,
    pub modelling: Modelling,
    pub norm: NormScheme,
    pub rho_max: f64,
    pub top_k: usize,
    pub test_level: TestLevel,
}

impl AnalysisConfig {
    pub fn new(features: impl Into<String>) -> Self {
        Self {
            features: features.into(),
            modelling: Modelling::Global,
            norm: NormScheme::Global,
            rho_max: DEFAULT_RHO_MAX,
            top_k: DEFAULT_TOP_K,
            test_level: TestLevel::Subject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub name: String,
    pub rank: usize,
    pub mean_abs_coef: f64,
    pub test: UTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub ranked: Vec<RankedFeature>,
    pub selected: Vec<FeatureTest>,
    /// Per score dimension, one summary per (risk, gender) group.
    pub group_summaries: BTreeMap<String, Vec<GroupSummary>>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serialises") + "\n"
    }
}

/// Low- and high-risk observations of column `j` at the requested level.
pub fn split_by_risk(d: &Dataset, j: usize, level: TestLevel) -> (Vec<f64>, Vec<f64>) {
    let (mut low, mut high) = (Vec::new(), Vec::new());
    match level {
        TestLevel::Segment => {
            for (r, &l) in d.x.iter().zip(&d.labels) {
                if l { high.push(r[j]) } else { low.push(r[j]) }
            }
        }
        TestLevel::Subject => {
            let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
            for (r, s) in d.x.iter().zip(&d.subjects) {
                let e = acc.entry(s.as_str()).or_default();
                e.0 += r[j];
                e.1 += 1;
            }
            let info = d.subject_info();
            for s in d.subject_ids() {
                let (sum, n) = acc[s.as_str()];
                if info[&s].0 { high.push(sum / n as f64) } else { low.push(sum / n as f64) }
            }
        }
    }
    (low, high)
}

/// Segment-level group summaries of every column of `scores`.
pub fn score_summaries(scores: &Dataset) -> Result<BTreeMap<String, Vec<GroupSummary>>, StatsError> {
    let mut out = BTreeMap::new();
    for (j, name) in scores.feature_names.iter().enumerate() {
        let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
        for (i, r) in scores.x.iter().enumerate() {
            groups
                .entry(GroupKey { high_risk: scores.labels[i], gender: scores.genders[i] })
                .or_default()
                .push(r[j]);
        }
        let groups: Vec<(GroupKey, Vec<f64>)> = groups.into_iter().collect();
        out.insert(name.clone(), group_summary(&groups)?);
    }
    Ok(out)
}

/// Rank the features of the configured cell's fold models, prune redundant ones,
/// test the survivors, and summarise the emotion scores if given.
pub fn analyze(report: &EvalReport, dataset: &Dataset, scores: Option<&Dataset>, cfg: &AnalysisConfig) -> Result<AnalysisReport, StatsError> {
    let cell = report.cell(&cfg.features, cfg.modelling, cfg.norm).ok_or_else(|| {
        StatsError::Invalid(format!("report has no cell {} / {} / {}", cfg.features, cfg.modelling.as_str(), cfg.norm.as_str()))
    })?;
    let models: Vec<LinearModel> = cell.folds.iter().map(|f| f.model.clone()).collect();
    let ranked = rank_features(&models, &dataset.feature_names)?;
    let pruned = prune_redundant(&ranked, &dataset.feature_names, &dataset.x, cfg.rho_max, cfg.top_k)?;
    let tests = par_map(&pruned, |r| {
        let j = dataset.feature_names.iter().position(|n| *n == r.name).expect("ranked from dataset names");
        let (low, high) = split_by_risk(dataset, j, cfg.test_level);
        mann_whitney_u(&low, &high).map(|test| FeatureTest {
            name: r.name.clone(),
            rank: r.rank,
            mean_abs_coef: r.mean_abs_coef,
            test,
        })
    });
    Ok(AnalysisReport {
        config: cfg.clone(),
        ranked,
        selected: tests.into_iter().collect::<Result<_, _>>()?,
        group_summaries: match scores {
            Some(s) => score_summaries(s)?,
            None => BTreeMap::new(),
        },
    })
}
