//! Instance-weighted soft-margin linear SVM solved by dual coordinate descent.
//!
//! Minimises `1/2 |w|^2 + C sum_i s_i max(0, 1 - y_i (w.x_i + b))`. The bias is
//! folded into `w` through a constant feature of value 1, so it is regularised
//! like any other coordinate. Coordinates are visited in index order every epoch,
//! which makes a fit a pure function of its inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::normalization::hex;
use crate::segmentation::Gender;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

/// Costs searched during tuning, descending.
pub const TUNING_GRID: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("only one class present")]
    SingleClass,
    #[error("gender weighting needs a target gender")]
    MissingTargetGender,
    #[error("invalid weighting policy: {0}")]
    InvalidPolicy(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("expected {expected} features, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    Global,
    GenderExclusive,
    GenderSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingPolicy {
    pub mode: WeightingMode,
    pub lambda: f64,
    pub target_gender: Option<Gender>,
}

impl WeightingPolicy {
    pub fn global() -> Self {
        Self { mode: WeightingMode::Global, lambda: 1.0, target_gender: None }
    }

    pub fn gender_exclusive(g: Gender) -> Self {
        Self { mode: WeightingMode::GenderExclusive, lambda: 0.0, target_gender: Some(g) }
    }

    pub fn gender_soft(g: Gender, lambda: f64) -> Self {
        Self { mode: WeightingMode::GenderSoft, lambda, target_gender: Some(g) }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SvmError::InvalidPolicy(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        match self.mode {
            WeightingMode::Global => Ok(()),
            _ if self.target_gender.is_none() => Err(SvmError::MissingTargetGender),
            WeightingMode::GenderExclusive if self.lambda != 0.0 => {
                Err(SvmError::InvalidPolicy("gender_exclusive requires lambda = 0".into()))
            }
            WeightingMode::GenderSoft if self.lambda == 0.0 => {
                Err(SvmError::InvalidPolicy("lambda = 0 is gender_exclusive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `N / (2 N_c)` per instance, so both classes carry equal total weight.
pub fn class_balance_weights(labels: &[bool]) -> Result<Vec<f64>, SvmError> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(SvmError::SingleClass);
    }
    Ok(labels
        .iter()
        .map(|&l| n / (2.0 * if l { pos } else { neg }))
        .collect())
}

/// 1 for in-group instances, `lambda` for the other gender; all 1 under global modelling.
pub fn gender_instance_weights(genders: &[Gender], policy: &WeightingPolicy) -> Result<Vec<f64>, SvmError> {
    policy.validate()?;
    if policy.mode == WeightingMode::Global {
        return Ok(vec![1.0; genders.len()]);
    }
    let target = policy.target_gender.ok_or(SvmError::MissingTargetGender)?;
    Ok(genders
        .iter()
        .map(|&g| if g == target { 1.0 } else { policy.lambda })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub fold: Option<String>,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub cost: f64,
    pub policy: WeightingPolicy,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `primal - dual < tol * (1 + |primal|)`.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_epochs: DEFAULT_MAX_EPOCHS }
    }
}

/// A fitted model with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: LinearModel,
    /// Dual objective after each epoch.
    pub dual_trace: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
}

impl Trained {
    pub fn converged(&self) -> bool {
        self.model.meta.converged
    }
}

fn dot_aug(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// Primal objective of `(w, b)` on weighted data.
pub fn primal_objective(weights: &[f64], bias: f64, x: &[&[f64]], y: &[bool], s: &[f64], cost: f64) -> f64 {
    let reg = 0.5 * (weights.iter().map(|v| v * v).sum::<f64>() + bias * bias);
    let loss: f64 = x
        .iter()
        .zip(y)
        .zip(s)
        .map(|((xi, &yi), &si)| {
            let m = weights.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>() + bias;
            let yv = if yi { 1.0 } else { -1.0 };
            si * (1.0 - yv * m).max(0.0)
        })
        .sum();
    reg + cost * loss
}

/// Train on rows `x` with labels `y` (true = high risk, +1) and instance weights `s`.
///
/// Failing to reach the tolerance is not an error: the returned model carries
/// `meta.converged = false`.
pub fn train(x: &[&[f64]], y: &[bool], s: &[f64], cost: f64, policy: WeightingPolicy, opts: &SolverOptions) -> Result<Trained, SvmError> {
    let n = x.len();
    if n == 0 || y.len() != n || s.len() != n {
        return Err(SvmError::DegenerateData(format!("{n} rows, {} labels, {} weights", y.len(), s.len())));
    }
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(SvmError::DegenerateData(format!("cost {cost}")));
    }
    let d = x[0].len();
    for xi in x {
        if xi.len() != d {
            return Err(SvmError::DimMismatch { expected: d, got: xi.len() });
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::DegenerateData("non-finite feature value".into()));
        }
    }
    if s.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(SvmError::DegenerateData("instance weights must be finite and >= 0".into()));
    }
    let has = |c: bool| y.iter().zip(s).any(|(&l, &w)| l == c && w > 0.0);
    if !has(true) || !has(false) {
        return Err(SvmError::DegenerateData("each class needs a positively weighted instance".into()));
    }

    let upper: Vec<f64> = s.iter().map(|&si| cost * si).collect();
    let yv: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = x.iter().map(|xi| xi.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut trace = Vec::new();
    let (mut primal, mut dual) = (0.0, 0.0);
    let mut converged = false;
    let mut epochs = 0;

    while epochs < opts.max_epochs {
        epochs += 1;
        for i in 0..n {
            if upper[i] == 0.0 {
                continue;
            }
            let g = yv[i] * dot_aug(&w, x[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / qii[i]).clamp(0.0, upper[i]);
            let delta = (new - alpha[i]) * yv[i];
            alpha[i] = new;
            if delta != 0.0 {
                for (wj, xj) in w[..d].iter_mut().zip(x[i].iter()) {
                    *wj += delta * xj;
                }
                w[d] += delta;
            }
        }
        let wn = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        dual = alpha.iter().sum::<f64>() - wn;
        let loss: f64 = (0..n)
            .filter(|&i| upper[i] > 0.0)
            .map(|i| upper[i] * (1.0 - yv[i] * dot_aug(&w, x[i])).max(0.0))
            .sum();
        primal = wn + loss;
        trace.push(dual);
        if primal - dual < opts.tol * (1.0 + primal.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("SVM did not converge in {epochs} epochs (C = {cost}, gap {})", primal - dual);
    }
    let bias = w.pop().unwrap_or(0.0);
    Ok(Trained {
        model: LinearModel {
            weights: w,
            bias,
            cost,
            policy,
            meta: TrainingMeta { fold: None, seed: None, epochs, converged },
        },
        dual_trace: trace,
        primal,
        dual,
    })
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.weights.len() {
            return Err(SvmError::DimMismatch { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// Labels (true = high risk; a margin of exactly 0 counts as high risk) and margins.
    pub fn predict(&self, x: &[&[f64]]) -> Result<(Vec<bool>, Vec<f64>), SvmError> {
        let margins = x.iter().map(|r| self.margin(r)).collect::<Result<Vec<_>, _>>()?;
        Ok((margins.iter().map(|&m| m >= 0.0).collect(), margins))
    }

    /// SHA-256 over the bit patterns of weights, bias and cost.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self.weights.iter().chain([&self.bias, &self.cost]) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}
