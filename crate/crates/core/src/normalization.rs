//! Feature standardisation: one global scaler, or one scaler per phrase.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::segmentation::PhraseId;

/// Standard deviations below this are replaced by 1.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum NormError {
    #[error("need at least 2 rows to fit a scaler, got {0}")]
    TooFewRows(usize),
    #[error("row has {got} features, scaler expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {phrases} phrase ids")]
    PhraseCount { rows: usize, phrases: usize },
}

/// Per-feature mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>, NormError> {
        if x.len() != self.dim() {
            return Err(NormError::DimMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update((self.dim() as u64).to_le_bytes());
        for v in self.means.iter().chain(&self.stds) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
}

/// Fit mean and population std per column.
pub fn fit_global(rows: &[&[f64]]) -> Result<Scaler, NormError> {
    if rows.len() < 2 {
        return Err(NormError::TooFewRows(rows.len()));
    }
    let d = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(NormError::DimMismatch { expected: d, got: r.len() });
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in stds.iter_mut().zip(r.iter()).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / n).sqrt();
        if *s < STD_FLOOR {
            *s = 1.0;
        }
    }
    Ok(Scaler { means, stds })
}

/// Per-phrase scalers with a global fallback for phrases seen fewer than twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseScalerMap {
    #[serde(with = "phrase_map_serde")]
    pub scalers: BTreeMap<PhraseId, Scaler>,
    pub fallback: Scaler,
}

mod phrase_map_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        phrase: PhraseId,
        scaler: Scaler,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<PhraseId, Scaler>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = m.iter().map(|(p, sc)| Entry { phrase: *p, scaler: sc.clone() }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<PhraseId, Scaler>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.phrase, e.scaler)).collect())
    }
}

pub fn fit_phrase(rows: &[&[f64]], phrases: &[PhraseId]) -> Result<PhraseScalerMap, NormError> {
    if rows.len() != phrases.len() {
        return Err(NormError::PhraseCount { rows: rows.len(), phrases: phrases.len() });
    }
    let fallback = fit_global(rows)?;
    let mut groups: BTreeMap<PhraseId, Vec<&[f64]>> = BTreeMap::new();
    for (r, p) in rows.iter().zip(phrases) {
        groups.entry(*p).or_default().push(r);
    }
    let mut scalers = BTreeMap::new();
    for (p, g) in groups {
        if g.len() >= 2 {
            scalers.insert(p, fit_global(&g)?);
        }
    }
    Ok(PhraseScalerMap { scalers, fallback })
}

/// Either normalisation scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Normalizer {
    Global(Scaler),
    Phrase(PhraseScalerMap),
}

/// Normalised rows plus the number of rows served by the phrase fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub rows: Vec<Vec<f64>>,
    pub fallback_rows: usize,
}

impl Normalizer {
    /// Apply to `rows`; `phrases` is consulted only by the phrase scheme.
    pub fn apply(&self, rows: &[&[f64]], phrases: &[PhraseId]) -> Result<Applied, NormError> {
        match self {
            Normalizer::Global(s) => Ok(Applied {
                rows: rows.iter().map(|r| s.transform_row(r)).collect::<Result<_, _>>()?,
                fallback_rows: 0,
            }),
            Normalizer::Phrase(m) => {
                if rows.len() != phrases.len() {
                    return Err(NormError::PhraseCount { rows: rows.len(), phrases: phrases.len() });
                }
                let mut fallback_rows = 0;
                let out = rows
                    .iter()
                    .zip(phrases)
                    .map(|(r, p)| {
                        let s = m.scalers.get(p).unwrap_or_else(|| {
                            fallback_rows += 1;
                            log::debug!("phrase {p} not fitted; using global fallback scaler");
                            &m.fallback
                        });
                        s.transform_row(r)
                    })
                    .collect::<Result<_, _>>()?;
                Ok(Applied { rows: out, fallback_rows })
            }
        }
    }

    /// SHA-256 over the exact bit patterns of every statistic.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Normalizer::Global(s) => {
                h.update(b"global");
                s.hash_into(&mut h);
            }
            Normalizer::Phrase(m) => {
                h.update(b"phrase");
                for (p, s) in &m.scalers {
                    h.update(p.to_string().as_bytes());
                    s.hash_into(&mut h);
                }
                h.update(b"fallback");
                m.fallback.hash_into(&mut h);
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::Story;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    fn ph(i: usize) -> PhraseId {
        PhraseId::new(Story::Story1, i).unwrap()
    }

    #[test]
    fn population_std() {
        let rows = vec![vec![1.0], vec![3.0]];
        let s = fit_global(&refs(&rows)).unwrap();
        assert_eq!(s.means, vec![2.0]);
        assert_eq!(s.stds, vec![1.0]);
    }

    #[test]
    fn constant_column_floored() {
        let rows = vec![vec![5.0], vec![5.0], vec![5.0]];
        let s = fit_global(&refs(&rows)).unwrap();
        assert_eq!(s.stds, vec![1.0]);
        assert_eq!(s.transform_row(&[5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_feature_hand_computed() {
        let rows = vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![6.0, 0.0]];
        let s = fit_global(&refs(&rows)).unwrap();
        // column 0: mean 3, squared deviations 4+1+9 -> var 14/3
        assert!((s.means[0] - 3.0).abs() < 1e-15);
        assert!((s.stds[0] - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // column 1: mean 10, deviations 0+100+100 -> var 200/3
        assert!((s.means[1] - 10.0).abs() < 1e-15);
        assert!((s.stds[1] - (200.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn too_few_rows_and_dims() {
        assert_eq!(fit_global(&refs(&[vec![1.0]])), Err(NormError::TooFewRows(1)));
        let s = fit_global(&refs(&[vec![1.0], vec![2.0]])).unwrap();
        assert_eq!(s.transform_row(&[1.0, 2.0]), Err(NormError::DimMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn phrase_map_with_fallback() {
        let mut rows = Vec::new();
        let mut phrases = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64, 2.0 * i as f64]);
            phrases.push(ph(0));
            rows.push(vec![100.0 + i as f64 * 3.0, -(i as f64)]);
            phrases.push(ph(1));
        }
        rows.push(vec![7.0, 7.0]);
        phrases.push(ph(2));
        let m = fit_phrase(&refs(&rows), &phrases).unwrap();
        assert_eq!(m.scalers.len(), 2);
        assert!(!m.scalers.contains_key(&ph(2)));
        let n = Normalizer::Phrase(m);
        let out = n.apply(&refs(&rows), &phrases).unwrap();
        assert_eq!(out.fallback_rows, 1);
        for p in [ph(0), ph(1)] {
            for j in 0..2 {
                let col: Vec<f64> = out.rows.iter().zip(&phrases).filter(|(_, q)| **q == p).map(|(r, _)| r[j]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
                assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn global_apply_centres_training_set() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin() * 3.0 + 1.0, i as f64 * 0.1]).collect();
        let n = Normalizer::Global(fit_global(&refs(&rows)).unwrap());
        let out = n.apply(&refs(&rows), &[]).unwrap();
        for j in 0..2 {
            let m: f64 = out.rows.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn json_round_trip_keeps_fingerprint() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![0.5, 1.0]];
        let phrases = vec![ph(0), ph(0), ph(3)];
        let n = Normalizer::Phrase(fit_phrase(&refs(&rows), &phrases).unwrap());
        let json = serde_json::to_string(&n).unwrap();
        let back: Normalizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, n);
        assert_eq!(back.fingerprint(), n.fingerprint());
        assert_eq!(n.fingerprint().len(), 64);
    }
}
