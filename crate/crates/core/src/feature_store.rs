//! Flat-file feature tables (functionals, external embeddings, emotion scores)
//! and their join with the manifest into a design matrix.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::features::{FeatureSetId, FeatureVector};
use crate::segmentation::{Gender, Manifest, PhraseId, SegmentKey};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: row {row} has {got} values, expected {expected}")]
    DimMismatch {
        path: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: duplicate segment key {key}")]
    DuplicateKey { path: String, key: String },
    #[error("{path}: non-finite value for {key} column {column}")]
    NonFiniteValue {
        path: String,
        key: String,
        column: String,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{} segment(s) missing from {source_id}: {}", keys.len(), keys.join(", "))]
    MissingSegment { source_id: String, keys: Vec<String> },
    #[error("feature table has no columns")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows of one feature source keyed by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub set_id: FeatureSetId,
    pub names: Vec<String>,
    pub keys: Vec<SegmentKey>,
    pub rows: Vec<Vec<f64>>,
    index: HashMap<SegmentKey, usize>,
}

impl FeatureTable {
    pub fn new(set_id: FeatureSetId, names: Vec<String>) -> Self {
        Self {
            set_id,
            names,
            keys: Vec::new(),
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Append a row; rejects duplicates, wrong widths and non-finite values.
    pub fn push(&mut self, key: SegmentKey, row: Vec<f64>) -> Result<(), StoreError> {
        let path = self.set_id.to_string();
        if row.len() != self.dim() {
            return Err(StoreError::DimMismatch { path, row: self.rows.len() + 1, expected: self.dim(), got: row.len() });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFiniteValue { path, key: key.0, column: self.names[j].clone() });
        }
        if self.index.contains_key(&key) {
            return Err(StoreError::DuplicateKey { path, key: key.0 });
        }
        self.index.insert(key.clone(), self.rows.len());
        self.keys.push(key);
        self.rows.push(row);
        Ok(())
    }

    pub fn push_vector(&mut self, key: SegmentKey, v: FeatureVector) -> Result<(), StoreError> {
        if v.names != self.names {
            return Err(StoreError::Parse { path: self.set_id.to_string(), msg: format!("{key}: feature names differ from table") });
        }
        self.push(key, v.values)
    }

    pub fn get(&self, key: &SegmentKey) -> Option<&[f64]> {
        self.index.get(key).map(|&i| self.rows[i].as_slice())
    }

    /// Read `segment_key,<names...>`.
    pub fn read_csv(path: impl AsRef<Path>, set_id: FeatureSetId, expected_dim: Option<usize>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let p = path.display().to_string();
        let parse_err = |msg: String| StoreError::Parse { path: p.clone(), msg };
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| parse_err(e.to_string()))?;
        let header = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        if header.get(0) != Some("segment_key") {
            return Err(parse_err("first column must be segment_key".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(StoreError::Empty);
        }
        if let Some(d) = expected_dim {
            if names.len() != d {
                return Err(StoreError::DimMismatch { path: p, row: 0, expected: d, got: names.len() });
            }
        }
        let mut t = Self::new(set_id, names);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let row = i + 1;
            if rec.len() != t.dim() + 1 {
                return Err(StoreError::DimMismatch { path: p, row, expected: t.dim(), got: rec.len().saturating_sub(1) });
            }
            let key = SegmentKey(rec[0].to_string());
            let mut vals = Vec::with_capacity(t.dim());
            for (j, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("row {row}: cannot parse '{field}' as a number")))?;
                if !v.is_finite() {
                    return Err(StoreError::NonFiniteValue { path: p, key: key.0, column: t.names[j].clone() });
                }
                vals.push(v);
            }
            t.push(key, vals).map_err(|e| match e {
                StoreError::DuplicateKey { key, .. } => StoreError::DuplicateKey { path: p.clone(), key },
                other => other,
            })?;
        }
        Ok(t)
    }

    /// Write with the shortest round-tripping decimal form of every value.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let mut out = String::with_capacity(self.rows.len() * self.dim() * 12);
        out.push_str("segment_key");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (k, r) in self.keys.iter().zip(&self.rows) {
            out.push_str(k.as_str());
            for v in r {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Load an embedding CSV `segment_key,d0..d{D-1}`.
pub fn load_embeddings(path: impl AsRef<Path>, set_name: &str, expected_dim: Option<usize>) -> Result<FeatureTable, StoreError> {
    FeatureTable::read_csv(path, FeatureSetId::Embedding(set_name.to_string()), expected_dim)
}

pub const SCORE_COLUMNS: [&str; 3] = ["arousal", "dominance", "valence"];

/// Load dimensional emotion scores `segment_key,arousal,dominance,valence`.
pub fn load_scores(path: impl AsRef<Path>) -> Result<FeatureTable, StoreError> {
    let path = path.as_ref();
    let t = FeatureTable::read_csv(path, FeatureSetId::Embedding("scores".into()), Some(3))?;
    if t.names != SCORE_COLUMNS {
        return Err(StoreError::Parse {
            path: path.display().to_string(),
            msg: format!("expected columns {SCORE_COLUMNS:?}, got {:?}", t.names),
        });
    }
    Ok(t)
}

/// Design matrix with per-row metadata, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub keys: Vec<SegmentKey>,
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub subjects: Vec<String>,
    pub genders: Vec<Gender>,
    pub phrases: Vec<PhraseId>,
    pub repetitions: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Distinct subjects in order of first appearance.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.subjects.iter().filter(|s| seen.insert(s.as_str())).cloned().collect()
    }

    /// Label and gender of each subject.
    pub fn subject_info(&self) -> HashMap<String, (bool, Gender)> {
        self.subjects
            .iter()
            .zip(self.labels.iter().zip(&self.genders))
            .map(|(s, (&l, &g))| (s.clone(), (l, g)))
            .collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<&[f64]> {
        idx.iter().map(|&i| self.x[i].as_slice()).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.feature_names.iter().position(|n| n == name)?;
        Some(self.x.iter().map(|r| r[j]).collect())
    }

    /// Same rows restricted to the given columns.
    pub fn select_columns(&self, names: &[String]) -> Option<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.feature_names.iter().position(|m| m == n))
            .collect::<Option<_>>()?;
        let mut d = self.clone();
        d.feature_names = names.to_vec();
        d.x = self.x.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
        Some(d)
    }
}

/// Join the manifest with one or more feature sources. Columns are concatenated in
/// source order; with several sources the names are prefixed `<set>:`.
pub fn join_dataset(manifest: &Manifest, sources: &[&FeatureTable]) -> Result<Dataset, StoreError> {
    if sources.is_empty() {
        return Err(StoreError::Empty);
    }
    let prefix = sources.len() > 1;
    let feature_names = sources
        .iter()
        .flat_map(|t| {
            t.names
                .iter()
                .map(move |n| if prefix { format!("{}:{n}", t.set_id) } else { n.clone() })
        })
        .collect();
    let n = manifest.segment_count();
    let mut d = Dataset {
        feature_names,
        keys: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        subjects: Vec::with_capacity(n),
        genders: Vec::with_capacity(n),
        phrases: Vec::with_capacity(n),
        repetitions: Vec::with_capacity(n),
    };
    let mut missing: Vec<Vec<String>> = vec![Vec::new(); sources.len()];
    for rec in &manifest.recordings {
        for (phrase, key) in rec.segment_keys() {
            let mut row = Vec::with_capacity(d.feature_names.len());
            for (s, t) in sources.iter().enumerate() {
                match t.get(&key) {
                    Some(v) => row.extend_from_slice(v),
                    None => missing[s].push(key.0.clone()),
                }
            }
            d.keys.push(key);
            d.x.push(row);
            d.labels.push(rec.risk_label());
            d.subjects.push(rec.subject_id.clone());
            d.genders.push(rec.gender);
            d.phrases.push(phrase);
            d.repetitions.push(rec.repetition);
        }
    }
    if let Some((s, keys)) = missing.into_iter().enumerate().find(|(_, k)| !k.is_empty()) {
        return Err(StoreError::MissingSegment { source_id: sources[s].set_id.to_string(), keys });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{RecordingMeta, Story};
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn manifest() -> Manifest {
        let rec = |s: &str, g, score, story| RecordingMeta {
            subject_id: s.into(),
            gender: g,
            risk_score: score,
            story,
            repetition: 1,
            audio_path: String::new(),
            alignment_path: String::new(),
        };
        Manifest::new(vec![rec("a", Gender::Female, 6, Story::Story1), rec("b", Gender::Male, 2, Story::Story1)]).unwrap()
    }

    fn table(m: &Manifest, set: FeatureSetId, dim: usize, offset: f64) -> FeatureTable {
        let mut t = FeatureTable::new(set, (0..dim).map(|j| format!("d{j}")).collect());
        for (i, r) in m.recordings.iter().enumerate() {
            for (p, k) in r.segment_keys() {
                t.push(k, (0..dim).map(|j| offset + (i * 100 + p.sentence_index * 10 + j) as f64).collect()).unwrap();
            }
        }
        t
    }

    #[test]
    fn loads_embeddings() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "segment_key,d0,d1,d2,d3\na/story1/0/1,1,2,3,4\na/story1/1/1,0.5,0,0,-1\nb/story1/0/1,1e-3,2,3,4\n");
        let t = load_embeddings(&p, "w2v-emo", Some(4)).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get(&SegmentKey("a/story1/1/1".into())), Some(&[0.5, 0.0, 0.0, -1.0][..]));
        assert!(matches!(load_embeddings(&p, "x", Some(5)), Err(StoreError::DimMismatch { .. })));
    }

    #[test]
    fn rejects_ragged_rows_nan_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "segment_key,d0,d1\nk1,1,2\nk2,1\n");
        assert!(matches!(load_embeddings(&p, "x", None), Err(StoreError::DimMismatch { row: 2, .. })));
        let p = write(&dir, "n.csv", "segment_key,d0,d1\nk1,1,NaN\n");
        assert!(matches!(load_embeddings(&p, "x", None), Err(StoreError::NonFiniteValue { .. })));
        let p = write(&dir, "d.csv", "segment_key,d0\nk1,1\nk1,2\n");
        assert!(matches!(load_embeddings(&p, "x", None), Err(StoreError::DuplicateKey { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = FeatureTable::new(FeatureSetId::Gemlite, vec!["F0_mean".into(), "x".into()]);
        t.push(SegmentKey("s/story2/3/2".into()), vec![0.1 + 0.2, -1.0 / 3.0]).unwrap();
        t.push(SegmentKey("s/story2/4/2".into()), vec![1e-300, 123456789.125]).unwrap();
        let p = dir.path().join("g.csv");
        t.write_csv(&p).unwrap();
        let back = FeatureTable::read_csv(&p, FeatureSetId::Gemlite, None).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn join_in_manifest_order() {
        let m = manifest();
        let g = table(&m, FeatureSetId::Gemlite, 2, 0.0);
        let d = join_dataset(&m, &[&g]).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.keys[0].0, "a/story1/0/1");
        assert_eq!(d.keys[6].0, "b/story1/0/1");
        assert!(d.labels[0]);
        assert_eq!(d.labels[6], false);
        assert_eq!(d.x[7], vec![110.0, 111.0]);
        assert_eq!(d.subject_ids(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn join_two_sources_concatenates() {
        let m = manifest();
        let g = table(&m, FeatureSetId::Gemlite, 2, 0.0);
        let e = table(&m, FeatureSetId::Embedding("w2v".into()), 3, 0.5);
        let d = join_dataset(&m, &[&g, &e]).unwrap();
        assert_eq!(d.dim(), 5);
        assert_eq!(d.feature_names[0], "gemlite:d0");
        assert_eq!(d.feature_names[2], "embedding:w2v:d0");
        assert_eq!(d.x[1], vec![10.0, 11.0, 10.5, 11.5, 12.5]);
    }

    #[test]
    fn missing_segment_is_named() {
        let m = manifest();
        let mut g = table(&m, FeatureSetId::Gemlite, 1, 0.0);
        let drop = g.keys.iter().position(|k| k.0 == "b/story1/3/1").unwrap();
        let mut t = FeatureTable::new(FeatureSetId::Gemlite, g.names.clone());
        for (i, (k, r)) in g.keys.drain(..).zip(g.rows.drain(..)).enumerate() {
            if i != drop {
                t.push(k, r).unwrap();
            }
        }
        match join_dataset(&m, &[&t]) {
            Err(StoreError::MissingSegment { keys, .. }) => assert_eq!(keys, vec!["b/story1/3/1".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
