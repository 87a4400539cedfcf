//! JSON config file, merged under command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use voicerisk::evaluation::{Modelling, NormScheme};
use voicerisk::features::FeatureSetId;
use voicerisk::stats::TestLevel;

use crate::CliError;

/// Every key is optional; relative paths are resolved against the config file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub analysis_report: Option<PathBuf>,
    pub features: Option<String>,
    pub modelling: Option<String>,
    pub norm: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub bootstrap: Option<usize>,
    pub ci_level: Option<f64>,
    pub target_rms_db: Option<f64>,
    pub fallback_vad: Option<bool>,
    #[serde(default)]
    pub analysis: AnalysisFile,
}

/// Options of `analyze`, which looks at a single cell.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisFile {
    pub features: Option<String>,
    pub modelling: Option<String>,
    pub norm: Option<String>,
    pub scores: Option<PathBuf>,
    pub test_level: Option<String>,
    pub top_k: Option<usize>,
    pub rho_max: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let mut c: FileConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut c.manifest,
            &mut c.features_dir,
            &mut c.out,
            &mut c.spec,
            &mut c.report,
            &mut c.analysis_report,
            &mut c.analysis.scores,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

/// An input path that must exist before anything runs.
pub fn existing(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let p = flag.or_else(|| file.clone()).ok_or_else(|| CliError::Config(format!("no {what} given")))?;
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", p.display())))
    }
}

pub fn parse_features(s: &str) -> Result<Vec<FeatureSetId>, CliError> {
    let ids: Vec<FeatureSetId> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| FeatureSetId::parse(t).ok_or_else(|| CliError::Config(format!("unknown feature set '{t}'"))))
        .collect::<Result<_, _>>()?;
    if ids.is_empty() {
        return Err(CliError::Config("empty feature list".into()));
    }
    Ok(ids)
}

/// `all` or a comma list.
pub fn parse_modellings(s: &str) -> Result<Vec<Modelling>, CliError> {
    if s == "all" {
        return Ok(Modelling::ALL.to_vec());
    }
    s.split(',')
        .map(|t| Modelling::parse(t.trim()).ok_or_else(|| CliError::Config(format!("unknown modelling '{t}'"))))
        .collect()
}

pub fn parse_norms(s: &str) -> Result<Vec<NormScheme>, CliError> {
    if s == "all" {
        return Ok(NormScheme::ALL.to_vec());
    }
    s.split(',')
        .map(|t| NormScheme::parse(t.trim()).ok_or_else(|| CliError::Config(format!("unknown normalisation '{t}'"))))
        .collect()
}

pub fn parse_one<T>(s: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
    parse(s).ok_or_else(|| CliError::Config(format!("unknown {what} '{s}'")))
}

pub fn parse_test_level(s: &str) -> Result<TestLevel, CliError> {
    parse_one(s, "test level", TestLevel::parse)
}
