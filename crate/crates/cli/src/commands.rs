use std::path::{Path, PathBuf};

use voicerisk::evaluation::{run_experiment, EvalError, EvalReport, ExperimentConfig, Modelling, NormScheme};
use voicerisk::feature_store::{join_dataset, load_embeddings, load_scores, Dataset, FeatureTable, StoreError};
use voicerisk::features::FeatureSetId;
use voicerisk::pipeline::{extract_manifest, ExtractConfig, ExtractError};
use voicerisk::segmentation::{Manifest, SegmentationError};
use voicerisk::stats::{analyze, AnalysisConfig, AnalysisReport, StatsError, TestLevel};
use voicerisk::synth::{write_cohort, CohortSpec, SynthError};

use crate::config::{existing, parse_features, parse_modellings, parse_norms, parse_one, parse_test_level, FileConfig};
use crate::{AnalyzeArgs, Cli, CliError, Command, EvaluateArgs, ExtractArgs, Inputs, ReportArgs, SynthArgs};

impl From<SegmentationError> for CliError {
    fn from(e: SegmentationError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::TooFewSubjects(_)
            | EvalError::SingleClassTruth
            | EvalError::EmptyGroup(_)
            | EvalError::LengthMismatch(_)
            | EvalError::DegenerateResampling { .. } => CliError::Data(e.to_string()),
            EvalError::Invalid(_) => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Invalid(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed);
    let need_seed = || seed.ok_or_else(|| CliError::Config("--seed is required".into()));
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Extract(a) => extract(a, &file, need_seed()?),
        Command::Evaluate(a) => evaluate(a, &file, need_seed()?),
        Command::Analyze(a) => analyze_cmd(a, &file, need_seed()?),
        Command::Synth(a) => synth(a, &file, need_seed()?),
        Command::Report(a) => report(a, &file),
    }
}

fn manifest_dir(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn extract(a: ExtractArgs, file: &FileConfig, _seed: u64) -> Result<(), CliError> {
    let path = existing(a.manifest, &file.manifest, "manifest")?;
    let manifest = Manifest::read(&path)?;
    let cfg = ExtractConfig {
        target_rms_db: a.target_rms_db.or(file.target_rms_db).unwrap_or(voicerisk::audio::DEFAULT_TARGET_RMS_DB),
        fallback_vad: a.fallback_vad || file.fallback_vad.unwrap_or(false),
        ..ExtractConfig::default()
    };
    let out = a
        .out
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| manifest_dir(&path).join("features").join(FeatureSetId::Gemlite.file_name()));
    log::info!("extracting {} recordings ({} segments)", manifest.recordings.len(), manifest.segment_count());
    let table = match extract_manifest(&manifest, &cfg) {
        Ok(t) => t,
        Err(ExtractError::Segments(failures)) => {
            for (key, e) in &failures {
                log::error!("{key}: {e}");
            }
            return Err(CliError::Data(format!("{} segment(s) failed to extract", failures.len())));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    table.write_csv(&out).map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!("{} segments -> {}", table.len(), out.display());
    Ok(())
}

struct Loaded {
    manifest: Manifest,
    features_dir: PathBuf,
}

fn load_inputs(i: Inputs, file: &FileConfig) -> Result<Loaded, CliError> {
    let path = existing(i.manifest, &file.manifest, "manifest")?;
    let features_dir = i
        .features_dir
        .or_else(|| file.features_dir.clone())
        .unwrap_or_else(|| manifest_dir(&path).join("features"));
    Ok(Loaded { manifest: Manifest::read(&path)?, features_dir })
}

impl Loaded {
    fn dataset(&self, id: &FeatureSetId) -> Result<Dataset, CliError> {
        let path = self.features_dir.join(id.file_name());
        if !path.is_file() {
            return Err(CliError::Config(format!("feature file {} does not exist", path.display())));
        }
        let table: FeatureTable = match id {
            FeatureSetId::Gemlite => FeatureTable::read_csv(&path, FeatureSetId::Gemlite, None)?,
            FeatureSetId::Embedding(name) => load_embeddings(&path, name, None)?,
        };
        Ok(join_dataset(&self.manifest, &[&table])?)
    }
}

fn experiment_config(file: &FileConfig, seed: u64, bootstrap: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::new(seed);
    if let Some(g) = &file.grid {
        cfg.grid = g.clone();
    }
    if let Some(b) = bootstrap.or(file.bootstrap) {
        cfg.bootstrap.resamples = b;
    }
    if let Some(l) = file.ci_level {
        cfg.bootstrap.level = l;
    }
    Ok(cfg)
}

fn evaluate(a: EvaluateArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let inputs = load_inputs(a.inputs, file)?;
    let ids = parse_features(a.features.as_deref().or(file.features.as_deref()).unwrap_or("gemlite"))?;
    let mut cfg = experiment_config(file, seed, a.bootstrap)?;
    cfg.modellings = parse_modellings(a.modelling.as_deref().or(file.modelling.as_deref()).unwrap_or("all"))?;
    cfg.norms = parse_norms(a.norm.as_deref().or(file.norm.as_deref()).unwrap_or("all"))?;
    let out = a.out.or_else(|| file.out.clone()).unwrap_or_default();
    let datasets: Vec<(String, Dataset)> =
        ids.iter().map(|id| Ok((id.to_string(), inputs.dataset(id)?))).collect::<Result<_, CliError>>()?;
    let refs: Vec<(String, &Dataset)> = datasets.iter().map(|(n, d)| (n.clone(), d)).collect();
    let report = run_experiment(&refs, &cfg)?;
    write_out(&out.join("report.json"), &report.to_json())?;
    let md = report.to_markdown();
    write_out(&out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let o = &file.analysis;
    let report_path = a.report.or_else(|| file.report.clone());
    if let Some(p) = &report_path {
        if !p.is_file() {
            return Err(CliError::Config(format!("report {} does not exist", p.display())));
        }
    }
    let inputs = load_inputs(a.inputs, file)?;
    let features = a.features.or_else(|| o.features.clone()).unwrap_or_else(|| "gemlite".into());
    let id = parse_one(&features, "feature set", FeatureSetId::parse)?;
    let mut cfg = AnalysisConfig::new(id.to_string());
    if let Some(m) = a.modelling.as_deref().or(o.modelling.as_deref()) {
        cfg.modelling = parse_one(m, "modelling", Modelling::parse)?;
    }
    if let Some(n) = a.norm.as_deref().or(o.norm.as_deref()) {
        cfg.norm = parse_one(n, "normalisation", NormScheme::parse)?;
    }
    cfg.test_level = match a.test_level.as_deref().or(o.test_level.as_deref()) {
        Some(s) => parse_test_level(s)?,
        None => TestLevel::Subject,
    };
    cfg.top_k = a.top_k.or(o.top_k).unwrap_or(cfg.top_k);
    cfg.rho_max = a.rho_max.or(o.rho_max).unwrap_or(cfg.rho_max);
    if cfg.top_k == 0 || !(0.0..=1.0).contains(&cfg.rho_max) {
        return Err(CliError::Config("top_k must be positive and rho_max in [0, 1]".into()));
    }
    let out = a.out.or_else(|| file.out.clone()).unwrap_or_default();

    let dataset = inputs.dataset(&id)?;
    let report: EvalReport = match &report_path {
        Some(p) => {
            let r: EvalReport = read_json(p)?;
            if r.feature_names.get(&cfg.features) != Some(&dataset.feature_names) {
                return Err(CliError::Data(format!("{} was not produced from these {} features", p.display(), cfg.features)));
            }
            r
        }
        None => {
            let mut e = experiment_config(file, seed, None)?;
            e.modellings = vec![cfg.modelling];
            e.norms = vec![cfg.norm];
            run_experiment(&[(cfg.features.clone(), &dataset)], &e)?
        }
    };
    let scores_path = match a.scores.or_else(|| o.scores.clone()) {
        Some(p) if !p.is_file() => return Err(CliError::Config(format!("scores {} does not exist", p.display()))),
        Some(p) => Some(p),
        None => Some(inputs.features_dir.join("scores.csv")).filter(|p| p.is_file()),
    };
    let scores = match &scores_path {
        Some(p) => Some(join_dataset(&inputs.manifest, &[&load_scores(p)?])?),
        None => None,
    };
    let result = analyze(&report, &dataset, scores.as_ref(), &cfg)?;
    write_out(&out.join("analysis.json"), &result.to_json())?;
    print!("{}", analysis_markdown(&result));
    Ok(())
}

fn synth(a: SynthArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let spec_path = existing(a.spec, &file.spec, "cohort spec")?;
    let out = a
        .out
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::Config("no output directory given".into()))?;
    let mut value: serde_json::Value = read_json(&spec_path).map_err(|e| CliError::Config(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("{}: expected a JSON object", spec_path.display())))?;
    obj.insert("seed".into(), seed.into());
    let spec: CohortSpec =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let files = write_cohort(&spec, &out)?;
    eprintln!("{} files -> {}", files.files.len() + 1, out.display());
    Ok(())
}

fn report(a: ReportArgs, file: &FileConfig) -> Result<(), CliError> {
    let path = existing(a.report, &file.report, "report")?;
    let r: EvalReport = read_json(&path)?;
    let mut md = r.to_markdown();
    if let Some(p) = a.analysis.or_else(|| file.analysis_report.clone()) {
        if !p.is_file() {
            return Err(CliError::Config(format!("analysis {} does not exist", p.display())));
        }
        let an: AnalysisReport = read_json(&p)?;
        md.push('\n');
        md.push_str(&analysis_markdown(&an));
    }
    match a.out {
        Some(o) => write_out(&o, &md),
        None => {
            print!("{md}");
            Ok(())
        }
    }
}

/// Selected features with their tests, then the score group means.
pub fn analysis_markdown(r: &AnalysisReport) -> String {
    let c = &r.config;
    let mut s = format!(
        "Features of {} / {} / {} ({}-level U test)\n\n| rank | feature | mean abs coef | U | p | CLES |\n|---|---|---|---|---|---|\n",
        c.features,
        c.modelling.label(),
        c.norm.as_str(),
        match c.test_level {
            TestLevel::Segment => "segment",
            TestLevel::Subject => "subject",
        }
    );
    for f in &r.selected {
        s.push_str(&format!(
            "| {} | {} | {:.4} | {} | {:.3e} | {:.3} |\n",
            f.rank, f.name, f.mean_abs_coef, f.test.u_statistic, f.test.p_value, f.test.cles
        ));
    }
    for (dim, groups) in &r.group_summaries {
        s.push_str(&format!("\n{dim} (z-scored)\n\n| group | n | median | mean |\n|---|---|---|---|\n"));
        for g in groups {
            s.push_str(&format!(
                "| {} {} | {} | {:.3} | {:.3} |\n",
                g.key.gender.as_str(),
                if g.key.high_risk { "high" } else { "low" },
                g.stats.n,
                g.stats.median,
                g.stats.mean
            ));
        }
    }
    s
}
