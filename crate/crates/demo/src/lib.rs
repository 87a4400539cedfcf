//! Browser demo: synthesise and analyse a phrase, run the gender-modelling
//! experiment on a synthetic cohort, and run a Mann-Whitney test.
//!
//! Every export takes plain numbers or strings and returns JSON text.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use voicerisk::audio::{AudioBuffer, PIPELINE_RATE};
use voicerisk::evaluation::{run_experiment, ExperimentConfig, NormScheme};
use voicerisk::feature_store::join_dataset;
use voicerisk::features::functionals::percentile;
use voicerisk::features::gemlite::{extract_tracks, GemliteConfig};
use voicerisk::features::TrackKind;
use voicerisk::stats::{mann_whitney_u, UMethod};
use voicerisk::synth::signal::{synthesize_phrase, PhraseShape, VoiceParams};
use voicerisk::synth::{generate_features, CohortSpec};

#[derive(Debug, Serialize)]
pub struct PhraseAnalysis {
    pub sample_rate: u32,
    /// Waveform decimated for plotting.
    pub waveform: Vec<f32>,
    pub frame_rate: f64,
    pub start_s: f64,
    /// NaN frames (unvoiced) become null.
    pub f0_track: Vec<Option<f64>>,
    pub true_f0_hz: f64,
    pub f0_median_hz: f64,
    pub f1_median_hz: f64,
    pub alpha_ratio_db: f64,
    pub hammarberg_db: f64,
}

fn median_of(track: &voicerisk::features::FrameTrack) -> f64 {
    let v: Vec<f64> = track.defined().collect();
    if v.is_empty() { f64::NAN } else { percentile(&v, 50.0) }
}

/// Synthesise one phrase with the given voice and extract its tracks.
pub fn phrase(f0_hz: f64, f1_hz: f64, tilt_db_per_oct: f64, seed: u64) -> Result<PhraseAnalysis, String> {
    if !(50.0..=500.0).contains(&f0_hz) || !(200.0..=1500.0).contains(&f1_hz) || !(0.0..=15.0).contains(&tilt_db_per_oct) {
        return Err("F0 must be 50-500 Hz, F1 200-1500 Hz, tilt 0-15 dB/oct".into());
    }
    let voice = VoiceParams { f0_hz, f1_hz, tilt_db_per_oct, ..VoiceParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = synthesize_phrase(&voice, &PhraseShape::default(), 1.5, PIPELINE_RATE, &mut rng);
    let true_f0_hz = s.median_f0();
    let audio = AudioBuffer::new(s.samples, PIPELINE_RATE, "demo").map_err(|e| e.to_string())?;
    let t = extract_tracks(&audio, &GemliteConfig::default()).map_err(|e| e.to_string())?;
    let find = |k: TrackKind| t.tracks.iter().find(|x| x.kind == k).ok_or(format!("no {k:?} track"));
    let f0 = find(TrackKind::F0Hz)?;
    Ok(PhraseAnalysis {
        sample_rate: PIPELINE_RATE,
        waveform: audio.samples.iter().step_by(16).map(|&v| v as f32).collect(),
        frame_rate: f0.frame_rate,
        start_s: f0.start_s,
        f0_track: f0.values.iter().map(|v| (!v.is_nan()).then_some(*v)).collect(),
        true_f0_hz,
        f0_median_hz: median_of(f0),
        f1_median_hz: median_of(find(TrackKind::F1Hz)?),
        alpha_ratio_db: median_of(find(TrackKind::AlphaRatioDb)?),
        hammarberg_db: median_of(find(TrackKind::HammarbergDb)?),
    })
}

#[derive(Debug, Serialize)]
pub struct ExperimentRow {
    pub modelling: String,
    pub segment_ba: f64,
    pub segment_ci: (f64, f64),
    pub subject_ba: f64,
    pub subject_ci: (f64, f64),
}

/// Leave-one-subject-out comparison of the three modelling schemes on a cohort
/// with opposite-sign effects of `effect_sd` standard deviations for men and women.
pub fn experiment(effect_sd: f64, seed: u64) -> Result<Vec<ExperimentRow>, String> {
    if !(0.0..=4.0).contains(&effect_sd) {
        return Err("effect must be 0-4 standard deviations".into());
    }
    let c = generate_features(&CohortSpec::feature_level(seed).with_gender_opposed(effect_sd)).map_err(|e| e.to_string())?;
    let d = join_dataset(&c.manifest, &[&c.gemlite]).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::new(seed);
    cfg.norms = vec![NormScheme::Global];
    cfg.bootstrap.resamples = 300;
    let r = run_experiment(&[("gemlite".into(), &d)], &cfg).map_err(|e| e.to_string())?;
    Ok(r.cells
        .iter()
        .map(|c| ExperimentRow {
            modelling: c.cell.modelling.label().into(),
            segment_ba: c.segment_ba,
            segment_ci: c.segment_ci,
            subject_ba: c.subject_ba,
            subject_ci: c.subject_ci,
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct UTest {
    pub u_statistic: f64,
    pub p_value: f64,
    pub cles: f64,
    pub exact: bool,
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t}")))
        .collect()
}

/// Two-sided Mann-Whitney U test of two comma- or space-separated samples.
pub fn u_test(low: &str, high: &str) -> Result<UTest, String> {
    let r = mann_whitney_u(&parse_numbers(low)?, &parse_numbers(high)?).map_err(|e| e.to_string())?;
    Ok(UTest { u_statistic: r.u_statistic, p_value: r.p_value, cles: r.cles, exact: r.method == UMethod::Exact })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = analyzePhrase)]
pub fn analyze_phrase(f0_hz: f64, f1_hz: f64, tilt_db_per_oct: f64, seed: u32) -> Result<String, JsValue> {
    to_js(phrase(f0_hz, f1_hz, tilt_db_per_oct, seed.into()))
}

#[wasm_bindgen(js_name = runExperiment)]
pub fn run_experiment_js(effect_sd: f64, seed: u32) -> Result<String, JsValue> {
    to_js(experiment(effect_sd, seed.into()))
}

#[wasm_bindgen(js_name = uTest)]
pub fn u_test_js(low: &str, high: &str) -> Result<String, JsValue> {
    to_js(u_test(low, high))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrase_tracks_follow_the_voice() {
        let a = phrase(150.0, 650.0, 6.0, 1).unwrap();
        assert!((a.f0_median_hz / a.true_f0_hz - 1.0).abs() < 0.03);
        assert!(a.f0_track.iter().any(Option::is_some));
        assert!(phrase(20.0, 650.0, 6.0, 1).is_err());
    }

    #[test]
    fn u_test_parses_lists() {
        let r = u_test("1, 2 3", "4,5,6").unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert!(u_test("1,x", "2").is_err());
    }

    #[test]
    fn experiment_has_one_row_per_modelling() {
        let rows = experiment(1.5, 2).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.subject_ba)));
    }
}
