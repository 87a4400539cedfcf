//! Mono PCM audio buffers, WAV I/O and loudness normalisation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Internal working sample rate of the pipeline.
pub const PIPELINE_RATE: u32 = 16_000;

/// Default loudness target in dBFS.
pub const DEFAULT_TARGET_RMS_DB: f64 = -23.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("input is silent (RMS = 0)")]
    SilentInput,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono signal with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioBuffer {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the samples in `[start_s, end_s)`, clamped to the buffer.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64, source_id: impl Into<String>) -> Self {
        let (a, b) = self.sample_range(start_s, end_s);
        Self {
            samples: self.samples[a..b].to_vec(),
            sample_rate: self.sample_rate,
            source_id: source_id.into(),
        }
    }

    pub(crate) fn sample_range(&self, start_s: f64, end_s: f64) -> (usize, usize) {
        let fs = self.sample_rate as f64;
        let a = ((start_s * fs).round().max(0.0) as usize).min(self.samples.len());
        let b = ((end_s * fs).round().max(0.0) as usize).clamp(a, self.samples.len());
        (a, b)
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// RMS level in dBFS (full scale sine peak = 1.0, so a full-scale square is 0 dB).
    pub fn rms_db(&self) -> f64 {
        20.0 * self.rms().log10()
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Result of [`normalize_loudness`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub audio: AudioBuffer,
    pub gain_db: f64,
    /// Number of samples clipped to `[-1, 1]` after the gain was applied.
    pub clipped: usize,
}

/// Scale the whole signal so that its RMS equals `target_rms_db` dBFS.
pub fn normalize_loudness(a: &AudioBuffer, target_rms_db: f64) -> Result<Normalized, AudioError> {
    let current = a.rms();
    if current == 0.0 || a.is_empty() {
        return Err(AudioError::SilentInput);
    }
    let gain = 10f64.powf(target_rms_db / 20.0) / current;
    let mut clipped = 0;
    let samples = a
        .samples
        .iter()
        .map(|&s| {
            let v = s * gain;
            if v.abs() > 1.0 {
                clipped += 1;
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("{}: {clipped} samples clipped during loudness normalisation", a.source_id);
    }
    Ok(Normalized {
        audio: AudioBuffer {
            samples,
            sample_rate: a.sample_rate,
            source_id: a.source_id.clone(),
        },
        gain_db: 20.0 * gain.log10(),
        clipped,
    })
}

/// Linear-interpolation resampling. Identity when the rates already match.
pub fn resample_linear(a: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidSampleRate(target_rate));
    }
    if a.sample_rate == target_rate {
        return Ok(a.clone());
    }
    if a.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    let ratio = a.sample_rate as f64 / target_rate as f64;
    let n_out = ((a.len() as f64) / ratio).floor().max(1.0) as usize;
    let last = a.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = (pos.floor() as usize).min(last);
            let frac = pos - k as f64;
            let next = a.samples[(k + 1).min(last)];
            a.samples[k] * (1.0 - frac) + next * frac
        })
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: target_rate,
        source_id: a.source_id.clone(),
    })
}

#[cfg(feature = "wav")]
mod wav {
    use super::{AudioBuffer, AudioError};
    use std::path::Path;

    fn map_hound(e: hound::Error) -> AudioError {
        match e {
            hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                AudioError::MalformedHeader(io.to_string())
            }
            hound::Error::IoError(io) => AudioError::Io(io),
            hound::Error::FormatError(m) => AudioError::MalformedHeader(m.to_string()),
            hound::Error::Unsupported => {
                AudioError::UnsupportedEncoding("format not supported".into())
            }
            hound::Error::InvalidSampleFormat => {
                AudioError::UnsupportedEncoding("invalid sample format".into())
            }
            hound::Error::TooWide => AudioError::UnsupportedEncoding("sample too wide".into()),
            other => AudioError::MalformedHeader(other.to_string()),
        }
    }

    /// Read a PCM WAV file (8/16/24/32-bit integer or 32-bit float) and downmix to mono.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
        let path = path.as_ref();
        let reader = hound::WavReader::open(path).map_err(map_hound)?;
        let spec = reader.spec();
        let channels = spec.channels as usize;
        if channels == 0 {
            return Err(AudioError::MalformedHeader("zero channels".into()));
        }
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?,
            (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
                let scale = 1.0 / (1u64 << (bits - 1)) as f64;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f64 * scale))
                    .collect::<Result<_, _>>()
                    .map_err(map_hound)?
            }
            (fmt, bits) => {
                return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")))
            }
        };
        if interleaved.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        let samples: Vec<f64> = interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        AudioBuffer::new(samples, spec.sample_rate, path.display().to_string())
    }

    /// Write a mono 16-bit PCM WAV file. Samples are clamped to the representable range.
    pub fn write_wav_i16(path: impl AsRef<Path>, a: &AudioBuffer) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: a.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).map_err(map_hound)?;
        for &s in &a.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).map_err(map_hound)?;
        }
        w.finalize().map_err(map_hound)
    }
}

#[cfg(feature = "wav")]
pub use wav::{read_wav, write_wav_i16};
