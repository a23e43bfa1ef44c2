//! Waveform-domain analysis and manipulation: pitch and intensity tracks,
//! intensity scaling, WSOLA time stretching, and TD-PSOLA pitch flattening.

mod intensity;
mod pitch;
mod psola;
mod stretch;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use intensity::{extract_intensity, scale_intensity, IntensityTrack, FULL_SCALE_DB};
pub use pitch::{extract_pitch, PitchParams, PitchTrack};
pub use psola::flatten_pitch;
pub use stretch::{time_stretch, MAX_FACTOR, MIN_FACTOR};

/// Mono audio with samples nominally in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::UnsupportedAudio("sample rate 0".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::UnsupportedAudio("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Read 16-bit PCM mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedAudio(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedAudio(format!(
            "{:?} {}-bit, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(Error::AudioTooShort("no samples".into()));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Write 16-bit PCM mono; samples outside [-1, 1] saturate.
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &wav.samples {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Words per second.
pub fn speaking_rate(word_count: usize, wav: &Waveform) -> Result<f64> {
    let d = wav.duration();
    if d <= 0.0 {
        return Err(Error::AudioTooShort("zero duration".into()));
    }
    Ok(word_count as f64 / d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Utterance-level measurements written by `audio measure`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub duration: f64,
    pub pitch: Option<Summary>,
    pub pitch_std: Option<f64>,
    pub voiced_fraction: f64,
    pub intensity: Summary,
}

pub fn measure(wav: &Waveform) -> Result<Measurement> {
    let p = extract_pitch(wav, &PitchParams::default())?;
    let i = extract_intensity(wav)?;
    Ok(Measurement {
        duration: wav.duration(),
        pitch: p.summary(),
        pitch_std: p.std(),
        voiced_fraction: p.voiced_fraction(),
        intensity: Summary {
            mean: i.mean,
            min: i.min,
            max: i.max,
        },
    })
}

/// Hann window of length `n` (periodic when `periodic`, so 50% overlaps sum to one).
pub(crate) fn hann(n: usize, periodic: bool) -> Vec<f64> {
    let d = if periodic { n as f64 } else { (n.max(2) - 1) as f64 };
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / d).cos())
        .collect()
}
