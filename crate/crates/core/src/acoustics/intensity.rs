use serde::{Deserialize, Serialize};

use super::{hann, Waveform};
use crate::error::{Error, Result};

/// dB assigned to a full-scale (amplitude 1.0) square wave.
pub const FULL_SCALE_DB: f64 = 91.0;
const FRAME: f64 = 0.040;
const HOP: f64 = 0.010;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityTrack {
    pub times: Vec<f64>,
    pub db: Vec<f64>,
    /// Energy-averaged mean over frames.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

fn to_db(mean_square: f64) -> f64 {
    if mean_square <= 0.0 {
        return 0.0;
    }
    (FULL_SCALE_DB + 10.0 * mean_square.log10()).max(0.0)
}

/// Frame-wise windowed RMS intensity in dB. Inputs shorter than one frame
/// are analysed as a single frame.
pub fn extract_intensity(wav: &Waveform) -> Result<IntensityTrack> {
    if wav.samples.is_empty() {
        return Err(Error::AudioTooShort("no samples".into()));
    }
    let fs = wav.sample_rate as f64;
    let n = ((FRAME * fs).round() as usize).clamp(1, wav.samples.len());
    let hop = ((HOP * fs).round() as usize).max(1);
    let window = hann(n, false);
    let wsum: f64 = window.iter().sum();
    let n_frames = (wav.samples.len() - n) / hop + 1;
    let mut times = Vec::with_capacity(n_frames);
    let mut db = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let seg = &wav.samples[k * hop..k * hop + n];
        let ms = if wsum > 0.0 {
            seg.iter().zip(&window).map(|(s, w)| w * s * s).sum::<f64>() / wsum
        } else {
            seg.iter().map(|s| s * s).sum::<f64>() / n as f64
        };
        times.push((k * hop) as f64 / fs + n as f64 / (2.0 * fs));
        db.push(to_db(ms));
    }
    let energy = db.iter().map(|d| 10f64.powf(d / 10.0)).sum::<f64>() / db.len() as f64;
    let mean = 10.0 * energy.log10();
    let min = db.iter().copied().fold(f64::INFINITY, f64::min);
    let max = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(IntensityTrack {
        times,
        db,
        mean: mean.clamp(min, max),
        min,
        max,
    })
}

/// Apply a uniform gain so the mean intensity lands on `target_db`.
pub fn scale_intensity(wav: &Waveform, target_db: f64) -> Result<Waveform> {
    let current = extract_intensity(wav)?.mean;
    if (current - target_db).abs() < 1e-12 {
        return Ok(wav.clone());
    }
    let mut gain = 10f64.powf((target_db - current) / 20.0);
    let peak = wav.peak();
    let apply = |g: f64| -> Result<Waveform> {
        if peak * g > 1.0 {
            return Err(Error::Clipping {
                gain_db: 20.0 * g.log10(),
                peak: peak * g,
            });
        }
        Waveform::new(wav.samples.iter().map(|s| s * g).collect(), wav.sample_rate)
    };
    let first = apply(gain)?;
    // frames pinned at the 0 dB floor do not scale, so correct once
    let residual = target_db - extract_intensity(&first)?.mean;
    if residual.abs() < 1e-9 {
        return Ok(first);
    }
    gain *= 10f64.powf(residual / 20.0);
    apply(gain)
}
