use serde::{Deserialize, Serialize};

use super::{hann, Summary, Waveform};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchParams {
    pub frame: f64,
    pub hop: f64,
    pub floor: f64,
    pub ceiling: f64,
    pub voicing_threshold: f64,
    /// Penalty per octave of lag, favoring the shortest lag among near-equal peaks.
    pub octave_cost: f64,
    /// Frames quieter than this fraction of the global peak are unvoiced.
    pub silence_threshold: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        Self {
            frame: 0.040,
            hop: 0.010,
            floor: 75.0,
            ceiling: 500.0,
            voicing_threshold: 0.45,
            octave_cost: 0.01,
            silence_threshold: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    /// Frame centers in seconds.
    pub times: Vec<f64>,
    /// F0 in Hz, `None` for unvoiced frames.
    pub f0: Vec<Option<f64>>,
    pub params: PitchParams,
}

impl PitchTrack {
    pub fn voiced(&self) -> Vec<f64> {
        self.f0.iter().flatten().copied().collect()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.voiced().len() as f64 / self.f0.len() as f64
    }

    pub fn mean(&self) -> Option<f64> {
        let v = self.voiced();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn std(&self) -> Option<f64> {
        let v = self.voiced();
        let m = self.mean()?;
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
    }

    pub fn summary(&self) -> Option<Summary> {
        let v = self.voiced();
        Some(Summary {
            mean: self.mean()?,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// F0 at time `t` from the nearest frame, if voiced.
    pub fn at(&self, t: f64) -> Option<f64> {
        let hop = self.params.hop;
        let first = *self.times.first()?;
        let k = ((t - first) / hop).round().clamp(0.0, (self.times.len() - 1) as f64) as usize;
        self.f0[k]
    }
}

/// Best peak of the window-corrected autocorrelation in the lag band, as
/// `(lag in samples, strength)`.
fn best_peak(r: &[f64], min_lag: usize, max_lag: usize, params: &PitchParams, sample_rate: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for lag in min_lag.max(1)..max_lag.min(r.len() - 1) {
        if !(r[lag] > r[lag - 1] && r[lag] >= r[lag + 1]) {
            continue;
        }
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
        let strength = (b - 0.25 * (a - c) * delta).min(1.0);
        let tau = lag as f64 + delta;
        let score = strength - params.octave_cost * (params.floor * tau / sample_rate).log2();
        if best.map_or(true, |(s, _, _)| score > s) {
            best = Some((score, tau, strength));
        }
    }
    best.map(|(_, tau, s)| (tau, s))
}

/// Frame-wise normalized autocorrelation pitch estimate.
pub fn extract_pitch(wav: &Waveform, params: &PitchParams) -> Result<PitchTrack> {
    let fs = wav.sample_rate as f64;
    let n = (params.frame * fs).round() as usize;
    let hop = ((params.hop * fs).round() as usize).max(1);
    if wav.samples.len() < n + hop || n < 4 {
        return Err(Error::AudioTooShort(format!(
            "{:.3} s is shorter than two analysis frames",
            wav.duration()
        )));
    }
    let min_lag = (fs / params.ceiling).floor() as usize;
    let max_lag = ((fs / params.floor).ceil() as usize + 1).min(n - 2);
    let window = hann(n, false);
    let autocorr = |x: &[f64]| -> Vec<f64> {
        (0..=max_lag + 1)
            .map(|lag| x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum())
            .collect()
    };
    let rw = autocorr(&window);
    let global_peak = wav.peak();
    let n_frames = (wav.samples.len() - n) / hop + 1;
    let mut times = Vec::with_capacity(n_frames);
    let mut f0 = Vec::with_capacity(n_frames);
    let mut frame = vec![0.0; n];
    for k in 0..n_frames {
        let start = k * hop;
        let seg = &wav.samples[start..start + n];
        times.push((start as f64 + n as f64 / 2.0) / fs);
        let local_peak = seg.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if global_peak == 0.0 || local_peak < params.silence_threshold * global_peak {
            f0.push(None);
            continue;
        }
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((f, s), w) in frame.iter_mut().zip(seg).zip(&window) {
            *f = (s - mean) * w;
        }
        let ra = autocorr(&frame);
        if ra[0] <= 0.0 {
            f0.push(None);
            continue;
        }
        let r: Vec<f64> = ra.iter().zip(&rw).map(|(a, w)| (a / ra[0]) / (w / rw[0])).collect();
        let voiced = best_peak(&r, min_lag, max_lag, params, fs)
            .filter(|&(_, s)| s > params.voicing_threshold)
            .map(|(tau, _)| fs / tau)
            .filter(|f| (params.floor..=params.ceiling).contains(f));
        f0.push(voiced);
    }
    Ok(PitchTrack {
        times,
        f0,
        params: params.clone(),
    })
}
