use super::{extract_pitch, hann, PitchParams, PitchTrack, Waveform};
use crate::error::{Error, Result};

/// Contiguous voiced sample ranges implied by the track.
fn voiced_regions(track: &PitchTrack, fs: f64, len: usize) -> Vec<(usize, usize)> {
    let half_hop = track.params.hop * fs / 2.0;
    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (k, f) in track.f0.iter().enumerate() {
        let c = track.times[k] * fs;
        match (f.is_some(), open) {
            (true, None) => open = Some(k),
            (false, Some(s)) => {
                regions.push(((track.times[s] * fs - half_hop) as usize, (c - half_hop) as usize));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        let end = (track.times[track.f0.len() - 1] * fs + half_hop) as usize;
        regions.push(((track.times[s] * fs - half_hop) as usize, end.min(len)));
    }
    regions
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi.min(x.len())).fold(lo, |b, i| if x[i] > x[b] { i } else { b })
}

/// Analysis marks on waveform peaks, one per local period.
fn analysis_marks(x: &[f64], track: &PitchTrack, fs: f64, mean_period: f64, (lo, hi): (usize, usize)) -> Vec<usize> {
    let period_at = |i: usize| track.at(i as f64 / fs).map_or(mean_period, |f| fs / f);
    let mut marks = vec![argmax(x, lo, lo + period_at(lo).round() as usize)];
    loop {
        let last = *marks.last().unwrap();
        let p = period_at(last);
        let predicted = last as f64 + p;
        let a = (predicted - 0.25 * p).round() as usize;
        let b = (predicted + 0.25 * p).round() as usize + 1;
        if b >= hi {
            break;
        }
        marks.push(argmax(x, a.max(last + 1), b));
    }
    marks
}

/// Resynthesize voiced regions at the utterance's mean F0 by
/// pitch-synchronous overlap-add; unvoiced samples pass through.
pub fn flatten_pitch(wav: &Waveform) -> Result<Waveform> {
    let track = extract_pitch(wav, &PitchParams::default())?;
    if track.voiced().len() < 3 {
        return Err(Error::Unvoiced);
    }
    let fs = wav.sample_rate as f64;
    let x = &wav.samples;
    let target = fs / track.mean().unwrap_or(1.0);
    let mut out = x.clone();
    for region in voiced_regions(&track, fs, x.len()) {
        let (lo, hi) = region;
        let marks = analysis_marks(x, &track, fs, target, region);
        if marks.len() < 2 {
            continue;
        }
        let mut acc = vec![0.0; hi - lo];
        let mut wsum = vec![0.0; hi - lo];
        let mut t = marks[0] as f64;
        let mut nearest = 0;
        while t < hi as f64 {
            while nearest + 1 < marks.len() && (marks[nearest + 1] as f64 - t).abs() <= (marks[nearest] as f64 - t).abs() {
                nearest += 1;
            }
            let m = marks[nearest];
            let p = if nearest + 1 < marks.len() {
                marks[nearest + 1] - m
            } else {
                m - marks[nearest - 1]
            };
            let w = hann(2 * p + 1, false);
            let ts = t.round() as isize;
            for (j, wj) in w.iter().enumerate() {
                let off = j as isize - p as isize;
                let src = m as isize + off;
                let dst = ts + off - lo as isize;
                if src < 0 || src as usize >= x.len() || dst < 0 || dst as usize >= acc.len() {
                    continue;
                }
                acc[dst as usize] += wj * x[src as usize];
                wsum[dst as usize] += wj;
            }
            t += target;
        }
        for i in 0..acc.len() {
            if wsum[i] > 0.1 {
                out[lo + i] = acc[i] / wsum[i];
            }
        }
    }
    Waveform::new(out, wav.sample_rate)
}
