use super::{hann, Waveform};
use crate::error::{Error, Result};

pub const MIN_FACTOR: f64 = 0.25;
pub const MAX_FACTOR: f64 = 4.0;
const FRAME: f64 = 0.030;
const SEEK: f64 = 0.010;

fn at(x: &[f64], i: isize) -> f64 {
    if i < 0 {
        0.0
    } else {
        x.get(i as usize).copied().unwrap_or(0.0)
    }
}

/// Change speaking rate by `factor` (2.0 plays twice as fast) while keeping
/// pitch, using waveform-similarity overlap-add.
pub fn time_stretch(wav: &Waveform, factor: f64) -> Result<Waveform> {
    if !(MIN_FACTOR..=MAX_FACTOR).contains(&factor) {
        return Err(Error::FactorOutOfRange(factor));
    }
    let x = &wav.samples;
    let fs = wav.sample_rate as f64;
    let out_len = (x.len() as f64 / factor).round() as usize;
    let n = ((FRAME * fs).round() as usize).max(4) & !1;
    let hs = n / 2;
    let ha = hs as f64 * factor;
    let tol = (SEEK * fs).round() as isize;
    let window = hann(n, true);
    let half = (n / 2) as isize;

    let mut out = vec![0.0; out_len + n];
    let mut wsum = vec![0.0; out_len + n];
    let n_frames = out_len / hs + 2;
    // input start of the previously copied frame
    let mut prev: Option<isize> = None;
    for k in 0..n_frames {
        let nominal = (k as f64 * ha).round() as isize - half;
        let start = match prev {
            None => nominal,
            Some(p) => {
                let natural = p + hs as isize;
                let mut best = (f64::NEG_INFINITY, 0isize);
                for d in -tol..=tol {
                    let cand = nominal + d;
                    let c: f64 = (0..n as isize).map(|i| at(x, cand + i) * at(x, natural + i)).sum();
                    if c > best.0 {
                        best = (c, d);
                    }
                }
                nominal + best.1
            }
        };
        let out_start = (k * hs) as isize - half;
        for i in 0..n {
            let o = out_start + i as isize;
            if o < 0 || o as usize >= out.len() {
                continue;
            }
            out[o as usize] += window[i] * at(x, start + i as isize);
            wsum[o as usize] += window[i];
        }
        prev = Some(start);
    }
    out.truncate(out_len);
    for (s, w) in out.iter_mut().zip(&wsum) {
        if *w > 1e-6 {
            *s /= w;
        }
    }
    Waveform::new(out, wav.sample_rate)
}
