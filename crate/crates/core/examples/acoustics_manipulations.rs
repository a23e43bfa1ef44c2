//! Measure, rescale, time-stretch and pitch-flatten a synthetic voiced
//! utterance, writing each result as a WAV file.
//!
//! cargo run --release --example acoustics_manipulations [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use speech_icl::acoustics::{flatten_pitch, measure, scale_intensity, time_stretch, write_wav, Waveform};

fn utterance() -> Waveform {
    let fs = 16000;
    let mut phase = 0.0;
    let samples = (0..fs * 2)
        .map(|i| {
            let t = i as f64 / fs as f64;
            let f0 = 160.0 + 25.0 * (2.0 * PI * 3.0 * t).sin();
            phase += 2.0 * PI * f0 / fs as f64;
            let syllables = 0.5 + 0.5 * (2.0 * PI * 2.5 * t).sin().abs();
            0.1 * syllables * (1..=6).map(|k| (k as f64 * phase).sin() / k as f64).sum::<f64>()
        })
        .collect();
    Waveform::new(samples, fs as u32).expect("finite samples")
}

fn main() -> speech_icl::error::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let wav = utterance();
    let show = |name: &str, w: &Waveform| -> speech_icl::error::Result<()> {
        let m = measure(w)?;
        let f0 = m.pitch.map(|p| p.mean).unwrap_or(f64::NAN);
        println!(
            "{name:<10} {:.2}s  F0 {f0:6.1} Hz (std {:5.2})  intensity {:5.1} dB",
            m.duration,
            m.pitch_std.unwrap_or(f64::NAN),
            m.intensity.mean
        );
        write_wav(&dir.join(format!("{name}.wav")), w)
    };
    show("original", &wav)?;
    show("quiet", &scale_intensity(&wav, 30.0)?)?;
    show("fast", &time_stretch(&wav, 2.0)?)?;
    show("slow", &time_stretch(&wav, 0.5)?)?;
    show("flat", &flatten_pitch(&wav)?)?;
    println!("wrote WAV files to {}", dir.display());
    Ok(())
}
