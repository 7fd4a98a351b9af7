//! Synthetic test signals with known tempo, key and chords.
//!
//! These back the estimator fixtures and the desk-scale demo corpus.

use std::f64::consts::PI;

use rand::Rng;

use crate::audio::AudioClip;
use crate::rng::seeded_rng;

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// Short decaying noise bursts every `interval_s`, starting at `first_s`.
pub fn click_track(
    interval_s: f64,
    first_s: f64,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Vec<f32> {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut out = vec![0.0f32; n];
    let burst = (0.010 * sample_rate as f64) as usize;
    let mut rng = seeded_rng(seed);
    let mut t = first_s;
    while t < duration_s {
        let start = (t * sample_rate as f64).round() as usize;
        for i in 0..burst {
            if start + i >= n {
                break;
            }
            let decay = (-(i as f64) / (burst as f64 / 4.0)).exp();
            let noise: f64 = rng.random_range(-1.0..1.0);
            out[start + i] += (0.8 * decay * noise) as f32;
        }
        t += interval_s;
    }
    out
}

/// Sum of equal-amplitude sines at the given MIDI notes.
pub fn tone_mixture(notes: &[f64], duration_s: f64, sample_rate: u32, amplitude: f64) -> Vec<f32> {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let per_note = amplitude / notes.len().max(1) as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            notes
                .iter()
                .map(|m| per_note * (2.0 * PI * midi_to_hz(*m) * t).sin())
                .sum::<f64>() as f32
        })
        .collect()
}

/// A triad repeated as one-second notes with short fades, so the signal
/// loops rather than drones.
pub fn triad_loop(notes: &[f64], duration_s: f64, sample_rate: u32) -> Vec<f32> {
    let mut out = tone_mixture(notes, duration_s, sample_rate, 0.6);
    let period = sample_rate as usize;
    let fade = sample_rate as usize / 50;
    for (i, s) in out.iter_mut().enumerate() {
        let pos = i % period;
        let gain = if pos < fade {
            pos as f64 / fade as f64
        } else if pos > period - fade {
            (period - pos) as f64 / fade as f64
        } else {
            1.0
        };
        *s *= gain as f32;
    }
    out
}

/// Triads played back to back, each for `seconds` seconds.
pub fn chord_sequence(chords: &[(&[f64], f64)], sample_rate: u32) -> Vec<f32> {
    chords
        .iter()
        .flat_map(|(notes, secs)| tone_mixture(notes, *secs, sample_rate, 0.6))
        .collect()
}

pub fn white_noise(duration_s: f64, sample_rate: u32, amplitude: f64, seed: u64) -> Vec<f32> {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| (amplitude * rng.random_range(-1.0..1.0)) as f32)
        .collect()
}

/// Adds `b` into `a` sample by sample (lengths may differ).
pub fn mix(a: &[f32], b: &[f32]) -> Vec<f32> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

pub fn clip(track_id: &str, samples: Vec<f32>, sample_rate: u32) -> AudioClip {
    AudioClip::from_unclamped(track_id, samples, sample_rate, 0.0).expect("valid synthetic clip")
}

/// Ground truth of one generated demo track.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DemoTrack {
    pub track_id: String,
    pub tempo_bpm: f64,
    pub key: crate::mir::KeyLabel,
}

const DEMO_GENRES: [&str; 5] = ["electronic", "pop", "ambient", "techno", "house"];

/// Writes `n` tracks for the `generic` adapter into `dir`: each is a
/// sustained major triad over a click track, with a JSON sidecar.
pub fn write_demo_corpus(dir: &std::path::Path, n: usize, duration_s: f64) -> Result<Vec<DemoTrack>, crate::audio::AudioError> {
    const RATE: u32 = 22_050;
    std::fs::create_dir_all(dir)?;
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let tonic = (i * 7 % 12) as u8;
        let root = 60.0 + tonic as f64;
        let tempo_bpm = 96.0 + 8.0 * (i % 10) as f64;
        let tones = tone_mixture(&[root, root + 4.0, root + 7.0], duration_s, RATE, 0.4);
        let clicks: Vec<f32> = click_track(60.0 / tempo_bpm, 0.25, duration_s, RATE, i as u64)
            .into_iter()
            .map(|s| s * 0.6)
            .collect();
        let samples = clip("", mix(&tones, &clicks), RATE).samples;
        let track_id = format!("demo_{i:02}");
        std::fs::write(
            dir.join(format!("{track_id}.wav")),
            crate::audio::encode_wav_i16(&samples, RATE)?,
        )?;
        let sidecar = serde_json::json!({
            "title": format!("Demo {i}"),
            "artist": "Synth Ensemble",
            "genre": DEMO_GENRES[i % DEMO_GENRES.len()],
            "instruments": ["synthesizer", "percussion"],
        });
        std::fs::write(dir.join(format!("{track_id}.json")), serde_json::to_vec_pretty(&sidecar).expect("json"))?;
        truth.push(DemoTrack {
            track_id,
            tempo_bpm,
            key: crate::mir::KeyLabel::major(tonic),
        });
    }
    Ok(truth)
}
