use super::tempo::onset_envelope;
use super::{Analysis, Beat, BeatGrid, MirConfig, MirError, MAX_BPM, MIN_BPM};
use crate::audio::AudioClip;

const METER: usize = 4;

pub fn track_beats(clip: &AudioClip, tempo_bpm: f64) -> Result<BeatGrid, MirError> {
    track_beats_with(clip, tempo_bpm, &MirConfig::default())
}

pub fn track_beats_with(
    clip: &AudioClip,
    tempo_bpm: f64,
    config: &MirConfig,
) -> Result<BeatGrid, MirError> {
    track_from(&Analysis::new(clip), tempo_bpm, config)
}

pub(crate) fn track_from(
    analysis: &Analysis,
    tempo_bpm: f64,
    config: &MirConfig,
) -> Result<BeatGrid, MirError> {
    let envelope = onset_envelope(&analysis.spec);
    track_beats_from_envelope(&envelope, analysis.spec.frame_rate(), tempo_bpm, config)
}

/// Dynamic-programming beat tracker over an onset envelope sampled at
/// `frame_rate` Hz.
///
/// Each beat earns the envelope value at its position and pays
/// `tightness * ln(interval / period)^2` for its distance to the previous
/// beat. The envelope is linearly upsampled by `config.beat_resolution` so
/// beat spacing is not quantised to the STFT hop.
pub fn track_beats_from_envelope(
    envelope: &[f32],
    frame_rate: f64,
    tempo_bpm: f64,
    config: &MirConfig,
) -> Result<BeatGrid, MirError> {
    if !tempo_bpm.is_finite() || !(MIN_BPM..=MAX_BPM).contains(&tempo_bpm) {
        return Err(MirError::InvalidTempo(tempo_bpm));
    }
    let empty = BeatGrid {
        beats: Vec::new(),
        meter: METER as u8,
    };
    if envelope.len() < 2 || envelope.iter().all(|v| *v <= 0.0) {
        return Ok(empty);
    }

    let res = config.beat_resolution.max(1);
    let env = normalise(&upsample(envelope, res));
    let rate = frame_rate * res as f64;
    let period = 60.0 * rate / tempo_bpm;
    let n = env.len();

    let lo = (period / 2.0).round().max(1.0) as usize;
    let hi = (2.0 * period).round() as usize;
    let penalties: Vec<f64> = (0..=hi)
        .map(|d| {
            if d < lo {
                f64::NEG_INFINITY
            } else {
                let x = (d as f64 / period).ln();
                -config.beat_tightness * x * x
            }
        })
        .collect();

    let mut score = vec![0.0f64; n];
    let mut backlink: Vec<Option<usize>> = vec![None; n];
    for t in 0..n {
        let mut best: Option<(usize, f64)> = None;
        if t >= lo {
            let start = t.saturating_sub(hi);
            for prev in start..=t - lo {
                let s = score[prev] + penalties[t - prev];
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((prev, s));
                }
            }
        }
        match best {
            Some((prev, s)) if s > 0.0 => {
                score[t] = env[t] + s;
                backlink[t] = Some(prev);
            }
            _ => score[t] = env[t],
        }
    }

    // Last beat: best cumulative score within the final period.
    let tail_start = n.saturating_sub(period.ceil() as usize);
    let mut last = tail_start;
    for t in tail_start..n {
        if score[t] > score[last] {
            last = t;
        }
    }
    let mut frames = vec![last];
    while let Some(prev) = backlink[*frames.last().unwrap()] {
        frames.push(prev);
    }
    frames.reverse();
    trim_weak_edges(&mut frames, &env);

    // Bar phase: the residue class (mod 4) collecting the most onset energy
    // is taken as the downbeat.
    let mut strength = [0.0f64; METER];
    for (i, f) in frames.iter().enumerate() {
        strength[i % METER] += env[*f];
    }
    let mut phase = 0;
    for p in 1..METER {
        if strength[p] > strength[phase] {
            phase = p;
        }
    }

    let beats = frames
        .iter()
        .enumerate()
        .map(|(i, f)| Beat {
            time_s: *f as f64 / rate,
            beat_number: ((i + METER - phase) % METER + 1) as u8,
        })
        .collect();
    Ok(BeatGrid {
        beats,
        meter: METER as u8,
    })
}

fn upsample(x: &[f32], factor: usize) -> Vec<f64> {
    if factor == 1 {
        return x.iter().map(|v| *v as f64).collect();
    }
    let mut out = Vec::with_capacity((x.len() - 1) * factor + 1);
    for w in x.windows(2) {
        let (a, b) = (w[0] as f64, w[1] as f64);
        for j in 0..factor {
            out.push(a + (b - a) * j as f64 / factor as f64);
        }
    }
    out.push(*x.last().unwrap() as f64);
    out
}

/// Scales to unit standard deviation; a constant envelope is left as is.
fn normalise(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 1e-9 * mean.abs().max(1.0) {
        x.to_vec()
    } else {
        x.iter().map(|v| v / sd).collect()
    }
}

/// Drops leading and trailing beats whose onset strength is below half the
/// median strength at the tracked beats.
fn trim_weak_edges(frames: &mut Vec<usize>, env: &[f64]) {
    if frames.len() < 3 {
        return;
    }
    let mut strengths: Vec<f64> = frames.iter().map(|f| env[*f]).collect();
    strengths.sort_by(f64::total_cmp);
    let threshold = 0.5 * strengths[strengths.len() / 2];
    while frames.len() > 1 && env[frames[0]] < threshold {
        frames.remove(0);
    }
    while frames.len() > 1 && env[*frames.last().unwrap()] < threshold {
        frames.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_envelope_gives_period_spacing() {
        // Oracle: with constant reward the optimal interval is the integer
        // nearest the period, so spacing stays within one upsampled frame.
        let fr = 22_050.0 / 512.0;
        let env = vec![1.0f32; (25.0 * fr) as usize];
        let grid = track_beats_from_envelope(&env, fr, 120.0, &MirConfig::default()).unwrap();
        assert!(grid.beats.len() > 40);
        for w in grid.beats.windows(2) {
            let gap = w[1].time_s - w[0].time_s;
            assert!((gap - 0.5).abs() <= 0.010, "gap {gap}");
        }
    }

    #[test]
    fn beat_numbers_cycle_through_the_bar() {
        let fr = 100.0;
        let mut env = vec![0.0f32; 1000];
        for (i, t) in (10..1000).step_by(50).enumerate() {
            env[t] = if i % 4 == 2 { 3.0 } else { 1.0 };
        }
        let grid = track_beats_from_envelope(&env, fr, 120.0, &MirConfig::default()).unwrap();
        let numbers: Vec<u8> = grid.beats.iter().map(|b| b.beat_number).collect();
        for w in numbers.windows(2) {
            assert_eq!(w[1], w[0] % 4 + 1);
        }
        // Accented beats are downbeats.
        for b in &grid.beats {
            let t = (b.time_s * fr).round() as usize;
            if env[t] > 2.0 {
                assert_eq!(b.beat_number, 1);
            }
        }
    }

    #[test]
    fn silent_envelope_gives_empty_grid() {
        let grid =
            track_beats_from_envelope(&[0.0; 500], 43.0, 120.0, &MirConfig::default()).unwrap();
        assert!(grid.is_empty());
    }

    #[test]
    fn out_of_range_tempo_is_rejected() {
        let r = track_beats_from_envelope(&[1.0; 500], 43.0, 10.0, &MirConfig::default());
        assert_eq!(r, Err(MirError::InvalidTempo(10.0)));
    }

    #[test]
    fn times_strictly_increase() {
        let fr = 43.0;
        let env: Vec<f32> = (0..1000).map(|i| ((i * 7919) % 13) as f32).collect();
        let grid = track_beats_from_envelope(&env, fr, 97.0, &MirConfig::default()).unwrap();
        for w in grid.beats.windows(2) {
            assert!(w[1].time_s > w[0].time_s);
        }
    }
}
