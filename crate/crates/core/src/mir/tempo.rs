use super::{Analysis, MirConfig, MirError, Spectrogram, MAX_BPM, MIN_BPM};
use crate::audio::AudioClip;

const MIN_SECONDS: f64 = 5.0;
/// Log compression applied to magnitudes before differencing.
const LOG_GAIN: f32 = 100.0;
/// Gaussian smoothing of the onset envelope, in frames.
const SMOOTH_SIGMA: f64 = 1.0;

pub fn estimate_tempo(clip: &AudioClip) -> Result<f64, MirError> {
    estimate_tempo_with(clip, &MirConfig::default())
}

pub fn estimate_tempo_with(clip: &AudioClip, config: &MirConfig) -> Result<f64, MirError> {
    estimate_from(&Analysis::new(clip), config)
}

pub(crate) fn estimate_from(analysis: &Analysis, config: &MirConfig) -> Result<f64, MirError> {
    analysis.require(MIN_SECONDS)?;
    let envelope = onset_envelope(&analysis.spec);
    tempo_from_envelope(&envelope, analysis.spec.frame_rate(), config)
}

/// Spectral-flux onset strength: half-wave rectified frame-to-frame increase
/// of log-compressed magnitude, summed over bins and lightly smoothed.
pub fn onset_envelope(spec: &Spectrogram) -> Vec<f32> {
    let n = spec.n_frames();
    let mut flux = vec![0.0f32; n];
    for t in 1..n {
        let prev = &spec.frames[t - 1];
        let cur = &spec.frames[t];
        flux[t] = cur
            .iter()
            .zip(prev)
            .map(|(c, p)| ((1.0 + LOG_GAIN * c).ln() - (1.0 + LOG_GAIN * p).ln()).max(0.0))
            .sum();
    }
    smooth(&flux, SMOOTH_SIGMA)
}

fn smooth(x: &[f32], sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, w) in kernel.iter().enumerate() {
                let idx = i + j as isize - radius;
                if idx >= 0 && idx < n {
                    acc += x[idx as usize] as f64 * w;
                }
            }
            (acc / norm) as f32
        })
        .collect()
}

/// Log-normal prior over tempo, peaking at 1.0 at the configured centre.
pub(crate) fn tempo_prior(bpm: f64, config: &MirConfig) -> f64 {
    let octaves = (bpm / config.tempo_prior_bpm).log2() / config.tempo_prior_octaves;
    (-0.5 * octaves * octaves).exp()
}

pub(crate) fn tempo_from_envelope(
    envelope: &[f32],
    frame_rate: f64,
    config: &MirConfig,
) -> Result<f64, MirError> {
    let n = envelope.len();
    let mean = envelope.iter().map(|v| *v as f64).sum::<f64>() / n.max(1) as f64;
    let centred: Vec<f64> = envelope.iter().map(|v| *v as f64 - mean).collect();
    let energy: f64 = centred.iter().map(|v| v * v).sum();
    if n < 4 || energy <= 1e-12 * n as f64 {
        return Err(MirError::NoPeriodicity);
    }

    let min_lag = ((60.0 * frame_rate / MAX_BPM).floor() as usize).max(1);
    let max_lag = ((60.0 * frame_rate / MIN_BPM).ceil() as usize).min(n - 2);
    if min_lag + 2 > max_lag {
        return Err(MirError::NoPeriodicity);
    }

    // Unbiased normalisation so long lags are not penalised for overlap.
    let acf: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            let s: f64 = centred[..n - lag]
                .iter()
                .zip(&centred[lag..])
                .map(|(a, b)| a * b)
                .sum();
            s / (n - lag) as f64 / (energy / n as f64)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for lag in min_lag..=max_lag {
        let bpm = 60.0 * frame_rate / lag as f64;
        let score = acf[lag] * tempo_prior(bpm, config);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((lag, score));
        }
    }
    let (lag, _) = best.expect("lag range is non-empty");
    if acf[lag] < config.min_periodicity {
        return Err(MirError::NoPeriodicity);
    }

    // Parabolic refinement of the raw autocorrelation peak.
    let (y0, y1, y2) = (acf[lag - 1], acf[lag], acf[lag + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let delta = if denom < 0.0 {
        (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let bpm = 60.0 * frame_rate / (lag as f64 + delta);
    Ok(bpm.clamp(MIN_BPM, MAX_BPM))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse_envelope(period_frames: f64, n: usize) -> Vec<f32> {
        let mut env = vec![0.0f32; n];
        let mut t: f64 = 3.0;
        while (t as usize) < n {
            env[t.round() as usize] = 1.0;
            t += period_frames;
        }
        smooth(&env, 1.0)
    }

    #[test]
    fn pulse_train_tempo_is_recovered() {
        let fr = 22_050.0 / 512.0;
        for bpm in [90.0, 120.0, 150.0] {
            let env = pulse_envelope(60.0 * fr / bpm, 1000);
            let est = tempo_from_envelope(&env, fr, &MirConfig::default()).unwrap();
            assert!((est / bpm - 1.0).abs() < 0.04, "{bpm}: {est}");
        }
    }

    #[test]
    fn flat_envelope_has_no_periodicity() {
        let env = vec![0.5f32; 1000];
        assert_eq!(
            tempo_from_envelope(&env, 43.0, &MirConfig::default()),
            Err(MirError::NoPeriodicity)
        );
    }

    #[test]
    fn prior_peaks_at_centre() {
        let c = MirConfig::default();
        assert_eq!(tempo_prior(120.0, &c), 1.0);
        assert!((tempo_prior(60.0, &c) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((tempo_prior(240.0, &c) - tempo_prior(60.0, &c)).abs() < 1e-12);
    }
}
