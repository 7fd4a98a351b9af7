use super::chroma::{contrast, pearson, ChromaMapper};
use super::{Analysis, KeyLabel, MirConfig, MirError};
use crate::audio::AudioClip;

const MIN_SECONDS: f64 = 5.0;

/// Krumhansl–Kessler probe-tone ratings, tonic first.
pub const MAJOR_PROFILE: [f64; 12] = [
    6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88,
];
pub const MINOR_PROFILE: [f64; 12] = [
    6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17,
];

pub fn estimate_key(clip: &AudioClip) -> Result<KeyLabel, MirError> {
    estimate_key_with(clip, &MirConfig::default())
}

pub fn estimate_key_with(clip: &AudioClip, config: &MirConfig) -> Result<KeyLabel, MirError> {
    estimate_from(&Analysis::new(clip), config)
}

pub(crate) fn estimate_from(analysis: &Analysis, config: &MirConfig) -> Result<KeyLabel, MirError> {
    analysis.require(MIN_SECONDS)?;
    let spec = &analysis.spec;
    let mapper = ChromaMapper::new(spec.sample_rate, spec.n_fft);
    let mut mean = [0.0f64; 12];
    let mut density = [0.0f64; 12];
    for frame in &spec.frames {
        for (acc, v) in mean.iter_mut().zip(mapper.frame(frame)) {
            *acc += v;
        }
        for (acc, v) in density.iter_mut().zip(mapper.density(frame)) {
            *acc += v;
        }
    }
    let spread = contrast(&density);
    let key = key_from_chroma(&mean, config)?;
    if spread < config.key_min_contrast {
        return Err(MirError::Atonal {
            best: best_correlation(&mean),
            contrast: spread,
        });
    }
    Ok(key)
}

fn best_correlation(chroma: &[f64; 12]) -> f64 {
    KeyLabel::all()
        .map(|k| pearson(chroma, &rotated_profile(k)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn rotated_profile(key: KeyLabel) -> [f64; 12] {
    let profile = match key.mode {
        super::Mode::Major => &MAJOR_PROFILE,
        super::Mode::Minor => &MINOR_PROFILE,
    };
    let mut rotated = [0.0; 12];
    for (pc, slot) in rotated.iter_mut().enumerate() {
        *slot = profile[(pc + 12 - key.tonic() as usize) % 12];
    }
    rotated
}

/// Correlates a mean chroma vector with the 24 rotated key profiles.
///
/// Ties go to the lower tonic, then major before minor.
pub fn key_from_chroma(chroma: &[f64; 12], config: &MirConfig) -> Result<KeyLabel, MirError> {
    let spread = contrast(chroma);
    let mut best: Option<(KeyLabel, f64)> = None;
    for key in KeyLabel::all() {
        let r = pearson(chroma, &rotated_profile(key));
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((key, r));
        }
    }
    let (key, r) = best.expect("24 candidate keys");
    if r < config.key_correlation_floor || spread < config.key_min_contrast {
        return Err(MirError::Atonal { best: r, contrast: spread });
    }
    Ok(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator(pcs: &[usize]) -> [f64; 12] {
        let mut c = [0.01; 12];
        for pc in pcs {
            c[*pc] = 1.0;
        }
        c
    }

    #[test]
    fn profile_itself_maps_to_its_key() {
        let c = MirConfig::default();
        assert_eq!(key_from_chroma(&MAJOR_PROFILE, &c).unwrap(), KeyLabel::major(0));
        assert_eq!(key_from_chroma(&MINOR_PROFILE, &c).unwrap(), KeyLabel::minor(0));
    }

    #[test]
    fn triad_indicators_pick_the_major_key() {
        let c = MirConfig::default();
        assert_eq!(key_from_chroma(&indicator(&[0, 4, 7]), &c).unwrap(), KeyLabel::major(0));
        assert_eq!(key_from_chroma(&indicator(&[7, 11, 2]), &c).unwrap(), KeyLabel::major(7));
    }

    #[test]
    fn flat_chroma_is_atonal() {
        let err = key_from_chroma(&[1.0; 12], &MirConfig::default()).unwrap_err();
        assert!(matches!(err, MirError::Atonal { .. }));
    }

    #[test]
    fn transposing_chroma_rotates_the_tonic() {
        let c = MirConfig::default();
        let base = indicator(&[9, 0, 4]);
        let k0 = key_from_chroma(&base, &c).unwrap();
        for shift in 1..12 {
            let mut rotated = [0.0; 12];
            for pc in 0..12 {
                rotated[(pc + shift) % 12] = base[pc];
            }
            let k = key_from_chroma(&rotated, &c).unwrap();
            assert_eq!(k, k0.transposed(shift as i32));
        }
    }
}
