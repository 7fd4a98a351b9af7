use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AudioClip, AudioError};
use crate::rng::keyed_rng;

/// How a full track is reduced to the single clip the pipeline sees.
///
/// Tracks shorter than `long_track_threshold_s` keep their opening
/// `clip_len_s` seconds (or everything, if shorter). Longer tracks take
/// `active_interval` with probability `active_probability` and the opening
/// window otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropPolicy {
    pub long_track_threshold_s: f64,
    pub active_interval: (f64, f64),
    pub active_probability: f64,
    pub clip_len_s: f64,
    pub rng_seed: u64,
}

impl Default for CropPolicy {
    fn default() -> Self {
        Self {
            long_track_threshold_s: 60.0,
            active_interval: (30.0, 55.0),
            active_probability: 0.8,
            clip_len_s: 25.0,
            rng_seed: 0,
        }
    }
}

impl CropPolicy {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        let (start, end) = self.active_interval;
        if !(0.0..=1.0).contains(&self.active_probability) {
            return Err(AudioError::InvalidClip(format!(
                "active probability {} outside [0, 1]",
                self.active_probability
            )));
        }
        if ((end - start) - self.clip_len_s).abs() > 1e-9 {
            return Err(AudioError::InvalidClip(format!(
                "active interval [{start}, {end}) does not span {} s",
                self.clip_len_s
            )));
        }
        if self.clip_len_s <= 0.0 || self.clip_len_s > super::MAX_CLIP_SECONDS {
            return Err(AudioError::InvalidClip(format!("clip length {} s", self.clip_len_s)));
        }
        Ok(())
    }

    /// Start offset chosen for a track of `duration_s` seconds.
    pub fn choose_offset(&self, track_id: &str, duration_s: f64) -> f64 {
        if duration_s < self.long_track_threshold_s {
            return 0.0;
        }
        let mut rng = keyed_rng(self.rng_seed, track_id);
        let draw: f64 = rng.random();
        if draw < self.active_probability {
            self.active_interval.0
        } else {
            0.0
        }
    }
}

/// Crops a full track to one clip according to `policy`.
pub fn crop_clip(track: &AudioClip, policy: &CropPolicy) -> Result<AudioClip, AudioError> {
    policy.validate()?;
    if track.is_empty() {
        return Err(AudioError::EmptyTrack(track.track_id.clone()));
    }
    let offset = policy.choose_offset(&track.track_id, track.duration_s);
    Ok(track.slice(offset, policy.clip_len_s))
}

/// Every consecutive `clip_len_s` window of a track, used by adapters that
/// take all crops for captioning. A trailing partial window is kept.
pub fn crop_all(track: &AudioClip, clip_len_s: f64) -> Result<Vec<AudioClip>, AudioError> {
    if track.is_empty() {
        return Err(AudioError::EmptyTrack(track.track_id.clone()));
    }
    let mut clips = Vec::new();
    let mut start = 0.0;
    while start < track.duration_s - 1e-9 {
        let clip = track.slice(start, clip_len_s);
        if clip.is_empty() {
            break;
        }
        clips.push(clip);
        start += clip_len_s;
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(id: &str, secs: f64, rate: u32) -> AudioClip {
        let n = (secs * rate as f64).round() as usize;
        let samples = (0..n).map(|i| ((i % 100) as f32 / 100.0) - 0.5).collect();
        AudioClip::new(id, samples, rate, 0.0).unwrap()
    }

    #[test]
    fn short_track_is_kept_whole() {
        let t = track("a", 20.0, 8000);
        let clip = crop_clip(&t, &CropPolicy::default()).unwrap();
        assert_eq!(clip.offset_s, 0.0);
        assert_eq!(clip.samples, t.samples);
    }

    #[test]
    fn medium_track_keeps_opening_window() {
        let t = track("b", 45.0, 8000);
        let clip = crop_clip(&t, &CropPolicy::default()).unwrap();
        assert_eq!(clip.offset_s, 0.0);
        assert_eq!(clip.duration_s, 25.0);
        assert_eq!(clip.samples[..], t.samples[..200_000]);
    }

    #[test]
    fn long_track_uses_one_of_two_windows() {
        let t = track("c", 90.0, 1000);
        for seed in 0..50 {
            let clip = crop_clip(&t, &CropPolicy::with_seed(seed)).unwrap();
            assert!(clip.offset_s == 0.0 || clip.offset_s == 30.0);
            assert_eq!(clip.duration_s, 25.0);
        }
    }

    #[test]
    fn crop_is_deterministic_per_seed_and_track() {
        let t = track("d", 90.0, 1000);
        let p = CropPolicy::with_seed(7);
        let a = crop_clip(&t, &p).unwrap();
        let b = crop_clip(&t, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_track_is_an_error() {
        let t = AudioClip::new("e", vec![], 1000, 0.0).unwrap();
        assert!(matches!(crop_clip(&t, &CropPolicy::default()), Err(AudioError::EmptyTrack(_))));
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let t = track("f", 10.0, 1000);
        let p = CropPolicy {
            active_probability: 1.5,
            ..CropPolicy::default()
        };
        assert!(crop_clip(&t, &p).is_err());
    }

    #[test]
    fn crop_all_tiles_the_track() {
        let t = track("g", 60.0, 1000);
        let clips = crop_all(&t, 25.0).unwrap();
        let offsets: Vec<f64> = clips.iter().map(|c| c.offset_s).collect();
        assert_eq!(offsets, vec![0.0, 25.0, 50.0]);
        assert_eq!(clips[2].duration_s, 10.0);
    }

    proptest::proptest! {
        #[test]
        fn clip_stays_inside_track(secs in 0.5f64..200.0, seed in 0u64..1000) {
            let t = track("p", secs, 100);
            let clip = crop_clip(&t, &CropPolicy::with_seed(seed)).unwrap();
            proptest::prop_assert!(clip.duration_s <= 25.0 + 1e-9);
            proptest::prop_assert!(clip.offset_s + clip.duration_s <= t.duration_s + 1e-9);
        }
    }
}
