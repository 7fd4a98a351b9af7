//! Audio preparation: WAV decoding, resampling, mono mixdown and the
//! per-track crop policy that produces the fixed-length clips every
//! downstream stage consumes.

mod crop;
mod resample;
mod wav;

pub use crop::{crop_all, crop_clip, CropPolicy};
pub use resample::{resample, Resampler};
pub use wav::{clip_file_name, decode_and_normalize, decode_wav, encode_wav_i16, write_clip_wav};

use serde::{Deserialize, Serialize};

/// Longest clip any stage accepts, in seconds.
pub const MAX_CLIP_SECONDS: f64 = 25.0;

/// Sample rates accepted by [`decode_and_normalize`].
pub const SUPPORTED_RATES: [u32; 3] = [16_000, 22_050, 44_100];

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt audio: {0}")]
    CorruptAudio(String),
    #[error("unsupported target sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("track {0} has no samples")]
    EmptyTrack(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono PCM segment of a track.
///
/// `samples` are amplitudes in `[-1, 1]`. `offset_s` is measured from the
/// start of the source track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub track_id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub offset_s: f64,
    pub duration_s: f64,
}

impl AudioClip {
    /// Builds a clip starting at `offset_s`, deriving the duration from the
    /// sample count. Amplitudes outside `[-1, 1]` or non-finite values are
    /// rejected.
    pub fn new(
        track_id: impl Into<String>,
        samples: Vec<f32>,
        sample_rate: u32,
        offset_s: f64,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate is zero".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::InvalidClip(format!("amplitude {bad} outside [-1, 1]")));
        }
        let duration_s = samples.len() as f64 / sample_rate as f64;
        Ok(Self {
            track_id: track_id.into(),
            samples,
            sample_rate,
            offset_s,
            duration_s,
        })
    }

    /// Same as [`AudioClip::new`] but clamps amplitudes into `[-1, 1]` and
    /// maps non-finite values to silence.
    pub fn from_unclamped(
        track_id: impl Into<String>,
        mut samples: Vec<f32>,
        sample_rate: u32,
        offset_s: f64,
    ) -> Result<Self, AudioError> {
        for s in samples.iter_mut() {
            *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
        }
        Self::new(track_id, samples, sample_rate, offset_s)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Returns a copy of this clip at `target_rate`.
    pub fn resampled(&self, target_rate: u32) -> AudioClip {
        if target_rate == self.sample_rate {
            return self.clone();
        }
        let samples = resample(&self.samples, self.sample_rate, target_rate);
        AudioClip::from_unclamped(self.track_id.clone(), samples, target_rate, self.offset_s)
            .expect("resampled clip has a non-zero rate")
    }

    /// Sub-range `[start_s, start_s + len_s)` of this clip, clamped to the
    /// available samples. The returned offset is relative to the source track.
    pub fn slice(&self, start_s: f64, len_s: f64) -> AudioClip {
        let sr = self.sample_rate as f64;
        let start = ((start_s * sr).round() as usize).min(self.samples.len());
        let end = (((start_s + len_s) * sr).round() as usize).min(self.samples.len());
        AudioClip {
            track_id: self.track_id.clone(),
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
            offset_s: self.offset_s + start as f64 / sr,
            duration_s: (end - start) as f64 / sr,
        }
    }
}
