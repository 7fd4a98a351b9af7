//! Musical feature estimation used to augment track metadata: global tempo,
//! key and mode, a numbered beat grid and timestamped triad chords.
//!
//! All estimators run on a 22,050 Hz mono signal analysed with a 2048-sample
//! Hann STFT at hop 512. They are deterministic.

mod beats;
mod chords;
mod chroma;
mod key;
mod stft;
mod tempo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;

pub use beats::{track_beats, track_beats_from_envelope, track_beats_with};
pub use chords::{recognize_chords, recognize_chords_with};
pub use chroma::{ChromaMapper, PITCH_NAMES};
pub use key::{estimate_key, estimate_key_with, key_from_chroma, MAJOR_PROFILE, MINOR_PROFILE};
pub use stft::Spectrogram;
pub use tempo::{estimate_tempo, estimate_tempo_with, onset_envelope};

pub const ANALYSIS_RATE: u32 = 22_050;
pub const N_FFT: usize = 2048;
pub const HOP: usize = 512;
pub const MIN_BPM: f64 = 40.0;
pub const MAX_BPM: f64 = 300.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MirError {
    #[error("need at least {needed} s of audio, got {got:.2} s")]
    InsufficientAudio { needed: f64, got: f64 },
    #[error("no periodicity in onset envelope")]
    NoPeriodicity,
    #[error("no tonal centre (best key correlation {best:.3}, chroma contrast {contrast:.3})")]
    Atonal { best: f64, contrast: f64 },
    #[error("invalid tempo {0} BPM")]
    InvalidTempo(f64),
}

/// Tunables shared by the estimators. Defaults are the values the
/// acceptance fixtures are pinned against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirConfig {
    /// Centre of the log-normal tempo prior, BPM.
    pub tempo_prior_bpm: f64,
    /// Width of the tempo prior in octaves.
    pub tempo_prior_octaves: f64,
    /// Minimum normalised autocorrelation peak accepted as periodic.
    pub min_periodicity: f64,
    /// Beat-tracker penalty weight on squared log interval deviation.
    pub beat_tightness: f64,
    /// Onset envelope upsampling factor used by the beat tracker.
    pub beat_resolution: usize,
    /// Key correlations below this floor are reported as atonal.
    pub key_correlation_floor: f64,
    /// Chroma with a coefficient of variation below this is atonal.
    pub key_min_contrast: f64,
    /// Self-transition probability of the chord path decoder.
    pub chord_self_transition: f64,
    /// Frames quieter than this RMS are labelled "N".
    pub chord_energy_floor: f64,
}

impl Default for MirConfig {
    fn default() -> Self {
        Self {
            tempo_prior_bpm: 120.0,
            tempo_prior_octaves: 1.0,
            min_periodicity: 0.1,
            beat_tightness: 100.0,
            beat_resolution: 4,
            key_correlation_floor: 0.5,
            key_min_contrast: 0.1,
            chord_self_transition: 0.9,
            chord_energy_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

/// A global key: tonic pitch class (0 = C) and mode.
///
/// Serialized as text, e.g. `"F# minor"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyLabel {
    tonic: u8,
    pub mode: Mode,
}

impl KeyLabel {
    pub fn new(tonic: u8, mode: Mode) -> Option<Self> {
        (tonic < 12).then_some(Self { tonic, mode })
    }

    pub fn major(tonic: u8) -> Self {
        Self::new(tonic % 12, Mode::Major).unwrap()
    }

    pub fn minor(tonic: u8) -> Self {
        Self::new(tonic % 12, Mode::Minor).unwrap()
    }

    pub fn tonic(&self) -> u8 {
        self.tonic
    }

    /// All 24 keys, ordered by tonic then major before minor.
    pub fn all() -> impl Iterator<Item = KeyLabel> {
        (0..12u8).flat_map(|t| [KeyLabel::major(t), KeyLabel::minor(t)])
    }

    pub fn transposed(&self, semitones: i32) -> Self {
        let tonic = (self.tonic as i32 + semitones).rem_euclid(12) as u8;
        Self { tonic, mode: self.mode }
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "major",
            Mode::Minor => "minor",
        };
        write!(f, "{} {mode}", PITCH_NAMES[self.tonic as usize])
    }
}

impl FromStr for KeyLabel {
    type Err = String;

    /// Parses the canonical `"<tonic> <mode>"` form (flats accepted).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let tonic = parts
            .next()
            .and_then(parse_pitch_class)
            .ok_or_else(|| format!("bad tonic in {s:?}"))?;
        let mode = match parts.next().map(str::to_ascii_lowercase).as_deref() {
            None | Some("major") | Some("maj") => Mode::Major,
            Some("minor") | Some("min") => Mode::Minor,
            Some(other) => return Err(format!("bad mode {other:?}")),
        };
        Ok(KeyLabel { tonic, mode })
    }
}

impl Serialize for KeyLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeyLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `C`, `F#`, `Db`, ... to a pitch class, folding enharmonics.
pub fn parse_pitch_class(token: &str) -> Option<u8> {
    let mut chars = token.chars();
    let base: i32 = match chars.next()? {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let shift = match chars.as_str() {
        "" => 0,
        "#" | "♯" => 1,
        "b" | "♭" => -1,
        _ => return None,
    };
    Some((base + shift).rem_euclid(12) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub time_s: f64,
    pub beat_number: u8,
}

/// Beat times with their position in the bar (1-based, 4/4).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    pub beats: Vec<Beat>,
    pub meter: u8,
}

impl BeatGrid {
    pub fn times(&self) -> Vec<f64> {
        self.beats.iter().map(|b| b.time_s).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChordLabel {
    NoChord,
    Triad { root: u8, mode: Mode },
}

impl ChordLabel {
    /// The 24 triads followed by no-chord; index order used by the decoder.
    pub fn vocabulary() -> Vec<ChordLabel> {
        let mut v: Vec<ChordLabel> = (0..12u8)
            .map(|root| ChordLabel::Triad { root, mode: Mode::Major })
            .chain((0..12u8).map(|root| ChordLabel::Triad { root, mode: Mode::Minor }))
            .collect();
        v.push(ChordLabel::NoChord);
        v
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChordLabel::NoChord => f.write_str("N"),
            ChordLabel::Triad { root, mode: Mode::Major } => write!(f, "{root}:maj"),
            ChordLabel::Triad { root, mode: Mode::Minor } => write!(f, "{root}:min"),
        }
    }
}

impl FromStr for ChordLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "N" {
            return Ok(ChordLabel::NoChord);
        }
        let (root, quality) = s.split_once(':').ok_or_else(|| format!("bad chord {s:?}"))?;
        let root: u8 = root.parse().map_err(|_| format!("bad chord root {root:?}"))?;
        if root > 11 {
            return Err(format!("chord root {root} out of range"));
        }
        let mode = match quality {
            "maj" => Mode::Major,
            "min" => Mode::Minor,
            _ => return Err(format!("bad chord quality {quality:?}")),
        };
        Ok(ChordLabel::Triad { root, mode })
    }
}

impl Serialize for ChordLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChordLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: ChordLabel,
}

/// The four estimated features attached to a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedMetadata {
    pub tempo_bpm: f64,
    pub key: KeyLabel,
    pub beat_grid: BeatGrid,
    pub chords: Vec<ChordSegment>,
    pub estimator_version: String,
}

pub const ESTIMATOR_VERSION: &str = concat!("musiq-mir/", env!("CARGO_PKG_VERSION"));

/// Runs all four estimators on one clip.
pub fn augment(clip: &AudioClip, config: &MirConfig) -> Result<AugmentedMetadata, MirError> {
    let analysis = Analysis::new(clip);
    let tempo_bpm = tempo::estimate_from(&analysis, config)?;
    let key = key::estimate_from(&analysis, config)?;
    let beat_grid = beats::track_from(&analysis, tempo_bpm, config)?;
    let chords = chords::recognize_from(&analysis, config)?;
    Ok(AugmentedMetadata {
        tempo_bpm,
        key,
        beat_grid,
        chords,
        estimator_version: ESTIMATOR_VERSION.to_string(),
    })
}

/// A clip brought to the analysis rate with its spectrogram.
pub(crate) struct Analysis {
    pub duration_s: f64,
    pub spec: Spectrogram,
}

impl Analysis {
    pub fn new(clip: &AudioClip) -> Self {
        let clip = clip.resampled(ANALYSIS_RATE);
        let spec = Spectrogram::compute(&clip.samples, ANALYSIS_RATE, N_FFT, HOP);
        Self {
            duration_s: clip.duration_s,
            spec,
        }
    }

    pub fn require(&self, needed: f64) -> Result<(), MirError> {
        if self.duration_s + 1e-9 < needed {
            Err(MirError::InsufficientAudio {
                needed,
                got: self.duration_s,
            })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_label_round_trips_through_text() {
        for key in KeyLabel::all() {
            let text = key.to_string();
            assert_eq!(text.parse::<KeyLabel>().unwrap(), key);
        }
        assert_eq!("F# minor".parse::<KeyLabel>().unwrap(), KeyLabel::minor(6));
        assert_eq!("Db major".parse::<KeyLabel>().unwrap(), KeyLabel::major(1));
    }

    #[test]
    fn tonic_out_of_range_is_rejected() {
        assert!(KeyLabel::new(12, Mode::Major).is_none());
    }

    #[test]
    fn chord_labels_round_trip() {
        for label in ChordLabel::vocabulary() {
            assert_eq!(label.to_string().parse::<ChordLabel>().unwrap(), label);
        }
        assert_eq!(ChordLabel::vocabulary().len(), 25);
        assert!("12:maj".parse::<ChordLabel>().is_err());
    }

    #[test]
    fn enharmonics_fold_to_sharps() {
        assert_eq!(parse_pitch_class("Cb"), Some(11));
        assert_eq!(parse_pitch_class("E#"), Some(5));
        assert_eq!(parse_pitch_class("Bb"), Some(10));
        assert_eq!(parse_pitch_class("H"), None);
    }
}
