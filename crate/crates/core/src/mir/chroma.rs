use super::Spectrogram;

pub const PITCH_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// Lowest and highest MIDI notes folded into chroma (C3..B6).
const MIN_NOTE: i32 = 48;
const MAX_NOTE: i32 = 95;

/// Folds STFT power into 12 pitch classes.
#[derive(Debug, Clone)]
pub struct ChromaMapper {
    bin_hz: f64,
    /// `(bin, note index)` for every bin inside the note range.
    bins: Vec<(usize, usize)>,
    band_sizes: Vec<usize>,
    bands_per_class: [usize; 12],
}

fn note_of(freq: f64) -> f64 {
    69.0 + 12.0 * (freq / 440.0).log2()
}

impl ChromaMapper {
    pub fn new(sample_rate: u32, n_fft: usize) -> Self {
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let n_notes = (MAX_NOTE - MIN_NOTE + 1) as usize;
        let mut band_sizes = vec![0usize; n_notes];
        let mut bins = Vec::new();
        for k in 1..=n_fft / 2 {
            let note = note_of(k as f64 * bin_hz).round() as i32;
            if (MIN_NOTE..=MAX_NOTE).contains(&note) {
                let idx = (note - MIN_NOTE) as usize;
                band_sizes[idx] += 1;
                bins.push((k, idx));
            }
        }
        let mut bands_per_class = [0usize; 12];
        for (idx, size) in band_sizes.iter().enumerate() {
            if *size > 0 {
                bands_per_class[(idx as i32 + MIN_NOTE).rem_euclid(12) as usize] += 1;
            }
        }
        Self {
            bin_hz,
            bins,
            band_sizes,
            bands_per_class,
        }
    }

    /// Peak-based chroma.
    ///
    /// Every local spectral maximum is placed at its parabolically
    /// interpolated frequency and contributes the power of its main lobe to
    /// the nearest pitch class. Window leakage into neighbouring semitones is
    /// therefore not counted against low notes.
    pub fn frame(&self, magnitudes: &[f32]) -> [f64; 12] {
        let mut chroma = [0.0f64; 12];
        let n = magnitudes.len();
        let peak = magnitudes.iter().fold(0.0f32, |a, b| a.max(*b)) as f64;
        if peak <= 0.0 {
            return chroma;
        }
        let floor = peak * 1e-3;
        for k in 2..n.saturating_sub(1) {
            let (l, c, r) = (
                magnitudes[k - 1] as f64,
                magnitudes[k] as f64,
                magnitudes[k + 1] as f64,
            );
            if c <= l || c < r || c < floor {
                continue;
            }
            let (ll, lc, lr) = (l.max(1e-12).ln(), c.ln(), r.max(1e-12).ln());
            let denom = ll - 2.0 * lc + lr;
            let delta = if denom.abs() > 1e-12 {
                (0.5 * (ll - lr) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let note = note_of((k as f64 + delta) * self.bin_hz).round() as i32;
            if (MIN_NOTE..=MAX_NOTE).contains(&note) {
                chroma[note.rem_euclid(12) as usize] += l * l + c * c + r * r;
            }
        }
        chroma
    }

    /// Mean power per bin for each semitone band, averaged per pitch class.
    /// Broadband noise comes out flat whatever the band widths.
    pub fn density(&self, magnitudes: &[f32]) -> [f64; 12] {
        let mut bands = vec![0.0f64; self.band_sizes.len()];
        for &(k, idx) in &self.bins {
            let m = magnitudes[k] as f64;
            bands[idx] += m * m;
        }
        let mut chroma = [0.0f64; 12];
        for (idx, power) in bands.iter().enumerate() {
            let size = self.band_sizes[idx];
            if size > 0 {
                let pc = (idx as i32 + MIN_NOTE).rem_euclid(12) as usize;
                chroma[pc] += power / size as f64 / self.bands_per_class[pc] as f64;
            }
        }
        chroma
    }

    /// Per-frame chroma for a whole spectrogram.
    pub fn chromagram(&self, spec: &Spectrogram) -> Vec<[f64; 12]> {
        spec.frames.iter().map(|f| self.frame(f)).collect()
    }
}

/// Coefficient of variation across pitch classes; 0.0 for a flat vector.
pub(crate) fn contrast(v: &[f64; 12]) -> f64 {
    let mean = v.iter().sum::<f64>() / 12.0;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 12.0;
    var.sqrt() / mean
}

pub(crate) fn pearson(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    let ma = a.iter().sum::<f64>() / 12.0;
    let mb = b.iter().sum::<f64>() / 12.0;
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let da = a[i] - ma;
        let db = b[i] - mb;
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        num / (va.sqrt() * vb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(midi: f64) -> Vec<f32> {
        let f = 440.0 * 2f64.powf((midi - 69.0) / 12.0);
        (0..22_050)
            .map(|i| (0.3 * (2.0 * PI * f * i as f64 / 22_050.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn single_tone_lands_in_its_pitch_class() {
        let mapper = ChromaMapper::new(22_050, 2048);
        for midi in [57.0, 60.0, 64.0, 67.0, 71.0] {
            let spec = Spectrogram::compute(&tone(midi), 22_050, 2048, 512);
            let c = mapper.frame(&spec.frames[20]);
            let best = (0..12).max_by(|a, b| c[*a].total_cmp(&c[*b])).unwrap();
            assert_eq!(best, midi as usize % 12, "midi {midi}: {c:?}");
        }
    }

    #[test]
    fn flat_vector_has_no_contrast() {
        assert_eq!(contrast(&[2.0; 12]), 0.0);
        let mut peaky = [1e-6; 12];
        peaky[0] = 1.0;
        assert!(contrast(&peaky) > 3.0);
    }

    #[test]
    fn pearson_of_identical_vectors_is_one() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 12]), 0.0);
    }
}
