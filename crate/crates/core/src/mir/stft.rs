use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

/// Magnitude STFT with centred, zero-padded frames: frame `t` is centred on
/// sample `t * hop`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f32>>,
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn compute(samples: &[f32], sample_rate: u32, n_fft: usize, hop: usize) -> Self {
        let window: Vec<f32> = (0..n_fft)
            .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos()) as f32)
            .collect();
        let fft = FftPlanner::<f32>::new().plan_fft_forward(n_fft);
        let half = n_fft / 2;
        let n_frames = if samples.is_empty() { 0 } else { 1 + samples.len() / hop };

        let mut buf = vec![Complex::new(0.0f32, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); fft.get_inplace_scratch_len()];
        let mut frames = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let centre = (t * hop) as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = centre - half as isize + i as isize;
                let x = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex::new(x * window[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            frames.push(buf[..=half].iter().map(|c| c.norm()).collect());
        }
        Self {
            frames,
            sample_rate,
            n_fft,
            hop,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn frame_time(&self, t: f64) -> f64 {
        t * self.hop as f64 / self.sample_rate as f64
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.n_fft as f64
    }

    /// RMS of the time-domain frame, recovered from the spectrum via
    /// Parseval and the Hann window power.
    pub fn frame_rms(&self, t: usize) -> f64 {
        let frame = &self.frames[t];
        let n = self.n_fft as f64;
        let mut energy = frame[0] as f64 * frame[0] as f64;
        for m in &frame[1..frame.len() - 1] {
            energy += 2.0 * (*m as f64) * (*m as f64);
        }
        let last = *frame.last().unwrap() as f64;
        energy += last * last;
        // sum |X|^2 / N = sum (x w)^2; mean w^2 for Hann is 3/8.
        (energy / n / (n * 0.375)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_and_timing() {
        let s = Spectrogram::compute(&vec![0.0; 22_050], 22_050, 2048, 512);
        assert_eq!(s.n_frames(), 1 + 22_050 / 512);
        assert!((s.frame_rate() - 43.066).abs() < 1e-3);
        assert_eq!(s.frames[0].len(), 1025);
    }

    #[test]
    fn sine_peaks_at_its_bin_and_reports_rms() {
        let sr = 22_050;
        let f = 20.0 * sr as f64 / 2048.0;
        let x: Vec<f32> = (0..sr)
            .map(|i| (0.5 * (2.0 * PI * f * i as f64 / sr as f64).sin()) as f32)
            .collect();
        let s = Spectrogram::compute(&x, sr, 2048, 512);
        let frame = &s.frames[20];
        let peak = (0..frame.len()).max_by(|a, b| frame[*a].total_cmp(&frame[*b])).unwrap();
        assert_eq!(peak, 20);
        let rms = s.frame_rms(20);
        assert!((rms - 0.5 / 2f64.sqrt()).abs() < 0.01, "rms {rms}");
    }
}
