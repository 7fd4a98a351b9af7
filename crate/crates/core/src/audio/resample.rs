use std::f64::consts::PI;

/// Kaiser beta giving roughly 80 dB of stopband attenuation.
const KAISER_BETA: f64 = 8.0;
/// Zero crossings of the sinc kernel on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge relative to the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.9;

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
///
/// The ratio `to / from` is reduced by its gcd; one filter phase is
/// precomputed per output phase, so the per-sample cost is a single dot
/// product.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half_width: isize,
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
        let g = gcd(from_rate as usize, to_rate as usize);
        let up = to_rate as usize / g;
        let down = from_rate as usize / g;

        // Cutoff in cycles per input sample.
        let cutoff = 0.5 * ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half_width = (ZERO_CROSSINGS / (2.0 * cutoff)).ceil() as isize;

        let norm = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                (-half_width + 1..=half_width)
                    .map(|k| {
                        // Distance from the output instant to input tap k.
                        let x = k as f64 - frac;
                        let r = x / half_width as f64;
                        if r.abs() > 1.0 {
                            return 0.0;
                        }
                        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                        2.0 * cutoff * sinc(2.0 * cutoff * x) * window
                    })
                    .collect()
            })
            .collect();

        Self {
            up,
            down,
            half_width,
            phases,
        }
    }

    /// Number of output samples produced for `input_len` input samples.
    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let len = input.len() as isize;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out {
            let pos = n * self.down;
            let base = (pos / self.up) as isize;
            let taps = &self.phases[pos % self.up];
            let first = base - self.half_width + 1;
            let mut acc = 0.0f64;
            if first >= 0 && base + self.half_width < len {
                let window = &input[first as usize..(base + self.half_width + 1) as usize];
                for (x, h) in window.iter().zip(taps) {
                    acc += *x as f64 * h;
                }
            } else {
                for (j, h) in taps.iter().enumerate() {
                    let idx = first + j as isize;
                    if idx >= 0 && idx < len {
                        acc += input[idx as usize] as f64 * h;
                    }
                }
            }
            out.push(acc as f32);
        }
        out
    }
}

/// One-shot convenience wrapper around [`Resampler`].
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate {
        return input.to_vec();
    }
    Resampler::new(from_rate, to_rate).process(input)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, secs: f64) -> Vec<f32> {
        let n = (rate as f64 * secs) as usize;
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() as f32 * 0.5)
            .collect()
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn output_lengths_follow_rate_ratio() {
        assert_eq!(Resampler::new(44_100, 22_050).output_len(88_200), 44_100);
        assert_eq!(Resampler::new(44_100, 16_000).output_len(44_100), 16_000);
        assert_eq!(Resampler::new(22_050, 44_100).output_len(100), 200);
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) and I0(8) from standard tables.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-8);
    }

    #[test]
    fn passband_tone_keeps_its_level() {
        let x = sine(1000.0, 44_100, 1.0);
        let y = resample(&x, 44_100, 22_050);
        let inner = &y[2000..y.len() - 2000];
        let ratio = rms(inner) / rms(&x[4000..x.len() - 4000]);
        assert!((ratio - 1.0).abs() < 0.01, "gain {ratio}");
    }

    #[test]
    fn stopband_tone_is_attenuated_by_80_db() {
        // 15 kHz cannot be represented at 22.05 kHz; it must not alias.
        let x = sine(15_000.0, 44_100, 1.0);
        let y = resample(&x, 44_100, 22_050);
        let inner = &y[2000..y.len() - 2000];
        let atten_db = 20.0 * (rms(inner) / rms(&x)).log10();
        assert!(atten_db < -80.0, "attenuation {atten_db} dB");
    }

    #[test]
    fn upsampling_is_close_to_ideal_interpolation() {
        let x = sine(440.0, 16_000, 0.5);
        let y = resample(&x, 16_000, 44_100);
        for (n, v) in y.iter().enumerate().skip(3000).take(10_000) {
            let t = n as f64 / 44_100.0;
            let ideal = (2.0 * PI * 440.0 * t).sin() * 0.5;
            assert!((*v as f64 - ideal).abs() < 2e-3, "sample {n}: {v} vs {ideal}");
        }
    }
}
