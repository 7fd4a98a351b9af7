use std::sync::LazyLock;

use regex::Regex;

/// Tempo multiples credited by Acc2.
pub const ACC2_MULTIPLES: [f64; 5] = [1.0 / 3.0, 0.5, 1.0, 2.0, 3.0];
pub const ACC2_TOLERANCE: f64 = 0.04;

/// Within 4% of a third, half, one, two or three times the reference
/// (boundary inclusive).
pub fn acc2(estimated_bpm: f64, reference_bpm: f64) -> bool {
    ACC2_MULTIPLES.iter().any(|m| {
        let target = m * reference_bpm;
        (estimated_bpm - target).abs() <= ACC2_TOLERANCE * target * (1.0 + 1e-12)
    })
}

/// Within 4% of the reference itself.
pub fn acc1(estimated_bpm: f64, reference_bpm: f64) -> bool {
    (estimated_bpm - reference_bpm).abs() <= ACC2_TOLERANCE * reference_bpm * (1.0 + 1e-12)
}

static BPM_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(?:bpm|beats per minute)").unwrap());
static ANY_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());

/// A number tagged "bpm" if present, otherwise the first number. Numbers
/// written as words are not read.
pub fn parse_tempo_text(text: &str) -> Option<f64> {
    BPM_NUMBER
        .captures(text)
        .and_then(|c| c[1].parse().ok())
        .or_else(|| ANY_NUMBER.find(text).and_then(|m| m.as_str().parse().ok()))
}
