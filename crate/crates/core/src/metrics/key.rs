use thiserror::Error;

use crate::mir::{KeyLabel, Mode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no key found in {0:?}")]
pub struct Unparseable(pub String);

/// Graded key credit: exact 1.0, fifth above (same mode) 0.5, relative
/// major/minor 0.3, parallel 0.2, otherwise 0.0.
pub fn mirex_key_score(estimated: KeyLabel, reference: KeyLabel) -> f64 {
    let (et, rt) = (estimated.tonic(), reference.tonic());
    if estimated == reference {
        1.0
    } else if estimated.mode == reference.mode && et == (rt + 7) % 12 {
        0.5
    } else if reference.mode == Mode::Major && estimated == KeyLabel::minor((rt + 9) % 12)
        || reference.mode == Mode::Minor && estimated == KeyLabel::major((rt + 3) % 12)
    {
        0.3
    } else if et == rt {
        0.2
    } else {
        0.0
    }
}

struct Candidate {
    pitch_class: u8,
    mode: Option<Mode>,
}

fn letter_class(c: char) -> Option<i32> {
    Some(match c {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    })
}

fn mode_word(word: &str) -> Option<Mode> {
    match word {
        "major" | "maj" => Some(Mode::Major),
        "minor" | "min" | "m" => Some(Mode::Minor),
        _ => None,
    }
}

fn candidates(text: &str) -> Vec<Candidate> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let word_at = |start: usize| -> (String, usize) {
        let mut end = start;
        while end < chars.len() && chars[end].is_alphabetic() {
            end += 1;
        }
        (chars[start..end].iter().collect::<String>().to_lowercase(), end)
    };
    for i in 0..chars.len() {
        let Some(base) = letter_class(chars[i]) else { continue };
        if i > 0 && chars[i - 1].is_alphanumeric() {
            continue;
        }
        let mut j = i + 1;
        let mut pc = base;
        match chars.get(j) {
            Some('#' | '♯') => {
                pc += 1;
                j += 1;
            }
            Some('b' | '♭') if !chars.get(j + 1).is_some_and(|c| c.is_alphabetic()) => {
                pc -= 1;
                j += 1;
            }
            _ => {}
        }
        // "C sharp", "E flat"
        let mut k = j;
        while k < chars.len() && chars[k] == ' ' {
            k += 1;
        }
        if k > j && k < chars.len() {
            let (word, end) = word_at(k);
            if word == "sharp" {
                pc += 1;
                j = end;
            } else if word == "flat" {
                pc -= 1;
                j = end;
            }
        }
        // Attached suffix such as "Am" or "C#min".
        let (suffix, suffix_end) = word_at(j);
        let mut mode = None;
        if !suffix.is_empty() {
            match mode_word(&suffix) {
                Some(m) => {
                    mode = Some(m);
                    j = suffix_end;
                }
                None => continue,
            }
        }
        if chars.get(j).is_some_and(|c| c.is_alphanumeric()) {
            continue;
        }
        if mode.is_none() {
            let mut k = j;
            while k < chars.len() && (chars[k] == ' ' || chars[k] == '-') {
                k += 1;
            }
            if k > j {
                let (word, _) = word_at(k);
                mode = match word.as_str() {
                    "major" | "maj" => Some(Mode::Major),
                    "minor" | "min" => Some(Mode::Minor),
                    _ => None,
                };
            }
        }
        out.push(Candidate {
            pitch_class: pc.rem_euclid(12) as u8,
            mode,
        });
    }
    out
}

/// Reads a key from free text.
///
/// A tonic letter (A–G, optional sharp or flat) followed by a mode word is
/// preferred; failing that the first tonic letter is taken as major.
pub fn parse_key_text(text: &str) -> Result<KeyLabel, Unparseable> {
    let found = candidates(text);
    let pick = found
        .iter()
        .find(|c| c.mode.is_some())
        .or_else(|| found.first())
        .ok_or_else(|| Unparseable(text.to_string()))?;
    Ok(match pick.mode.unwrap_or(Mode::Major) {
        Mode::Major => KeyLabel::major(pick.pitch_class),
        Mode::Minor => KeyLabel::minor(pick.pitch_class),
    })
}

/// MIREX score of a free-text answer; unparseable answers score 0.
pub fn score_key_text(text: &str, reference: KeyLabel) -> (f64, Option<Unparseable>) {
    match parse_key_text(text) {
        Ok(k) => (mirex_key_score(k, reference), None),
        Err(e) => (0.0, Some(e)),
    }
}
