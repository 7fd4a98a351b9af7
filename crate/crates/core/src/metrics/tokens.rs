use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]+").unwrap());
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+").unwrap());

/// Lowercased runs of word characters or of punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    TOKEN.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

/// Lowercased word-character runs only.
pub fn word_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    WORD.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub unique_tokens: usize,
    /// Mean number of tokens per text.
    pub mean_token_len: f64,
}

pub fn token_stats<S: AsRef<str>>(texts: &[S]) -> TokenStats {
    let mut vocab = BTreeSet::new();
    let mut total = 0usize;
    for t in texts {
        let tokens = tokenize(t.as_ref());
        total += tokens.len();
        vocab.extend(tokens);
    }
    TokenStats {
        unique_tokens: vocab.len(),
        mean_token_len: if texts.is_empty() { 0.0 } else { total as f64 / texts.len() as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCountSummary {
    pub n: usize,
    pub mean_words: f64,
    /// Sample standard deviation; 0 for fewer than two outputs.
    pub sd_words: f64,
    pub one_word_fraction: f64,
}

/// Word-count distribution of outputs grouped by prompt.
pub fn word_count_probe<P: AsRef<str>, T: AsRef<str>>(outputs: &[(P, T)]) -> BTreeMap<String, WordCountSummary> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (prompt, text) in outputs {
        groups
            .entry(prompt.as_ref().to_string())
            .or_default()
            .push(word_tokens(text.as_ref()).len());
    }
    groups
        .into_iter()
        .map(|(prompt, counts)| {
            let n = counts.len();
            let mean = counts.iter().sum::<usize>() as f64 / n as f64;
            let sd = if n > 1 {
                (counts.iter().map(|c| (*c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let one = counts.iter().filter(|c| **c == 1).count() as f64 / n as f64;
            (
                prompt,
                WordCountSummary {
                    n,
                    mean_words: mean,
                    sd_words: sd,
                    one_word_fraction: one,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_world() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
        let s = token_stats(&["Hello, world!"]);
        assert_eq!(s.unique_tokens, 4);
        assert_eq!(s.mean_token_len, 4.0);
    }

    #[test]
    fn empty_and_duplicated() {
        let none: [&str; 0] = [];
        assert_eq!(token_stats(&none), TokenStats { unique_tokens: 0, mean_token_len: 0.0 });
        let one = token_stats(&["a b", "b c!"]);
        let twice = token_stats(&["a b", "b c!", "a b", "b c!"]);
        assert_eq!(one.unique_tokens, twice.unique_tokens);
        assert_eq!(one.mean_token_len, twice.mean_token_len);
    }

    #[test]
    fn probe() {
        let outputs = [
            ("one word", "jazz"),
            ("one word", "Jazz."),
            ("detail", "A slow jazz ballad"),
            ("detail", "Piano trio"),
        ];
        let report = word_count_probe(&outputs);
        assert_eq!(report["one word"].one_word_fraction, 1.0);
        assert_eq!(report["detail"].one_word_fraction, 0.0);
        assert_eq!(report["detail"].mean_words, 3.0);
        assert!((report["detail"].sd_words - 2f64.sqrt()).abs() < 1e-12);
    }
}
