use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::tokens::word_tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedderError {
    #[error("embedding endpoint failed: {0}")]
    Endpoint(String),
    #[error("embedder returned {got} vectors for {expected} texts")]
    Count { expected: usize, got: usize },
    #[error("true label {0:?} is not among the candidates")]
    UnknownLabel(String),
}

pub trait Embedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedderError>;
}

fn l2_normalise(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// TF-IDF over the word vocabulary of a label set. Words outside the
/// vocabulary are ignored, so text sharing no word with any label embeds to
/// the zero vector.
#[derive(Debug, Clone)]
pub struct TfIdfEmbedder {
    vocab: BTreeMap<String, (usize, f64)>,
}

impl TfIdfEmbedder {
    pub fn fit<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for label in labels {
            let mut words = word_tokens(label.as_ref());
            words.sort();
            words.dedup();
            for w in words {
                *df.entry(w).or_default() += 1;
            }
        }
        let n = labels.len().max(1) as f64;
        let vocab = df
            .into_iter()
            .enumerate()
            .map(|(i, (w, d))| (w, (i, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)))
            .collect();
        Self { vocab }
    }

    pub fn dims(&self) -> usize {
        self.vocab.len()
    }
}

impl Embedder for TfIdfEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedderError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.vocab.len()];
                for w in word_tokens(t) {
                    if let Some((i, idf)) = self.vocab.get(&w) {
                        v[*i] += idf;
                    }
                }
                l2_normalise(&mut v);
                v
            })
            .collect())
    }
}

/// Signed feature hashing of words and character trigrams.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    pub dims: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dims: 512 }
    }
}

impl HashingEmbedder {
    fn bucket(&self, feature: &str) -> (usize, f64) {
        let digest = Sha256::digest(feature.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((h % self.dims as u64) as usize, sign)
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedderError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.dims];
                for w in word_tokens(t) {
                    let (i, s) = self.bucket(&format!("w:{w}"));
                    v[i] += s;
                    let padded: Vec<char> = format!("#{w}#").chars().collect();
                    for g in padded.windows(3) {
                        let (i, s) = self.bucket(&format!("c:{}", g.iter().collect::<String>()));
                        v[i] += 0.5 * s;
                    }
                }
                l2_normalise(&mut v);
                v
            })
            .collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Remote `/embeddings` endpoint (`{model, input}` -> `{data:[{embedding}]}`).
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self, EmbedderError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedderError::Endpoint(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            api_key,
            http,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedderError> {
        let mut req = self.http.post(&self.url).json(&EmbeddingRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedderError::Endpoint(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedderError::Endpoint(format!("status {}", resp.status())));
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| EmbedderError::Endpoint(e.to_string()))?;
        if body.data.len() != texts.len() {
            return Err(EmbedderError::Count {
                expected: texts.len(),
                got: body.data.len(),
            });
        }
        Ok(body.data.into_iter().map(|d| d.embedding).collect())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Nearest candidate label to the output text in embedding space.
///
/// Correct only when the true label is the unique nearest candidate; any
/// tie counts as wrong unless every tied candidate is the true label.
pub fn genre_acc1<S: AsRef<str>>(
    output_text: &str,
    true_label: &str,
    candidate_labels: &[S],
    embedder: &dyn Embedder,
) -> Result<bool, EmbedderError> {
    if !candidate_labels.iter().any(|c| c.as_ref() == true_label) {
        return Err(EmbedderError::UnknownLabel(true_label.to_string()));
    }
    let mut texts: Vec<&str> = vec![output_text];
    texts.extend(candidate_labels.iter().map(AsRef::as_ref));
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedderError::Count {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    let distances: Vec<f64> = vectors[1..].iter().map(|v| euclidean(&vectors[0], v)).collect();
    let best = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.max(1.0);
    let nearest: Vec<&str> = candidate_labels
        .iter()
        .zip(&distances)
        .filter(|(_, d)| **d - best <= tol)
        .map(|(c, _)| c.as_ref())
        .collect();
    Ok(nearest.iter().all(|c| *c == true_label))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GENRES: [&str; 10] = [
        "blues", "classical", "country", "disco", "hiphop", "jazz", "metal", "pop", "reggae", "rock",
    ];

    #[test]
    fn exact_label_text_is_correct() {
        let tfidf = TfIdfEmbedder::fit(&GENRES);
        for g in GENRES {
            assert!(genre_acc1(g, g, &GENRES, &tfidf).unwrap());
            assert!(genre_acc1(g, g, &GENRES, &HashingEmbedder::default()).unwrap());
        }
        assert!(genre_acc1("This is a jazz piece with swing.", "jazz", &GENRES, &tfidf).unwrap());
        assert!(!genre_acc1("This is a jazz piece.", "rock", &GENRES, &tfidf).unwrap());
    }

    #[test]
    fn ties_are_wrong() {
        let tfidf = TfIdfEmbedder::fit(&GENRES);
        assert!(!genre_acc1("jazz and rock", "jazz", &GENRES, &tfidf).unwrap());
        assert!(!genre_acc1("no idea", "jazz", &GENRES, &tfidf).unwrap());
    }

    #[test]
    fn duplicate_true_label_tie_is_fine() {
        let labels = ["jazz", "jazz", "rock"];
        assert!(genre_acc1("jazz", "jazz", &labels, &TfIdfEmbedder::fit(&labels)).unwrap());
    }

    #[test]
    fn unknown_true_label() {
        let tfidf = TfIdfEmbedder::fit(&GENRES);
        assert!(matches!(
            genre_acc1("x", "polka", &GENRES, &tfidf),
            Err(EmbedderError::UnknownLabel(_))
        ));
    }
}
