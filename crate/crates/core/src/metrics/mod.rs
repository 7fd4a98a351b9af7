//! Evaluation metrics for music-text model outputs.

mod caption;
mod genre;
mod instrument;
mod key;
mod tempo;
mod tokens;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use caption::{caption_metrics, cider, corpus_bleu, meteor_lite, rouge_l, BleuStats, CaptionScores, CiderIdf};
pub use genre::{genre_acc1, Embedder, EmbedderError, HashingEmbedder, HttpEmbedder, TfIdfEmbedder};
pub use instrument::{instrument_f1, normalise_instruments, normalise_labels, set_f1};
pub use key::{mirex_key_score, parse_key_text, score_key_text, Unparseable};
pub use tempo::{acc1, acc2, parse_tempo_text, ACC2_MULTIPLES, ACC2_TOLERANCE};
pub use tokens::{token_stats, tokenize, word_count_probe, word_tokens, TokenStats, WordCountSummary};

use crate::mir::KeyLabel;

/// A model's answer to one prompt about one clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub clip_ref: String,
    #[serde(default)]
    pub prompt: String,
    pub text: String,
}

/// Ground truth for one clip; only the fields a task needs are required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub clip_ref: String,
    #[serde(default)]
    pub key: Option<KeyLabel>,
    #[serde(default)]
    pub tempo_bpm: Option<f64>,
    #[serde(default)]
    pub genre: Option<String>,
    #[serde(default)]
    pub instruments: Option<Vec<String>>,
    #[serde(default)]
    pub captions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub clip_ref: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

/// Per-item scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub n: usize,
    pub aggregate: f64,
    pub items: Vec<ItemScore>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn from_items(metric_name: impl Into<String>, items: Vec<ItemScore>) -> Self {
        let n = items.len();
        let aggregate = if n == 0 { 0.0 } else { items.iter().map(|i| i.score).sum::<f64>() / n as f64 };
        Self {
            metric_name: metric_name.into(),
            n,
            aggregate,
            items,
            notes: BTreeMap::new(),
        }
    }

    pub fn flagged(&self) -> usize {
        self.items.iter().filter(|i| i.flag.is_some()).count()
    }

    pub fn with_note(mut self, key: &str, value: impl Into<String>) -> Self {
        self.notes.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no reference for clip {0:?}")]
    MissingReference(String),
    #[error("reference for clip {clip:?} lacks field {field}")]
    MissingField { clip: String, field: &'static str },
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
}

fn lookup<'a>(refs: &'a BTreeMap<&str, &Reference>, clip: &str) -> Result<&'a Reference, EvalError> {
    refs.get(clip).copied().ok_or_else(|| EvalError::MissingReference(clip.to_string()))
}

fn index(references: &[Reference]) -> BTreeMap<&str, &Reference> {
    references.iter().map(|r| (r.clip_ref.as_str(), r)).collect()
}

fn missing(clip: &str, field: &'static str) -> EvalError {
    EvalError::MissingField {
        clip: clip.to_string(),
        field,
    }
}

pub fn evaluate_key(outputs: &[ModelOutput], references: &[Reference]) -> Result<MetricReport, EvalError> {
    let refs = index(references);
    let mut items = Vec::new();
    for o in outputs {
        let r = lookup(&refs, &o.clip_ref)?;
        let truth = r.key.ok_or_else(|| missing(&o.clip_ref, "key"))?;
        let (score, err) = score_key_text(&o.text, truth);
        items.push(ItemScore {
            clip_ref: o.clip_ref.clone(),
            score,
            flag: err.map(|e| e.to_string()),
        });
    }
    Ok(MetricReport::from_items("mirex_key", items))
}

pub fn evaluate_tempo(outputs: &[ModelOutput], references: &[Reference]) -> Result<MetricReport, EvalError> {
    let refs = index(references);
    let mut items = Vec::new();
    for o in outputs {
        let r = lookup(&refs, &o.clip_ref)?;
        let truth = r.tempo_bpm.ok_or_else(|| missing(&o.clip_ref, "tempo_bpm"))?;
        let (score, flag) = match parse_tempo_text(&o.text) {
            Some(bpm) => (if acc2(bpm, truth) { 1.0 } else { 0.0 }, None),
            None => (0.0, Some(format!("no tempo in {:?}", o.text))),
        };
        items.push(ItemScore {
            clip_ref: o.clip_ref.clone(),
            score,
            flag,
        });
    }
    Ok(MetricReport::from_items("acc2_tempo", items))
}

/// Candidates are the distinct reference genres.
pub fn evaluate_genre(
    outputs: &[ModelOutput],
    references: &[Reference],
    embedder: Option<&dyn Embedder>,
) -> Result<MetricReport, EvalError> {
    let refs = index(references);
    let mut labels: Vec<String> = references.iter().filter_map(|r| r.genre.clone()).collect();
    labels.sort();
    labels.dedup();
    let default = TfIdfEmbedder::fit(&labels);
    let embedder = embedder.unwrap_or(&default);
    let mut items = Vec::new();
    for o in outputs {
        let r = lookup(&refs, &o.clip_ref)?;
        let truth = r.genre.as_deref().ok_or_else(|| missing(&o.clip_ref, "genre"))?;
        let ok = genre_acc1(&o.text, truth, &labels, embedder)?;
        items.push(ItemScore {
            clip_ref: o.clip_ref.clone(),
            score: if ok { 1.0 } else { 0.0 },
            flag: None,
        });
    }
    Ok(MetricReport::from_items("genre_acc1", items).with_note("candidates", labels.len().to_string()))
}

pub fn evaluate_instruments(outputs: &[ModelOutput], references: &[Reference]) -> Result<MetricReport, EvalError> {
    let refs = index(references);
    let mut items = Vec::new();
    for o in outputs {
        let r = lookup(&refs, &o.clip_ref)?;
        let truth = r.instruments.as_ref().ok_or_else(|| missing(&o.clip_ref, "instruments"))?;
        items.push(ItemScore {
            clip_ref: o.clip_ref.clone(),
            score: instrument_f1(&o.text, truth),
            flag: None,
        });
    }
    Ok(MetricReport::from_items("instrument_f1", items))
}

/// One report per caption metric; CIDEr IDF comes from all references.
pub fn evaluate_captions(outputs: &[ModelOutput], references: &[Reference]) -> Result<Vec<MetricReport>, EvalError> {
    let refs = index(references);
    let corpus: Vec<Vec<Vec<String>>> = references
        .iter()
        .filter_map(|r| r.captions.as_ref())
        .map(|caps| caps.iter().map(|c| tokenize(c)).collect())
        .collect();
    let idf = CiderIdf::from_references(&corpus);
    let mut per_metric: [Vec<ItemScore>; 5] = Default::default();
    let mut cands = Vec::new();
    let mut cand_refs = Vec::new();
    for o in outputs {
        let r = lookup(&refs, &o.clip_ref)?;
        let caps = r.captions.as_ref().ok_or_else(|| missing(&o.clip_ref, "captions"))?;
        let s = caption_metrics(&o.text, caps, &idf);
        for (slot, v) in per_metric.iter_mut().zip([s.bleu, s.bleu4, s.meteor_lite, s.rouge_l, s.cider]) {
            slot.push(ItemScore {
                clip_ref: o.clip_ref.clone(),
                score: v,
                flag: None,
            });
        }
        cands.push(o.text.clone());
        cand_refs.push(caps.clone());
    }
    let names = ["bleu", "bleu4", "meteor_lite", "rouge_l", "cider"];
    let mut reports: Vec<MetricReport> = names
        .iter()
        .zip(per_metric)
        .map(|(n, items)| MetricReport::from_items(*n, items))
        .collect();
    reports[0] = reports[0]
        .clone()
        .with_note("corpus_bleu", format!("{:.6}", corpus_bleu(&cands, &cand_refs)));
    reports[4] = reports[4].clone().with_note("scale", "x10");
    Ok(reports)
}

/// Plain-text table with one row per model and one column per metric.
pub fn render_table(rows: &[(String, Vec<(String, f64)>)]) -> String {
    let mut columns: Vec<String> = Vec::new();
    for (_, cells) in rows {
        for (c, _) in cells {
            if !columns.contains(c) {
                columns.push(c.clone());
            }
        }
    }
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}", "model");
    for c in &columns {
        out.push_str(&format!(" {:>12}", c));
    }
    out.push('\n');
    for (model, cells) in rows {
        out.push_str(&format!("{model:<width$}"));
        for c in &columns {
            match cells.iter().find(|(name, _)| name == c) {
                Some((_, v)) => out.push_str(&format!(" {v:>12.4}")),
                None => out.push_str(&format!(" {:>12}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
