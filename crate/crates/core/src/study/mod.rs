//! Human-evaluation studies: item construction, judgment validation, analysis.

mod analyze;
mod build;
mod judge;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruct::EndpointError;

pub use analyze::{analyze, AccuracyTally, JudgeReport, MatchingReport, PairwiseReport, StudyReport, WinTally};
pub use build::{build_llm_detail_items, build_matching_study, build_pairwise_study, PairwiseConfig};
pub use judge::{judge_items, parse_winner, JudgePrompt, JudgeRun};

pub const LIKERT_MIN: u32 = 1;
pub const LIKERT_MAX: u32 = 7;
pub const LIKERT_MIDPOINT: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("insufficient outputs: {0}")]
    InsufficientOutputs(String),
    #[error("judgment references unknown item {item_id}")]
    OrphanJudgment { item_id: String },
    #[error("rater {rater_id} already judged item {item_id}")]
    DuplicateJudgment { item_id: String, rater_id: String },
    #[error("value {value} outside the domain of {kind} item {item_id}")]
    Domain { item_id: String, kind: ItemKind, value: u32 },
    #[error("invalid study: {0}")]
    Validation(String),
    #[error("judge endpoint: {0}")]
    Endpoint(#[from] EndpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    PairwiseCaption,
    AudioTextMatch,
    LlmDetail,
}

impl ItemKind {
    pub fn option_count(self) -> usize {
        match self {
            ItemKind::AudioTextMatch => 3,
            ItemKind::PairwiseCaption | ItemKind::LlmDetail => 2,
        }
    }

    /// Inclusive range of accepted judgment values.
    pub fn value_range(self) -> (u32, u32) {
        match self {
            ItemKind::PairwiseCaption => (LIKERT_MIN, LIKERT_MAX),
            ItemKind::AudioTextMatch => (0, 2),
            ItemKind::LlmDetail => (0, 1),
        }
    }
}

impl std::fmt::Display for ItemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ItemKind::PairwiseCaption => "pairwise_caption",
            ItemKind::AudioTextMatch => "audio_text_match",
            ItemKind::LlmDetail => "llm_detail",
        })
    }
}

/// Hidden assignment that lets analysis decode a judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerKey {
    /// `option_models[i]` produced `options[i]`.
    Pairwise { subject: String, option_models: [String; 2] },
    Match { model: String, correct: usize, option_audio: [String; 3] },
    Judge { subject: String, option_models: [String; 2] },
}

impl AnswerKey {
    fn kind(&self) -> ItemKind {
        match self {
            AnswerKey::Pairwise { .. } => ItemKind::PairwiseCaption,
            AnswerKey::Match { .. } => ItemKind::AudioTextMatch,
            AnswerKey::Judge { .. } => ItemKind::LlmDetail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub audio_ref: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub answer_key: AnswerKey,
    #[serde(default)]
    pub screening_enabled: bool,
}

/// What a rater is shown: the item without its answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterView {
    pub item_id: String,
    pub kind: ItemKind,
    pub audio_ref: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub screening_enabled: bool,
}

impl StudyItem {
    pub fn rater_view(&self) -> RaterView {
        RaterView {
            item_id: self.item_id.clone(),
            kind: self.kind,
            audio_ref: self.audio_ref.clone(),
            prompt: self.prompt.clone(),
            options: self.options.clone(),
            screening_enabled: self.screening_enabled,
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let fail = |msg: String| Err(StudyError::Validation(format!("item {}: {msg}", self.item_id)));
        if self.item_id.is_empty() {
            return Err(StudyError::Validation("empty item id".into()));
        }
        if self.options.len() != self.kind.option_count() {
            return fail(format!(
                "{} needs {} options, found {}",
                self.kind,
                self.kind.option_count(),
                self.options.len()
            ));
        }
        if self.answer_key.kind() != self.kind {
            return fail(format!("answer key does not match kind {}", self.kind));
        }
        match &self.answer_key {
            AnswerKey::Pairwise { subject, option_models } | AnswerKey::Judge { subject, option_models } => {
                if !option_models.contains(subject) {
                    return fail(format!("subject {subject} not among the options"));
                }
            }
            AnswerKey::Match { correct, .. } if *correct >= 3 => {
                return fail(format!("answer index {correct} out of range"));
            }
            AnswerKey::Match { .. } => {}
        }
        Ok(())
    }

    pub fn check_value(&self, value: u32) -> Result<(), StudyError> {
        let (lo, hi) = self.kind.value_range();
        if (lo..=hi).contains(&value) {
            Ok(())
        } else {
            Err(StudyError::Domain {
                item_id: self.item_id.clone(),
                kind: self.kind,
                value,
            })
        }
    }
}

/// Checks every item and rejects repeated ids.
pub fn validate_items(items: &[StudyItem]) -> Result<(), StudyError> {
    let mut seen = BTreeSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(item.item_id.as_str()) {
            return Err(StudyError::Validation(format!("duplicate item id {}", item.item_id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    pub rater_id: String,
    /// Likert rating for pairwise items, chosen option index otherwise.
    pub value: u32,
    /// `Some(false)` when the rater reported the clip is not only music.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening_answer: Option<bool>,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDefinition {
    pub name: String,
    pub items: Vec<StudyItem>,
}

impl StudyDefinition {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.items.is_empty() {
            return Err(StudyError::Validation("study has no items".into()));
        }
        validate_items(&self.items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matching_item() -> StudyItem {
        StudyItem {
            item_id: "m1".into(),
            kind: ItemKind::AudioTextMatch,
            audio_ref: "a.wav".into(),
            prompt: "describe".into(),
            options: vec!["x".into(), "y".into(), "z".into()],
            answer_key: AnswerKey::Match {
                model: "secret-model".into(),
                correct: 1,
                option_audio: ["b.wav".into(), "a.wav".into(), "c.wav".into()],
            },
            screening_enabled: false,
        }
    }

    #[test]
    fn four_options_on_matching_is_invalid() {
        let mut item = matching_item();
        assert!(item.validate().is_ok());
        item.options.push("w".into());
        assert!(matches!(item.validate(), Err(StudyError::Validation(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let items = vec![matching_item(), matching_item()];
        assert!(matches!(validate_items(&items), Err(StudyError::Validation(m)) if m.contains("duplicate")));
    }

    #[test]
    fn value_domains() {
        let mut item = matching_item();
        assert!(item.check_value(2).is_ok());
        assert!(item.check_value(3).is_err());
        item.kind = ItemKind::PairwiseCaption;
        assert!(item.check_value(5).is_ok());
        assert!(matches!(item.check_value(9), Err(StudyError::Domain { value: 9, .. })));
        assert!(item.check_value(0).is_err());
    }

    #[test]
    fn rater_view_hides_key() {
        let text = serde_json::to_string(&matching_item().rater_view()).unwrap();
        assert!(!text.contains("secret-model"));
        assert!(!text.contains("answer"));
        assert!(!text.contains("b.wav"));
    }
}
