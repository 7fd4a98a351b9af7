use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ItemKind, Judgment, StudyError, StudyItem};
use crate::instruct::{ChatClient, ChatMessage, ChatRequest};

pub const QUESTION_PLACEHOLDER: &str = "{question}";
pub const RESPONSE_1_PLACEHOLDER: &str = "{response_1}";
pub const RESPONSE_2_PLACEHOLDER: &str = "{response_2}";

const DEFAULT_SYSTEM: &str = "You compare two answers to a question about a piece of music.";
const DEFAULT_USER: &str = "Question: {question}\n\n\
Response 1: {response_1}\n\n\
Response 2: {response_2}\n\n\
Which response gives more specific musical information, such as instruments, \
harmony, rhythm, tempo, key, structure or production? Ignore length and style. \
Reply with \"Response 1\" or \"Response 2\" only.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePrompt {
    pub system: String,
    pub user: String,
}

impl Default for JudgePrompt {
    fn default() -> Self {
        Self {
            system: DEFAULT_SYSTEM.into(),
            user: DEFAULT_USER.into(),
        }
    }
}

impl JudgePrompt {
    /// Parses a prompt file: an optional system part, a `---user---` line,
    /// then the user part. Without the marker the whole text is the user part.
    pub fn parse(text: &str) -> Result<Self, StudyError> {
        let (system, user) = match text.split_once("\n---user---\n") {
            Some((s, u)) => (s.trim().to_string(), u.trim().to_string()),
            None => (DEFAULT_SYSTEM.to_string(), text.trim().to_string()),
        };
        for p in [QUESTION_PLACEHOLDER, RESPONSE_1_PLACEHOLDER, RESPONSE_2_PLACEHOLDER] {
            if !user.contains(p) {
                return Err(StudyError::Validation(format!("judge prompt lacks {p}")));
            }
        }
        Ok(Self { system, user })
    }

    pub fn render(&self, item: &StudyItem) -> String {
        self.user
            .replace(QUESTION_PLACEHOLDER, &item.prompt)
            .replace(RESPONSE_1_PLACEHOLDER, &item.options[0])
            .replace(RESPONSE_2_PLACEHOLDER, &item.options[1])
    }
}

static NAMED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:response|answer|option)\s*#?\s*([12])\b").expect("valid regex"));
static BARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([12])\b").expect("valid regex"));

/// Winning option index from a judge reply, when it names exactly one.
pub fn parse_winner(reply: &str) -> Option<u32> {
    for re in [&*NAMED, &*BARE] {
        let mut found: Vec<u32> = re
            .captures_iter(reply)
            .filter_map(|c| c[1].parse::<u32>().ok())
            .collect();
        found.sort_unstable();
        found.dedup();
        match found.as_slice() {
            [one] => return Some(one - 1),
            [] => continue,
            _ => return None,
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRun {
    pub judgments: Vec<Judgment>,
    /// (item_id, reply) for replies that named no single winner.
    pub unparsed: Vec<(String, String)>,
}

/// Sends each judge item to the chat endpoint and records the verdicts.
pub fn judge_items(
    items: &[StudyItem],
    prompt: &JudgePrompt,
    model: &str,
    client: &dyn ChatClient,
) -> Result<JudgeRun, StudyError> {
    let rater_id = format!("judge:{model}");
    let mut run = JudgeRun {
        judgments: Vec::new(),
        unparsed: Vec::new(),
    };
    for item in items.iter().filter(|i| i.kind == ItemKind::LlmDetail) {
        let request = ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage::system(&prompt.system), ChatMessage::user(prompt.render(item))],
            temperature: 0.0,
        };
        let reply = client.complete(&request)?;
        match parse_winner(&reply) {
            Some(value) => run.judgments.push(Judgment {
                item_id: item.item_id.clone(),
                rater_id: rater_id.clone(),
                value,
                screening_answer: None,
                timestamp: 0,
            }),
            None => {
                tracing::warn!(item = %item.item_id, "judge reply names no single winner");
                run.unparsed.push((item.item_id.clone(), reply));
            }
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::EndpointError;
    use crate::study::AnswerKey;

    #[test]
    fn winner_parsing() {
        assert_eq!(parse_winner("Response 2"), Some(1));
        assert_eq!(parse_winner("response #1 is more detailed"), Some(0));
        assert_eq!(parse_winner("1"), Some(0));
        assert_eq!(parse_winner("Response 1 mentions tempo, but Response 2 names the key"), None);
        assert_eq!(parse_winner("Neither"), None);
        assert_eq!(parse_winner("Response 2, because it has 12 instruments"), Some(1));
    }

    #[test]
    fn prompt_requires_placeholders() {
        assert!(JudgePrompt::parse("sys\n---user---\n{question} {response_1}").is_err());
        let p = JudgePrompt::parse("sys\n---user---\nQ {question} A {response_1} B {response_2}").unwrap();
        assert_eq!(p.system, "sys");
    }

    struct Fixed(&'static str);
    impl ChatClient for Fixed {
        fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
            assert!(request.messages[1].content.contains("left text"));
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn judge_records_verdicts() {
        let item = StudyItem {
            item_id: "judge-0".into(),
            kind: ItemKind::LlmDetail,
            audio_ref: "a.wav".into(),
            prompt: "What is playing?".into(),
            options: vec!["left text".into(), "right text".into()],
            answer_key: AnswerKey::Judge {
                subject: "x".into(),
                option_models: ["x".into(), "y".into()],
            },
            screening_enabled: false,
        };
        let run = judge_items(&[item.clone()], &JudgePrompt::default(), "judge-model", &Fixed("Response 2")).unwrap();
        assert_eq!(run.judgments[0].value, 1);
        assert_eq!(run.judgments[0].rater_id, "judge:judge-model");
        let run = judge_items(&[item], &JudgePrompt::default(), "judge-model", &Fixed("both")).unwrap();
        assert!(run.judgments.is_empty());
        assert_eq!(run.unparsed.len(), 1);
    }
}
