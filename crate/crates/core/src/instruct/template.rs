use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::TaskFamily;

pub const METADATA_PLACEHOLDER: &str = "{metadata}";

/// Line separating the system part of a template file from the user part.
const USER_MARKER: &str = "---user---";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template user message lacks the {METADATA_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("no template for task {0}")]
    NoTemplate(TaskFamily),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A system instruction and a user message carrying the metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Result<Self, TemplateError> {
        let user = user.into();
        if !user.contains(METADATA_PLACEHOLDER) {
            return Err(TemplateError::MissingPlaceholder);
        }
        Ok(Self {
            system: system.into(),
            user,
        })
    }

    /// Whole text as the system message and the bare document as the user
    /// message, unless a `---user---` line splits the two.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut system = Vec::new();
        let mut user: Option<Vec<&str>> = None;
        for line in text.lines() {
            match &mut user {
                Some(u) => u.push(line),
                None if line.trim() == USER_MARKER => user = Some(Vec::new()),
                None => system.push(line),
            }
        }
        let user = user.map_or_else(|| METADATA_PLACEHOLDER.to_string(), |u| u.join("\n"));
        Self::new(system.join("\n").trim().to_string(), user.trim().to_string())
    }

    pub fn render_user(&self, doc_text: &str) -> String {
        self.user.replace(METADATA_PLACEHOLDER, doc_text)
    }

    pub fn default_for(task: TaskFamily) -> Self {
        let system = match task {
            TaskFamily::Understanding => DEFAULT_UNDERSTANDING,
            TaskFamily::Captioning => DEFAULT_CAPTIONING,
            TaskFamily::Reasoning => DEFAULT_REASONING,
        };
        Self::new(format!("{system}\n\n{OUTPUT_FORMAT}"), METADATA_PLACEHOLDER).expect("built-in template")
    }
}

const OUTPUT_FORMAT: &str = "Output format: one or more blocks separated by a blank line. \
Each block is a line starting with \"Q: \" holding the question, followed by a line \
starting with \"A: \" holding the answer. Write nothing else.";

const DEFAULT_UNDERSTANDING: &str = "You write training questions about a piece of music. \
You receive a JSON description of a 25-second audio clip: tags, genres, instruments, \
and estimated tempo, key, beat times and chords. Ask short factual questions a listener \
could answer from the sound alone (tempo, key, genre, instruments, mood, chords) and \
give concise answers. Do not ask about artist names, titles, albums, composers, \
movements or clip length, and never refer to the JSON or to metadata in an answer.";

const DEFAULT_CAPTIONING: &str = "You describe music in detail. You receive a JSON \
description of a 25-second audio clip including timed note events and estimated \
tempo, key, beats and chords. Write one request for a description of the clip and a \
rich paragraph answering it that covers instrumentation, texture, melody, harmony, \
rhythm and how the music develops over time. Describe only what is audible and never \
mention the JSON or metadata.";

const DEFAULT_REASONING: &str = "You write challenging questions about a piece of \
music. You receive a JSON description of a 25-second audio clip. Ask questions that \
require combining several musical properties with broader knowledge, such as how \
the music could be used, how a performer might approach it, or how it relates to \
other styles, and give thorough, well-argued answers grounded in what is audible. \
Do not ask about artist names, titles or albums and never mention the JSON or metadata.";

/// Templates keyed by (dataset, task), falling back to per-task defaults.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    specific: BTreeMap<(String, TaskFamily), PromptTemplate>,
    by_task: BTreeMap<TaskFamily, PromptTemplate>,
}

impl TemplateSet {
    pub fn with_defaults() -> Self {
        let mut set = Self::default();
        for task in TaskFamily::ALL {
            set.by_task.insert(task, PromptTemplate::default_for(task));
        }
        set
    }

    pub fn insert(&mut self, dataset: Option<&str>, task: TaskFamily, template: PromptTemplate) {
        match dataset {
            Some(d) => {
                self.specific.insert((d.to_string(), task), template);
            }
            None => {
                self.by_task.insert(task, template);
            }
        }
    }

    /// Reads `<task>.txt` and `<dataset>.<task>.txt` files over the
    /// built-in defaults.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::with_defaults();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for path in entries {
            if path.extension().is_none_or(|e| e != "txt") {
                continue;
            }
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let (dataset, task) = match stem.rsplit_once('.') {
                Some((d, t)) => (Some(d.to_string()), t.to_string()),
                None => (None, stem.clone()),
            };
            let Ok(task) = task.parse::<TaskFamily>() else {
                tracing::warn!(file = %path.display(), "ignoring template with unknown task");
                continue;
            };
            let template = PromptTemplate::parse(&std::fs::read_to_string(&path)?)?;
            set.insert(dataset.as_deref(), task, template);
        }
        Ok(set)
    }

    pub fn get(&self, dataset: &str, task: TaskFamily) -> Result<&PromptTemplate, TemplateError> {
        self.specific
            .get(&(dataset.to_string(), task))
            .or_else(|| self.by_task.get(&task))
            .ok_or(TemplateError::NoTemplate(task))
    }
}
