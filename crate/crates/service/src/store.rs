//! Study storage backed by an append-only JSONL event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use musiq_core::rng::sha256_hex;
use musiq_core::study::{analyze, Judgment, RaterView, StudyDefinition, StudyError, StudyReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown item {item_id} in study {study_id}")]
    UnknownItem { study_id: String, item_id: String },
    #[error("rater {rater_id} already judged item {item_id}")]
    DuplicateJudgment { item_id: String, rater_id: String },
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("log {path} line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Study { study_id: String, definition: StudyDefinition },
    Judgment { study_id: String, judgment: Judgment },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitJudgment {
    pub study_id: String,
    pub item_id: String,
    pub rater_id: String,
    pub value: u32,
    #[serde(default)]
    pub screening_answer: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextItem {
    Item { position: usize, total: usize, item: RaterView },
    Done { total: usize },
}

#[derive(Debug, Default)]
struct StudyState {
    definition: StudyDefinition,
    index: BTreeMap<String, usize>,
    judgments: Vec<Judgment>,
    /// rater -> indices of judged items.
    judged: BTreeMap<String, BTreeSet<usize>>,
}

#[derive(Debug)]
struct Inner {
    studies: BTreeMap<String, StudyState>,
    log: File,
}

/// All mutations pass through one mutex and are fsynced to the log before
/// they become visible.
#[derive(Debug)]
pub struct StudyStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

/// Content-derived id, so re-uploading a definition yields the same study.
pub fn study_id(definition: &StudyDefinition) -> Result<String, serde_json::Error> {
    let bytes = serde_json::to_vec(definition)?;
    Ok(format!("s-{}", &sha256_hex(&bytes)[..16]))
}

impl StudyState {
    fn new(definition: StudyDefinition) -> Self {
        let index = definition
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.item_id.clone(), i))
            .collect();
        Self {
            definition,
            index,
            ..Default::default()
        }
    }

    fn check(&self, study_id: &str, j: &Judgment) -> Result<usize, StoreError> {
        let &pos = self.index.get(&j.item_id).ok_or_else(|| StoreError::UnknownItem {
            study_id: study_id.to_string(),
            item_id: j.item_id.clone(),
        })?;
        self.definition.items[pos].check_value(j.value)?;
        if self.judged.get(&j.rater_id).is_some_and(|s| s.contains(&pos)) {
            return Err(StoreError::DuplicateJudgment {
                item_id: j.item_id.clone(),
                rater_id: j.rater_id.clone(),
            });
        }
        Ok(pos)
    }

    fn apply(&mut self, pos: usize, j: Judgment) {
        self.judged.entry(j.rater_id.clone()).or_default().insert(pos);
        self.judgments.push(j);
    }
}

impl StudyStore {
    /// Opens the log at `path`, replaying every recorded event.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut studies: BTreeMap<String, StudyState> = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |message: String| StoreError::CorruptLog {
                    path: path.clone(),
                    line: n + 1,
                    message,
                };
                match serde_json::from_str::<Event>(&line) {
                    Ok(Event::Study { study_id, definition }) => {
                        studies.entry(study_id).or_insert_with(|| StudyState::new(definition));
                    }
                    Ok(Event::Judgment { study_id, judgment }) => {
                        let state = studies
                            .get_mut(&study_id)
                            .ok_or_else(|| corrupt(format!("judgment for unknown study {study_id}")))?;
                        let pos = state.check(&study_id, &judgment).map_err(|e| corrupt(e.to_string()))?;
                        state.apply(pos, judgment);
                    }
                    // A torn final line from a crash mid-write was never acknowledged.
                    Err(e) if e.is_eof() => {
                        tracing::warn!(line = n + 1, "ignoring truncated trailing log line");
                    }
                    Err(e) => return Err(corrupt(e.to_string())),
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        tracing::info!(path = %path.display(), studies = studies.len(), "study log opened");
        Ok(Self {
            path,
            inner: Mutex::new(Inner { studies, log }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn append(log: &mut File, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        log.write_all(&line)?;
        log.sync_data()?;
        Ok(())
    }

    pub fn upload_study(&self, definition: StudyDefinition) -> Result<String, StoreError> {
        definition.validate()?;
        let id = study_id(&definition)?;
        let mut inner = self.lock();
        if inner.studies.contains_key(&id) {
            return Ok(id);
        }
        let event = Event::Study {
            study_id: id.clone(),
            definition,
        };
        Self::append(&mut inner.log, &event)?;
        let Event::Study { definition, .. } = event else { unreachable!() };
        inner.studies.insert(id.clone(), StudyState::new(definition));
        Ok(id)
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.lock().studies.keys().cloned().collect()
    }

    pub fn definition(&self, study_id: &str) -> Result<StudyDefinition, StoreError> {
        let inner = self.lock();
        let state = inner
            .studies
            .get(study_id)
            .ok_or_else(|| StoreError::UnknownStudy(study_id.to_string()))?;
        Ok(state.definition.clone())
    }

    /// The lowest-index item this rater has not judged yet.
    pub fn next_item(&self, study_id: &str, rater_id: &str) -> Result<NextItem, StoreError> {
        let inner = self.lock();
        let state = inner
            .studies
            .get(study_id)
            .ok_or_else(|| StoreError::UnknownStudy(study_id.to_string()))?;
        let done = state.judged.get(rater_id);
        let total = state.definition.items.len();
        let next = (0..total).find(|i| done.is_none_or(|d| !d.contains(i)));
        Ok(match next {
            Some(position) => NextItem::Item {
                position,
                total,
                item: state.definition.items[position].rater_view(),
            },
            None => NextItem::Done { total },
        })
    }

    pub fn submit(&self, submission: SubmitJudgment, timestamp: u64) -> Result<Judgment, StoreError> {
        let judgment = Judgment {
            item_id: submission.item_id,
            rater_id: submission.rater_id,
            value: submission.value,
            screening_answer: submission.screening_answer,
            timestamp,
        };
        let mut inner = self.lock();
        let Inner { studies, log } = &mut *inner;
        let state = studies
            .get_mut(&submission.study_id)
            .ok_or_else(|| StoreError::UnknownStudy(submission.study_id.clone()))?;
        let pos = state.check(&submission.study_id, &judgment)?;
        Self::append(
            log,
            &Event::Judgment {
                study_id: submission.study_id.clone(),
                judgment: judgment.clone(),
            },
        )?;
        state.apply(pos, judgment.clone());
        Ok(judgment)
    }

    pub fn judgments(&self, study_id: &str) -> Result<Vec<Judgment>, StoreError> {
        let inner = self.lock();
        let state = inner
            .studies
            .get(study_id)
            .ok_or_else(|| StoreError::UnknownStudy(study_id.to_string()))?;
        Ok(state.judgments.clone())
    }

    pub fn results(&self, study_id: &str) -> Result<StudyReport, StoreError> {
        let inner = self.lock();
        let state = inner
            .studies
            .get(study_id)
            .ok_or_else(|| StoreError::UnknownStudy(study_id.to_string()))?;
        Ok(analyze(&state.definition.items, &state.judgments)?)
    }
}
