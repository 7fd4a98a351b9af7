//! Uniform track records over heterogeneous annotated corpora.

mod adapters;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use adapters::{adapter, Adapter, ADAPTER_NAMES};

use crate::rng::keyed_rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown adapter {0:?}")]
    UnknownAdapter(String),
    #[error("annotation index not found: {0}")]
    MissingIndex(PathBuf),
    #[error("requested {requested} test tracks but the corpus holds {available}")]
    NotEnoughTracks { requested: usize, available: usize },
    #[error("invalid split rule {0:?}")]
    BadSplitRule(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskFamily {
    Understanding,
    Captioning,
    Reasoning,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 3] = [
        TaskFamily::Understanding,
        TaskFamily::Captioning,
        TaskFamily::Reasoning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskFamily::Understanding => "understanding",
            TaskFamily::Captioning => "captioning",
            TaskFamily::Reasoning => "reasoning",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "understanding" | "mir" => Ok(TaskFamily::Understanding),
            "captioning" => Ok(TaskFamily::Captioning),
            "reasoning" => Ok(TaskFamily::Reasoning),
            other => Err(format!("unknown task family {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub dataset_name: String,
    pub audio_path: PathBuf,
    pub annotations: Map<String, Value>,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingAudio,
    MalformedAnnotation,
    DuplicateTrack,
}

/// A skipped row or track, kept for the ingest log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub kind: IssueKind,
    pub location: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<TrackRecord>,
    pub issues: Vec<IngestIssue>,
}

impl Ingested {
    pub(crate) fn push(&mut self, record: TrackRecord) {
        if self.records.iter().any(|r| r.track_id == record.track_id) {
            self.issues.push(IngestIssue {
                kind: IssueKind::DuplicateTrack,
                location: record.track_id.clone(),
                detail: "track id already ingested; later row dropped".into(),
            });
            return;
        }
        self.records.push(record);
    }

    pub(crate) fn issue(&mut self, kind: IssueKind, location: impl Into<String>, detail: impl Into<String>) {
        let issue = IngestIssue {
            kind,
            location: location.into(),
            detail: detail.into(),
        };
        tracing::warn!(kind = ?issue.kind, location = %issue.location, "{}", issue.detail);
        self.issues.push(issue);
    }
}

/// Reads `dataset_dir` with the named adapter.
pub fn ingest(dataset_dir: &Path, adapter_name: &str) -> Result<Ingested, CorpusError> {
    adapter(adapter_name)?.ingest(dataset_dir)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Keep whatever split the adapter read from the corpus.
    Native,
    /// Listed ids are test, everything else train.
    Official { test_ids: Vec<String> },
    /// Exactly `n` seeded test tracks.
    RandomN { n: usize, seed: u64 },
}

impl FromStr for SplitRule {
    type Err = CorpusError;

    /// `native`, `official:<file with one id per line>` or `random:<n>:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadSplitRule(s.to_string());
        let mut parts = s.splitn(3, ':');
        match parts.next() {
            Some("native") => Ok(SplitRule::Native),
            Some("official") => {
                let path = parts.next().ok_or_else(bad)?;
                let text = std::fs::read_to_string(path)?;
                let test_ids = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect();
                Ok(SplitRule::Official { test_ids })
            }
            Some("random") => {
                let n = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let seed = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                Ok(SplitRule::RandomN { n, seed })
            }
            _ => Err(bad()),
        }
    }
}

/// Applies `rule`. The random draw depends only on the set of ids and the
/// seed, not on record order.
pub fn assign_split(mut records: Vec<TrackRecord>, rule: &SplitRule) -> Result<Vec<TrackRecord>, CorpusError> {
    match rule {
        SplitRule::Native => {}
        SplitRule::Official { test_ids } => {
            let test: BTreeSet<&str> = test_ids.iter().map(String::as_str).collect();
            for r in &mut records {
                r.split = if test.contains(r.track_id.as_str()) {
                    Split::Test
                } else {
                    Split::Train
                };
            }
        }
        SplitRule::RandomN { n, seed } => {
            if *n > records.len() {
                return Err(CorpusError::NotEnoughTracks {
                    requested: *n,
                    available: records.len(),
                });
            }
            let mut ids: Vec<&str> = records.iter().map(|r| r.track_id.as_str()).collect();
            ids.sort_unstable();
            ids.shuffle(&mut keyed_rng(*seed, "split"));
            let test: BTreeSet<String> = ids[..*n].iter().map(|s| s.to_string()).collect();
            for r in &mut records {
                r.split = if test.contains(&r.track_id) {
                    Split::Test
                } else {
                    Split::Train
                };
            }
        }
    }
    Ok(records)
}

/// Counts for one dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub dataset_name: String,
    pub counts: BTreeMap<Split, BTreeMap<TaskFamily, u64>>,
    #[serde(default)]
    pub all_crops_for_captioning: bool,
}

impl CorpusManifest {
    pub fn new(dataset_name: impl Into<String>) -> Self {
        Self {
            dataset_name: dataset_name.into(),
            ..Default::default()
        }
    }

    pub fn with_count(mut self, split: Split, task: TaskFamily, count: u64) -> Self {
        self.add(split, task, count);
        self
    }

    pub fn add(&mut self, split: Split, task: TaskFamily, count: u64) {
        *self.counts.entry(split).or_default().entry(task).or_default() += count;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flat_map(|m| m.values()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitTally {
    pub by_task: BTreeMap<TaskFamily, u64>,
    pub total: u64,
    /// Share of `total` per task family, in [0, 1].
    pub share: BTreeMap<TaskFamily, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TallyReport {
    pub splits: BTreeMap<Split, SplitTally>,
    pub datasets: usize,
}

impl TallyReport {
    pub fn total(&self, split: Split) -> u64 {
        self.splits.get(&split).map_or(0, |s| s.total)
    }

    pub fn grand_total(&self) -> u64 {
        self.splits.values().map(|s| s.total).sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<6} {:>14} {:>14} {:>14} {:>12}\n",
            "split", "understanding", "captioning", "reasoning", "total"
        );
        for (split, t) in &self.splits {
            out.push_str(&format!("{:<6}", split.to_string()));
            for task in TaskFamily::ALL {
                let n = t.by_task.get(&task).copied().unwrap_or(0);
                let share = t.share.get(&task).copied().unwrap_or(0.0);
                out.push_str(&format!(" {:>7} ({:>4.1}%)", n, share * 100.0));
            }
            out.push_str(&format!(" {:>12}\n", t.total));
        }
        out
    }
}

pub fn tally<'a>(manifests: impl IntoIterator<Item = &'a CorpusManifest>) -> TallyReport {
    let mut report = TallyReport::default();
    for m in manifests {
        report.datasets += 1;
        for (split, tasks) in &m.counts {
            let entry = report.splits.entry(*split).or_default();
            for (task, n) in tasks {
                *entry.by_task.entry(*task).or_default() += n;
                entry.total += n;
            }
        }
    }
    for t in report.splits.values_mut() {
        t.share = t
            .by_task
            .iter()
            .map(|(task, n)| {
                let share = if t.total == 0 { 0.0 } else { *n as f64 / t.total as f64 };
                (*task, share)
            })
            .collect();
    }
    report
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
