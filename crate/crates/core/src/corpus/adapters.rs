use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::{CorpusError, Ingested, IssueKind, Split, TaskFamily, TrackRecord};

pub const ADAPTER_NAMES: [&str; 7] = [
    "fma",
    "mtg_jamendo",
    "magnatagatune",
    "musicnet",
    "musiccaps",
    "yt8m_mtc",
    "generic",
];

/// MusicNet label times are sample indices at this rate.
const MUSICNET_RATE: f64 = 44_100.0;

pub trait Adapter {
    fn name(&self) -> &'static str;
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError>;
    /// Task families whose prompts apply to this corpus.
    fn task_families(&self) -> &'static [TaskFamily];
    /// Captioning uses every 25 s crop of a track rather than one.
    fn all_crops_for_captioning(&self) -> bool {
        false
    }
}

pub fn adapter(name: &str) -> Result<Box<dyn Adapter>, CorpusError> {
    Ok(match name {
        "fma" => Box::new(Fma),
        "mtg_jamendo" => Box::new(MtgJamendo),
        "magnatagatune" => Box::new(MagnaTagATune),
        "musicnet" => Box::new(MusicNet),
        "musiccaps" => Box::new(MusicCaps),
        "yt8m_mtc" => Box::new(Yt8mMtc),
        "generic" => Box::new(Generic),
        other => return Err(CorpusError::UnknownAdapter(other.to_string())),
    })
}

const MIR_AND_REASONING: &[TaskFamily] = &[TaskFamily::Understanding, TaskFamily::Reasoning];
const CAPTIONING: &[TaskFamily] = &[TaskFamily::Captioning];
const ALL_TASKS: &[TaskFamily] = &TaskFamily::ALL;

fn index_file(dir: &Path, name: &str) -> Result<PathBuf, CorpusError> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CorpusError::MissingIndex(path))
    }
}

/// First existing candidate, else None.
fn locate(candidates: &[PathBuf]) -> Option<PathBuf> {
    candidates.iter().find(|p| p.is_file()).cloned()
}

fn wav_name(path: &str) -> PathBuf {
    Path::new(path).with_extension("wav")
}

/// Parses a Python-style list literal such as `['rock', 'pop']` or `[1, 2]`.
fn python_list(text: &str) -> Option<Vec<String>> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?;
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    Some(
        inner
            .split(',')
            .map(|s| s.trim().trim_matches(|c| c == '\'' || c == '"').to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    )
}

fn string_list(items: impl IntoIterator<Item = String>) -> Value {
    Value::Array(items.into_iter().map(Value::String).collect())
}

fn csv_reader(path: &Path, delimiter: u8, headers: bool) -> Result<csv::Reader<std::fs::File>, CorpusError> {
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(headers)
        .flexible(true)
        .from_path(path)?)
}

fn location(path: &Path, line: u64) -> String {
    format!("{}:{}", path.display(), line)
}

fn record(dataset: &str, track_id: String, audio_path: PathBuf, annotations: Map<String, Value>, split: Split) -> TrackRecord {
    TrackRecord {
        track_id,
        dataset_name: dataset.to_string(),
        audio_path,
        annotations,
        split,
    }
}

struct Fma;

impl Adapter for Fma {
    fn name(&self) -> &'static str {
        "fma"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        MIR_AND_REASONING
    }

    /// `tracks.csv` with either the three-row hierarchical header of the
    /// public release or a flat one-row header; audio at `audio/<id>.wav`
    /// (zero-padded to six digits or bare).
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let path = index_file(dir, "tracks.csv")?;
        let mut rows = csv_reader(&path, b',', false)?.into_records();
        let mut out = Ingested::default();
        let first = match rows.next() {
            Some(r) => r?,
            None => return Ok(out),
        };
        let columns: Vec<String> = if first.get(0) == Some("track_id") {
            first.iter().map(String::from).collect()
        } else {
            let second = rows.next().transpose()?.unwrap_or_default();
            let _id_row = rows.next().transpose()?;
            let mut top = String::new();
            first
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if !t.is_empty() {
                        top = t.to_string();
                    }
                    match (i, second.get(i).unwrap_or("")) {
                        (0, _) => "track_id".to_string(),
                        (_, "") => top.clone(),
                        (_, sub) => format!("{top}.{sub}"),
                    }
                })
                .collect()
        };
        for row in rows {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    out.issue(IssueKind::MalformedAnnotation, path.display().to_string(), e.to_string());
                    continue;
                }
            };
            let line = row.position().map_or(0, |p| p.line());
            let id = row.get(0).unwrap_or("").trim();
            let numeric: u64 = match id.parse() {
                Ok(v) => v,
                Err(_) => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), format!("bad track_id {id:?}"));
                    continue;
                }
            };
            if row.len() != columns.len() {
                out.issue(
                    IssueKind::MalformedAnnotation,
                    location(&path, line),
                    format!("{} fields, expected {}", row.len(), columns.len()),
                );
                continue;
            }
            let mut ann = Map::new();
            for (col, value) in columns.iter().zip(row.iter()).skip(1) {
                if !value.is_empty() {
                    ann.insert(col.clone(), Value::String(value.to_string()));
                }
            }
            let field = |names: &[&str]| names.iter().find_map(|n| ann.get(*n).and_then(Value::as_str).map(String::from));
            let genre = field(&["track.genre_top", "genre_top", "genre"]);
            let title = field(&["track.title", "title"]);
            let artist = field(&["artist.name", "artist"]);
            let tags = field(&["track.tags", "tags"]).and_then(|t| python_list(&t));
            let split = match field(&["set.split", "split"]).as_deref() {
                Some("test") => Split::Test,
                _ => Split::Train,
            };
            if let Some(g) = genre {
                ann.insert("genre".into(), Value::String(g));
            }
            if let Some(t) = title {
                ann.insert("title".into(), Value::String(t));
            }
            if let Some(a) = artist {
                ann.insert("artist".into(), Value::String(a));
            }
            if let Some(t) = tags {
                ann.insert("tags".into(), string_list(t));
            }
            let audio = dir.join("audio");
            let Some(audio_path) = locate(&[
                audio.join(format!("{numeric:06}.wav")),
                audio.join(format!("{:03}/{numeric:06}.wav", numeric / 1000)),
                audio.join(format!("{id}.wav")),
            ]) else {
                out.issue(IssueKind::MissingAudio, location(&path, line), format!("no audio for track {id}"));
                continue;
            };
            out.push(record(self.name(), format!("{numeric:06}"), audio_path, ann, split));
        }
        Ok(out)
    }
}

struct MtgJamendo;

impl Adapter for MtgJamendo {
    fn name(&self) -> &'static str {
        "mtg_jamendo"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        MIR_AND_REASONING
    }

    /// `autotagging.tsv`: TRACK_ID, ARTIST_ID, ALBUM_ID, PATH, DURATION, then
    /// one `category---tag` per remaining column.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let path = index_file(dir, "autotagging.tsv")?;
        let mut out = Ingested::default();
        for (line_no, row) in csv_reader(&path, b'\t', true)?.into_records().enumerate() {
            let line = line_no as u64 + 2;
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), e.to_string());
                    continue;
                }
            };
            if row.len() < 5 {
                out.issue(IssueKind::MalformedAnnotation, location(&path, line), "fewer than five columns");
                continue;
            }
            let Ok(duration) = row[4].trim().parse::<f64>() else {
                out.issue(IssueKind::MalformedAnnotation, location(&path, line), format!("bad duration {:?}", &row[4]));
                continue;
            };
            let track_id = row[0].trim().to_string();
            let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
            let mut all = Vec::new();
            for tag in row.iter().skip(5).map(str::trim).filter(|t| !t.is_empty()) {
                all.push(tag.to_string());
                if let Some((cat, value)) = tag.split_once("---") {
                    let key = match cat {
                        "genre" => "genres",
                        "instrument" => "instruments",
                        "mood/theme" => "moods",
                        _ => "other_tags",
                    };
                    groups.entry(key).or_default().push(value.to_string());
                }
            }
            let mut ann = Map::new();
            ann.insert("artist_id".into(), json!(row[1].trim()));
            ann.insert("album_id".into(), json!(row[2].trim()));
            ann.insert("path".into(), json!(row[3].trim()));
            ann.insert("duration".into(), json!(duration));
            ann.insert("tags".into(), string_list(all));
            for (k, v) in groups {
                ann.insert(k.into(), string_list(v));
            }
            let audio = dir.join("audio");
            let Some(audio_path) = locate(&[audio.join(wav_name(row[3].trim())), audio.join(format!("{track_id}.wav"))]) else {
                out.issue(IssueKind::MissingAudio, location(&path, line), format!("no audio for {track_id}"));
                continue;
            };
            out.push(record(self.name(), track_id, audio_path, ann, Split::Train));
        }
        Ok(out)
    }
}

struct MagnaTagATune;

impl Adapter for MagnaTagATune {
    fn name(&self) -> &'static str {
        "magnatagatune"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        MIR_AND_REASONING
    }

    /// `annotations_final.csv` (tab separated): clip_id, one 0/1 column per
    /// tag, mp3_path.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let path = index_file(dir, "annotations_final.csv")?;
        let mut reader = csv_reader(&path, b'\t', true)?;
        let headers = reader.headers()?.clone();
        let mut out = Ingested::default();
        let n = headers.len();
        if n < 3 || &headers[0] != "clip_id" || &headers[n - 1] != "mp3_path" {
            return Err(CorpusError::Parse {
                path,
                line: 1,
                message: "expected clip_id ... mp3_path header".into(),
            });
        }
        for (line_no, row) in reader.into_records().enumerate() {
            let line = line_no as u64 + 2;
            let row = match row {
                Ok(r) if r.len() == n => r,
                Ok(r) => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), format!("{} fields, expected {n}", r.len()));
                    continue;
                }
                Err(e) => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), e.to_string());
                    continue;
                }
            };
            let mut tags = Vec::new();
            let mut bad = None;
            for i in 1..n - 1 {
                match row[i].trim() {
                    "1" => tags.push(headers[i].to_string()),
                    "0" => {}
                    other => bad = Some(format!("tag {:?} has value {other:?}", &headers[i])),
                }
            }
            if let Some(msg) = bad {
                out.issue(IssueKind::MalformedAnnotation, location(&path, line), msg);
                continue;
            }
            let clip_id = row[0].trim().to_string();
            let mp3 = row[n - 1].trim();
            let mut ann = Map::new();
            ann.insert("clip_id".into(), json!(clip_id));
            ann.insert("mp3_path".into(), json!(mp3));
            ann.insert("tags".into(), string_list(tags));
            let audio = dir.join("audio");
            let Some(audio_path) = locate(&[audio.join(wav_name(mp3)), audio.join(format!("{clip_id}.wav"))]) else {
                out.issue(IssueKind::MissingAudio, location(&path, line), format!("no audio for clip {clip_id}"));
                continue;
            };
            out.push(record(self.name(), clip_id, audio_path, ann, Split::Train));
        }
        Ok(out)
    }
}

struct MusicNet;

impl Adapter for MusicNet {
    fn name(&self) -> &'static str {
        "musicnet"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        ALL_TASKS
    }

    fn all_crops_for_captioning(&self) -> bool {
        true
    }

    /// `musicnet_metadata.csv` plus `{train,test}_labels/<id>.csv` note
    /// tables and `{train,test}_data/<id>.wav`. The directory holding the
    /// labels fixes the split.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let path = index_file(dir, "musicnet_metadata.csv")?;
        let mut reader = csv_reader(&path, b',', true)?;
        let headers = reader.headers()?.clone();
        let mut out = Ingested::default();
        for (line_no, row) in reader.into_records().enumerate() {
            let line = line_no as u64 + 2;
            let row = match row {
                Ok(r) if r.len() == headers.len() => r,
                Ok(_) | Err(_) => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), "metadata row has the wrong shape");
                    continue;
                }
            };
            let id = row[0].trim().to_string();
            let mut ann = Map::new();
            for (h, v) in headers.iter().zip(row.iter()).skip(1) {
                let value = v.trim().parse::<f64>().map(|f| json!(f)).unwrap_or_else(|_| json!(v));
                ann.insert(h.to_string(), value);
            }
            let split_dirs = [(Split::Train, "train"), (Split::Test, "test")];
            let Some((split, labels)) = split_dirs.iter().find_map(|(s, name)| {
                let p = dir.join(format!("{name}_labels")).join(format!("{id}.csv"));
                p.is_file().then_some((*s, p))
            }) else {
                out.issue(IssueKind::MalformedAnnotation, location(&path, line), format!("no label file for {id}"));
                continue;
            };
            let notes = match read_musicnet_labels(&labels, &mut out) {
                Ok(n) => n,
                Err(e) => {
                    out.issue(IssueKind::MalformedAnnotation, labels.display().to_string(), e.to_string());
                    continue;
                }
            };
            let mut instruments: Vec<i64> = notes.iter().filter_map(|n| n["instrument"].as_i64()).collect();
            instruments.sort_unstable();
            instruments.dedup();
            ann.insert("midi_programs".into(), json!(instruments));
            ann.insert("notes".into(), Value::Array(notes));
            let data_dir = if split == Split::Train { "train_data" } else { "test_data" };
            let Some(audio_path) = locate(&[dir.join(data_dir).join(format!("{id}.wav"))]) else {
                out.issue(IssueKind::MissingAudio, location(&path, line), format!("no audio for {id}"));
                continue;
            };
            out.push(record(self.name(), id, audio_path, ann, split));
        }
        Ok(out)
    }
}

/// Note events sorted by onset: `{onset_s, offset_s, pitch, instrument}`.
fn read_musicnet_labels(path: &Path, out: &mut Ingested) -> Result<Vec<Value>, CorpusError> {
    let mut reader = csv_reader(path, b',', true)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(start), Some(end), Some(inst), Some(note)) = (col("start_time"), col("end_time"), col("instrument"), col("note")) else {
        return Err(CorpusError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing start_time/end_time/instrument/note columns".into(),
        });
    };
    let mut notes = Vec::new();
    for (line_no, row) in reader.into_records().enumerate() {
        let line = line_no as u64 + 2;
        let parsed = row.ok().and_then(|r| {
            let s: f64 = r.get(start)?.trim().parse().ok()?;
            let e: f64 = r.get(end)?.trim().parse().ok()?;
            let i: i64 = r.get(inst)?.trim().parse().ok()?;
            let p: i64 = r.get(note)?.trim().parse().ok()?;
            (e >= s).then_some((s, e, i, p))
        });
        match parsed {
            Some((s, e, i, p)) => notes.push((s, e, i, p)),
            None => out.issue(IssueKind::MalformedAnnotation, location(path, line), "unreadable note row"),
        }
    }
    notes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));
    Ok(notes
        .into_iter()
        .map(|(s, e, i, p)| {
            json!({
                "onset_s": s / MUSICNET_RATE,
                "offset_s": e / MUSICNET_RATE,
                "pitch": p,
                "instrument": i,
            })
        })
        .collect())
}

struct MusicCaps;

impl Adapter for MusicCaps {
    fn name(&self) -> &'static str {
        "musiccaps"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        CAPTIONING
    }

    /// `musiccaps-public.csv`; rows flagged `is_audioset_eval` form the test
    /// split. Audio at `audio/<ytid>.wav`.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let path = index_file(dir, "musiccaps-public.csv")?;
        let mut reader = csv_reader(&path, b',', true)?;
        let headers = reader.headers()?.clone();
        let Some(id_col) = headers.iter().position(|h| h == "ytid") else {
            return Err(CorpusError::Parse {
                path,
                line: 1,
                message: "missing ytid column".into(),
            });
        };
        let mut out = Ingested::default();
        for (line_no, row) in reader.into_records().enumerate() {
            let line = line_no as u64 + 2;
            let row = match row {
                Ok(r) if r.len() == headers.len() => r,
                _ => {
                    out.issue(IssueKind::MalformedAnnotation, location(&path, line), "row has the wrong shape");
                    continue;
                }
            };
            let mut ann = Map::new();
            for (h, v) in headers.iter().zip(row.iter()) {
                let value = match h {
                    "aspect_list" | "audioset_positive_labels" => {
                        python_list(v).map(string_list).unwrap_or_else(|| json!(v))
                    }
                    "start_s" | "end_s" => v.trim().parse::<f64>().map(|f| json!(f)).unwrap_or_else(|_| json!(v)),
                    _ => json!(v),
                };
                ann.insert(h.to_string(), value);
            }
            if ann.get("caption").and_then(Value::as_str).is_none_or(|c| c.trim().is_empty()) {
                out.issue(IssueKind::MalformedAnnotation, location(&path, line), "empty caption");
                continue;
            }
            let split = match ann.get("is_audioset_eval").and_then(Value::as_str) {
                Some(v) if v.eq_ignore_ascii_case("true") => Split::Test,
                _ => Split::Train,
            };
            let ytid = row[id_col].trim().to_string();
            let Some(audio_path) = locate(&[dir.join("audio").join(format!("{ytid}.wav"))]) else {
                out.issue(IssueKind::MissingAudio, location(&path, line), format!("no audio for {ytid}"));
                continue;
            };
            out.push(record(self.name(), ytid, audio_path, ann, split));
        }
        Ok(out)
    }
}

struct Yt8mMtc;

impl Adapter for Yt8mMtc {
    fn name(&self) -> &'static str {
        "yt8m_mtc"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        CAPTIONING
    }

    /// Every `*.csv` in the directory with a `video_id` column and a `text`
    /// or `caption` column. Captions for one video are grouped; everything
    /// is train.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CorpusError::MissingIndex(dir.join("*.csv")));
        }
        let mut out = Ingested::default();
        let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for path in files {
            let mut reader = csv_reader(&path, b',', true)?;
            let headers = reader.headers()?.clone();
            let id_col = headers.iter().position(|h| h == "video_id");
            let text_col = headers.iter().position(|h| h == "text" || h == "caption");
            let (Some(id_col), Some(text_col)) = (id_col, text_col) else {
                out.issue(IssueKind::MalformedAnnotation, path.display().to_string(), "no video_id/text columns");
                continue;
            };
            for (line_no, row) in reader.into_records().enumerate() {
                let line = line_no as u64 + 2;
                let parsed = row.ok().and_then(|r| {
                    let id = r.get(id_col)?.trim().to_string();
                    let text = r.get(text_col)?.trim().to_string();
                    (!id.is_empty() && !text.is_empty()).then_some((id, text))
                });
                match parsed {
                    Some((id, text)) => grouped.entry(id).or_default().push(text),
                    None => out.issue(IssueKind::MalformedAnnotation, location(&path, line), "missing id or caption"),
                }
            }
        }
        for (id, captions) in grouped {
            let Some(audio_path) = locate(&[dir.join("audio").join(format!("{id}.wav"))]) else {
                out.issue(IssueKind::MissingAudio, id.clone(), "no audio file");
                continue;
            };
            let mut ann = Map::new();
            ann.insert("caption".into(), json!(captions[0]));
            ann.insert("captions".into(), string_list(captions));
            out.push(record(self.name(), id, audio_path, ann, Split::Train));
        }
        Ok(out)
    }
}

struct Generic;

impl Adapter for Generic {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn task_families(&self) -> &'static [TaskFamily] {
        ALL_TASKS
    }

    /// WAV files anywhere under `dir`, each with an optional sidecar
    /// `<stem>.json` object. A sidecar `split` of "test" marks the native
    /// split; a sidecar `dataset` overrides the dataset name.
    fn ingest(&self, dir: &Path) -> Result<Ingested, CorpusError> {
        if !dir.is_dir() {
            return Err(CorpusError::MissingIndex(dir.to_path_buf()));
        }
        let mut wavs = Vec::new();
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(std::io::Error::from)?;
            let path = entry.path();
            if entry.file_type().is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                wavs.push(path.to_path_buf());
            }
        }
        let mut out = Ingested::default();
        for wav in wavs {
            let rel = wav.strip_prefix(dir).unwrap_or(&wav).with_extension("");
            let track_id = rel.to_string_lossy().replace('\\', "/");
            let sidecar = wav.with_extension("json");
            let ann = if sidecar.is_file() {
                match serde_json::from_str::<Value>(&std::fs::read_to_string(&sidecar)?) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => {
                        out.issue(IssueKind::MalformedAnnotation, sidecar.display().to_string(), "sidecar is not an object");
                        continue;
                    }
                    Err(e) => {
                        out.issue(IssueKind::MalformedAnnotation, sidecar.display().to_string(), e.to_string());
                        continue;
                    }
                }
            } else {
                Map::new()
            };
            let split = match ann.get("split").and_then(Value::as_str) {
                Some("test") => Split::Test,
                _ => Split::Train,
            };
            let dataset = ann.get("dataset").and_then(Value::as_str).unwrap_or(self.name()).to_string();
            out.push(record(&dataset, track_id, wav, ann, split));
        }
        Ok(out)
    }
}
