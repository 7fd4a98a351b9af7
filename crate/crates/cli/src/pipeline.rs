//! ingest -> crop -> augment -> generate -> filter -> pack, with a per-stage
//! checkpoint and an aggregate counts ledger.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use musiq_core::audio::{crop_all, crop_clip, decode_and_normalize, decode_wav, write_clip_wav, AudioClip};
use musiq_core::corpus::{
    adapter, assign_split, ingest, read_jsonl, tally, write_jsonl, CorpusManifest, IngestIssue, Split, SplitRule,
    TaskFamily, TallyReport, TrackRecord,
};
use musiq_core::instruct::{
    build_metadata_doc, cap_tracks, filter_pairs, generate_batch, pack_dataset, render_doc, route, ChatClient,
    FilterList, GenerationJob, Generated, HttpChatClient, InstructionRecord, PackConfig, ParseIssue, Rejection,
    RetryPolicy, TemplateSet,
};
use musiq_core::mir::{augment, AugmentedMetadata};
use musiq_core::rng::sha256_hex;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Crop,
    Augment,
    Generate,
    Filter,
    Pack,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Crop,
        Stage::Augment,
        Stage::Generate,
        Stage::Filter,
        Stage::Pack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Crop => "crop",
            Stage::Augment => "augment",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Pack => "pack",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub tracks: usize,
    pub issues: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropCounts {
    pub tracks: usize,
    pub clips: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentCounts {
    pub clips: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateCounts {
    pub jobs: usize,
    pub capped: usize,
    pub pairs: usize,
    pub parse_issues: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub input: usize,
    pub rejected: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackCounts {
    pub records: usize,
    pub shards: usize,
    pub by_split: BTreeMap<Split, usize>,
}

/// Stage-by-stage counts for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub config_hash: String,
    pub ingest: IngestCounts,
    pub crop: CropCounts,
    pub augment: AugmentCounts,
    pub generate: GenerateCounts,
    pub filter: FilterCounts,
    pub pack: PackCounts,
}

impl Ledger {
    /// Arithmetic relations between stages that every complete run obeys.
    pub fn inconsistencies(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        check(
            self.crop.tracks + self.crop.failed == self.ingest.tracks,
            format!("cropped {} + failed {} != ingested {}", self.crop.tracks, self.crop.failed, self.ingest.tracks),
        );
        check(
            self.augment.clips + self.augment.failed == self.crop.clips,
            format!("augmented {} + failed {} != clips {}", self.augment.clips, self.augment.failed, self.crop.clips),
        );
        check(
            self.filter.input == self.generate.pairs,
            format!("filter input {} != generated {}", self.filter.input, self.generate.pairs),
        );
        check(
            self.generate.pairs - self.filter.rejected.min(self.generate.pairs) == self.pack.records,
            format!(
                "generated {} - filtered {} != packed {}",
                self.generate.pairs, self.filter.rejected, self.pack.records
            ),
        );
        out
    }

    pub fn to_table(&self) -> String {
        format!(
            "stage     in/out\n\
             ingest    tracks {} (issues {})\n\
             crop      tracks {} -> clips {} (failed {})\n\
             augment   clips {} (failed {})\n\
             generate  jobs {} (capped {}) -> pairs {} (parse issues {})\n\
             filter    {} -> kept {} (rejected {})\n\
             pack      records {} in {} shards\n",
            self.ingest.tracks,
            self.ingest.issues,
            self.crop.tracks,
            self.crop.clips,
            self.crop.failed,
            self.augment.clips,
            self.augment.failed,
            self.generate.jobs,
            self.generate.capped,
            self.generate.pairs,
            self.generate.parse_issues,
            self.filter.input,
            self.filter.kept,
            self.filter.rejected,
            self.pack.records,
            self.pack.shards,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint<C> {
    config_hash: String,
    counts: C,
}

pub const LEDGER_FILE: &str = "ledger.json";
const DONE_FILE: &str = "done.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedTrack {
    pub task_families: Vec<TaskFamily>,
    pub all_crops_for_captioning: bool,
    pub record: TrackRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub track_id: String,
    pub dataset_name: String,
    pub split: Split,
    pub task_families: Vec<TaskFamily>,
    pub offset_s: f64,
    pub duration_s: f64,
    /// Relative to the work directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetadata {
    pub clip_id: String,
    pub metadata: AugmentedMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JobIssue {
    job: String,
    issue: ParseIssue,
}

/// Paths of each stage's outputs under the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn stage(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn tracks(&self) -> PathBuf {
        self.stage(Stage::Ingest).join("tracks.jsonl")
    }

    pub fn clips(&self) -> PathBuf {
        self.stage(Stage::Crop).join("clips.jsonl")
    }

    pub fn metadata(&self) -> PathBuf {
        self.stage(Stage::Augment).join("metadata.jsonl")
    }

    pub fn generated(&self) -> PathBuf {
        self.stage(Stage::Generate).join("records.jsonl")
    }

    pub fn cache(&self) -> PathBuf {
        self.stage(Stage::Generate).join("cache")
    }

    pub fn kept(&self) -> PathBuf {
        self.stage(Stage::Filter).join("kept.jsonl")
    }

    pub fn rejected(&self) -> PathBuf {
        self.stage(Stage::Filter).join("rejected.jsonl")
    }

    pub fn pack(&self, split: Split) -> PathBuf {
        self.stage(Stage::Pack).join(match split {
            Split::Train => "train",
            Split::Test => "test",
        })
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join(LEDGER_FILE)
    }
}

fn read_checkpoint<C: DeserializeOwned>(layout: &Layout, stage: Stage, hash: &str) -> Option<C> {
    let text = std::fs::read_to_string(layout.stage(stage).join(DONE_FILE)).ok()?;
    let cp: Checkpoint<C> = serde_json::from_str(&text).ok()?;
    (cp.config_hash == hash).then_some(cp.counts)
}

fn write_checkpoint<C: Serialize>(layout: &Layout, stage: Stage, hash: &str, counts: &C) -> Result<()> {
    let cp = Checkpoint {
        config_hash: hash.to_string(),
        counts,
    };
    write_json(&layout.stage(stage).join(DONE_FILE), &cp)
}

fn clear_checkpoint(layout: &Layout, stage: Stage) -> Result<()> {
    let path = layout.stage(stage).join(DONE_FILE);
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(path, items).with_context(|| format!("writing {}", path.display()))
}

/// Runs every stage with the configured HTTP endpoint.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Ledger> {
    let client = http_client(config)?;
    run_pipeline_with(config, &client)
}

pub fn http_client(config: &PipelineConfig) -> Result<HttpChatClient> {
    let g = &config.generation;
    let retry = RetryPolicy {
        max_retries: g.max_retries,
        base_delay_ms: g.base_delay_ms,
        ..RetryPolicy::default()
    };
    Ok(HttpChatClient::new(&g.endpoint, Duration::from_secs(g.timeout_s), retry)?.with_api_key(config.api_key.clone()))
}

/// Runs every stage, reusing checkpoints whose config hash matches.
pub fn run_pipeline_with(config: &PipelineConfig, client: &dyn ChatClient) -> Result<Ledger> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs.max(1)).build()?;
    let layout = Layout::new(&config.work_dir);
    let hash = config.hash();
    let mut fresh = false;
    let mut ledger = Ledger {
        config_hash: hash.clone(),
        ..Default::default()
    };
    for stage in Stage::ALL {
        let _span = tracing::info_span!("stage", name = stage.name()).entered();
        macro_rules! step {
            ($field:ident, $body:expr) => {{
                let reused = if fresh { None } else { read_checkpoint(&layout, stage, &hash) };
                ledger.$field = match reused {
                    Some(c) => {
                        tracing::info!("checkpoint reused");
                        c
                    }
                    None => {
                        fresh = true;
                        clear_checkpoint(&layout, stage)?;
                        let counts = $body.with_context(|| format!("stage {}", stage.name()))?;
                        write_checkpoint(&layout, stage, &hash, &counts)?;
                        counts
                    }
                };
            }};
        }
        match stage {
            Stage::Ingest => step!(ingest, ingest_stage(config, &layout)),
            Stage::Crop => step!(crop, pool.install(|| crop_stage(config, &layout))),
            Stage::Augment => step!(augment, pool.install(|| augment_stage(config, &layout))),
            Stage::Generate => step!(generate, generate_stage(config, &layout, client)),
            Stage::Filter => step!(filter, filter_stage(config, &layout)),
            Stage::Pack => step!(pack, pack_stage(config, &layout)),
        }
    }
    write_json(&layout.ledger(), &ledger)?;
    for problem in ledger.inconsistencies() {
        tracing::warn!(%problem, "ledger inconsistency");
    }
    Ok(ledger)
}

/// Runs a single stage from the previous stage's outputs on disk.
pub fn run_stage(config: &PipelineConfig, stage: Stage, client: Option<&dyn ChatClient>) -> Result<serde_json::Value> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs.max(1)).build()?;
    let layout = Layout::new(&config.work_dir);
    let hash = config.hash();
    clear_checkpoint(&layout, stage)?;
    let counts = match stage {
        Stage::Ingest => serde_json::to_value(ingest_stage(config, &layout)?)?,
        Stage::Crop => serde_json::to_value(pool.install(|| crop_stage(config, &layout))?)?,
        Stage::Augment => serde_json::to_value(pool.install(|| augment_stage(config, &layout))?)?,
        Stage::Generate => {
            let owned;
            let client = match client {
                Some(c) => c,
                None => {
                    owned = http_client(config)?;
                    &owned
                }
            };
            serde_json::to_value(generate_stage(config, &layout, client)?)?
        }
        Stage::Filter => serde_json::to_value(filter_stage(config, &layout)?)?,
        Stage::Pack => serde_json::to_value(pack_stage(config, &layout)?)?,
    };
    write_checkpoint(&layout, stage, &hash, &counts)?;
    Ok(counts)
}

fn ingest_stage(config: &PipelineConfig, layout: &Layout) -> Result<IngestCounts> {
    let mut tracks = Vec::new();
    let mut issues: Vec<IngestIssue> = Vec::new();
    for source in &config.datasets {
        let got = ingest(&source.root, &source.adapter)
            .with_context(|| format!("dataset {} at {}", source.name, source.root.display()))?;
        let rule: SplitRule = source.split.parse()?;
        let records = assign_split(got.records, &rule)?;
        let adapter = adapter(&source.adapter)?;
        let task_families: Vec<TaskFamily> = adapter
            .task_families()
            .iter()
            .copied()
            .filter(|t| source.tasks.as_ref().is_none_or(|only| only.contains(t)))
            .collect();
        tracing::info!(dataset = %source.name, tracks = records.len(), issues = got.issues.len(), "ingested");
        issues.extend(got.issues);
        tracks.extend(records.into_iter().map(|record| StagedTrack {
            task_families: task_families.clone(),
            all_crops_for_captioning: adapter.all_crops_for_captioning(),
            record,
        }));
    }
    write(&layout.tracks(), &tracks)?;
    write(&layout.stage(Stage::Ingest).join("issues.jsonl"), &issues)?;
    Ok(IngestCounts {
        tracks: tracks.len(),
        issues: issues.len(),
    })
}

fn clip_id(clip: &AudioClip) -> String {
    let offset_ms = (clip.offset_s * 1000.0).round() as u64;
    format!("{}@{offset_ms}", clip.track_id)
}

fn crop_track(config: &PipelineConfig, layout: &Layout, track: &StagedTrack) -> Result<Vec<ClipRecord>> {
    let raw = std::fs::read(&track.record.audio_path)?;
    let mut full = decode_and_normalize(&raw, config.sample_rate)?;
    full.track_id = track.record.track_id.clone();
    let families = &track.task_families;
    let all_crops = track.all_crops_for_captioning;
    let mut planned: Vec<(AudioClip, Vec<TaskFamily>)> = Vec::new();
    let single: Vec<TaskFamily> = families
        .iter()
        .copied()
        .filter(|t| !(all_crops && *t == TaskFamily::Captioning))
        .collect();
    if !single.is_empty() {
        planned.push((crop_clip(&full, &config.crop)?, single));
    }
    if all_crops && families.contains(&TaskFamily::Captioning) {
        for clip in crop_all(&full, config.crop.clip_len_s)? {
            planned.push((clip, vec![TaskFamily::Captioning]));
        }
    }
    let dir = layout.stage(Stage::Crop).join("clips");
    let mut out = Vec::new();
    for (clip, task_families) in planned {
        let path = write_clip_wav(&clip, &dir)?;
        let rel = path.strip_prefix(&layout.root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        out.push(ClipRecord {
            clip_id: clip_id(&clip),
            track_id: clip.track_id.clone(),
            dataset_name: track.record.dataset_name.clone(),
            split: track.record.split,
            task_families,
            offset_s: clip.offset_s,
            duration_s: clip.duration_s,
            path: rel,
        });
    }
    Ok(out)
}

fn crop_stage(config: &PipelineConfig, layout: &Layout) -> Result<CropCounts> {
    let tracks: Vec<StagedTrack> = read(&layout.tracks())?;
    let results: Vec<Result<Vec<ClipRecord>>> = tracks.par_iter().map(|t| crop_track(config, layout, t)).collect();
    let mut clips = Vec::new();
    let mut failures = Vec::new();
    let mut counts = CropCounts::default();
    for (track, result) in tracks.iter().zip(results) {
        match result {
            Ok(c) => {
                counts.tracks += 1;
                clips.extend(c);
            }
            Err(e) => {
                tracing::warn!(track = %track.record.track_id, error = %e, "crop failed");
                failures.push(StageFailure {
                    id: track.record.track_id.clone(),
                    error: format!("{e:#}"),
                });
            }
        }
    }
    counts.clips = clips.len();
    counts.failed = failures.len();
    write(&layout.clips(), &clips)?;
    write(&layout.stage(Stage::Crop).join("failures.jsonl"), &failures)?;
    Ok(counts)
}

fn load_clip(layout: &Layout, clip: &ClipRecord) -> Result<AudioClip> {
    let raw = std::fs::read(layout.root.join(&clip.path))?;
    let (samples, rate) = decode_wav(&raw)?;
    Ok(AudioClip::from_unclamped(clip.clip_id.clone(), samples, rate, clip.offset_s)?)
}

fn augment_stage(config: &PipelineConfig, layout: &Layout) -> Result<AugmentCounts> {
    let clips: Vec<ClipRecord> = read(&layout.clips())?;
    let results: Vec<Result<AugmentedMetadata>> = clips
        .par_iter()
        .map(|c| Ok(augment(&load_clip(layout, c)?, &config.mir)?))
        .collect();
    let mut metadata = Vec::new();
    let mut failures = Vec::new();
    for (clip, result) in clips.iter().zip(results) {
        match result {
            Ok(m) => metadata.push(ClipMetadata {
                clip_id: clip.clip_id.clone(),
                metadata: m,
            }),
            Err(e) => {
                tracing::warn!(clip = %clip.clip_id, error = %e, "augmentation failed");
                failures.push(StageFailure {
                    id: clip.clip_id.clone(),
                    error: format!("{e:#}"),
                });
            }
        }
    }
    write(&layout.metadata(), &metadata)?;
    write(&layout.stage(Stage::Augment).join("failures.jsonl"), &failures)?;
    Ok(AugmentCounts {
        clips: metadata.len(),
        failed: failures.len(),
    })
}

struct PlannedJob {
    key: String,
    clip: ClipRecord,
    job: GenerationJob,
}

fn job_key(config: &PipelineConfig, job: &GenerationJob) -> String {
    let model = config.generation.models.model(job.route.model_tier);
    let text = format!(
        "{model}\u{0}{}\u{0}{}\u{0}{}",
        config.generation.temperature,
        job.template.system,
        job.template.render_user(&job.doc_text)
    );
    sha256_hex(text.as_bytes())
}

fn plan_jobs(config: &PipelineConfig, layout: &Layout) -> Result<(Vec<PlannedJob>, usize)> {
    let tracks: BTreeMap<String, TrackRecord> = read::<StagedTrack>(&layout.tracks())?
        .into_iter()
        .map(|t| (t.record.track_id.clone(), t.record))
        .collect();
    let clips: BTreeMap<String, ClipRecord> =
        read::<ClipRecord>(&layout.clips())?.into_iter().map(|c| (c.clip_id.clone(), c)).collect();
    let metadata: Vec<ClipMetadata> = read(&layout.metadata())?;
    let templates = match &config.generation.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::with_defaults(),
    };

    // Reasoning generation is capped per dataset.
    let mut reasoning: BTreeMap<&str, Vec<&ClipMetadata>> = BTreeMap::new();
    for m in &metadata {
        let clip = &clips[&m.clip_id];
        if clip.task_families.contains(&TaskFamily::Reasoning) {
            reasoning.entry(clip.dataset_name.as_str()).or_default().push(m);
        }
    }
    let mut allowed = std::collections::BTreeSet::new();
    let mut capped = 0;
    for items in reasoning.values() {
        let kept = cap_tracks(items, config.generation.routing.reasoning_track_cap, config.seed, |m| {
            m.clip_id.as_str()
        });
        capped += items.len() - kept.len();
        allowed.extend(kept.into_iter().map(|m| m.clip_id.clone()));
    }

    let mut jobs = Vec::new();
    for m in &metadata {
        let clip = &clips[&m.clip_id];
        let track = tracks
            .get(&clip.track_id)
            .with_context(|| format!("clip {} has no track {}", clip.clip_id, clip.track_id))?;
        let doc_text = render_doc(&build_metadata_doc(track, &m.metadata));
        for &task in &clip.task_families {
            if task == TaskFamily::Reasoning && !allowed.contains(&m.clip_id) {
                continue;
            }
            let job = GenerationJob {
                doc_text: doc_text.clone(),
                template: templates.get(&clip.dataset_name, task)?.clone(),
                route: route(task, &doc_text, &config.generation.routing),
            };
            jobs.push(PlannedJob {
                key: job_key(config, &job),
                clip: clip.clone(),
                job,
            });
        }
    }
    Ok((jobs, capped))
}

fn generate_stage(config: &PipelineConfig, layout: &Layout, client: &dyn ChatClient) -> Result<GenerateCounts> {
    let (jobs, capped) = plan_jobs(config, layout)?;
    let cache = layout.cache();
    std::fs::create_dir_all(&cache)?;
    let cached = |key: &str| -> Option<Generated> {
        let text = std::fs::read_to_string(cache.join(format!("{key}.json"))).ok()?;
        serde_json::from_str(&text).ok()
    };
    let pending: Vec<&PlannedJob> = jobs.iter().filter(|j| cached(&j.key).is_none()).collect();
    tracing::info!(jobs = jobs.len(), cached = jobs.len() - pending.len(), "generation plan");

    // Results are cached chunk by chunk so an interrupted run resumes.
    let in_flight = config.generation.in_flight.max(1);
    for chunk in pending.chunks(in_flight * 4) {
        let batch: Vec<GenerationJob> = chunk.iter().map(|p| p.job.clone()).collect();
        let results = generate_batch(
            &batch,
            &config.generation.models,
            config.generation.temperature,
            client,
            in_flight,
        );
        let mut first_error = None;
        for (planned, result) in chunk.iter().zip(results) {
            match result {
                Ok(generated) => write_json(&cache.join(format!("{}.json", planned.key)), &generated)?,
                Err(e) => {
                    tracing::error!(clip = %planned.clip.clip_id, error = %e, "generation failed");
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(anyhow::Error::new(e).context("chat endpoint failed; completed jobs are cached for resume"));
        }
    }

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for planned in &jobs {
        let generated = cached(&planned.key).with_context(|| format!("missing cached result {}", planned.key))?;
        let task = planned.job.route.task_family;
        let job_id = format!("{}:{}", planned.clip.clip_id, task.as_str());
        for (k, pair) in generated.pairs.into_iter().enumerate() {
            records.push(InstructionRecord {
                id: format!("{job_id}:{k}"),
                dataset_name: planned.clip.dataset_name.clone(),
                task_family: task,
                clip_ref: planned.clip.path.clone(),
                query: pair.query,
                response: pair.response,
            });
        }
        issues.extend(generated.issues.into_iter().map(|issue| JobIssue {
            job: job_id.clone(),
            issue,
        }));
    }
    write(&layout.generated(), &records)?;
    write(&layout.stage(Stage::Generate).join("parse_issues.jsonl"), &issues)?;
    Ok(GenerateCounts {
        jobs: jobs.len(),
        capped,
        pairs: records.len(),
        parse_issues: issues.len(),
    })
}

fn filter_stage(config: &PipelineConfig, layout: &Layout) -> Result<FilterCounts> {
    let records: Vec<InstructionRecord> = read(&layout.generated())?;
    let filters = match &config.filter_phrases {
        Some(path) => FilterList::load(path).with_context(|| format!("filter phrases {}", path.display()))?,
        None => FilterList::default(),
    };
    let input = records.len();
    let outcome = filter_pairs(records, &filters);
    write(&layout.kept(), &outcome.kept)?;
    let rejected: &[Rejection<InstructionRecord>] = &outcome.rejected;
    write(&layout.rejected(), rejected)?;
    Ok(FilterCounts {
        input,
        rejected: outcome.rejected.len(),
        kept: outcome.kept.len(),
    })
}

fn pack_stage(config: &PipelineConfig, layout: &Layout) -> Result<PackCounts> {
    let kept: Vec<InstructionRecord> = read(&layout.kept())?;
    let splits: BTreeMap<String, Split> = read::<ClipRecord>(&layout.clips())?
        .into_iter()
        .map(|c| (c.path, c.split))
        .collect();
    let mut by_split: BTreeMap<Split, Vec<InstructionRecord>> = BTreeMap::new();
    for r in kept {
        let split = *splits
            .get(&r.clip_ref)
            .with_context(|| format!("record {} references unknown clip {}", r.id, r.clip_ref))?;
        by_split.entry(split).or_default().push(r);
    }
    let mut counts = PackCounts::default();
    let mut manifests: BTreeMap<String, CorpusManifest> = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        let dir = layout.pack(split);
        let records = by_split.remove(&split).unwrap_or_default();
        if records.is_empty() {
            if dir.exists() {
                std::fs::remove_dir_all(&dir)?;
            }
            continue;
        }
        let cfg = PackConfig {
            shard_size: config.shard_size,
            seed: config.seed,
        };
        let manifest = pack_dataset(records, &dir, &cfg, Some(config.hash()))?;
        for (dataset, tasks) in &manifest.counts {
            let m = manifests
                .entry(dataset.clone())
                .or_insert_with(|| CorpusManifest::new(dataset.clone()));
            for (task, n) in tasks {
                m.add(split, *task, *n as u64);
            }
        }
        counts.records += manifest.total;
        counts.shards += manifest.shards.len();
        counts.by_split.insert(split, manifest.total);
    }
    let report: TallyReport = tally(manifests.values());
    write_json(&layout.stage(Stage::Pack).join("tally.json"), &report)?;
    Ok(counts)
}
