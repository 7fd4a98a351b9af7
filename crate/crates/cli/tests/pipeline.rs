use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use musiq_cli::config::DatasetSource;
use musiq_cli::pipeline::Layout;
use musiq_cli::{run_pipeline, run_pipeline_with, PipelineConfig};
use musiq_core::corpus::{read_jsonl, Split, TaskFamily};
use musiq_core::instruct::{ChatClient, ChatRequest, EndpointError, InstructionRecord, PackManifest, MANIFEST_FILE};
use musiq_core::synth::write_demo_corpus;
use musiq_service::stub::{self, StubConfig, StubState};
use musiq_service::RunningServer;

fn corpus(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_demo_corpus(dir.path(), n, 25.0).unwrap();
    dir
}

fn start_stub(config: StubConfig) -> (RunningServer, Arc<StubState>) {
    let state = StubState::new(config);
    let server = RunningServer::spawn(stub::router(state.clone()), "127.0.0.1:0").unwrap();
    (server, state)
}

fn config(corpus: &Path, work: &Path, stub: &RunningServer, tasks: Option<Vec<TaskFamily>>) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        work_dir: work.to_path_buf(),
        seed: 3,
        datasets: vec![DatasetSource {
            name: "demo".into(),
            adapter: "generic".into(),
            root: corpus.to_path_buf(),
            split: "random:2:0".into(),
            tasks,
        }],
        ..Default::default()
    };
    cfg.generation.endpoint = format!("{}/v1/chat/completions", stub.url());
    cfg.generation.base_delay_ms = 1;
    cfg
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn three_pairs_per_track_packs_thirty() {
    let corpus = corpus(10);
    let work = tempfile::tempdir().unwrap();
    let (server, state) = start_stub(StubConfig::default());
    let cfg = config(corpus.path(), work.path(), &server, Some(vec![TaskFamily::Captioning]));
    let ledger = run_pipeline(&cfg).unwrap();
    assert!(ledger.inconsistencies().is_empty(), "{:?}", ledger.inconsistencies());
    assert_eq!(ledger.ingest.tracks, 10);
    assert_eq!((ledger.crop.tracks, ledger.crop.clips, ledger.augment.clips), (10, 10, 10));
    assert_eq!((ledger.generate.jobs, ledger.generate.pairs), (10, 30));
    assert_eq!((ledger.filter.rejected, ledger.pack.records), (0, 30));
    assert_eq!(ledger.pack.by_split[&Split::Test], 6);
    assert_eq!(state.requests().len(), 10);

    let layout = Layout::new(work.path());
    let manifest: PackManifest =
        serde_json::from_slice(&std::fs::read(layout.pack(Split::Train).join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.total, 24);
    assert_eq!(manifest.config_hash.as_deref(), Some(cfg.hash().as_str()));
    let shard: Vec<InstructionRecord> = read_jsonl(&layout.pack(Split::Train).join(&manifest.shards[0].file)).unwrap();
    assert!(shard.iter().all(|r| work.path().join(&r.clip_ref).is_file()));
}

#[test]
fn one_rejected_response_per_track() {
    let corpus = corpus(10);
    let work = tempfile::tempdir().unwrap();
    let (server, _) = start_stub(StubConfig {
        filter_phrase: Some("based on the provided metadata".into()),
        ..Default::default()
    });
    let cfg = config(corpus.path(), work.path(), &server, Some(vec![TaskFamily::Captioning]));
    let ledger = run_pipeline(&cfg).unwrap();
    assert_eq!((ledger.generate.pairs, ledger.filter.rejected, ledger.pack.records), (30, 10, 20));
    assert!(ledger.inconsistencies().is_empty());
    let rejected: Vec<serde_json::Value> = read_jsonl(&Layout::new(work.path()).rejected()).unwrap();
    assert!(rejected.iter().all(|r| r["phrase"] == "based on the provided metadata"));
}

#[test]
fn rerun_is_byte_identical_across_job_counts() {
    let corpus = corpus(6);
    let (server, _) = start_stub(StubConfig::default());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg_a = config(corpus.path(), a.path(), &server, None);
    cfg_a.jobs = 1;
    cfg_a.generation.in_flight = 1;
    let mut cfg_b = config(corpus.path(), b.path(), &server, None);
    cfg_b.jobs = 4;
    let la = run_pipeline(&cfg_a).unwrap();
    let lb = run_pipeline(&cfg_b).unwrap();
    assert_eq!(la, lb);
    assert_eq!(la.generate.jobs, 18);
    assert_eq!(tree(a.path()), tree(b.path()));
}

/// Serves `limit` requests through the stub, then fails.
struct Flaky {
    inner: musiq_core::instruct::HttpChatClient,
    calls: AtomicUsize,
    limit: usize,
}

impl ChatClient for Flaky {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(EndpointError::BadReply("connection dropped".into()));
        }
        self.inner.complete(request)
    }
}

#[test]
fn interrupted_generation_resumes_to_same_output() {
    let corpus = corpus(6);
    let (server, state) = start_stub(StubConfig::default());
    let clean = tempfile::tempdir().unwrap();
    let resumed = tempfile::tempdir().unwrap();
    let mut cfg_clean = config(corpus.path(), clean.path(), &server, None);
    cfg_clean.generation.in_flight = 1;
    run_pipeline(&cfg_clean).unwrap();
    let clean_requests = state.requests().len();

    let mut cfg = config(corpus.path(), resumed.path(), &server, None);
    cfg.generation.in_flight = 1;
    let flaky = Flaky {
        inner: musiq_cli::pipeline::http_client(&cfg).unwrap(),
        calls: AtomicUsize::new(0),
        limit: 7,
    };
    let err = run_pipeline_with(&cfg, &flaky).unwrap_err();
    assert!(format!("{err:#}").contains("stage generate"), "{err:#}");
    assert!(!Layout::new(resumed.path()).stage(musiq_cli::Stage::Generate).join("done.json").exists());

    run_pipeline(&cfg).unwrap();
    let resumed_requests = state.requests().len() - clean_requests - 7;
    assert_eq!(resumed_requests, 18 - 7, "only uncached jobs are re-sent");
    assert_eq!(tree(clean.path()), tree(resumed.path()));

    // a completed run reuses every checkpoint
    let before = state.requests().len();
    run_pipeline(&cfg).unwrap();
    assert_eq!(state.requests().len(), before);
}

#[test]
fn stage_errors_name_the_stage() {
    let work = tempfile::tempdir().unwrap();
    let (server, _) = start_stub(StubConfig::default());
    let cfg = config(Path::new("/nonexistent/corpus"), work.path(), &server, None);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("stage ingest"), "{err:#}");
}

#[test]
fn unreachable_endpoint_fails_generate_after_retries() {
    let corpus = corpus(2);
    let work = tempfile::tempdir().unwrap();
    let (server, state) = start_stub(StubConfig {
        fail_first: 1_000,
        ..Default::default()
    });
    let mut cfg = config(corpus.path(), work.path(), &server, Some(vec![TaskFamily::Captioning]));
    cfg.generation.max_retries = 2;
    cfg.generation.in_flight = 1;
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("stage generate"));
    assert_eq!(state.requests().len(), 2 * 3);
}
