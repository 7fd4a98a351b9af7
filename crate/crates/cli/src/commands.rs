//! Argument parsing and subcommand dispatch.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use musiq_core::corpus::{read_jsonl, write_jsonl};
use musiq_core::instruct::{HttpChatClient, RetryPolicy};
use musiq_core::metrics::{
    evaluate_captions, evaluate_genre, evaluate_instruments, evaluate_key, evaluate_tempo, token_stats,
    word_count_probe, Embedder, HttpEmbedder, MetricReport, ModelOutput, Reference,
};
use musiq_core::pool::{pool_frames, EmbeddingMatrix, DEFAULT_FRAME_LEN_S};
use musiq_core::study::{
    analyze, build_llm_detail_items, build_matching_study, build_pairwise_study, judge_items, Judgment, JudgePrompt,
    PairwiseConfig, StudyDefinition, StudyItem,
};
use musiq_service::{StubConfig, StubState, StudyStore};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ENV_API_KEY};
use crate::pipeline::{run_pipeline, run_stage, Stage};

#[derive(Debug, Parser)]
#[command(name = "musiq", version, about = "Music instruction-data pipeline and evaluation tools")]
pub struct Cli {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the config file.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every pipeline stage, resuming from matching checkpoints.
    Run(ConfigArg),
    /// Read corpora through their adapters and assign splits.
    Ingest(ConfigArg),
    /// Crop ingested tracks to clips.
    Crop(ConfigArg),
    /// Estimate tempo, key, beats and chords for each clip.
    Augment(ConfigArg),
    /// Prompt the chat endpoint for query/response pairs.
    Generate(ConfigArg),
    /// Drop pairs containing disallowed phrases.
    Filter(ConfigArg),
    /// Shuffle and shard the kept pairs.
    Pack(ConfigArg),
    /// Mean-pool embedding files into fixed-length frames.
    Pool(PoolArgs),
    /// Score model outputs against references.
    Eval {
        #[command(subcommand)]
        task: EvalTask,
    },
    /// Build, serve, judge and analyze evaluation studies.
    Study {
        #[command(subcommand)]
        action: StudyAction,
    },
    /// Serve a deterministic offline chat-completion endpoint.
    StubLlm(StubArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Embedding files (EMBD format).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FRAME_LEN_S)]
    pub frame_len: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL of {clip_ref, prompt, text}.
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSONL of references keyed by clip_ref.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Write full reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalTask {
    /// MIREX weighted key score.
    Key(EvalArgs),
    /// Acc1 and Acc2 tempo accuracy.
    Tempo(EvalArgs),
    /// Acc@1 by nearest genre label in embedding space.
    Genre {
        #[command(flatten)]
        args: EvalArgs,
        /// Embeddings endpoint; the default is a TF-IDF embedder fit on the labels.
        #[arg(long)]
        embed_endpoint: Option<String>,
        #[arg(long, default_value = "text-embedding-ada-002")]
        embed_model: String,
    },
    /// Set F1 over canonical instrument names.
    Instrument(EvalArgs),
    /// BLEU, BLEU-4, METEOR, ROUGE-L and CIDEr against reference captions.
    Captions(EvalArgs),
    /// Token and vocabulary statistics of the outputs.
    Tokens(EvalArgs),
    /// Word-count summary per prompt.
    Probe(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Pairwise,
    Matching,
    Judge,
}

#[derive(Debug, Subcommand)]
pub enum StudyAction {
    /// Build study items from model outputs.
    Build {
        #[arg(long, value_enum)]
        kind: StudyKind,
        /// JSONL of {model, clip_ref, prompt, text}.
        #[arg(long)]
        outputs: PathBuf,
        /// Model under test (pairwise and judge).
        #[arg(long)]
        subject: Option<String>,
        /// Opponent model (judge).
        #[arg(long)]
        opponent: Option<String>,
        /// Items to sample (pairwise and judge).
        #[arg(long)]
        n: Option<usize>,
        /// Attach the screening question (pairwise).
        #[arg(long)]
        screening: bool,
        /// Study file to write (JSONL of items).
        #[arg(long)]
        out: PathBuf,
    },
    /// Host studies over HTTP until interrupted.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = ".")]
        media_root: PathBuf,
        #[arg(long, default_value = "judgments.log.jsonl")]
        log_path: PathBuf,
        /// Study files to upload on start.
        #[arg(long)]
        study: Vec<PathBuf>,
    },
    /// Analyze recorded judgments offline.
    Analyze {
        #[arg(long)]
        study: PathBuf,
        /// JSONL judgments, or a service log with --study-id.
        #[arg(long)]
        judgments: PathBuf,
        /// Read judgments for this study from a service log.
        #[arg(long)]
        study_id: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Ask a chat model which response has more musical detail.
    JudgeLlm {
        #[arg(long)]
        study: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value = "gpt-4")]
        model: String,
        /// Prompt file with {question}, {response_1} and {response_2}.
        #[arg(long)]
        prompt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long, default_value_t = 8089)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// JSON stub configuration (rules, pairs_per_reply, filter_phrase, fail_first).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// One model's answer, tagged with the model name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledOutput {
    pub model: String,
    #[serde(flatten)]
    pub output: ModelOutput,
}

pub fn run(cli: Cli) -> Result<()> {
    let load = |arg: &ConfigArg| -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&arg.config)?.with_env();
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(jobs) = cli.jobs {
            cfg.jobs = jobs;
        }
        Ok(cfg)
    };
    let stage = |arg: &ConfigArg, stage: Stage| -> Result<()> {
        let counts = run_stage(&load(arg)?, stage, None)?;
        println!("{} {}", stage.name(), serde_json::to_string(&counts)?);
        Ok(())
    };
    match &cli.command {
        Command::Run(arg) => {
            let ledger = run_pipeline(&load(arg)?)?;
            print!("{}", ledger.to_table());
            let problems = ledger.inconsistencies();
            if !problems.is_empty() {
                bail!("ledger inconsistent: {}", problems.join("; "));
            }
            Ok(())
        }
        Command::Ingest(arg) => stage(arg, Stage::Ingest),
        Command::Crop(arg) => stage(arg, Stage::Crop),
        Command::Augment(arg) => stage(arg, Stage::Augment),
        Command::Generate(arg) => stage(arg, Stage::Generate),
        Command::Filter(arg) => stage(arg, Stage::Filter),
        Command::Pack(arg) => stage(arg, Stage::Pack),
        Command::Pool(args) => pool(args),
        Command::Eval { task } => eval(task),
        Command::Study { action } => study(action, cli.seed.unwrap_or(0)),
        Command::StubLlm(args) => stub_llm(args),
    }
}

fn pool(args: &PoolArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    for input in &args.inputs {
        let emb = EmbeddingMatrix::load(input).with_context(|| format!("loading {}", input.display()))?;
        let pooled = pool_frames(&emb, args.frame_len)?;
        let name = input.file_name().context("input has no file name")?;
        let out = args.out_dir.join(name);
        pooled.save(&out)?;
        println!(
            "{}: {}x{} -> {}x{}",
            input.display(),
            emb.frames(),
            emb.dims(),
            pooled.frames(),
            pooled.dims()
        );
    }
    Ok(())
}

fn load_refs(args: &EvalArgs) -> Result<Vec<Reference>> {
    let path = args.references.as_ref().context("--references is required for this task")?;
    Ok(read_jsonl(path)?)
}

fn report_line(r: &MetricReport) -> String {
    format!("{:<14} n={:<6} mean={:.4} flagged={}", r.metric_name, r.n, r.aggregate, r.flagged())
}

fn emit(reports: &[MetricReport], json: Option<&PathBuf>) -> Result<()> {
    for r in reports {
        println!("{}", report_line(r));
    }
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_vec_pretty(reports)?)?;
    }
    Ok(())
}

fn eval(task: &EvalTask) -> Result<()> {
    let outputs = |a: &EvalArgs| -> Result<Vec<ModelOutput>> { Ok(read_jsonl(&a.predictions)?) };
    match task {
        EvalTask::Key(a) => emit(&[evaluate_key(&outputs(a)?, &load_refs(a)?)?], a.json.as_ref()),
        EvalTask::Tempo(a) => emit(&[evaluate_tempo(&outputs(a)?, &load_refs(a)?)?], a.json.as_ref()),
        EvalTask::Genre {
            args,
            embed_endpoint,
            embed_model,
        } => {
            let remote = match embed_endpoint {
                Some(url) => Some(HttpEmbedder::new(url, embed_model, std::env::var(ENV_API_KEY).ok())?),
                None => None,
            };
            let embedder = remote.as_ref().map(|e| e as &dyn Embedder);
            emit(&[evaluate_genre(&outputs(args)?, &load_refs(args)?, embedder)?], args.json.as_ref())
        }
        EvalTask::Instrument(a) => emit(&[evaluate_instruments(&outputs(a)?, &load_refs(a)?)?], a.json.as_ref()),
        EvalTask::Captions(a) => emit(&evaluate_captions(&outputs(a)?, &load_refs(a)?)?, a.json.as_ref()),
        EvalTask::Tokens(a) => {
            let texts: Vec<String> = outputs(a)?.into_iter().map(|o| o.text).collect();
            let stats = token_stats(&texts);
            println!("unique_tokens={} mean_token_len={:.4}", stats.unique_tokens, stats.mean_token_len);
            if let Some(path) = &a.json {
                std::fs::write(path, serde_json::to_vec_pretty(&stats)?)?;
            }
            Ok(())
        }
        EvalTask::Probe(a) => {
            let pairs: Vec<(String, String)> = outputs(a)?.into_iter().map(|o| (o.prompt, o.text)).collect();
            let summary = word_count_probe(&pairs);
            for (prompt, s) in &summary {
                println!(
                    "{prompt:?}: n={} mean_words={:.2} sd={:.2} one_word={:.3}",
                    s.n, s.mean_words, s.sd_words, s.one_word_fraction
                );
            }
            if let Some(path) = &a.json {
                std::fs::write(path, serde_json::to_vec_pretty(&summary)?)?;
            }
            Ok(())
        }
    }
}

fn by_model(outputs: Vec<LabeledOutput>) -> BTreeMap<String, Vec<ModelOutput>> {
    let mut map: BTreeMap<String, Vec<ModelOutput>> = BTreeMap::new();
    for o in outputs {
        map.entry(o.model).or_default().push(o.output);
    }
    map
}

pub fn read_study(path: &Path) -> Result<StudyDefinition> {
    let items: Vec<StudyItem> = read_jsonl(path).with_context(|| format!("reading study {}", path.display()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let def = StudyDefinition { name, items };
    def.validate()?;
    Ok(def)
}

fn study(action: &StudyAction, seed: u64) -> Result<()> {
    match action {
        StudyAction::Build {
            kind,
            outputs,
            subject,
            opponent,
            n,
            screening,
            out,
        } => {
            let outputs = by_model(read_jsonl(outputs)?);
            let need = |v: &Option<String>, flag: &str| v.clone().with_context(|| format!("--{flag} is required"));
            let items = match kind {
                StudyKind::Pairwise => {
                    let subject = need(subject, "subject")?;
                    let n_pairs = n.context("--n is required")?;
                    build_pairwise_study(
                        &outputs,
                        &PairwiseConfig {
                            subject,
                            n_pairs,
                            screening: *screening,
                            seed,
                        },
                    )?
                }
                StudyKind::Matching => build_matching_study(&outputs, seed)?,
                StudyKind::Judge => {
                    let a = need(subject, "subject")?;
                    let b = need(opponent, "opponent")?;
                    let empty = Vec::new();
                    let oa = outputs.get(&a).unwrap_or(&empty);
                    let ob = outputs.get(&b).unwrap_or(&empty);
                    build_llm_detail_items(&a, oa, &b, ob, n.context("--n is required")?, seed)?
                }
            };
            write_jsonl(out, &items)?;
            println!("{} items -> {}", items.len(), out.display());
            Ok(())
        }
        StudyAction::Serve {
            port,
            host,
            media_root,
            log_path,
            study,
        } => {
            let store = Arc::new(StudyStore::open(log_path)?);
            for path in study {
                let id = store.upload_study(read_study(path)?)?;
                println!("study {} -> {id}", path.display());
            }
            let app = musiq_service::router(store, media_root);
            serve_forever(app, &format!("{host}:{port}"))
        }
        StudyAction::Analyze {
            study,
            judgments,
            study_id,
            json,
        } => {
            let def = read_study(study)?;
            let judgments: Vec<Judgment> = match study_id {
                Some(id) => StudyStore::open(judgments)?.judgments(id)?,
                None => read_jsonl(judgments)?,
            };
            let report = analyze(&def.items, &judgments)?;
            print!("{}", report.to_table());
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_vec_pretty(&report)?)?;
            }
            Ok(())
        }
        StudyAction::JudgeLlm {
            study,
            endpoint,
            model,
            prompt,
            out,
        } => {
            let def = read_study(study)?;
            let prompt = match prompt {
                Some(p) => JudgePrompt::parse(&std::fs::read_to_string(p)?)?,
                None => JudgePrompt::default(),
            };
            let client = HttpChatClient::new(endpoint, Duration::from_secs(120), RetryPolicy::default())?
                .with_api_key(std::env::var(ENV_API_KEY).ok());
            let run = judge_items(&def.items, &prompt, model, &client)?;
            write_jsonl(out, &run.judgments)?;
            println!("{} verdicts, {} unparsed -> {}", run.judgments.len(), run.unparsed.len(), out.display());
            Ok(())
        }
    }
}

fn serve_forever(app: axum::Router, bind: &str) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn stub_llm(args: &StubArgs) -> Result<()> {
    let config: StubConfig = match &args.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
        None => StubConfig::default(),
    };
    let app = musiq_service::stub::router(StubState::new(config));
    serve_forever(app, &format!("{}:{}", args.host, args.port))
}
