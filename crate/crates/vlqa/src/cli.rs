//! `vlqa` subcommands.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tracing::{info, warn};
use vlqa_core::eval::{read_dataset, run_eval, EvalOptions};
use vlqa_core::ingest::{load_library, IngestDiagnostic, LoadOutcome};
use vlqa_core::scene::{read_frame_features, split, SplitConfig};
use vlqa_core::{Corpus, SearchQuery, VideoAsset};

use crate::api::{AskResponse, MomentSummary};
use crate::config::ServiceConfig;
use crate::server::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "vlqa", version, about = "Question answering over a video library")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// videos.jsonl
    #[arg(long, global = true)]
    pub videos: Option<PathBuf>,
    /// moments.jsonl
    #[arg(long, global = true)]
    pub moments: Option<PathBuf>,
    /// Answer from a JSON script instead of calling an LLM endpoint.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Report zero timings so output is byte-stable.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate library metadata and report skipped lines.
    Ingest {
        /// Stop at the first invalid line.
        #[arg(long)]
        strict: bool,
        /// Also write a binary index snapshot.
        #[arg(long)]
        index_out: Option<PathBuf>,
    },
    /// Split a video into scenes from per-frame colour features.
    Split {
        /// CSV with header frame_index,t,h_mean,s_mean,v_mean
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        video_id: String,
        /// Video duration in seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 27.0)]
        threshold: f64,
        #[arg(long, default_value_t = 15)]
        min_scene_len: usize,
    },
    /// Run one keyword query against the index.
    Search {
        query: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Answer a question and print the /ask response body.
    Ask {
        query: String,
        #[arg(long)]
        max_docs: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Score retrieval and citations over a question dataset.
    Eval {
        /// JSONL of {question, relevant_moment_ids}
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip answer generation and citation metrics.
        #[arg(long)]
        retrieval_only: bool,
        #[arg(long)]
        concurrency: Option<usize>,
    },
}

impl GlobalArgs {
    pub fn service_config(&self) -> anyhow::Result<ServiceConfig> {
        let cfg = match &self.config {
            Some(path) => ServiceConfig::from_file(path)?,
            None => ServiceConfig::default(),
        };
        let mut cfg = cfg.apply_env()?;
        if let Some(v) = &self.videos {
            cfg.videos = Some(v.clone());
        }
        if let Some(m) = &self.moments {
            cfg.moments = Some(m.clone());
        }
        if let Some(s) = &self.script {
            cfg.llm.script = Some(s.clone());
        }
        cfg.deterministic |= self.deterministic;
        Ok(cfg)
    }
}

fn library_paths(cfg: &ServiceConfig) -> anyhow::Result<(&Path, &Path)> {
    match (&cfg.videos, &cfg.moments) {
        (Some(v), Some(m)) => Ok((v, m)),
        _ => bail!("library paths required: pass --videos and --moments or set them in the config"),
    }
}

fn warn_diagnostics(diagnostics: &[IngestDiagnostic]) {
    for d in diagnostics {
        warn!(file = %d.file, line = d.line, reason = %d.reason, "skipped library line");
    }
}

fn load(cfg: &ServiceConfig, strict: bool) -> anyhow::Result<LoadOutcome> {
    let (v, m) = library_paths(cfg)?;
    Ok(load_library(v, m, strict)?)
}

fn load_corpus(cfg: &ServiceConfig) -> anyhow::Result<Corpus> {
    let outcome = load(cfg, cfg.strict)?;
    warn_diagnostics(&outcome.diagnostics);
    Ok(Corpus::build(outcome.store)?)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct IngestReport {
    videos: usize,
    moments: usize,
    diagnostics: Vec<IngestDiagnostic>,
}

#[derive(Serialize)]
struct Scene {
    t_in: f64,
    t_out: f64,
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.global.service_config()?;
    cfg.validate()?;
    match cli.command {
        Command::Ingest { strict, index_out } => {
            let outcome = load(&cfg, strict || cfg.strict)?;
            if let Some(path) = index_out {
                let index = outcome.store.build_index()?;
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = BufWriter::new(file);
                index.write_snapshot(&mut w)?;
                w.flush()?;
            }
            print_json(&IngestReport {
                videos: outcome.store.video_count(),
                moments: outcome.store.moment_count(),
                diagnostics: outcome.diagnostics,
            })
        }
        Command::Split {
            frames,
            video_id,
            duration,
            threshold,
            min_scene_len,
        } => {
            let file = File::open(&frames).with_context(|| format!("opening {}", frames.display()))?;
            let features = read_frame_features(BufReader::new(file))?;
            let video = VideoAsset {
                video_id,
                title: String::new(),
                duration,
                media_uri: None,
            };
            video.validate()?;
            let scenes = split(
                &features,
                &SplitConfig {
                    threshold,
                    min_scene_len,
                },
                &video,
            )?;
            print_json(&scenes.into_iter().map(|(t_in, t_out)| Scene { t_in, t_out }).collect::<Vec<_>>())
        }
        Command::Search { query, top_k } => {
            let corpus = load_corpus(&cfg)?;
            let query = SearchQuery::new(&query)?;
            let index = corpus.index();
            let hits: Vec<MomentSummary> = index
                .search(&query, top_k, &cfg.bm25)
                .iter()
                .filter_map(|h| index.document(&h.doc_id).map(|d| MomentSummary::new(d, h.score)))
                .collect();
            print_json(&hits)
        }
        Command::Ask { query, max_docs } => {
            let corpus = load_corpus(&cfg)?;
            let pipeline = cfg.pipeline()?;
            let gateway = cfg.gateway()?;
            let outcome = pipeline.ask(&query, &corpus, gateway.as_ref(), max_docs).await?;
            print_json(&AskResponse::new(outcome, &corpus))
        }
        Command::Serve { port } => {
            let port = port.unwrap_or(cfg.port);
            let state = Arc::new(AppState::from_config(&cfg)?);
            match state.reload().await {
                Ok(_) => {}
                Err(e) if e.status == axum::http::StatusCode::CONFLICT => {
                    warn!("no library configured; serving 503 until one is loaded")
                }
                Err(e) => bail!("loading library: {}", e.body.reason),
            }
            let app = router(state, &cfg.cors_allowed_origins);
            let addr = SocketAddr::from(([0, 0, 0, 0], port));
            let listener = tokio::net::TcpListener::bind(addr).await?;
            info!(%addr, "listening");
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
            Ok(())
        }
        Command::Eval {
            dataset,
            out,
            retrieval_only,
            concurrency,
        } => {
            let corpus = load_corpus(&cfg)?;
            let file = File::open(&dataset).with_context(|| format!("opening {}", dataset.display()))?;
            let cases = read_dataset(BufReader::new(file))?;
            let pipeline = cfg.pipeline()?;
            let gateway = cfg.gateway()?;
            let options = EvalOptions {
                with_answers: !retrieval_only,
                concurrency: concurrency.unwrap_or(cfg.max_in_flight),
            };
            let report = run_eval(&cases, &pipeline, &corpus, gateway.as_ref(), options).await?;
            match out {
                Some(path) => {
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut w = BufWriter::new(file);
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                    w.flush()?;
                    Ok(())
                }
                None => print_json(&report),
            }
        }
    }
}
