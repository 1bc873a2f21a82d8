//! End-to-end question answering: query generation, retrieval, answer.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::answer::{AnswerError, AnswerGenerator};
use crate::index::IndexSnapshot;
use crate::ingest::{IngestError, LibraryStore};
use crate::llm::ChatGateway;
use crate::model::{Answer, RetrievalSet, SearchQuery, VideoAsset};
use crate::references::Catalog;
use crate::retriever::{RetrieveError, Retriever};
use crate::timing::Clock;

/// A library together with the index built from one generation of it.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    library: LibraryStore,
    index: IndexSnapshot,
}

impl Corpus {
    pub fn build(library: LibraryStore) -> Result<Self, IngestError> {
        let index = library.build_index()?;
        Ok(Self { library, index })
    }

    pub fn library(&self) -> &LibraryStore {
        &self.library
    }

    pub fn index(&self) -> &IndexSnapshot {
        &self.index
    }
}

impl Catalog for Corpus {
    fn video(&self, video_id: &str) -> Option<&VideoAsset> {
        self.library.video(video_id)
    }

    fn moment_interval(&self, moment_id: &str) -> Option<(&str, f64, f64)> {
        self.library.moment_interval(moment_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    QueryGeneration,
    Search,
    AnswerGeneration,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::QueryGeneration => "query_generation",
            Stage::Search => "search",
            Stage::AnswerGeneration => "answer_generation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// The caller sent something unusable.
    InvalidInput,
    /// The LLM failed or produced nothing usable.
    Upstream,
    Internal,
}

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    fn from_retrieve(stage: Stage, err: RetrieveError) -> Self {
        let kind = match &err {
            RetrieveError::EmptyUserQuery | RetrieveError::InvalidConfig(_) => FailureKind::InvalidInput,
            RetrieveError::NoQueriesGenerated | RetrieveError::Gateway(_) => FailureKind::Upstream,
            RetrieveError::Index(_) => FailureKind::Internal,
        };
        Self {
            stage,
            kind,
            message: err.to_string(),
        }
    }

    fn from_answer(err: AnswerError) -> Self {
        let (kind, message) = match &err {
            AnswerError::Gateway(g) => (FailureKind::Upstream, g.to_string()),
            AnswerError::UnknownDocId(_) => (FailureKind::Internal, err.to_string()),
        };
        Self {
            stage: Stage::AnswerGeneration,
            kind,
            message,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AskOutcome {
    pub queries: Vec<SearchQuery>,
    pub retrieval: RetrievalSet,
    /// Timings cover every stage plus `total`.
    pub answer: Answer,
}

#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    pub retriever: Retriever,
    pub answerer: AnswerGenerator,
    pub clock: Clock,
}

impl Pipeline {
    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self.answerer.clock = clock;
        self
    }

    /// Generates queries and retrieves moments, returning the stage timings.
    pub async fn retrieve<G>(
        &self,
        user_query: &str,
        corpus: &Corpus,
        gateway: &G,
        max_docs: Option<usize>,
    ) -> Result<(RetrievalSet, Vec<(Stage, f64)>), PipelineError>
    where
        G: ChatGateway + ?Sized,
    {
        let mut sw = self.clock.start();
        let queries = self
            .retriever
            .generate_queries(user_query, gateway)
            .await
            .map_err(|e| PipelineError::from_retrieve(Stage::QueryGeneration, e))?;
        let gen_ms = sw.lap_ms();
        let cap = max_docs.unwrap_or(self.retriever.config.max_docs);
        let retrieval = self
            .retriever
            .search_and_merge_capped(&queries, corpus.index(), cap)
            .map_err(|e| PipelineError::from_retrieve(Stage::Search, e))?;
        let search_ms = sw.lap_ms();
        Ok((retrieval, vec![(Stage::QueryGeneration, gen_ms), (Stage::Search, search_ms)]))
    }

    pub async fn ask<G>(
        &self,
        user_query: &str,
        corpus: &Corpus,
        gateway: &G,
        max_docs: Option<usize>,
    ) -> Result<AskOutcome, PipelineError>
    where
        G: ChatGateway + ?Sized,
    {
        let total = self.clock.start();
        let (retrieval, stage_ms) = self.retrieve(user_query, corpus, gateway, max_docs).await?;
        let mut answer = self
            .answerer
            .answer(user_query, &retrieval, corpus.index(), corpus, gateway)
            .await
            .map_err(PipelineError::from_answer)?;
        for (stage, ms) in stage_ms {
            answer.timings.insert(stage.as_str().to_string(), ms);
        }
        answer.timings.insert("total".to_string(), total.elapsed_ms());
        Ok(AskOutcome {
            queries: retrieval.source_queries.clone(),
            retrieval,
            answer,
        })
    }
}
