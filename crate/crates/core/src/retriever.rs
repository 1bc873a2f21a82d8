//! LLM-driven keyword query generation and multi-query retrieval.
//!
//! The LLM writes several short keyword queries for a user request; each is
//! run against the index and the hits are fused by taking the maximum score
//! per moment, then capped.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::index::{Bm25Params, IndexError, SearchBackend, SearchHit};
use crate::llm::{ChatGateway, ChatMessage, ChatRequest, GatewayError};
use crate::model::{RetrievalSet, RetrievedMoment, SearchQuery};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("user query is empty")]
    EmptyUserQuery,
    #[error("the LLM produced no usable search queries")]
    NoQueriesGenerated,
    #[error("invalid retriever config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub min_queries: usize,
    pub per_query_top_k: usize,
    pub max_docs: usize,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            min_queries: 5,
            per_query_top_k: 20,
            max_docs: 50,
        }
    }
}

impl RetrieverConfig {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if self.min_queries == 0 || self.per_query_top_k == 0 || self.max_docs == 0 {
            return Err(RetrieveError::InvalidConfig(
                "min_queries, per_query_top_k and max_docs must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Prompt templates for query generation. `{user_query}`, `{min_queries}`
/// and `{previous_count}` are substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryPrompts {
    pub system: String,
    pub user: String,
    pub retry_system: String,
}

impl Default for QueryPrompts {
    fn default() -> Self {
        Self {
            system: include_str!("../assets/querygen_system.txt").to_string(),
            user: include_str!("../assets/querygen_user.txt").to_string(),
            retry_system: include_str!("../assets/querygen_retry_system.txt").to_string(),
        }
    }
}

/// Parses one query per line, stripping list markers and quotes and dropping
/// case-insensitive duplicates.
pub fn parse_query_lines(raw: &str) -> Vec<SearchQuery> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let cleaned = clean_query_line(line);
        let Ok(query) = SearchQuery::new(cleaned) else {
            continue;
        };
        if seen.insert(query.keywords().to_lowercase()) {
            out.push(query);
        }
    }
    out
}

fn clean_query_line(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && matches!(s.as_bytes().get(digits), Some(b'.') | Some(b')')) {
        s = &s[digits + 1..];
    } else {
        s = s.trim_start_matches(['-', '*', '•']);
    }
    s.trim()
        .trim_matches(['"', '\'', '`', '“', '”', '‘', '’'])
        .trim()
}

/// Fuses per-query hit lists: max score per moment, score-descending with
/// moment id as tiebreak, truncated to `max_docs`.
pub fn merge_hits<I>(lists: I, max_docs: usize) -> Vec<RetrievedMoment>
where
    I: IntoIterator<Item = Vec<SearchHit>>,
{
    let mut best: HashMap<String, f64> = HashMap::new();
    for hit in lists.into_iter().flatten() {
        best.entry(hit.doc_id)
            .and_modify(|s| *s = s.max(hit.score))
            .or_insert(hit.score);
    }
    let mut items: Vec<RetrievedMoment> = best
        .into_iter()
        .map(|(moment_id, score)| RetrievedMoment { moment_id, score })
        .collect();
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.moment_id.cmp(&b.moment_id)));
    items.truncate(max_docs);
    items
}

#[derive(Debug, Clone, Default)]
pub struct Retriever {
    pub config: RetrieverConfig,
    pub prompts: QueryPrompts,
    pub bm25: Bm25Params,
}

impl Retriever {
    pub fn new(config: RetrieverConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    fn query_request(&self, system: &str, user_query: &str, previous: usize) -> ChatRequest {
        let fill = |t: &str| {
            t.replace("{min_queries}", &self.config.min_queries.to_string())
                .replace("{previous_count}", &previous.to_string())
                .replace("{user_query}", user_query)
        };
        ChatRequest::new(vec![
            ChatMessage::system(fill(system)),
            ChatMessage::user(fill(&self.prompts.user)),
        ])
    }

    /// Asks the LLM for keyword queries. When fewer than `min_queries` come
    /// back, one retry prompt is issued and the larger of the two lists kept.
    pub async fn generate_queries<G>(&self, user_query: &str, gateway: &G) -> Result<Vec<SearchQuery>, RetrieveError>
    where
        G: ChatGateway + ?Sized,
    {
        let user_query = user_query.trim();
        if user_query.is_empty() {
            return Err(RetrieveError::EmptyUserQuery);
        }
        self.config.validate()?;

        let request = self.query_request(&self.prompts.system, user_query, 0);
        let first = parse_query_lines(&gateway.complete(&request).await?.content);
        if first.len() >= self.config.min_queries {
            return Ok(first);
        }
        debug!(got = first.len(), wanted = self.config.min_queries, "too few queries, retrying");
        let retry = self.query_request(&self.prompts.retry_system, user_query, first.len());
        let second = parse_query_lines(&gateway.complete(&retry).await?.content);
        let queries = if second.len() >= first.len() { second } else { first };
        if queries.is_empty() {
            return Err(RetrieveError::NoQueriesGenerated);
        }
        Ok(queries)
    }

    /// Runs every query against `backend` and fuses the hits.
    pub fn search_and_merge<B>(&self, queries: &[SearchQuery], backend: &B) -> Result<RetrievalSet, RetrieveError>
    where
        B: SearchBackend + ?Sized,
    {
        self.search_and_merge_capped(queries, backend, self.config.max_docs)
    }

    pub fn search_and_merge_capped<B>(
        &self,
        queries: &[SearchQuery],
        backend: &B,
        max_docs: usize,
    ) -> Result<RetrievalSet, RetrieveError>
    where
        B: SearchBackend + ?Sized,
    {
        if max_docs == 0 {
            return Err(RetrieveError::InvalidConfig("max_docs must be >= 1".into()));
        }
        let lists = queries
            .par_iter()
            .map(|q| backend.search(q, self.config.per_query_top_k, &self.bm25))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RetrievalSet {
            items: merge_hits(lists, max_docs),
            source_queries: queries.to_vec(),
        })
    }

    pub async fn retrieve<G, B>(&self, user_query: &str, backend: &B, gateway: &G) -> Result<RetrievalSet, RetrieveError>
    where
        G: ChatGateway + ?Sized,
        B: SearchBackend + ?Sized,
    {
        let queries = self.generate_queries(user_query, gateway).await?;
        self.search_and_merge(&queries, backend)
    }
}
