//! JSON bodies shared by the HTTP service and the command line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use vlqa_core::pipeline::AskOutcome;
use vlqa_core::{Corpus, MomentDocument, MomentReference, VideoAsset, VideoMoment};

#[derive(Debug, Clone, Deserialize)]
pub struct AskRequest {
    pub query: String,
    #[serde(default)]
    pub max_docs: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub moment_id: String,
    pub video_id: String,
    pub video_title: String,
    pub t_in: f64,
    pub t_out: f64,
    pub score: f64,
    pub speakers: Vec<String>,
}

impl MomentSummary {
    pub fn new(doc: &MomentDocument, score: f64) -> Self {
        Self {
            moment_id: doc.doc_id.clone(),
            video_id: doc.video_id.clone(),
            video_title: doc.video_title.clone(),
            t_in: doc.t_in,
            t_out: doc.t_out,
            score,
            speakers: doc.speakers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer: String,
    pub raw_answer: String,
    pub references: Vec<MomentReference>,
    pub external_links: Vec<String>,
    pub moments: Vec<MomentSummary>,
    pub queries: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl AskResponse {
    pub fn new(outcome: AskOutcome, corpus: &Corpus) -> Self {
        let moments = outcome
            .retrieval
            .items
            .iter()
            .filter_map(|m| corpus.index().document(&m.moment_id).map(|d| MomentSummary::new(d, m.score)))
            .collect();
        Self {
            answer: outcome.answer.rewritten_text,
            raw_answer: outcome.answer.raw_text,
            references: outcome.answer.references,
            external_links: outcome.answer.external_links,
            moments,
            queries: outcome.queries.iter().map(|q| q.keywords().to_string()).collect(),
            timings_ms: outcome.answer.timings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDetail {
    pub document: MomentDocument,
    pub moment: VideoMoment,
    pub video: VideoAsset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub docs: usize,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub reason: String,
}
