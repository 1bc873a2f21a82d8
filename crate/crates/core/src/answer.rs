//! Grounded answer generation: prompt assembly from retrieved moments, the
//! LLM call, and citation post-processing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::SearchBackend;
use crate::llm::{ChatGateway, ChatMessage, ChatRequest, GatewayError};
use crate::model::{format_seconds, Answer, RetrievalSet};
use crate::references::{extract_external_links, parse_references, rewrite_links, validate_references, Catalog};
use crate::timing::Clock;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("retrieved moment `{0}` is not in the index")]
    UnknownDocId(String),
    #[error("answer_generation: {0}")]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerConfig {
    pub link_base_url: String,
    pub max_context_docs: usize,
    pub require_grounding: bool,
}

impl Default for AnswerConfig {
    fn default() -> Self {
        Self {
            link_base_url: "vlqa://moment".into(),
            max_context_docs: 50,
            require_grounding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerPrompts {
    pub system: String,
    /// Appended to the user message when nothing was retrieved.
    pub empty_retrieval: String,
}

impl Default for AnswerPrompts {
    fn default() -> Self {
        Self {
            system: include_str!("../assets/answergen_system.txt").to_string(),
            empty_retrieval: include_str!("../assets/answergen_empty.txt").to_string(),
        }
    }
}

/// Header line that opens each moment block in the answer prompt.
pub const MOMENT_BLOCK_HEADER: &str = "--- moment ";

#[derive(Debug, Clone, Default)]
pub struct AnswerGenerator {
    pub config: AnswerConfig,
    pub prompts: AnswerPrompts,
    pub clock: Clock,
}

impl AnswerGenerator {
    pub fn new(config: AnswerConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    /// Builds the answer request: the request plus one metadata block per
    /// retrieved moment, in retrieval order, up to `max_context_docs`.
    pub fn build_answer_prompt<B>(
        &self,
        user_query: &str,
        retrieval: &RetrievalSet,
        backend: &B,
    ) -> Result<ChatRequest, AnswerError>
    where
        B: SearchBackend + ?Sized,
    {
        let mut user = format!("Request: {}\n\n", user_query.trim());
        if retrieval.is_empty() {
            user.push_str(&self.prompts.empty_retrieval);
        } else {
            let shown = retrieval.items.len().min(self.config.max_context_docs.max(1));
            let _ = writeln!(user, "Retrieved moments ({shown}):");
            for (i, item) in retrieval.items.iter().take(shown).enumerate() {
                let doc = backend
                    .document(&item.moment_id)
                    .ok_or_else(|| AnswerError::UnknownDocId(item.moment_id.clone()))?;
                let _ = write!(
                    user,
                    "\n{MOMENT_BLOCK_HEADER}{} ---\ndoc_id: {}\nvideo_id: {}\nvideo_title: {}\nt_in: {}\nt_out: {}\ntranscript:\n{}\ncaptions:\n{}\n",
                    i + 1,
                    doc.doc_id,
                    doc.video_id,
                    doc.video_title,
                    format_seconds(doc.t_in),
                    format_seconds(doc.t_out),
                    if doc.transcript_text.is_empty() { "(no speech)" } else { &doc.transcript_text },
                    if doc.captions_text.is_empty() { "(none)" } else { &doc.captions_text },
                );
            }
        }
        Ok(ChatRequest::new(vec![
            ChatMessage::system(self.prompts.system.clone()),
            ChatMessage::user(user),
        ]))
    }

    /// Prompt, complete, then parse, validate and rewrite citations.
    pub async fn answer<B, C, G>(
        &self,
        user_query: &str,
        retrieval: &RetrievalSet,
        backend: &B,
        catalog: &C,
        gateway: &G,
    ) -> Result<Answer, AnswerError>
    where
        B: SearchBackend + ?Sized,
        C: Catalog + ?Sized,
        G: ChatGateway + ?Sized,
    {
        let mut timings = BTreeMap::new();
        let mut sw = self.clock.start();

        let request = self.build_answer_prompt(user_query, retrieval, backend)?;
        timings.insert("prompt_build".to_string(), sw.lap_ms());

        let raw_text = gateway.complete(&request).await?.content;
        timings.insert("answer_generation".to_string(), sw.lap_ms());

        let parsed = parse_references(&raw_text);
        let external_links = extract_external_links(&raw_text, &parsed.references);
        timings.insert("parse_references".to_string(), sw.lap_ms());

        let references = validate_references(parsed.references, retrieval, catalog, self.config.require_grounding);
        timings.insert("validate_references".to_string(), sw.lap_ms());

        let rewritten_text = rewrite_links(&raw_text, &references, catalog, &self.config.link_base_url);
        timings.insert("rewrite_links".to_string(), sw.lap_ms());

        Ok(Answer {
            raw_text,
            rewritten_text,
            references,
            external_links,
            timings,
        })
    }
}
