//! Retrieval and grounding metrics over a question dataset.
//!
//! Per case: recall@k for k in {5, 10, 50} against the relevant moment ids,
//! and, when answers are generated, reference precision (valid / all
//! citations) and hallucination rate (invalid citations plus external URLs
//! over all citations plus external URLs). Aggregates are unweighted means
//! over the cases that completed and for which the metric is defined.

use std::io::BufRead;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ChatGateway;
use crate::pipeline::{Corpus, Pipeline};

pub const RECALL_CUTOFFS: [usize; 3] = [5, 10, 50];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("case {case}: unknown moment id `{moment_id}`")]
    UnknownMomentId { case: usize, moment_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub question: String,
    pub relevant_moment_ids: Vec<String>,
}

/// Reads a JSONL dataset of `{question, relevant_moment_ids}` objects.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<EvalCase>, EvalError> {
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: EvalCase = serde_json::from_str(&line).map_err(|e| EvalError::Dataset {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if case.question.trim().is_empty() || case.relevant_moment_ids.is_empty() {
            return Err(EvalError::Dataset {
                line: i + 1,
                reason: "question and relevant_moment_ids must be non-empty".into(),
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

/// Fraction of `relevant` found among the first `k` of `ranked`.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], relevant: &[String], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let top = &ranked[..ranked.len().min(k)];
    let hits = relevant
        .iter()
        .filter(|id| top.iter().any(|r| r.as_ref() == id.as_str()))
        .count();
    hits as f64 / relevant.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub recall_at_50: f64,
    pub references: usize,
    pub valid_references: usize,
    pub external_links: usize,
    pub reference_precision: Option<f64>,
    pub hallucination_rate: Option<f64>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub question: String,
    pub metrics: Option<CaseMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cases: usize,
    pub failed_cases: usize,
    pub recall_at_5: Option<f64>,
    pub recall_at_10: Option<f64>,
    pub recall_at_50: Option<f64>,
    pub reference_precision: Option<f64>,
    pub hallucination_rate: Option<f64>,
    pub mean_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseReport>,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Also run answer generation and score citations.
    pub with_answers: bool,
    pub concurrency: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            with_answers: true,
            concurrency: 8,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

async fn run_case<G>(case: &EvalCase, pipeline: &Pipeline, corpus: &Corpus, gateway: &G, with_answers: bool) -> CaseReport
where
    G: ChatGateway + ?Sized,
{
    let sw = pipeline.clock.start();
    let result = if with_answers {
        pipeline
            .ask(&case.question, corpus, gateway, None)
            .await
            .map(|o| (o.retrieval, Some(o.answer)))
    } else {
        pipeline
            .retrieve(&case.question, corpus, gateway, None)
            .await
            .map(|(r, _)| (r, None))
    };
    let latency_ms = sw.elapsed_ms();
    let (retrieval, answer) = match result {
        Ok(v) => v,
        Err(e) => {
            return CaseReport {
                question: case.question.clone(),
                metrics: None,
                error: Some(e.to_string()),
            }
        }
    };
    let ranked: Vec<&str> = retrieval.items.iter().map(|m| m.moment_id.as_str()).collect();
    let [r5, r10, r50] = RECALL_CUTOFFS.map(|k| recall_at_k(&ranked, &case.relevant_moment_ids, k));
    let (references, valid_references, external_links) = answer.as_ref().map_or((0, 0, 0), |a| {
        (
            a.references.len(),
            a.references.iter().filter(|r| r.status.is_valid()).count(),
            a.external_links.len(),
        )
    });
    let reference_precision = (references > 0).then(|| valid_references as f64 / references as f64);
    let flagged = references + external_links;
    let hallucination_rate = (answer.is_some() && flagged > 0)
        .then(|| (references - valid_references + external_links) as f64 / flagged as f64);
    CaseReport {
        question: case.question.clone(),
        metrics: Some(CaseMetrics {
            recall_at_5: r5,
            recall_at_10: r10,
            recall_at_50: r50,
            references,
            valid_references,
            external_links,
            reference_precision,
            hallucination_rate,
            latency_ms,
        }),
        error: None,
    }
}

/// Runs every case and aggregates. Unknown relevant ids abort before any
/// case runs; pipeline failures mark the case failed and the run continues.
pub async fn run_eval<G>(
    dataset: &[EvalCase],
    pipeline: &Pipeline,
    corpus: &Corpus,
    gateway: &G,
    options: EvalOptions,
) -> Result<EvalReport, EvalError>
where
    G: ChatGateway + ?Sized,
{
    for (i, case) in dataset.iter().enumerate() {
        if let Some(id) = case
            .relevant_moment_ids
            .iter()
            .find(|id| corpus.library().moment(id).is_none())
        {
            return Err(EvalError::UnknownMomentId {
                case: i,
                moment_id: id.clone(),
            });
        }
    }

    let cases: Vec<CaseReport> = stream::iter(dataset)
        .map(|case| run_case(case, pipeline, corpus, gateway, options.with_answers))
        .buffered(options.concurrency.max(1))
        .collect()
        .await;

    let done: Vec<&CaseMetrics> = cases.iter().filter_map(|c| c.metrics.as_ref()).collect();
    let aggregate = AggregateReport {
        cases: cases.len(),
        failed_cases: cases.len() - done.len(),
        recall_at_5: mean(done.iter().map(|m| m.recall_at_5)),
        recall_at_10: mean(done.iter().map(|m| m.recall_at_10)),
        recall_at_50: mean(done.iter().map(|m| m.recall_at_50)),
        reference_precision: mean(done.iter().filter_map(|m| m.reference_precision)),
        hallucination_rate: mean(done.iter().filter_map(|m| m.hallucination_rate)),
        mean_latency_ms: mean(done.iter().map(|m| m.latency_ms)),
    };
    Ok(EvalReport { cases, aggregate })
}
