//! Question answering over large video libraries.
//!
//! An LLM rewrites the user's request into keyword queries, the queries run
//! against a BM25 index of moment metadata (speaker-labelled transcripts and
//! frame captions), and a second LLM call writes an answer citing moments as
//! `[video_id](timestamp_in;timestamp_out)`. Citations are validated against
//! the library and the retrieved set, then rewritten into hyperlinks.

pub mod answer;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod references;
pub mod retriever;
pub mod scene;
pub mod synth;
pub mod timing;

pub use answer::{AnswerConfig, AnswerGenerator};
pub use index::{Bm25Params, IndexSnapshot, SearchBackend, SearchHit};
pub use ingest::{load_library, LibraryStore};
pub use llm::{ChatGateway, HttpGateway, HttpGatewayConfig, ScriptedGateway};
pub use model::*;
pub use pipeline::{Corpus, Pipeline};
pub use retriever::{Retriever, RetrieverConfig};
