//! Embedded BM25 full-text index over moment documents.
//!
//! Each document is indexed as a single field made of its video title,
//! transcript text and caption text. Scoring uses the smoothed IDF
//!
//! ```text
//! idf(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! score(q, d) = Σ_t idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 - b + b·|d|/avgdl))
//! ```
//!
//! Snapshots are immutable once built. Results are ordered by score
//! descending, then doc id ascending; zero-score documents never appear.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MomentDocument, SearchQuery};

const SNAPSHOT_MAGIC: &[u8; 4] = b"VLQX";
const SNAPSHOT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate doc id `{0}`")]
    DuplicateDocId(String),
    #[error("snapshot io: {0}")]
    Io(#[from] io::Error),
    #[error("not an index snapshot (bad magic bytes)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("search backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn is_valid(&self) -> bool {
        self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b)
    }
}

/// Lowercased alphanumeric runs. No stemming, no stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// BM25 inverse document frequency.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Position of the document in id order.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
}

/// Anything that can rank moment documents for a keyword query. The embedded
/// [`IndexSnapshot`] is the only implementation shipped; a remote engine can
/// sit behind the same trait.
pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &SearchQuery, top_k: usize, params: &Bm25Params) -> Result<Vec<SearchHit>, IndexError>;

    fn document(&self, doc_id: &str) -> Option<&MomentDocument>;

    fn doc_count(&self) -> usize;
}

/// Immutable inverted index.
#[derive(Debug, Clone, Default)]
pub struct IndexSnapshot {
    // Sorted by doc_id so that positional order equals id order.
    docs: Vec<MomentDocument>,
    doc_lengths: Vec<u32>,
    by_id: HashMap<String, u32>,
    postings: HashMap<String, Vec<Posting>>,
    avg_doc_len: f64,
}

impl IndexSnapshot {
    pub fn build(mut docs: Vec<MomentDocument>) -> Result<Self, IndexError> {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(IndexError::DuplicateDocId(w[0].doc_id.clone()));
        }

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut tf: HashMap<String, u32> = HashMap::new();
        for (pos, doc) in docs.iter().enumerate() {
            tf.clear();
            let tokens = tokenize(&doc.indexed_text());
            doc_lengths.push(tokens.len() as u32);
            for token in tokens {
                *tf.entry(token).or_insert(0) += 1;
            }
            for (term, count) in tf.drain() {
                postings.entry(term).or_default().push(Posting {
                    doc: pos as u32,
                    tf: count,
                });
            }
        }
        Self::assemble(docs, doc_lengths, postings)
    }

    fn assemble(
        docs: Vec<MomentDocument>,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Result<Self, IndexError> {
        let by_id = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i as u32))
            .collect();
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Ok(Self {
            docs,
            doc_lengths,
            by_id,
            postings,
            avg_doc_len,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn documents(&self) -> &[MomentDocument] {
        &self.docs
    }

    pub fn document(&self, doc_id: &str) -> Option<&MomentDocument> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i as usize])
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).map(|&i| self.doc_lengths[i as usize] as usize)
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let (Some(list), Some(&pos)) = (self.postings.get(term), self.by_id.get(doc_id)) else {
            return 0;
        };
        list.binary_search_by_key(&pos, |p| p.doc)
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// Ranks documents for `query`, returning at most `top_k` hits.
    pub fn search(&self, query: &SearchQuery, top_k: usize, params: &Bm25Params) -> Vec<SearchHit> {
        let n = self.docs.len();
        if n == 0 || top_k == 0 {
            return Vec::new();
        }
        let terms = tokenize(query.keywords());
        let mut scores = vec![0.0f64; n];
        let mut touched: Vec<u32> = Vec::new();
        let k1 = params.k1;
        let b = params.b;
        let avgdl = self.avg_doc_len;
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let weight = idf(n, list.len());
            for p in list {
                let tf = f64::from(p.tf);
                let len_ratio = f64::from(self.doc_lengths[p.doc as usize]) / avgdl;
                let norm = k1 * (1.0 - b + b * len_ratio);
                let slot = &mut scores[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += weight * tf * (k1 + 1.0) / (tf + norm);
            }
        }

        let mut ranked: Vec<(u32, f64)> = touched
            .into_iter()
            .map(|d| (d, scores[d as usize]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        if ranked.len() > top_k {
            ranked.select_nth_unstable_by(top_k - 1, rank_order);
            ranked.truncate(top_k);
        }
        ranked.sort_unstable_by(rank_order);
        ranked
            .into_iter()
            .map(|(d, score)| SearchHit {
                doc_id: self.docs[d as usize].doc_id.clone(),
                score,
            })
            .collect()
    }

    /// Writes the binary snapshot: `VLQX`, version byte, then documents,
    /// lengths and postings in little-endian length-prefixed form.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_u8(SNAPSHOT_VERSION)?;
        w.write_u32::<LittleEndian>(self.docs.len() as u32)?;
        for (doc, &len) in self.docs.iter().zip(&self.doc_lengths) {
            write_str(&mut w, &doc.doc_id)?;
            write_str(&mut w, &doc.video_id)?;
            write_str(&mut w, &doc.video_title)?;
            w.write_f64::<LittleEndian>(doc.t_in)?;
            w.write_f64::<LittleEndian>(doc.t_out)?;
            write_str(&mut w, &doc.transcript_text)?;
            write_str(&mut w, &doc.captions_text)?;
            w.write_u32::<LittleEndian>(doc.speakers.len() as u32)?;
            for s in &doc.speakers {
                write_str(&mut w, s)?;
            }
            w.write_u32::<LittleEndian>(len)?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.write_u32::<LittleEndian>(terms.len() as u32)?;
        for term in terms {
            let list = &self.postings[term];
            write_str(&mut w, term)?;
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for p in list {
                w.write_u32::<LittleEndian>(p.doc)?;
                w.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = r.read_u8()?;
        if version != SNAPSHOT_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let n_docs = r.read_u32::<LittleEndian>()? as usize;
        let mut docs = Vec::with_capacity(n_docs.min(1 << 20));
        let mut doc_lengths = Vec::with_capacity(n_docs.min(1 << 20));
        for _ in 0..n_docs {
            let doc_id = read_str(&mut r)?;
            let video_id = read_str(&mut r)?;
            let video_title = read_str(&mut r)?;
            let t_in = r.read_f64::<LittleEndian>()?;
            let t_out = r.read_f64::<LittleEndian>()?;
            let transcript_text = read_str(&mut r)?;
            let captions_text = read_str(&mut r)?;
            let n_speakers = r.read_u32::<LittleEndian>()?;
            let speakers = (0..n_speakers).map(|_| read_str(&mut r)).collect::<Result<_, _>>()?;
            doc_lengths.push(r.read_u32::<LittleEndian>()?);
            docs.push(MomentDocument {
                doc_id,
                video_id,
                video_title,
                t_in,
                t_out,
                transcript_text,
                captions_text,
                speakers,
            });
        }
        if docs.windows(2).any(|w| w[0].doc_id >= w[1].doc_id) {
            return Err(IndexError::Corrupt("documents not in strict id order".into()));
        }
        let n_terms = r.read_u32::<LittleEndian>()? as usize;
        let mut postings = HashMap::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            let term = read_str(&mut r)?;
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(len.min(n_docs));
            for _ in 0..len {
                let doc = r.read_u32::<LittleEndian>()?;
                let tf = r.read_u32::<LittleEndian>()?;
                if doc as usize >= n_docs || tf == 0 {
                    return Err(IndexError::Corrupt(format!("bad posting for `{term}`")));
                }
                list.push(Posting { doc, tf });
            }
            if list.windows(2).any(|w| w[0].doc >= w[1].doc) {
                return Err(IndexError::Corrupt(format!("unsorted postings for `{term}`")));
            }
            postings.insert(term, list);
        }
        Self::assemble(docs, doc_lengths, postings)
    }
}

impl SearchBackend for IndexSnapshot {
    fn search(&self, query: &SearchQuery, top_k: usize, params: &Bm25Params) -> Result<Vec<SearchHit>, IndexError> {
        Ok(IndexSnapshot::search(self, query, top_k, params))
    }

    fn document(&self, doc_id: &str) -> Option<&MomentDocument> {
        IndexSnapshot::document(self, doc_id)
    }

    fn doc_count(&self) -> usize {
        IndexSnapshot::doc_count(self)
    }
}

// Positions are in id order, so comparing positions compares doc ids.
fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IndexError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(IndexError::Corrupt("truncated string".into()));
    }
    String::from_utf8(buf).map_err(|_| IndexError::Corrupt("invalid utf-8".into()))
}
