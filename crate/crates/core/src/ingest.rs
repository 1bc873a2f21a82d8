//! JSONL metadata interchange and the in-memory library store.
//!
//! `videos.jsonl` holds one `{video_id, title, duration, media_uri?}` object
//! per line and `moments.jsonl` one `{moment_id, video_id, t_in, t_out,
//! transcript, captions}` object per line. Lenient loading skips bad lines
//! with a diagnostic; strict loading stops at the first one.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::index::{IndexError, IndexSnapshot};
use crate::model::{build_document, FrameCaption, MomentDocument, ModelError, TranscriptSegment, VideoAsset, VideoMoment};
use crate::references::Catalog;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    StrictValidation { file: String, line: usize, reason: String },
    #[error("splits do not tile [0, {duration}]: {reason}")]
    NonTilingSplits { duration: f64, reason: String },
    #[error("duplicate video id `{0}`")]
    DuplicateVideo(String),
    #[error("duplicate moment id `{0}`")]
    DuplicateMoment(String),
    #[error("moment `{moment_id}` references unknown video `{video_id}`")]
    UnknownVideo { moment_id: String, video_id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// A skipped or rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostic {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub title: String,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub speaker: String,
    pub t_start: f64,
    pub t_end: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub t_frame: f64,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub moment_id: String,
    pub video_id: String,
    pub t_in: f64,
    pub t_out: f64,
    #[serde(default)]
    pub transcript: Vec<SegmentRecord>,
    #[serde(default)]
    pub captions: Vec<CaptionRecord>,
}

impl From<VideoRecord> for VideoAsset {
    fn from(r: VideoRecord) -> Self {
        VideoAsset {
            video_id: r.video_id,
            title: r.title,
            duration: r.duration,
            media_uri: r.media_uri,
        }
    }
}

impl From<&VideoAsset> for VideoRecord {
    fn from(a: &VideoAsset) -> Self {
        VideoRecord {
            video_id: a.video_id.clone(),
            title: a.title.clone(),
            duration: a.duration,
            media_uri: a.media_uri.clone(),
        }
    }
}

impl MomentRecord {
    /// Converts to a moment, dropping empty transcript segments and sorting
    /// segments and captions by time.
    pub fn into_moment(self) -> VideoMoment {
        let mut transcript: Vec<TranscriptSegment> = self
            .transcript
            .into_iter()
            .filter(|s| !s.text.trim().is_empty())
            .map(|s| TranscriptSegment {
                speaker_label: s.speaker,
                t_start: s.t_start,
                t_end: s.t_end,
                text: s.text,
            })
            .collect();
        transcript.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        let mut captions: Vec<FrameCaption> = self
            .captions
            .into_iter()
            .map(|c| FrameCaption {
                t_frame: c.t_frame,
                caption: c.caption,
            })
            .collect();
        captions.sort_by(|a, b| a.t_frame.total_cmp(&b.t_frame));
        VideoMoment {
            moment_id: self.moment_id,
            video_id: self.video_id,
            t_in: self.t_in,
            t_out: self.t_out,
            transcript,
            captions,
        }
    }
}

impl From<&VideoMoment> for MomentRecord {
    fn from(m: &VideoMoment) -> Self {
        MomentRecord {
            moment_id: m.moment_id.clone(),
            video_id: m.video_id.clone(),
            t_in: m.t_in,
            t_out: m.t_out,
            transcript: m
                .transcript
                .iter()
                .map(|s| SegmentRecord {
                    speaker: s.speaker_label.clone(),
                    t_start: s.t_start,
                    t_end: s.t_end,
                    text: s.text.clone(),
                })
                .collect(),
            captions: m
                .captions
                .iter()
                .map(|c| CaptionRecord {
                    t_frame: c.t_frame,
                    caption: c.caption.clone(),
                })
                .collect(),
        }
    }
}

const VIDEO_KEYS: &[&str] = &["video_id", "title", "duration", "media_uri"];
const MOMENT_KEYS: &[&str] = &["moment_id", "video_id", "t_in", "t_out", "transcript", "captions"];
const SEGMENT_KEYS: &[&str] = &["speaker", "t_start", "t_end", "text"];
const CAPTION_KEYS: &[&str] = &["t_frame", "caption"];

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<(), String> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(format!("unknown key `{k}` in {what}")),
        None => Ok(()),
    }
}

fn check_nested(obj: &Map<String, Value>, key: &str, allowed: &[&str], what: &str) -> Result<(), String> {
    if let Some(Value::Array(items)) = obj.get(key) {
        for item in items {
            if let Value::Object(o) = item {
                check_keys(o, allowed, what)?;
            }
        }
    }
    Ok(())
}

fn parse_video_line(line: &str, strict: bool) -> Result<VideoRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
    let Value::Object(obj) = &value else {
        return Err("expected a json object".into());
    };
    if strict {
        check_keys(obj, VIDEO_KEYS, "video record")?;
    }
    serde_json::from_value(value).map_err(|e| format!("invalid video record: {e}"))
}

fn parse_moment_line(line: &str, strict: bool) -> Result<MomentRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
    let Value::Object(obj) = &value else {
        return Err("expected a json object".into());
    };
    if strict {
        check_keys(obj, MOMENT_KEYS, "moment record")?;
        check_nested(obj, "transcript", SEGMENT_KEYS, "transcript segment")?;
        check_nested(obj, "captions", CAPTION_KEYS, "caption")?;
    }
    serde_json::from_value(value).map_err(|e| format!("invalid moment record: {e}"))
}

/// In-memory library: assets and moments keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibraryStore {
    assets: BTreeMap<String, VideoAsset>,
    moments: BTreeMap<String, VideoMoment>,
    generation: u64,
}

impl LibraryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn assets(&self) -> impl Iterator<Item = &VideoAsset> {
        self.assets.values()
    }

    pub fn moments(&self) -> impl Iterator<Item = &VideoMoment> {
        self.moments.values()
    }

    pub fn asset(&self, video_id: &str) -> Option<&VideoAsset> {
        self.assets.get(video_id)
    }

    pub fn moment(&self, moment_id: &str) -> Option<&VideoMoment> {
        self.moments.get(moment_id)
    }

    pub fn video_count(&self) -> usize {
        self.assets.len()
    }

    pub fn moment_count(&self) -> usize {
        self.moments.len()
    }

    pub fn insert_video(&mut self, asset: VideoAsset) -> Result<(), IngestError> {
        asset.validate()?;
        if self.assets.contains_key(&asset.video_id) {
            return Err(IngestError::DuplicateVideo(asset.video_id));
        }
        self.assets.insert(asset.video_id.clone(), asset);
        self.generation += 1;
        Ok(())
    }

    pub fn insert_moment(&mut self, moment: VideoMoment) -> Result<(), IngestError> {
        let asset = self.assets.get(&moment.video_id).ok_or_else(|| IngestError::UnknownVideo {
            moment_id: moment.moment_id.clone(),
            video_id: moment.video_id.clone(),
        })?;
        moment.validate(asset)?;
        if self.moments.contains_key(&moment.moment_id) {
            return Err(IngestError::DuplicateMoment(moment.moment_id));
        }
        self.moments.insert(moment.moment_id.clone(), moment);
        self.generation += 1;
        Ok(())
    }

    /// One document per moment, in moment id order.
    pub fn documents(&self) -> Result<Vec<MomentDocument>, IngestError> {
        self.moments
            .values()
            .map(|m| {
                // insert_moment guarantees the asset exists.
                let asset = &self.assets[&m.video_id];
                build_document(m, asset).map_err(IngestError::from)
            })
            .collect()
    }

    pub fn build_index(&self) -> Result<IndexSnapshot, IngestError> {
        Ok(IndexSnapshot::build(self.documents()?)?)
    }

    /// Canonical `videos.jsonl`: id order, fixed key order.
    pub fn write_videos_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for asset in self.assets.values() {
            serde_json::to_writer(&mut w, &VideoRecord::from(asset))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Canonical `moments.jsonl`: id order, fixed key order.
    pub fn write_moments_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for moment in self.moments.values() {
            serde_json::to_writer(&mut w, &MomentRecord::from(moment))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

impl Catalog for LibraryStore {
    fn video(&self, video_id: &str) -> Option<&VideoAsset> {
        self.assets.get(video_id)
    }

    fn moment_interval(&self, moment_id: &str) -> Option<(&str, f64, f64)> {
        self.moments
            .get(moment_id)
            .map(|m| (m.video_id.as_str(), m.t_in, m.t_out))
    }
}

#[derive(Debug, Default)]
pub struct LoadOutcome {
    pub store: LibraryStore,
    pub diagnostics: Vec<IngestDiagnostic>,
}

fn read_lines<R: BufRead>(
    reader: R,
    file: &str,
    strict: bool,
    diagnostics: &mut Vec<IngestDiagnostic>,
    mut handle: impl FnMut(&str) -> Result<(), String>,
) -> Result<(), IngestError> {
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: file.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if let Err(reason) = handle(&line) {
            if strict {
                return Err(IngestError::StrictValidation {
                    file: file.to_string(),
                    line: line_no,
                    reason,
                });
            }
            diagnostics.push(IngestDiagnostic {
                file: file.to_string(),
                line: line_no,
                reason,
            });
        }
    }
    Ok(())
}

/// Loads a library from two JSONL readers. `videos_name` / `moments_name`
/// label diagnostics.
pub fn load_library_from_readers<V: BufRead, M: BufRead>(
    videos: V,
    videos_name: &str,
    moments: M,
    moments_name: &str,
    strict: bool,
) -> Result<LoadOutcome, IngestError> {
    let mut store = LibraryStore::new();
    let mut diagnostics = Vec::new();
    read_lines(videos, videos_name, strict, &mut diagnostics, |line| {
        let record = parse_video_line(line, strict)?;
        store.insert_video(record.into()).map_err(|e| match e {
            IngestError::DuplicateVideo(id) => format!("duplicate video id `{id}`"),
            other => other.to_string(),
        })
    })?;
    read_lines(moments, moments_name, strict, &mut diagnostics, |line| {
        let record = parse_moment_line(line, strict)?;
        store.insert_moment(record.into_moment()).map_err(|e| match e {
            IngestError::UnknownVideo { video_id, .. } => format!("unknown video `{video_id}`"),
            IngestError::DuplicateMoment(id) => format!("duplicate moment id `{id}`"),
            other => other.to_string(),
        })
    })?;
    Ok(LoadOutcome { store, diagnostics })
}

pub fn load_library(videos_path: &Path, moments_path: &Path, strict: bool) -> Result<LoadOutcome, IngestError> {
    let open = |p: &Path| {
        File::open(p).map(BufReader::new).map_err(|source| IngestError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    load_library_from_readers(
        open(videos_path)?,
        &videos_path.display().to_string(),
        open(moments_path)?,
        &moments_path.display().to_string(),
        strict,
    )
}

const TILE_EPS: f64 = 1e-9;

/// Turns scene intervals into moment skeletons.
///
/// Each transcript segment goes to the moment containing its midpoint (a
/// midpoint on a boundary goes to the later moment) and is clamped to that
/// moment. Each moment gets `captions_per_moment` caption slots at
/// `t_in + (i + 0.5) · (t_out - t_in) / n`, with empty text awaiting a
/// captioning model.
pub fn derive_moments_from_splits(
    video: &VideoAsset,
    splits: &[(f64, f64)],
    transcript: &[TranscriptSegment],
    captions_per_moment: usize,
) -> Result<Vec<VideoMoment>, IngestError> {
    let fail = |reason: String| IngestError::NonTilingSplits {
        duration: video.duration,
        reason,
    };
    let (first, last) = match (splits.first(), splits.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(fail("no splits".into())),
    };
    if first.0.abs() > TILE_EPS {
        return Err(fail(format!("first split starts at {}", first.0)));
    }
    if (last.1 - video.duration).abs() > TILE_EPS {
        return Err(fail(format!("last split ends at {}", last.1)));
    }
    for (i, &(t_in, t_out)) in splits.iter().enumerate() {
        if t_in.is_nan() || t_out.is_nan() || t_in >= t_out {
            return Err(fail(format!("split {i} is empty or inverted")));
        }
        if i > 0 && splits[i - 1].1 != t_in {
            return Err(fail(format!("gap or overlap before split {i}")));
        }
    }

    let mut moments: Vec<VideoMoment> = splits
        .iter()
        .enumerate()
        .map(|(i, &(t_in, t_out))| {
            let n = captions_per_moment as f64;
            VideoMoment {
                moment_id: format!("{}-m{:05}", video.video_id, i),
                video_id: video.video_id.clone(),
                t_in,
                t_out,
                transcript: Vec::new(),
                captions: (0..captions_per_moment)
                    .map(|k| FrameCaption {
                        t_frame: t_in + (k as f64 + 0.5) * (t_out - t_in) / n,
                        caption: String::new(),
                    })
                    .collect(),
            }
        })
        .collect();

    for seg in transcript {
        let mid = (seg.t_start + seg.t_end) / 2.0;
        // Last split whose start is <= mid; boundary ties land in the later one.
        let idx = splits.partition_point(|&(t_in, _)| t_in <= mid).saturating_sub(1);
        let m = &mut moments[idx];
        m.transcript.push(TranscriptSegment {
            t_start: seg.t_start.clamp(m.t_in, m.t_out),
            t_end: seg.t_end.clamp(m.t_in, m.t_out),
            ..seg.clone()
        });
    }
    for m in &mut moments {
        m.transcript.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    }
    Ok(moments)
}
