//! Shared domain vocabulary: videos, moments, the text documents built from
//! them, search queries, retrieval sets and parsed moment references.
//!
//! Every type here is a plain immutable value once constructed. Timestamps
//! are decimal seconds everywhere.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("moment belongs to video `{moment_video}` but asset is `{asset_video}`")]
    MismatchedVideo {
        moment_video: String,
        asset_video: String,
    },
    #[error("empty identifier for {0}")]
    EmptyId(&'static str),
    #[error("video `{video_id}` has non-positive duration {duration}")]
    InvalidDuration { video_id: String, duration: f64 },
    #[error("moment `{moment_id}`: interval [{t_in}, {t_out}] is not inside [0, {duration}]")]
    MomentOutOfVideo {
        moment_id: String,
        t_in: f64,
        t_out: f64,
        duration: f64,
    },
    #[error("moment `{moment_id}`: transcript segment [{t_start}, {t_end}] is invalid or outside the moment")]
    SegmentOutOfMoment {
        moment_id: String,
        t_start: f64,
        t_end: f64,
    },
    #[error("moment `{moment_id}`: transcript segment at {t_start} has empty text")]
    EmptySegment { moment_id: String, t_start: f64 },
    #[error("moment `{moment_id}`: caption at {t_frame} is empty or outside the moment")]
    InvalidCaption { moment_id: String, t_frame: f64 },
    #[error("moment `{0}`: transcript segments are not sorted by start time")]
    UnsortedTranscript(String),
    #[error("moment `{0}`: captions are not sorted by frame time")]
    UnsortedCaptions(String),
    #[error("search query is empty")]
    EmptyQuery,
}

/// A video file of the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub video_id: String,
    pub title: String,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_uri: Option<String>,
}

impl VideoAsset {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.video_id.is_empty() {
            return Err(ModelError::EmptyId("video_id"));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(ModelError::InvalidDuration {
                video_id: self.video_id.clone(),
                duration: self.duration,
            });
        }
        Ok(())
    }
}

/// One diarized and transcribed utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub speaker_label: String,
    pub t_start: f64,
    pub t_end: f64,
    pub text: String,
}

/// Caption of a single sampled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCaption {
    pub t_frame: f64,
    pub caption: String,
}

/// A contiguous interval of a video together with its speech and visual
/// metadata. This is the unit of retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMoment {
    pub moment_id: String,
    pub video_id: String,
    pub t_in: f64,
    pub t_out: f64,
    pub transcript: Vec<TranscriptSegment>,
    pub captions: Vec<FrameCaption>,
}

impl VideoMoment {
    /// Checks every containment and ordering invariant against the owning
    /// asset.
    pub fn validate(&self, asset: &VideoAsset) -> Result<(), ModelError> {
        if self.moment_id.is_empty() {
            return Err(ModelError::EmptyId("moment_id"));
        }
        if self.video_id != asset.video_id {
            return Err(ModelError::MismatchedVideo {
                moment_video: self.video_id.clone(),
                asset_video: asset.video_id.clone(),
            });
        }
        let in_video = self.t_in >= 0.0 && self.t_in < self.t_out && self.t_out <= asset.duration;
        if !in_video {
            return Err(ModelError::MomentOutOfVideo {
                moment_id: self.moment_id.clone(),
                t_in: self.t_in,
                t_out: self.t_out,
                duration: asset.duration,
            });
        }
        for seg in &self.transcript {
            let ok = seg.t_start >= self.t_in && seg.t_start < seg.t_end && seg.t_end <= self.t_out;
            if !ok {
                return Err(ModelError::SegmentOutOfMoment {
                    moment_id: self.moment_id.clone(),
                    t_start: seg.t_start,
                    t_end: seg.t_end,
                });
            }
            if seg.text.trim().is_empty() {
                return Err(ModelError::EmptySegment {
                    moment_id: self.moment_id.clone(),
                    t_start: seg.t_start,
                });
            }
        }
        if self.transcript.windows(2).any(|w| w[0].t_start > w[1].t_start) {
            return Err(ModelError::UnsortedTranscript(self.moment_id.clone()));
        }
        for cap in &self.captions {
            if cap.caption.trim().is_empty() || cap.t_frame < self.t_in || cap.t_frame > self.t_out {
                return Err(ModelError::InvalidCaption {
                    moment_id: self.moment_id.clone(),
                    t_frame: cap.t_frame,
                });
            }
        }
        if self.captions.windows(2).any(|w| w[0].t_frame > w[1].t_frame) {
            return Err(ModelError::UnsortedCaptions(self.moment_id.clone()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.t_out - self.t_in
    }
}

/// Flattened text rendering of a moment, as fed to the search index and to
/// the answer prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDocument {
    pub doc_id: String,
    pub video_id: String,
    pub video_title: String,
    pub t_in: f64,
    pub t_out: f64,
    pub transcript_text: String,
    pub captions_text: String,
    pub speakers: Vec<String>,
}

impl MomentDocument {
    /// Text that gets tokenized into the index: title, transcript, captions.
    pub fn indexed_text(&self) -> String {
        let mut text = String::with_capacity(
            self.video_title.len() + self.transcript_text.len() + self.captions_text.len() + 2,
        );
        text.push_str(&self.video_title);
        text.push('\n');
        text.push_str(&self.transcript_text);
        text.push('\n');
        text.push_str(&self.captions_text);
        text
    }
}

/// Builds the text document for `moment`.
///
/// The transcript renders as one `speaker: text` line per segment and the
/// captions as one line per frame. Speakers are listed once each, in order
/// of first appearance.
pub fn build_document(moment: &VideoMoment, asset: &VideoAsset) -> Result<MomentDocument, ModelError> {
    if moment.video_id != asset.video_id {
        return Err(ModelError::MismatchedVideo {
            moment_video: moment.video_id.clone(),
            asset_video: asset.video_id.clone(),
        });
    }
    let transcript_text = moment
        .transcript
        .iter()
        .map(|seg| format!("{}: {}", seg.speaker_label, seg.text))
        .collect::<Vec<_>>()
        .join("\n");
    let captions_text = moment
        .captions
        .iter()
        .map(|c| c.caption.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let mut speakers: Vec<String> = Vec::new();
    for seg in &moment.transcript {
        if !speakers.iter().any(|s| s == &seg.speaker_label) {
            speakers.push(seg.speaker_label.clone());
        }
    }
    Ok(MomentDocument {
        doc_id: moment.moment_id.clone(),
        video_id: moment.video_id.clone(),
        video_title: asset.title.clone(),
        t_in: moment.t_in,
        t_out: moment.t_out,
        transcript_text,
        captions_text,
        speakers,
    })
}

/// A handful of space separated keywords sent to the search backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SearchQuery(String);

impl SearchQuery {
    pub fn new(keywords: impl AsRef<str>) -> Result<Self, ModelError> {
        let trimmed = keywords.as_ref().trim();
        if trimmed.is_empty() {
            return Err(ModelError::EmptyQuery);
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn keywords(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SearchQuery {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SearchQuery> for String {
    fn from(q: SearchQuery) -> Self {
        q.0
    }
}

impl fmt::Display for SearchQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedMoment {
    pub moment_id: String,
    pub score: f64,
}

/// Deduplicated moments merged across every generated query, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSet {
    pub items: Vec<RetrievedMoment>,
    pub source_queries: Vec<SearchQuery>,
}

impl RetrievalSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, moment_id: &str) -> bool {
        self.items.iter().any(|m| m.moment_id == moment_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceStatus {
    /// Parsed but not yet checked against the library.
    Unchecked,
    Valid,
    UnknownVideo,
    OutOfBounds,
    NotRetrieved,
}

impl ReferenceStatus {
    pub fn is_valid(self) -> bool {
        self == ReferenceStatus::Valid
    }
}

/// Byte offsets `[start, end)` into an answer text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub end: usize,
}

/// A `[video_id](timestamp_in;timestamp_out)` citation found in an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReference {
    pub video_id: String,
    pub timestamp_in: f64,
    pub timestamp_out: f64,
    pub span: ByteSpan,
    pub status: ReferenceStatus,
}

impl MomentReference {
    /// Canonical textual form of the citation.
    pub fn to_grammar(&self) -> String {
        format!(
            "[{}]({};{})",
            self.video_id,
            format_seconds(self.timestamp_in),
            format_seconds(self.timestamp_out)
        )
    }

    pub fn overlaps(&self, t_in: f64, t_out: f64) -> bool {
        self.timestamp_in < t_out && t_in < self.timestamp_out
    }
}

/// Final answer with resolved references and hyperlink-rewritten text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub raw_text: String,
    pub rewritten_text: String,
    pub references: Vec<MomentReference>,
    pub external_links: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

/// Shortest decimal rendering of a timestamp: `12.0` prints as `12`, never
/// with an exponent.
pub fn format_seconds(t: f64) -> String {
    // f64's Display is the shortest round-tripping representation and never
    // switches to scientific notation.
    format!("{t}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset() -> VideoAsset {
        VideoAsset {
            video_id: "A001".into(),
            title: "Apollo 11 Launch".into(),
            duration: 120.0,
            media_uri: None,
        }
    }

    fn seg(speaker: &str, t0: f64, t1: f64, text: &str) -> TranscriptSegment {
        TranscriptSegment {
            speaker_label: speaker.into(),
            t_start: t0,
            t_end: t1,
            text: text.into(),
        }
    }

    fn cap(t: f64, text: &str) -> FrameCaption {
        FrameCaption {
            t_frame: t,
            caption: text.into(),
        }
    }

    fn moment() -> VideoMoment {
        VideoMoment {
            moment_id: "A001-m0001".into(),
            video_id: "A001".into(),
            t_in: 10.0,
            t_out: 40.0,
            transcript: vec![
                seg("SPEAKER_00", 10.0, 20.0, "we have liftoff"),
                seg("SPEAKER_01", 21.0, 30.0, "the tower is clear"),
            ],
            captions: vec![
                cap(15.0, "a rocket on the pad"),
                cap(25.0, "smoke and fire under a rocket"),
                cap(35.0, "a rocket rising in the sky"),
            ],
        }
    }

    #[test]
    fn document_lines_follow_concatenation_rule() {
        let doc = build_document(&moment(), &asset()).unwrap();
        assert_eq!(doc.doc_id, "A001-m0001");
        assert_eq!(
            doc.transcript_text,
            "SPEAKER_00: we have liftoff\nSPEAKER_01: the tower is clear"
        );
        assert_eq!(doc.captions_text.lines().count(), 3);
        assert_eq!(doc.speakers, vec!["SPEAKER_00", "SPEAKER_01"]);
        assert_eq!(doc.video_title, "Apollo 11 Launch");
    }

    #[test]
    fn no_speech_moment_has_empty_transcript_text() {
        let mut m = moment();
        m.transcript.clear();
        let doc = build_document(&m, &asset()).unwrap();
        assert_eq!(doc.transcript_text, "");
        assert!(!doc.captions_text.is_empty());
        assert!(doc.speakers.is_empty());
    }

    #[test]
    fn rebuilding_is_byte_identical() {
        let a = serde_json::to_vec(&build_document(&moment(), &asset()).unwrap()).unwrap();
        let b = serde_json::to_vec(&build_document(&moment(), &asset()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn speakers_dedup_in_first_appearance_order() {
        let mut m = moment();
        m.transcript = vec![
            seg("SPEAKER_01", 10.0, 11.0, "a"),
            seg("SPEAKER_00", 11.0, 12.0, "b"),
            seg("SPEAKER_01", 12.0, 13.0, "c"),
        ];
        let doc = build_document(&m, &asset()).unwrap();
        assert_eq!(doc.speakers, vec!["SPEAKER_01", "SPEAKER_00"]);
    }

    #[test]
    fn mismatched_video_is_rejected() {
        let mut m = moment();
        m.video_id = "B002".into();
        assert!(matches!(
            build_document(&m, &asset()),
            Err(ModelError::MismatchedVideo { .. })
        ));
    }

    #[test]
    fn containment_is_enforced() {
        assert!(moment().validate(&asset()).is_ok());

        let mut m = moment();
        m.t_out = 121.0;
        assert!(matches!(m.validate(&asset()), Err(ModelError::MomentOutOfVideo { .. })));

        let mut m = moment();
        m.transcript[0].t_start = 5.0;
        assert!(matches!(m.validate(&asset()), Err(ModelError::SegmentOutOfMoment { .. })));

        let mut m = moment();
        m.captions[2].t_frame = 41.0;
        assert!(matches!(m.validate(&asset()), Err(ModelError::InvalidCaption { .. })));

        let mut m = moment();
        m.captions.swap(0, 1);
        assert!(matches!(m.validate(&asset()), Err(ModelError::UnsortedCaptions(_))));
    }

    #[test]
    fn search_query_trims_and_rejects_blank() {
        assert_eq!(SearchQuery::new("  moon rover ").unwrap().keywords(), "moon rover");
        assert_eq!(SearchQuery::new(" \t\n"), Err(ModelError::EmptyQuery));
    }

    #[test]
    fn seconds_format_is_minimal() {
        assert_eq!(format_seconds(12.0), "12");
        assert_eq!(format_seconds(45.5), "45.5");
        assert_eq!(format_seconds(0.1), "0.1");
        assert_eq!(format_seconds(1e21), "1000000000000000000000");
        assert_eq!(format_seconds(1e-7), "0.0000001");
    }
}
