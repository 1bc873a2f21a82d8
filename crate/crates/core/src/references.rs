//! Moment citations in LLM answers.
//!
//! Grammar, scanned left to right without overlap:
//!
//! ```text
//! ref = "[" ID "](" NUM ";" NUM ")"
//! ID  = one or more chars except [ ] ( ) and newline
//! NUM = digits [ "." digits ]
//! ```
//!
//! Citations are checked against the library and the retrieved moments; any
//! `http(s)://` URL outside a citation is reported as an external link.

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use crate::model::{format_seconds, ByteSpan, MomentReference, ReferenceStatus, RetrievalSet, VideoAsset};

/// Read access to the library for reference validation.
pub trait Catalog {
    fn video(&self, video_id: &str) -> Option<&VideoAsset>;

    /// `(video_id, t_in, t_out)` of a stored moment.
    fn moment_interval(&self, moment_id: &str) -> Option<(&str, f64, f64)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDiagnostic {
    pub span: ByteSpan,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReferences {
    pub references: Vec<MomentReference>,
    pub diagnostics: Vec<ReferenceDiagnostic>,
}

fn is_id_byte(b: u8) -> bool {
    !matches!(b, b'[' | b']' | b'(' | b')' | b'\n')
}

// Returns the end of a NUM starting at `pos`.
fn scan_number(bytes: &[u8], pos: usize) -> Option<usize> {
    let int_end = pos + bytes[pos..].iter().take_while(|b| b.is_ascii_digit()).count();
    if int_end == pos {
        return None;
    }
    if bytes.get(int_end) == Some(&b'.') {
        let frac_end = int_end + 1 + bytes[int_end + 1..].iter().take_while(|b| b.is_ascii_digit()).count();
        if frac_end == int_end + 1 {
            return None;
        }
        return Some(frac_end);
    }
    Some(int_end)
}

struct RawMatch {
    id: (usize, usize),
    t_in: (usize, usize),
    t_out: (usize, usize),
    end: usize,
}

fn match_at(bytes: &[u8], start: usize) -> Option<RawMatch> {
    let id_start = start + 1;
    let id_end = id_start + bytes[id_start..].iter().take_while(|&&b| is_id_byte(b)).count();
    if id_end == id_start || bytes.get(id_end) != Some(&b']') || bytes.get(id_end + 1) != Some(&b'(') {
        return None;
    }
    let in_start = id_end + 2;
    let in_end = scan_number(bytes, in_start)?;
    if bytes.get(in_end) != Some(&b';') {
        return None;
    }
    let out_start = in_end + 1;
    let out_end = scan_number(bytes, out_start)?;
    if bytes.get(out_end) != Some(&b')') {
        return None;
    }
    Some(RawMatch {
        id: (id_start, id_end),
        t_in: (in_start, in_end),
        t_out: (out_start, out_end),
        end: out_end + 1,
    })
}

/// Extracts every well-formed citation. Inverted or empty intervals are
/// rejected with a diagnostic; anything else malformed is silently skipped.
pub fn parse_references(text: &str) -> ParsedReferences {
    let bytes = text.as_bytes();
    let mut out = ParsedReferences::default();
    let mut pos = 0;
    while let Some(offset) = text[pos..].find('[') {
        let start = pos + offset;
        let Some(m) = match_at(bytes, start) else {
            pos = start + 1;
            continue;
        };
        let span = ByteSpan { start, end: m.end };
        pos = m.end;
        // Both numbers are pure ASCII digits, so parsing cannot fail.
        let t_in: f64 = text[m.t_in.0..m.t_in.1].parse().unwrap_or(f64::NAN);
        let t_out: f64 = text[m.t_out.0..m.t_out.1].parse().unwrap_or(f64::NAN);
        if !(t_in.is_finite() && t_out.is_finite()) {
            out.diagnostics.push(ReferenceDiagnostic {
                span,
                reason: "timestamp out of numeric range".into(),
            });
            continue;
        }
        if t_in >= t_out {
            out.diagnostics.push(ReferenceDiagnostic {
                span,
                reason: format!("inverted interval {t_in} >= {t_out}"),
            });
            continue;
        }
        out.references.push(MomentReference {
            video_id: text[m.id.0..m.id.1].to_string(),
            timestamp_in: t_in,
            timestamp_out: t_out,
            span,
            status: ReferenceStatus::Unchecked,
        });
    }
    out
}

const URL_STOP: &[u8] = b"<>\"'`()[]{}|\\^";

/// Every `http://` or `https://` URL not inside one of `references`.
pub fn extract_external_links(text: &str, references: &[MomentReference]) -> Vec<String> {
    let bytes = text.as_bytes();
    let lower = text.to_ascii_lowercase();
    let mut links = Vec::new();
    let mut pos = 0;
    while let Some(offset) = lower[pos..].find("http") {
        let start = pos + offset;
        let rest = &lower[start..];
        let scheme_len = if rest.starts_with("https://") {
            8
        } else if rest.starts_with("http://") {
            7
        } else {
            pos = start + 4;
            continue;
        };
        let mut end = start + scheme_len;
        while end < bytes.len() && !bytes[end].is_ascii_whitespace() && !URL_STOP.contains(&bytes[end]) {
            end += 1;
        }
        while end > start + scheme_len && b".,;:!?*_~".contains(&bytes[end - 1]) {
            end -= 1;
        }
        pos = end.max(start + scheme_len);
        if end == start + scheme_len {
            continue;
        }
        let inside_ref = references.iter().any(|r| r.span.start <= start && start < r.span.end);
        if !inside_ref {
            links.push(text[start..end].to_string());
        }
    }
    links
}

/// Assigns a status to every reference.
///
/// Checks run in order: the video must exist, the interval must lie within
/// the video, and (when grounding is required) it must overlap at least one
/// retrieved moment of the same video.
pub fn validate_references<C>(
    refs: Vec<MomentReference>,
    retrieval: &RetrievalSet,
    catalog: &C,
    require_grounding: bool,
) -> Vec<MomentReference>
where
    C: Catalog + ?Sized,
{
    let retrieved: Vec<(&str, f64, f64)> = retrieval
        .items
        .iter()
        .filter_map(|item| catalog.moment_interval(&item.moment_id))
        .collect();
    refs.into_iter()
        .map(|mut r| {
            r.status = match catalog.video(&r.video_id) {
                None => ReferenceStatus::UnknownVideo,
                Some(video) if r.timestamp_in < 0.0 || r.timestamp_out > video.duration => {
                    ReferenceStatus::OutOfBounds
                }
                Some(_)
                    if require_grounding
                        && !retrieved
                            .iter()
                            .any(|&(vid, t_in, t_out)| vid == r.video_id && r.overlaps(t_in, t_out)) =>
                {
                    ReferenceStatus::NotRetrieved
                }
                Some(_) => ReferenceStatus::Valid,
            };
            r
        })
        .collect()
}

const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

/// Markdown hyperlink for a valid reference.
pub fn moment_link(reference: &MomentReference, video_title: &str, link_base_url: &str) -> String {
    let t_in = format_seconds(reference.timestamp_in);
    let t_out = format_seconds(reference.timestamp_out);
    let title = video_title.replace('[', "\\[").replace(']', "\\]");
    format!(
        "[{title} ({t_in}–{t_out}s)]({}/{}?in={t_in}&out={t_out})",
        link_base_url.trim_end_matches('/'),
        utf8_percent_encode(&reference.video_id, PATH_SEGMENT),
    )
}

/// Replaces each valid reference span with its hyperlink. Invalid references
/// and all other bytes are left untouched.
pub fn rewrite_links<C>(raw_text: &str, references: &[MomentReference], catalog: &C, link_base_url: &str) -> String
where
    C: Catalog + ?Sized,
{
    let mut valid: Vec<&MomentReference> = references.iter().filter(|r| r.status.is_valid()).collect();
    valid.sort_by_key(|r| r.span.start);
    let mut text = raw_text.to_string();
    for r in valid.into_iter().rev() {
        let title = catalog.video(&r.video_id).map_or(r.video_id.as_str(), |v| v.title.as_str());
        text.replace_range(r.span.start..r.span.end, &moment_link(r, title, link_base_url));
    }
    text
}
