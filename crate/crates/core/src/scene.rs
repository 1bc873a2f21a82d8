//! Content-aware scene splitting from per-frame HSV channel means.
//!
//! A cut is placed before frame `i` when the mean absolute HSV delta between
//! frames `i-1` and `i` reaches the threshold and the running scene already
//! holds at least `min_scene_len` frames. The resulting intervals tile the
//! video from the first sampled frame to its full duration.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::VideoAsset;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("no frames to split")]
    EmptyInput,
    #[error("frames are not sorted at position {position}")]
    UnsortedFrames { position: usize },
    #[error("frame at {t}s lies beyond the video duration {duration}s")]
    FrameBeyondDuration { t: f64, duration: f64 },
    #[error("invalid split config: {0}")]
    InvalidConfig(String),
    #[error("frame features csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Channel means of one decoded frame, each in `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature {
    pub frame_index: u64,
    pub t: f64,
    pub h_mean: f64,
    pub s_mean: f64,
    pub v_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub threshold: f64,
    pub min_scene_len: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            threshold: 27.0,
            min_scene_len: 15,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(SplitError::InvalidConfig(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if self.min_scene_len == 0 {
            return Err(SplitError::InvalidConfig("min_scene_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean absolute difference of the three channel means.
pub fn content_value(prev: &FrameFeature, cur: &FrameFeature) -> f64 {
    ((cur.h_mean - prev.h_mean).abs() + (cur.s_mean - prev.s_mean).abs() + (cur.v_mean - prev.v_mean).abs())
        / 3.0
}

/// Splits a frame feature sequence into `(t_in, t_out)` scene intervals.
pub fn split(
    frames: &[FrameFeature],
    config: &SplitConfig,
    video: &VideoAsset,
) -> Result<Vec<(f64, f64)>, SplitError> {
    config.validate()?;
    let first = frames.first().ok_or(SplitError::EmptyInput)?;
    for (i, w) in frames.windows(2).enumerate() {
        if w[1].frame_index <= w[0].frame_index || w[1].t < w[0].t {
            return Err(SplitError::UnsortedFrames { position: i + 1 });
        }
    }
    let last = frames[frames.len() - 1];
    if last.t > video.duration {
        return Err(SplitError::FrameBeyondDuration {
            t: last.t,
            duration: video.duration,
        });
    }

    let mut cuts = Vec::new();
    let mut scene_start = 0usize;
    for i in 1..frames.len() {
        if content_value(&frames[i - 1], &frames[i]) < config.threshold {
            continue;
        }
        if i - scene_start < config.min_scene_len {
            continue;
        }
        let t = frames[i].t;
        // A cut must open a non-empty interval on both sides.
        if t <= frames[scene_start].t || t >= video.duration {
            continue;
        }
        cuts.push(t);
        scene_start = i;
    }

    let mut intervals = Vec::with_capacity(cuts.len() + 1);
    let mut t_in = first.t;
    for cut in cuts {
        intervals.push((t_in, cut));
        t_in = cut;
    }
    intervals.push((t_in, video.duration));
    Ok(intervals)
}

/// Reads frame features from CSV with header `frame_index,t,h_mean,s_mean,v_mean`.
pub fn read_frame_features<R: Read>(reader: R) -> Result<Vec<FrameFeature>, SplitError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["frame_index", "t", "h_mean", "s_mean", "v_mean"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(SplitError::Csv(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("expected header `{}`", expected.join(",")),
        ))));
    }
    rdr.deserialize().map(|r| r.map_err(SplitError::from)).collect()
}
