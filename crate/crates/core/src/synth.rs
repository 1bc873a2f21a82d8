//! Seeded synthetic libraries for load testing and fixtures.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::ingest::LibraryStore;
use crate::model::{FrameCaption, TranscriptSegment, VideoAsset, VideoMoment};

const BASE_WORDS: &[&str] = &[
    "apollo", "moon", "lunar", "landing", "rover", "astronaut", "astronauts", "eating", "food", "tortilla",
    "iss", "station", "launch", "rocket", "saturn", "booster", "orbit", "earth", "crew", "module", "capsule",
    "space", "walk", "spacewalk", "mission", "control", "houston", "countdown", "liftoff", "engine", "fuel",
    "tank", "shuttle", "telescope", "hubble", "mars", "probe", "satellite", "solar", "panel", "docking",
    "hatch", "suit", "helmet", "glove", "camera", "window", "sunrise", "sunset", "clouds", "ocean", "desert",
    "night", "lights", "city", "flight", "pilot", "training", "pool", "simulator", "laboratory", "experiment",
    "plants", "water", "floating", "microgravity", "robot", "arm", "cargo", "dragon", "soyuz", "splashdown",
    "parachute", "recovery", "ship", "helicopter", "flag", "footprint", "crater", "dust", "rock", "sample",
    "geology", "briefing", "press", "conference", "interview", "engineer", "scientist", "team", "meeting",
    "hangar", "assembly", "building", "pad", "tower", "smoke", "fire", "exhaust", "sky", "view", "horizon",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub videos: usize,
    pub moments_per_video: usize,
    /// Number of filler terms added to the base vocabulary.
    pub filler_terms: usize,
    /// Probability that a moment has no transcript at all.
    pub no_speech_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            moments_per_video: 10,
            filler_terms: 4000,
            no_speech_fraction: 0.2,
            seed: 7,
        }
    }
}

struct Words {
    filler: usize,
}

impl Words {
    // Squaring the uniform draw skews toward the front of the vocabulary,
    // giving a few very common terms and a long tail.
    fn pick(&self, rng: &mut StdRng) -> String {
        let total = BASE_WORDS.len() + self.filler;
        let u: f64 = rng.random();
        let i = ((u * u) * total as f64) as usize;
        match BASE_WORDS.get(i) {
            Some(w) => (*w).to_string(),
            None => format!("term{}", i - BASE_WORDS.len()),
        }
    }

    fn sentence(&self, rng: &mut StdRng, min: usize, max: usize) -> String {
        let n = rng.random_range(min..=max);
        (0..n).map(|_| self.pick(rng)).collect::<Vec<_>>().join(" ")
    }
}

/// Builds a library of `videos × moments_per_video` moments of 15 s each,
/// with 0 to 3 transcript segments and 3 captions per moment.
pub fn synthetic_library(cfg: &SynthConfig) -> LibraryStore {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let words = Words {
        filler: cfg.filler_terms,
    };
    let moment_len = 15.0;
    let mut store = LibraryStore::new();
    for v in 0..cfg.videos {
        let video_id = format!("SV{v:05}");
        let title = words.sentence(&mut rng, 2, 5);
        store
            .insert_video(VideoAsset {
                video_id: video_id.clone(),
                title,
                duration: moment_len * cfg.moments_per_video as f64,
                media_uri: None,
            })
            .expect("synthetic video ids are unique");
        for m in 0..cfg.moments_per_video {
            let t_in = m as f64 * moment_len;
            let t_out = t_in + moment_len;
            let speech = !rng.random_bool(cfg.no_speech_fraction.clamp(0.0, 1.0));
            let n_segments = if speech { rng.random_range(1..=3) } else { 0 };
            let seg_len = moment_len / 3.0;
            let transcript = (0..n_segments)
                .map(|s| TranscriptSegment {
                    speaker_label: format!("SPEAKER_{:02}", rng.random_range(0..3)),
                    t_start: t_in + s as f64 * seg_len,
                    t_end: t_in + (s + 1) as f64 * seg_len,
                    text: words.sentence(&mut rng, 5, 14),
                })
                .collect();
            let captions = (0..3)
                .map(|k| FrameCaption {
                    t_frame: t_in + (k as f64 + 0.5) * moment_len / 3.0,
                    caption: words.sentence(&mut rng, 4, 9),
                })
                .collect();
            store
                .insert_moment(VideoMoment {
                    moment_id: format!("{video_id}-m{m:04}"),
                    video_id: video_id.clone(),
                    t_in,
                    t_out,
                    transcript,
                    captions,
                })
                .expect("synthetic moments satisfy containment");
        }
    }
    store
}
