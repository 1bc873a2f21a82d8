#![allow(dead_code)]

use vlqa_core::eval::EvalCase;
use vlqa_core::ingest::LibraryStore;
use vlqa_core::llm::{ScriptRule, ScriptedGateway};
use vlqa_core::{FrameCaption, TranscriptSegment, VideoAsset, VideoMoment};

pub fn video(id: &str, title: &str, duration: f64) -> VideoAsset {
    VideoAsset {
        video_id: id.into(),
        title: title.into(),
        duration,
        media_uri: None,
    }
}

/// Moment with one speaker line (if any) and the given captions spread
/// evenly across the interval.
pub fn moment(id: &str, video: &str, t_in: f64, t_out: f64, speech: Option<&str>, captions: &[&str]) -> VideoMoment {
    let n = captions.len().max(1) as f64;
    VideoMoment {
        moment_id: id.into(),
        video_id: video.into(),
        t_in,
        t_out,
        transcript: speech
            .map(|text| TranscriptSegment {
                speaker_label: "SPEAKER_00".into(),
                t_start: t_in,
                t_end: t_out,
                text: text.into(),
            })
            .into_iter()
            .collect(),
        captions: captions
            .iter()
            .enumerate()
            .map(|(i, c)| FrameCaption {
                t_frame: t_in + (i as f64 + 0.5) * (t_out - t_in) / n,
                caption: (*c).into(),
            })
            .collect(),
    }
}

pub fn store(videos: Vec<VideoAsset>, moments: Vec<VideoMoment>) -> LibraryStore {
    let mut s = LibraryStore::new();
    for v in videos {
        s.insert_video(v).unwrap();
    }
    for m in moments {
        s.insert_moment(m).unwrap();
    }
    s
}

/// Three videos, seven moments, one of them without speech.
pub fn small_library() -> LibraryStore {
    store(
        vec![
            video("A001", "Apollo 11 Launch", 120.0),
            video("B002", "ISS Food Tour", 90.0),
            video("C003", "Mars Rover Briefing", 60.0),
        ],
        vec![
            moment("A001-m0", "A001", 0.0, 40.0, Some("ignition sequence start liftoff"), &["a saturn v rocket on the launch pad", "rocket engines firing", "smoke around the launch tower"]),
            moment("A001-m1", "A001", 40.0, 80.0, Some("the crew reports all systems go"), &["mission control room", "engineers at consoles", "a screen showing the trajectory"]),
            moment("A001-m2", "A001", 80.0, 120.0, None, &["the rocket climbing into a blue sky", "booster separation", "earth horizon from orbit"]),
            moment("B002-m0", "B002", 0.0, 30.0, Some("welcome to the galley of the station"), &["an astronaut floating in a module", "food packets on a wall", "a window showing earth"]),
            moment("B002-m1", "B002", 30.0, 60.0, None, &["astronaut eating a tortilla", "crumbs floating in microgravity", "two astronauts laughing"]),
            moment("B002-m2", "B002", 60.0, 90.0, Some("we rehydrate the soup with hot water"), &["a water dispenser", "an astronaut holding a soup pouch", "a spoon floating"]),
            moment("C003-m0", "C003", 0.0, 60.0, Some("the rover drove two hundred meters on mars"), &["scientists at a press briefing", "a picture of the mars rover", "red rocks on mars"]),
        ],
    )
}

fn rule(tag: &str, user_contains: &str, response: &str) -> ScriptRule {
    ScriptRule {
        tag: tag.into(),
        user_contains: Some(user_contains.into()),
        response: response.into(),
    }
}

/// Three questions over [`small_library`] whose scripted queries use terms
/// unique to known moments, so ranks and metrics can be worked out by hand:
///
/// | question        | retrieved                  | relevant         | refs (valid) | links |
/// |-----------------|----------------------------|------------------|--------------|-------|
/// | show the launch | A001-m0                    | A001-m0, A001-m1 | 2 (1)        | 0     |
/// | space food      | B002-m0, B002-m1, B002-m2  | B002-m1          | 1 (1)        | 1     |
/// | mars rover      | C003-m0                    | C003-m0          | 0            | 0     |
pub fn eval_fixture() -> (Vec<EvalCase>, ScriptedGateway) {
    let case = |q: &str, ids: &[&str]| EvalCase {
        question: q.into(),
        relevant_moment_ids: ids.iter().map(|s| s.to_string()).collect(),
    };
    let cases = vec![
        case("show the launch", &["A001-m0", "A001-m1"]),
        case("space food", &["B002-m1"]),
        case("mars rover", &["C003-m0"]),
    ];
    let gw = ScriptedGateway::new()
        .with_rule(rule("QUERYGEN", "show the launch", "saturn\nliftoff\nignition\nengines\nsmoke"))
        .with_rule(rule("QUERYGEN", "space food", "tortilla\ncrumbs\nsoup\ngalley\nrehydrate"))
        .with_rule(rule("QUERYGEN", "mars rover", "mars\nrover\nbriefing\nmeters\nred rocks"))
        .with_rule(rule("ANSWERGEN", "show the launch", "Liftoff [A001](0;40) and the crew [A001](50;60)."))
        .with_rule(rule(
            "ANSWERGEN",
            "space food",
            "The tortilla [B002](30;60). More at https://www.youtube.com/watch?v=abc123",
        ))
        .with_rule(rule("ANSWERGEN", "mars rover", "Nothing worth citing."));
    (cases, gw)
}
