mod common;

use proptest::prelude::*;
use vlqa_core::answer::{AnswerConfig, AnswerGenerator, MOMENT_BLOCK_HEADER};
use vlqa_core::ingest::LibraryStore;
use vlqa_core::llm::ScriptedGateway;
use vlqa_core::references::{parse_references, rewrite_links, validate_references, Catalog};
use vlqa_core::{ByteSpan, Corpus, MomentReference, ReferenceStatus, RetrievalSet, RetrievedMoment};

use common::*;

fn retrieval(ids: &[&str]) -> RetrievalSet {
    RetrievalSet {
        items: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RetrievedMoment {
                moment_id: id.to_string(),
                score: 10.0 - i as f64,
            })
            .collect(),
        source_queries: Vec::new(),
    }
}

fn block_count(text: &str) -> usize {
    text.matches(MOMENT_BLOCK_HEADER).count()
}

#[test]
fn prompt_lists_blocks_in_retrieval_order() {
    let corpus = Corpus::build(small_library()).unwrap();
    let gen = AnswerGenerator::default();
    let req = gen
        .build_answer_prompt("astronauts eating", &retrieval(&["B002-m1", "B002-m0", "A001-m0"]), corpus.index())
        .unwrap();
    assert_eq!(req.tag(), Some("ANSWERGEN"));
    let user = req.last_user_message().unwrap();
    assert_eq!(block_count(user), 3);
    let p1 = user.find("doc_id: B002-m1").unwrap();
    let p2 = user.find("doc_id: B002-m0").unwrap();
    let p3 = user.find("doc_id: A001-m0").unwrap();
    assert!(p1 < p2 && p2 < p3);
    assert!(user.contains("astronaut eating a tortilla"));
    assert!(user.contains("(no speech)"));
    assert!(req.system_prompt().unwrap().contains("[video_id](timestamp_in;timestamp_out)"));
}

#[test]
fn empty_retrieval_prompt_says_nothing_found() {
    let corpus = Corpus::build(small_library()).unwrap();
    let req = AnswerGenerator::default()
        .build_answer_prompt("dinosaurs", &RetrievalSet::default(), corpus.index())
        .unwrap();
    let user = req.last_user_message().unwrap();
    assert_eq!(block_count(user), 0);
    assert!(user.contains("No relevant footage was found"));
}

#[test]
fn prompt_is_capped_at_max_context_docs() {
    let moments: Vec<_> = (0..60)
        .map(|i| moment(&format!("V-{i:02}"), "V", i as f64, i as f64 + 1.0, None, &["clip"]))
        .collect();
    let corpus = Corpus::build(store(vec![video("V", "v", 60.0)], moments)).unwrap();
    let ids: Vec<String> = (0..60).map(|i| format!("V-{i:02}")).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let req = AnswerGenerator::new(AnswerConfig {
        max_context_docs: 50,
        ..Default::default()
    })
    .build_answer_prompt("clips", &retrieval(&refs), corpus.index())
    .unwrap();
    assert_eq!(block_count(req.last_user_message().unwrap()), 50);
}

#[test]
fn unknown_doc_id_is_an_error() {
    let corpus = Corpus::build(small_library()).unwrap();
    let err = AnswerGenerator::default()
        .build_answer_prompt("q", &retrieval(&["nope"]), corpus.index())
        .unwrap_err();
    assert!(err.to_string().contains("nope"));
}

#[tokio::test]
async fn four_valid_references_become_links() {
    let corpus = Corpus::build(small_library()).unwrap();
    let text = "Open on the launch [A001](0;40), cut to control [A001](45;70), then the galley \
                [B002](0;30) and the tortilla [B002](35.5;50).";
    let gw = ScriptedGateway::new().with_response("ANSWERGEN", text);
    let ret = retrieval(&["A001-m0", "A001-m1", "B002-m0", "B002-m1"]);
    let answer = AnswerGenerator::new(AnswerConfig {
        link_base_url: "https://lib.example/m".into(),
        ..Default::default()
    })
    .answer("trailer", &ret, corpus.index(), &corpus, &gw)
    .await
    .unwrap();
    assert_eq!(answer.references.len(), 4);
    assert!(answer.references.iter().all(|r| r.status == ReferenceStatus::Valid));
    assert_eq!(answer.rewritten_text.matches("](https://lib.example/m/").count(), 4);
    assert!(answer.rewritten_text.contains("[ISS Food Tour (35.5–50s)](https://lib.example/m/B002?in=35.5&out=50)"));
    assert!(answer.external_links.is_empty());
    for stage in ["prompt_build", "answer_generation", "parse_references", "validate_references", "rewrite_links"] {
        assert!(answer.timings.contains_key(stage), "{stage}");
    }
}

#[tokio::test]
async fn youtube_link_is_flagged() {
    let corpus = Corpus::build(small_library()).unwrap();
    let text = "You can watch it here: https://www.youtube.com/watch?v=dQw4w9WgXcQ";
    let gw = ScriptedGateway::new().with_response("ANSWERGEN", text);
    let answer = AnswerGenerator::default()
        .answer("moon landing", &retrieval(&["A001-m0"]), corpus.index(), &corpus, &gw)
        .await
        .unwrap();
    assert!(answer.references.is_empty());
    assert_eq!(answer.external_links, vec!["https://www.youtube.com/watch?v=dQw4w9WgXcQ"]);
    assert_eq!(answer.rewritten_text, answer.raw_text);
}

#[tokio::test]
async fn empty_retrieval_answer_has_no_references() {
    let corpus = Corpus::build(small_library()).unwrap();
    let gw = ScriptedGateway::new().with_response("ANSWERGEN", "Sorry, no relevant footage was found.");
    let answer = AnswerGenerator::default()
        .answer("dinosaurs", &RetrievalSet::default(), corpus.index(), &corpus, &gw)
        .await
        .unwrap();
    assert!(answer.references.is_empty());
    assert_eq!(answer.rewritten_text, answer.raw_text);
}

#[tokio::test]
async fn gateway_failure_names_the_stage() {
    let corpus = Corpus::build(small_library()).unwrap();
    let err = AnswerGenerator::default()
        .answer("q", &retrieval(&["A001-m0"]), corpus.index(), &corpus, &ScriptedGateway::new())
        .await
        .unwrap_err();
    assert!(err.to_string().starts_with("answer_generation:"));
}

#[test]
fn not_retrieved_matches_brute_force_overlap() {
    let lib = small_library();
    let ret = retrieval(&["A001-m0", "B002-m1"]);
    // Every integer-aligned interval of every video, checked against a direct
    // scan of the retrieved moments.
    let mut text = String::new();
    for v in ["A001", "B002", "C003"] {
        let dur = lib.video(v).unwrap().duration as u32;
        for a in (0..dur).step_by(5) {
            for b in ((a + 5)..=dur).step_by(15) {
                text.push_str(&format!("[{v}]({a};{b}) "));
            }
        }
    }
    let refs = validate_references(parse_references(&text).references, &ret, &lib, true);
    assert!(refs.len() > 50);
    for r in &refs {
        let overlaps_any = ret.items.iter().any(|item| {
            let m = lib.moment(&item.moment_id).unwrap();
            m.video_id == r.video_id && r.timestamp_in < m.t_out && m.t_in < r.timestamp_out
        });
        let expected = if overlaps_any { ReferenceStatus::Valid } else { ReferenceStatus::NotRetrieved };
        assert_eq!(r.status, expected, "{}", r.to_grammar());
    }
}

fn id_strategy() -> impl Strategy<Value = String> {
    "[^\\[\\]()\n]{1,16}"
}

fn seconds_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..100_000).prop_map(f64::from),
        (0u32..10_000_000).prop_map(|c| f64::from(c) / 1000.0),
        0.0f64..1e7,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grammar_round_trip(id in id_strategy(), a in seconds_strategy(), b in seconds_strategy(), prefix in "[a-z ]{0,10}") {
        prop_assume!(a != b);
        let (t_in, t_out) = if a < b { (a, b) } else { (b, a) };
        let r = MomentReference {
            video_id: id,
            timestamp_in: t_in,
            timestamp_out: t_out,
            span: ByteSpan { start: 0, end: 0 },
            status: ReferenceStatus::Unchecked,
        };
        let text = format!("{prefix}{}", r.to_grammar());
        let parsed = parse_references(&text).references;
        prop_assert_eq!(parsed.len(), 1);
        let p = &parsed[0];
        prop_assert_eq!(&p.video_id, &r.video_id);
        prop_assert_eq!(p.timestamp_in, t_in);
        prop_assert_eq!(p.timestamp_out, t_out);
        prop_assert_eq!(p.span, ByteSpan { start: prefix.len(), end: text.len() });
    }

    #[test]
    fn spans_never_overlap_or_cross_lines(text in "[\\[\\]();.0-9a-z\n ]{0,120}") {
        let refs = parse_references(&text).references;
        for w in refs.windows(2) {
            prop_assert!(w[0].span.end <= w[1].span.start);
        }
        for r in &refs {
            prop_assert!(!text[r.span.start..r.span.end].contains('\n'));
            prop_assert!(r.timestamp_in < r.timestamp_out);
        }
    }

    #[test]
    fn rewrite_touches_only_valid_spans(mask in prop::collection::vec(any::<bool>(), 6)) {
        let lib = small_library();
        let cites = ["[A001](1;2)", "[B002](31;40)", "[ZZZ](1;2)", "[C003](5;6)", "[A001](90;100)", "[B002](0;1)"];
        let text = cites.iter().map(|c| format!("see {c}.")).collect::<Vec<_>>().join("\n");
        let mut refs = parse_references(&text).references;
        for (r, &ok) in refs.iter_mut().zip(&mask) {
            r.status = if ok { ReferenceStatus::Valid } else { ReferenceStatus::NotRetrieved };
        }
        let out = rewrite_links(&text, &refs, &lib, "vlqa://moment");
        // Rebuild the expected text from the untouched gaps and replaced spans.
        let mut expected = String::new();
        let mut last = 0;
        for r in &refs {
            expected.push_str(&text[last..r.span.start]);
            let original = &text[r.span.start..r.span.end];
            if r.status.is_valid() {
                let title = lib.video(&r.video_id).map_or(r.video_id.clone(), |v| v.title.clone());
                expected.push_str(&vlqa_core::references::moment_link(r, &title, "vlqa://moment"));
            } else {
                expected.push_str(original);
            }
            last = r.span.end;
        }
        expected.push_str(&text[last..]);
        prop_assert_eq!(out, expected);
    }
}

#[test]
fn valid_implies_grounded() {
    let lib: LibraryStore = small_library();
    let ret = retrieval(&["C003-m0"]);
    let refs = validate_references(
        parse_references("[C003](10;20) [C003](59;61) [A001](0;10)").references,
        &ret,
        &lib,
        true,
    );
    let statuses: Vec<_> = refs.iter().map(|r| r.status).collect();
    assert_eq!(statuses, vec![ReferenceStatus::Valid, ReferenceStatus::OutOfBounds, ReferenceStatus::NotRetrieved]);
}
