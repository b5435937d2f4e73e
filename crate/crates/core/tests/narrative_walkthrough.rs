//! A long narrative summarized at test time from a recorded transcript: the
//! model answers with generated QA pairs followed by a final summary, and the
//! replayed output must carry that summary through unchanged.
mod common;

use std::sync::Arc;

use qa2sum::corpus::{Dataset, DatasetKind, Document, Style};
use qa2sum::engine::{Ablation, RunConfig, TestKind};
use qa2sum::experience::ExperienceSet;
use qa2sum::provider::{RecordingProvider, ReplayProvider, ScriptedProvider, TranscriptStore};
use serde_json::Value;

fn fixture() -> (Document, String, String) {
    let raw = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/narrative_walkthrough.json")).unwrap();
    let v: Value = serde_json::from_str(&raw).unwrap();
    let doc = Document {
        id: v["document"]["id"].as_str().unwrap().into(),
        text: v["document"]["text"].as_str().unwrap().into(),
        gold_summary: None,
        gold_qa: Vec::new(),
        style: Style::Narrative,
    };
    (doc, v["reply"].as_str().unwrap().into(), v["final_summary"].as_str().unwrap().into())
}

#[test]
fn replayed_walkthrough_returns_the_recorded_summary_verbatim() {
    let (doc, reply, expected) = fixture();
    let es = ExperienceSet::published(Style::Narrative);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("walkthrough.jsonl");

    let live = Arc::new(ScriptedProvider::from_responses([reply.clone()]));
    let store = Arc::new(TranscriptStore::open(&path).unwrap());
    let recorder = common::engine_with(RunConfig::default(), Arc::new(RecordingProvider::new(live.clone(), store)));
    let recorded = recorder.test_summarization(&doc, &es).unwrap();
    assert_eq!(live.calls(), 1);

    let replay_store = Arc::new(TranscriptStore::open_existing(&path).unwrap());
    let engine = common::engine_with(RunConfig::default(), Arc::new(ReplayProvider::new(replay_store)));
    let summary = engine.test_summarization(&doc, &es).unwrap();
    assert!(summary.contains(&expected));
    assert_eq!(summary, recorded);
    assert!(!summary.contains("QA pairs:"));

    let ds = Dataset::new("walkthrough", DatasetKind::Summarization, vec![Document {
        gold_summary: Some(expected.clone()),
        ..doc.clone()
    }])
    .unwrap();
    let run = engine.run_test(&ds, &es, TestKind::Summarization).unwrap();
    assert_eq!(run.outputs[&doc.id].raw, reply);
    assert_eq!(run.outputs[&doc.id].summary, summary);
}

#[test]
fn walkthrough_prompt_carries_story_and_both_experiences() {
    let (doc, _, _) = fixture();
    let es = ExperienceSet::published(Style::Narrative);
    let engine = common::engine_with(RunConfig::default(), Arc::new(ScriptedProvider::from_responses(Vec::<String>::new())));
    let prompt = engine.render_test_prompt(&doc, &es, TestKind::Summarization, Ablation::Full).unwrap();
    assert!(prompt.contains(&doc.text));
    for kind in [qa2sum::experience::ExperienceKind::Qa, qa2sum::experience::ExperienceKind::Sum] {
        assert!(prompt.contains(es.get(kind)));
    }
}
