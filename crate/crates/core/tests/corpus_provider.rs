use std::fs;
use std::sync::Arc;

use qa2sum::corpus::{
    load_dataset, sample, split_train_test, CorpusError, DatasetKind, FieldMap, LoadOptions, LoadOutcome, Style,
};
use qa2sum::provider::{
    Backend, Provider, ProviderError, ProviderRequest, RecordingProvider, ReplayProvider, ScriptedProvider,
    TranscriptStore,
};

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn mixed_file_keeps_good_lines_and_reports_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "mixed.jsonl",
        concat!(
            "{\"id\": \"a\", \"text\": \"one two\", \"summary\": \"one\"}\n",
            "not json\n",
            "\n",
            "{\"id\": \"b\", \"summary\": \"x\"}\n",
            "{\"id\": \"a\", \"text\": \"dup\", \"summary\": \"d\"}\n",
            "{\"id\": 7, \"text\": \"three four\", \"summary\": \"three\"}\n",
        ),
    );
    let out = load_dataset(&path, &LoadOptions::new("m", DatasetKind::Summarization, Style::News)).unwrap();
    assert_eq!(out.dataset.ids().collect::<Vec<_>>(), vec!["a", "7"]);
    let lines: Vec<usize> = out.rejections.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![2, 4, 5]);
    let report = out.write_rejections(&path).unwrap().unwrap();
    assert_eq!(report, LoadOutcome::rejection_path(&path));
    assert_eq!(fs::read_to_string(report).unwrap().lines().count(), 3);
}

#[test]
fn all_bad_or_missing_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let opts = LoadOptions::new("x", DatasetKind::Qa, Style::Narrative);
    let bad = write(&dir, "bad.jsonl", "[]\n{}\n");
    assert!(matches!(load_dataset(&bad, &opts), Err(CorpusError::NoValidDocuments { rejected: 2, .. })));
    assert!(matches!(load_dataset(&dir.path().join("nope.jsonl"), &opts), Err(CorpusError::Io { .. })));
    let no_qa = write(&dir, "noqa.jsonl", "{\"id\": \"a\", \"text\": \"t\"}\n");
    assert!(matches!(load_dataset(&no_qa, &opts), Err(CorpusError::KindMismatch { .. })));
}

#[test]
fn field_map_adapts_foreign_names() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(&dir, "map.json", r#"{"id": null, "text": "story", "qa": "questions", "question": "q", "answer": "a"}"#);
    let data = write(&dir, "d.jsonl", "{\"story\": \"once upon\", \"questions\": [{\"q\": \"who?\", \"a\": \"her\"}]}\n");
    let mut opts = LoadOptions::new("n", DatasetKind::Qa, Style::Narrative);
    opts.fields = FieldMap::from_file(&map).unwrap();
    let ds = load_dataset(&data, &opts).unwrap().dataset;
    assert_eq!(ds.documents[0].id, "line-1");
    assert_eq!(ds.documents[0].gold_qa[0].question, "who?");
}

#[test]
fn canonical_jsonl_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(
        &dir,
        "s.jsonl",
        "{\"id\": \"a\", \"text\": \"t1\", \"qa\": [{\"question\": \"q\", \"answer\": \"x\"}]}\n{\"id\": \"b\", \"text\": \"t2\", \"qa\": [{\"question\": \"r\", \"answer\": \"y\"}]}\n",
    );
    let opts = LoadOptions::new("rt", DatasetKind::Qa, Style::News);
    let ds = load_dataset(&src, &opts).unwrap().dataset;
    let copy = dir.path().join("copy.jsonl");
    ds.write_jsonl(&copy).unwrap();
    assert_eq!(load_dataset(&copy, &opts).unwrap().dataset, ds);
}

#[test]
fn seeded_split_and_sample_are_reproducible_partitions() {
    let body: String = (0..20).map(|i| format!("{{\"id\": \"d{i}\", \"text\": \"w{i}\", \"summary\": \"s\"}}\n")).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "p.jsonl", &body);
    let ds = load_dataset(&path, &LoadOptions::new("p", DatasetKind::Summarization, Style::News)).unwrap().dataset;

    let (tr, te) = split_train_test(&ds, 6, 42).unwrap();
    assert_eq!((tr.len(), te.len()), (6, 14));
    assert_eq!(split_train_test(&ds, 6, 42).unwrap(), (tr.clone(), te.clone()));
    let mut all: Vec<&str> = tr.ids().chain(te.ids()).collect();
    all.sort_unstable();
    let mut orig: Vec<&str> = ds.ids().collect();
    orig.sort_unstable();
    assert_eq!(all, orig);
    assert_ne!(split_train_test(&ds, 6, 43).unwrap().0, tr);
    assert!(matches!(split_train_test(&ds, 21, 1), Err(CorpusError::SplitTooLarge { .. })));

    let s = sample(&ds, 5, 9);
    assert_eq!(s, sample(&ds, 5, 9));
    let pos: Vec<usize> = s.ids().map(|id| ds.ids().position(|x| x == id).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn transcript_file_records_then_replays_without_the_live_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let live = Arc::new(ScriptedProvider::from_responses(["first", "second"]));
    let recorder = RecordingProvider::new(live.clone(), Arc::new(TranscriptStore::open(&path).unwrap()));
    let a = ProviderRequest::new(Backend::OpenaiCompatible, "m", "hello");
    let b = ProviderRequest { temperature: Some(0.0), ..a.clone() };
    assert_ne!(a.hash(), b.hash());
    assert_eq!(recorder.complete(&a).unwrap().raw_text, "first");
    assert_eq!(recorder.complete(&b).unwrap().raw_text, "second");

    let replay = ReplayProvider::new(Arc::new(TranscriptStore::open_existing(&path).unwrap()));
    assert_eq!(replay.complete(&b).unwrap().raw_text, "second");
    assert_eq!(replay.complete(&a).unwrap().raw_text, "first");
    assert_eq!(live.calls(), 2);
    let c = ProviderRequest::new(Backend::OpenaiCompatible, "m", "other");
    assert!(matches!(replay.complete(&c), Err(ProviderError::ReplayMiss { hash }) if hash == c.hash()));
    assert!(TranscriptStore::open_existing(dir.path().join("absent.jsonl")).is_err());
}

#[test]
fn repeated_hash_keeps_the_last_reply() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.jsonl");
    let store = Arc::new(TranscriptStore::open(&path).unwrap());
    let rec = RecordingProvider::new(Arc::new(ScriptedProvider::from_responses(["old", "new"])), store);
    let req = ProviderRequest::new(Backend::Anthropic, "m", "same");
    rec.complete(&req).unwrap();
    rec.complete(&req).unwrap();
    let reopened = TranscriptStore::open(&path).unwrap();
    assert_eq!(reopened.len(), 1);
    assert_eq!(reopened.lookup(&req.hash()).unwrap().raw_text, "new");
}
