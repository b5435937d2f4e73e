use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use qa2sum::corpus::{load_dataset, LoadOptions};
use qa2sum::engine::{Engine, RunConfig, TemplateSet, TestKind};
use qa2sum::experience::ExperienceSet;
use qa2sum::provider::{ProviderError, ProviderRequest, RecordingProvider, ScriptedProvider, TranscriptStore};

fn qa2sum(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qa2sum")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn story(seed: usize) -> String {
    let words = ["boat", "lake", "hill", "farm", "bird", "road", "rain", "star", "sand", "town"];
    (0..12)
        .map(|i| {
            let s: Vec<&str> = (0..6).map(|j| words[(seed * 7 + i * 3 + j) % words.len()]).collect();
            format!("The {} went past the {} by the {} {}.", s[0], s[1], s[2], s[3..].join(" "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn first_sentences(text: &str, n: usize) -> String {
    text.split_inclusive(". ").take(n).collect::<String>().trim().to_string()
}

struct Fixture {
    dir: tempfile::TempDir,
    config: PathBuf,
    texts: Vec<String>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut texts = Vec::new();
    let mut train = String::new();
    for i in 0..2 {
        let text = story(i);
        train.push_str(&format!(
            "{}\n",
            serde_json::json!({"id": format!("tr{i}"), "text": text, "qa": [{"question": "What went first?", "answer": first_sentences(&text, 1)}]})
        ));
        texts.push(text);
    }
    let mut test = String::new();
    for i in 2..5 {
        let text = story(i);
        test.push_str(&format!("{}\n", serde_json::json!({"id": format!("te{i}"), "text": text, "summary": first_sentences(&text, 3)})));
        texts.push(text);
    }
    fs::write(root.join("train.jsonl"), train).unwrap();
    fs::write(root.join("test.jsonl"), test).unwrap();
    let config = root.join("run.toml");
    fs::write(
        &config,
        format!(
            r#"run_id = "demo"
seed = 7
parallelism = 2

[thresholds]
k_max = 2

[provider]
backend = "replay"
transcript = "{t}"

[data]
n_train = 10
min_words = 0

[data.train]
name = "tiny-qa"
path = "{tr}"
kind = "qa"
style = "news"

[data.test]
name = "tiny-news"
path = "{te}"
kind = "summarization"
style = "news"
"#,
            t = root.join("transcript.jsonl").display(),
            tr = root.join("train.jsonl").display(),
            te = root.join("test.jsonl").display(),
        ),
    )
    .unwrap();
    Fixture { dir, config, texts }
}

/// Stand-in model: answers every prompt the pipeline sends from the article
/// it finds inside the prompt.
fn stand_in(texts: Vec<String>) -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::from_fn(move |req: &ProviderRequest| {
        let p = &req.prompt;
        let text = texts
            .iter()
            .find(|t| p.contains(t.as_str()))
            .ok_or_else(|| ProviderError::InvalidRequest("no article in prompt".into()))?;
        if p.contains("Generated QA Pairs:") {
            return Ok(serde_json::json!({
                "Summary": first_sentences(text, 2),
                "Summary_generation_experience": "1. Keep the opening events."
            })
            .to_string());
        }
        if p.contains("\"Generated_QA_pairs\"") || p.contains("Generated_QA_pairs") {
            return Ok(serde_json::json!({
                "Generated_QA_pairs": {"1": {"Question": "What happens first?", "Answer": first_sentences(text, 1)}},
                "QA_generation_experience": "1. Ask about the first event."
            })
            .to_string());
        }
        if p.starts_with("You are one helpful text assistant") {
            return Ok(first_sentences(text, 1));
        }
        Ok(format!("QA pairs:\n1. Q: What happens? A: Things.\n\nSummary:\n{}\n", first_sentences(text, 3)))
    }))
}

/// Records train, run and baseline through the core API so the binary can
/// replay them.
fn record(f: &Fixture) {
    let cfg = RunConfig::from_toml(&fs::read_to_string(&f.config).unwrap()).unwrap();
    let load = |spec: &qa2sum::engine::DatasetSpec| {
        load_dataset(&spec.path, &LoadOptions::new(spec.name.clone(), spec.kind, spec.style)).unwrap().dataset
    };
    let train = load(cfg.data.train.as_ref().unwrap());
    let test = load(cfg.data.test.as_ref().unwrap());
    let store = Arc::new(TranscriptStore::open(cfg.provider.transcript.clone().unwrap()).unwrap());
    let provider = Arc::new(RecordingProvider::new(stand_in(f.texts.clone()), store));
    let engine = Engine::new(cfg, TemplateSet::builtin(), provider);
    let trained = engine.train(&train, ExperienceSet::init()).unwrap();
    assert!(trained.failures.is_empty());
    let run = engine.run_test(&test, &trained.experience, TestKind::Summarization).unwrap();
    assert!(run.failures.is_empty());
    assert!(engine.run_baseline(&test).unwrap().failures.is_empty());
}

#[test]
fn ingest_reports_counts_rejections_and_missing_files() {
    let f = fixture();
    let root = f.dir.path();
    let cfg = f.config.to_str().unwrap();
    let ok = qa2sum(&["--config", cfg, "ingest"], root);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("tiny-news: 3 documents loaded"));
    assert!(root.join("out/demo/data/tiny-qa.jsonl").exists());

    let mut body = fs::read_to_string(root.join("test.jsonl")).unwrap();
    body.push_str("this line is broken\n");
    fs::write(root.join("test.jsonl"), body).unwrap();
    let mixed = qa2sum(&["--config", cfg, "ingest"], root);
    assert!(mixed.status.success());
    assert!(stdout(&mixed).contains("test.jsonl.rejected.jsonl"));

    let missing = qa2sum(&["--config", cfg, "--set", "data.test.path=\"nowhere.jsonl\"", "ingest"], root);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("nowhere.jsonl"));
}

#[test]
fn run_without_experience_names_the_published_option() {
    let f = fixture();
    let out = qa2sum(&["--config", f.config.to_str().unwrap(), "run"], f.dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--use-published-experience"));
}

#[test]
fn recording_against_the_replay_backend_is_refused() {
    let f = fixture();
    let out = qa2sum(&["--config", f.config.to_str().unwrap(), "record", "baseline"], f.dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).to_lowercase().contains("record"));
}

#[test]
fn bad_override_is_rejected() {
    let f = fixture();
    let out = qa2sum(&["--config", f.config.to_str().unwrap(), "--set", "thresholds.k_max=0", "baseline"], f.dir.path());
    assert!(!out.status.success());
}

#[test]
fn replayed_pipeline_is_deterministic_end_to_end() {
    let f = fixture();
    record(&f);
    let root = f.dir.path();
    let cfg = f.config.to_str().unwrap();
    for stage in [vec!["train"], vec!["run"], vec!["baseline"], vec!["eval"], vec!["report"]] {
        let mut args = vec!["--config", cfg];
        args.extend(stage.iter().copied());
        let out = qa2sum(&args, root);
        assert!(out.status.success(), "{stage:?}: {}", stderr(&out));
    }
    let demo = root.join("out/demo");
    for file in ["train/experience.json", "train/traces.jsonl", "train/manifest.json", "run-full/summaries.json", "baseline/summaries.json"] {
        assert!(demo.join(file).exists(), "{file}");
    }
    let md = fs::read_to_string(demo.join("eval/table.md")).unwrap();
    assert!(md.contains("w/o | T3"));
    assert!(fs::read_to_string(demo.join("report/report.csv")).unwrap().lines().count() == 2);
    assert!(fs::read_to_string(demo.join("train/traces.jsonl")).unwrap().lines().count() >= 2);

    // a second replay into a fresh output root gives byte-identical artifacts
    let again = qa2sum(&["--config", cfg, "--out", "out2", "run", "--experience", demo.join("train/experience.json").to_str().unwrap()], root);
    assert!(again.status.success(), "{}", stderr(&again));
    for file in ["summaries.json", "outputs.jsonl", "manifest.json"] {
        assert_eq!(
            fs::read(demo.join("run-full").join(file)).unwrap(),
            fs::read(root.join("out2/demo/run-full").join(file)).unwrap(),
            "{file}"
        );
    }
}
