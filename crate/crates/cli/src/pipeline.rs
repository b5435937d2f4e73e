use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use qa2sum::corpus::{
    filter_long, load_dataset, sample, split_train_test, Dataset, DatasetKind, FieldMap, LoadOptions, Style,
};
use qa2sum::engine::{
    Ablation, DatasetSpec, DocFailure, Engine, RunConfig, RunOutputs, TemplateSet, TestKind, TrainOutcome,
};
use qa2sum::eval::{
    compare_runs, judge_report, render_report, score_run, MetricReport, ReferenceMode, ReportFormat, RunLabel,
    SignificanceTable,
};
use qa2sum::experience::ExperienceSet;
use qa2sum::provider::Provider;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Fixed artifact locations under `<out>/<run_id>/`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, run_id: &str) -> Self {
        Self { root: out.join(run_id) }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn run(&self, ablation: Ablation) -> PathBuf {
        let tag = match ablation {
            Ablation::Full => "full",
            Ablation::NoSumExp => "no_sum_exp",
            Ablation::NoQaExp => "no_qa_exp",
        };
        self.root.join(format!("run-{tag}"))
    }

    pub fn baseline(&self) -> PathBuf {
        self.root.join("baseline")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Everything needed to re-execute a stage. Deliberately free of
/// timestamps and host details so replayed runs write identical bytes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub run_id: String,
    pub seed: u64,
    pub provider_mode: Option<String>,
    pub model: String,
    pub template_sha256: BTreeMap<String, String>,
    pub experience_revision: Option<u64>,
    pub ablation: Ablation,
    pub datasets: BTreeMap<String, Vec<String>>,
    pub failures: usize,
    pub config: Value,
}

impl Manifest {
    fn new(stage: &str, cfg: &RunConfig, templates: &TemplateSet, provider: Option<&Arc<dyn Provider>>) -> Self {
        Self {
            stage: stage.into(),
            run_id: cfg.run_id.clone(),
            seed: cfg.seed,
            provider_mode: provider.map(|p| p.mode()),
            model: cfg.provider.model.clone(),
            template_sha256: templates.hashes(),
            experience_revision: None,
            ablation: cfg.ablation,
            datasets: BTreeMap::new(),
            failures: 0,
            config: serde_json::to_value(cfg).expect("config serializes"),
        }
    }

    fn with_dataset(mut self, role: &str, ds: &Dataset) -> Self {
        self.datasets.insert(role.into(), ds.ids().map(str::to_string).collect());
        self
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_stage_files(dir: &Path, manifest: &Manifest, cfg: &RunConfig) -> Result<()> {
    write_json(&dir.join("manifest.json"), manifest)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).with_context(|| format!("writing {}", dir.display()))?;
    Ok(())
}

pub struct Loaded {
    pub dataset: Dataset,
    pub rejection_report: Option<PathBuf>,
}

pub fn load_spec(spec: &DatasetSpec) -> Result<Loaded> {
    let mut opts = LoadOptions::new(spec.name.clone(), spec.kind, spec.style);
    if let Some(adapter) = &spec.adapter {
        opts.fields = FieldMap::from_file(adapter)?;
    }
    let outcome = load_dataset(&spec.path, &opts)?;
    let rejection_report = outcome.write_rejections(&spec.path)?;
    Ok(Loaded { dataset: outcome.dataset, rejection_report })
}

/// The training and test sets named by the config. When both name the same
/// file the test set is what remains after the seeded training split. The
/// minimum-length filter applies to the test set only.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Option<Dataset>, Option<Dataset>)> {
    let data = &cfg.data;
    let train_full = data.train.as_ref().map(load_spec).transpose()?.map(|l| l.dataset);
    let test_full = data.test.as_ref().map(load_spec).transpose()?.map(|l| l.dataset);
    let same_file = matches!((&data.train, &data.test), (Some(a), Some(b)) if a.path == b.path);

    let (train, test) = match (train_full, test_full) {
        (Some(tr), Some(_)) if same_file => {
            let (train, rest) = split_train_test(&tr, data.n_train, cfg.seed)?;
            (Some(train), Some(rest))
        }
        (tr, te) => {
            let tr = tr.map(|d| if d.len() > data.n_train { sample(&d, data.n_train, cfg.seed) } else { d });
            (tr, te)
        }
    };
    let test = test.map(|d| {
        let long = filter_long(&d, data.min_words);
        match data.sample {
            Some(n) if n < long.len() => sample(&long, n, cfg.seed),
            _ => long,
        }
    });
    if let Some(t) = &test {
        if t.is_empty() {
            bail!("test set {} has no documents with at least {} words", t.name, data.min_words);
        }
    }
    Ok((train, test))
}

pub fn ingest(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let specs: Vec<&DatasetSpec> = cfg.data.train.iter().chain(cfg.data.test.iter()).collect();
    if specs.is_empty() {
        bail!("no datasets configured (set data.train and/or data.test)");
    }
    create_dir(&layout.data())?;
    for spec in specs {
        let loaded = load_spec(spec)?;
        let cache = layout.data().join(format!("{}.jsonl", spec.name));
        loaded.dataset.write_jsonl(&cache)?;
        println!("{}: {} documents loaded -> {}", spec.name, loaded.dataset.len(), cache.display());
        if let Some(report) = loaded.rejection_report {
            println!("{}: rejected lines written to {}", spec.name, report.display());
        }
    }
    Ok(())
}

pub fn templates(cfg: &RunConfig) -> Result<TemplateSet> {
    Ok(match &cfg.templates_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    })
}

pub fn engine(cfg: &RunConfig, record: bool) -> Result<Engine> {
    let provider = cfg.provider.build(record)?;
    Ok(Engine::new(cfg.clone(), templates(cfg)?, provider))
}

pub fn train(cfg: &RunConfig, layout: &Layout, record: bool) -> Result<()> {
    let (train_set, _) = prepare_data(cfg)?;
    let train_set = train_set.context("training needs data.train")?;
    if train_set.kind != DatasetKind::Qa {
        bail!("training needs a qa dataset, {} is {}", train_set.name, train_set.kind);
    }
    let engine = engine(cfg, record)?;
    let outcome: TrainOutcome = engine.train(&train_set, ExperienceSet::init())?;
    let dir = layout.train();
    create_dir(&dir)?;
    outcome.experience.persist(&dir.join("experience.json"))?;
    fs::write(dir.join("traces.jsonl"), outcome.traces_jsonl())?;
    write_json(&dir.join("generated_qa.json"), &outcome.generated_qa)?;
    write_json(&dir.join("failures.json"), &outcome.failures)?;
    let mut manifest = Manifest::new("train", cfg, engine.templates(), Some(engine.provider())).with_dataset("train", &train_set);
    manifest.experience_revision = Some(outcome.experience.revision);
    manifest.failures = outcome.failures.len();
    write_stage_files(&dir, &manifest, cfg)?;
    println!(
        "trained on {} documents: {} summary attempts, experience revision {}, {} failed -> {}",
        train_set.len() - outcome.failures.len(),
        outcome.traces.len(),
        outcome.experience.revision,
        outcome.failures.len(),
        dir.display()
    );
    Ok(())
}

/// Picks the experience for a test run: an explicit file, the shipped set
/// for a style, or this run's own training output.
pub fn resolve_experience(
    layout: &Layout,
    explicit: Option<&Path>,
    published: Option<Style>,
) -> Result<ExperienceSet> {
    if let Some(path) = explicit {
        return Ok(ExperienceSet::load(path)?);
    }
    if let Some(style) = published {
        return Ok(ExperienceSet::published(style));
    }
    let trained = layout.train().join("experience.json");
    if trained.exists() {
        return Ok(ExperienceSet::load(&trained)?);
    }
    bail!(
        "no experience available: run `train` first, pass --experience <file>, \
         or use --use-published-experience news|narrative"
    )
}

fn write_outputs(dir: &Path, outputs: &RunOutputs) -> Result<()> {
    create_dir(dir)?;
    fs::write(dir.join("outputs.jsonl"), outputs.outputs_jsonl())?;
    write_json(&dir.join("summaries.json"), &outputs.summaries())?;
    write_json(&dir.join("failures.json"), &outputs.failures)?;
    Ok(())
}

pub fn run(cfg: &RunConfig, layout: &Layout, es: &ExperienceSet, record: bool) -> Result<()> {
    let (_, test_set) = prepare_data(cfg)?;
    let test_set = test_set.context("running needs data.test")?;
    let kind = TestKind::for_mode(cfg.test_mode()).expect("test_mode is a test mode");
    let engine = engine(cfg, record)?;
    let outputs = engine.run_test(&test_set, es, kind)?;
    let dir = layout.run(cfg.ablation);
    write_outputs(&dir, &outputs)?;
    let mut manifest = Manifest::new("run", cfg, engine.templates(), Some(engine.provider())).with_dataset("test", &test_set);
    manifest.experience_revision = Some(es.revision);
    manifest.failures = outputs.failures.len();
    write_stage_files(&dir, &manifest, cfg)?;
    es.persist(&dir.join("experience.json"))?;
    println!("{} summaries, {} failed -> {}", outputs.outputs.len(), outputs.failures.len(), dir.display());
    outputs.check_failures(cfg.failure_threshold)?;
    Ok(())
}

pub fn baseline(cfg: &RunConfig, layout: &Layout, record: bool) -> Result<()> {
    let (_, test_set) = prepare_data(cfg)?;
    let test_set = test_set.context("the baseline needs data.test")?;
    let engine = engine(cfg, record)?;
    let outputs = engine.run_baseline(&test_set)?;
    let dir = layout.baseline();
    write_outputs(&dir, &outputs)?;
    let mut manifest = Manifest::new("baseline", cfg, engine.templates(), Some(engine.provider())).with_dataset("test", &test_set);
    manifest.failures = outputs.failures.len();
    write_stage_files(&dir, &manifest, cfg)?;
    println!("{} baseline summaries, {} failed -> {}", outputs.outputs.len(), outputs.failures.len(), dir.display());
    outputs.check_failures(cfg.failure_threshold)?;
    Ok(())
}

fn read_stage(dir: &Path) -> Result<(BTreeMap<String, String>, Vec<String>)> {
    let summaries_path = dir.join("summaries.json");
    if !summaries_path.exists() {
        bail!("missing {}; run the stage that produces it first", summaries_path.display());
    }
    let summaries: BTreeMap<String, String> = read_json(&summaries_path)?;
    let failures: Vec<DocFailure> = read_json(&dir.join("failures.json"))?;
    Ok((summaries, failures.into_iter().map(|f| f.doc_id).collect()))
}

pub fn eval(cfg: &RunConfig, layout: &Layout, without: &Path, t3: &Path, record: bool) -> Result<()> {
    let (_, test_set) = prepare_data(cfg)?;
    let test_set = test_set.context("evaluation needs data.test for references")?;
    let mode = match test_set.kind {
        DatasetKind::Summarization => ReferenceMode::GoldSummary,
        DatasetKind::Qa => ReferenceMode::SourceText,
    };
    let judge = if cfg.factscore { Some(engine(cfg, record)?) } else { None };
    let dir = layout.eval();
    create_dir(&dir)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    for (role, stage_dir) in [("without", without), ("t3", t3)] {
        let (summaries, failed) = read_stage(stage_dir)?;
        let label = RunLabel { run_id: format!("{}/{role}", cfg.run_id), model: cfg.provider.model.clone() };
        let mut report = score_run(&label, &summaries, &test_set, mode, &failed)?;
        if let Some(engine) = &judge {
            judge_report(engine, &mut report, &summaries, &test_set);
        }
        fs::write(dir.join(format!("{role}.scores.jsonl")), report.scores_jsonl())?;
        write_json(&dir.join(format!("{role}.report.json")), &report)?;
        reports.push(report);
    }
    let table = compare_runs(&[(&reports[0], &reports[1])], cfg.alpha, cfg.star_rule)?;
    write_tables(&dir, "table", &table)?;
    let templates = templates(cfg)?;
    let mut manifest = Manifest::new("eval", cfg, &templates, judge.as_ref().map(|e| e.provider())).with_dataset("test", &test_set);
    manifest.failures = reports.iter().map(|r| r.failed.len()).sum();
    write_stage_files(&dir, &manifest, cfg)?;
    print!("{}", render_report(&table, ReportFormat::Markdown));
    Ok(())
}

fn write_tables(dir: &Path, stem: &str, table: &SignificanceTable) -> Result<()> {
    for format in [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json] {
        table.write(format, &dir.join(format!("{stem}.{}", format.extension())))?;
    }
    Ok(())
}

/// Merges comparison tables from several evaluations into one report.
pub fn report(layout: &Layout, tables: &[PathBuf]) -> Result<()> {
    let defaults = [layout.eval().join("table.json")];
    let inputs: &[PathBuf] = if tables.is_empty() { &defaults } else { tables };
    let mut merged: Option<SignificanceTable> = None;
    for path in inputs {
        let raw = fs::read_to_string(path).with_context(|| format!("reading {}; run `eval` first", path.display()))?;
        let table = SignificanceTable::from_json(&raw)?;
        match &mut merged {
            None => merged = Some(table),
            Some(m) => {
                if m.alpha != table.alpha || m.star_rule != table.star_rule {
                    bail!("{} uses a different alpha or star rule", path.display());
                }
                m.rows.extend(table.rows);
            }
        }
    }
    let table = merged.expect("at least one input");
    let dir = layout.report();
    create_dir(&dir)?;
    write_tables(&dir, "report", &table)?;
    print!("{}", render_report(&table, ReportFormat::Markdown));
    Ok(())
}
