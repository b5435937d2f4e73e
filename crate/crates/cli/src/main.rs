mod pipeline;
mod settings;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qa2sum::corpus::Style;
use qa2sum::engine::RunConfig;

use pipeline::Layout;

#[derive(Parser)]
#[command(name = "qa2sum", version, about = "QA-assisted zero-shot long-text summarization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set thresholds.k_max=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output root; artifacts go to `<out>/<run_id>/`.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Backend: openai_compatible, anthropic, gemini or replay.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long, value_enum, global = true)]
    ablation: Option<AblationArg>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    Full,
    NoSumExp,
    NoQaExp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    News,
    Narrative,
}

impl From<StyleArg> for Style {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::News => Style::News,
            StyleArg::Narrative => Style::Narrative,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experience file to apply.
    #[arg(long)]
    experience: Option<PathBuf>,
    /// Use the shipped experience for this style instead of a trained one.
    #[arg(long, value_enum)]
    use_published_experience: Option<StyleArg>,
}

#[derive(Args)]
struct EvalArgs {
    /// Stage directory of the run without experience (default: this run's baseline).
    #[arg(long)]
    without: Option<PathBuf>,
    /// Stage directory of the run with experience (default: this run's test output).
    #[arg(long)]
    t3: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Comparison tables (`table.json`) to merge (default: this run's eval table).
    #[arg(long = "table")]
    tables: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate datasets and write canonical JSONL caches.
    Ingest,
    /// Learn experience on the training set.
    Train,
    /// Summarize the test set with learned experience.
    Run(RunArgs),
    /// Summarize the test set with the plain baseline prompt.
    Baseline,
    /// Score two runs and compare them.
    Eval(EvalArgs),
    /// Merge comparison tables into one report.
    Report(ReportArgs),
    /// Run a stage against a live backend, saving every exchange to the transcript.
    Record {
        #[command(subcommand)]
        stage: RecordStage,
    },
}

#[derive(Subcommand)]
enum RecordStage {
    Train,
    Run(RunArgs),
    Baseline,
    Eval(EvalArgs),
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    for raw in &common.overrides {
        overrides.push(settings::parse_assignment(raw)?);
    }
    if let Some(p) = &common.provider {
        overrides.push(("provider.backend".into(), toml::Value::String(p.clone())));
    }
    if let Some(a) = common.ablation {
        let name = match a {
            AblationArg::Full => "full",
            AblationArg::NoSumExp => "no_sum_exp",
            AblationArg::NoQaExp => "no_qa_exp",
        };
        overrides.push(("ablation".into(), toml::Value::String(name.into())));
    }
    settings::load_config(common.config.as_deref(), &overrides)
}

fn run_stage(cfg: &RunConfig, layout: &Layout, args: &RunArgs, record: bool) -> Result<()> {
    let es = pipeline::resolve_experience(layout, args.experience.as_deref(), args.use_published_experience.map(Into::into))?;
    pipeline::run(cfg, layout, &es, record)
}

fn eval_stage(cfg: &RunConfig, layout: &Layout, args: &EvalArgs, record: bool) -> Result<()> {
    let without = args.without.clone().unwrap_or_else(|| layout.baseline());
    let t3 = args.t3.clone().unwrap_or_else(|| layout.run(cfg.ablation));
    pipeline::eval(cfg, layout, &without, &t3, record)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = config(&cli.common)?;
    let layout = Layout::new(&cli.common.out, &cfg.run_id);
    match &cli.command {
        Command::Ingest => pipeline::ingest(&cfg, &layout),
        Command::Train => pipeline::train(&cfg, &layout, false),
        Command::Run(args) => run_stage(&cfg, &layout, args, false),
        Command::Baseline => pipeline::baseline(&cfg, &layout, false),
        Command::Eval(args) => eval_stage(&cfg, &layout, args, false),
        Command::Report(args) => pipeline::report(&layout, &args.tables),
        Command::Record { stage } => match stage {
            RecordStage::Train => pipeline::train(&cfg, &layout, true),
            RecordStage::Run(args) => run_stage(&cfg, &layout, args, true),
            RecordStage::Baseline => pipeline::baseline(&cfg, &layout, true),
            RecordStage::Eval(args) => eval_stage(&cfg, &layout, args, true),
        },
    }
}
