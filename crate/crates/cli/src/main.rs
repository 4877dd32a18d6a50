//! Command-line driver for the stale-comment mining pipeline.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stalecomment_core::classify::PromptMode;
use stalecomment_core::config::{AnalysisSettings, ClassifierKind, ConfigError, PipelineConfig};
use stalecomment_core::pipeline::{analyze_verdicts, build_classifier, evaluate, Layout, Pipeline, StageError};
use stalecomment_core::records::Window;

#[derive(Parser)]
#[command(name = "stalecomment", version, about = "Relate outdated method comments to bug-introducing commits")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overwrite existing stage outputs.
    #[arg(long, global = true)]
    force: bool,
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find bug-fixing commits and their SZZ introducers.
    Mine,
    /// Draw bug and non-bug target samples.
    Sample(SampleArgs),
    /// Build method-change records for the sampled targets.
    Extract,
    /// Classify every record's comment consistency.
    Classify(ClassifyArgs),
    /// Contingency tables and odds ratios per window.
    Analyze(AnalyzeArgs),
    /// Precision, recall and F1 on CUP2-format datasets.
    Eval(EvalArgs),
    /// Human-readable summary of all stages.
    Report,
    /// Every stage from mine to report.
    Run(ClassifyArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Heuristic,
    Llm,
    Mock,
}

impl From<Kind> for ClassifierKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Heuristic => ClassifierKind::Heuristic,
            Kind::Llm => ClassifierKind::Llm,
            Kind::Mock => ClassifierKind::Mock,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Prompt {
    ZeroShot,
    FewShot,
}

#[derive(Args)]
struct ClassifierArgs {
    #[arg(long, value_enum)]
    classifier: Option<Kind>,
    /// JSON Lines verdict script for the mock classifier.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, value_enum)]
    prompt: Option<Prompt>,
    /// Number of worked examples in few-shot prompts.
    #[arg(long)]
    few_shot_k: Option<usize>,
    /// Parallel classifier calls.
    #[arg(long)]
    concurrency: Option<usize>,
}

impl ClassifierArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(k) = self.classifier {
            c.classifier.kind = k.into();
        }
        if let Some(s) = &self.script {
            c.classifier.script = Some(s.clone());
        }
        if let Some(p) = self.prompt {
            c.classifier.prompt = match p {
                Prompt::ZeroShot => PromptMode::ZeroShot,
                Prompt::FewShot => PromptMode::FewShot,
            };
        }
        if let Some(k) = self.few_shot_k {
            c.classifier.few_shot_k = k;
        }
        if let Some(n) = self.concurrency {
            c.endpoint.concurrency = n;
        }
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Keep rows already classified by an earlier, interrupted run.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Verdicts file; defaults to the classify stage output.
    #[arg(long)]
    verdicts: Option<PathBuf>,
    /// Day window as LO,HI, meaning (LO,HI]. Repeatable.
    #[arg(long = "window", value_parser = parse_window)]
    windows: Vec<(f64, f64)>,
    /// Level of the Wald interval.
    #[arg(long)]
    confidence_level: Option<f64>,
    /// Add 0.5 to every cell of tables with a zero cell.
    #[arg(long)]
    zero_correction: bool,
    /// Count uncategorized inconsistent records as exposed.
    #[arg(long)]
    uncategorized_as_exposed: bool,
    /// Outdated also requires an unchanged comment.
    #[arg(long)]
    strict_outdated: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// CUP2-format JSON Lines dataset. Repeatable.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[command(flatten)]
    classifier: ClassifierArgs,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let w = (num(lo)?, num(hi)?);
    Window::new(w.0, w.1).map_err(|e| e.to_string())?;
    Ok(w)
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        StageError::from(e).into()
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

/// Config from `--config` with command-line overrides applied.
fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure {
        kind: "config",
        message: "this command needs --config".into(),
    })?;
    let mut c = PipelineConfig::load(path)?;
    if let Some(dir) = &cli.output_dir {
        c.output_dir = dir.clone();
    }
    Ok(c)
}

fn pipeline(cli: &Cli, config: PipelineConfig) -> Result<Pipeline, Failure> {
    config.validate()?;
    Ok(Pipeline::new(config).force(cli.force))
}

fn print_json(value: &impl Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    println!("{text}");
}

fn classify(p: &Pipeline, resume: bool) -> Result<(), Failure> {
    let classifier = p.build_classifier()?;
    print_json(&p.classify(classifier.as_ref(), resume)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Mine => print_json(&pipeline(cli, load_config(cli)?)?.mine()?),
        Command::Sample(a) => {
            let mut c = load_config(cli)?;
            if let Some(seed) = a.seed {
                c.sampling.seed = seed;
            }
            print_json(&pipeline(cli, c)?.sample()?);
        }
        Command::Extract => print_json(&pipeline(cli, load_config(cli)?)?.extract()?),
        Command::Classify(a) => {
            let mut c = load_config(cli)?;
            a.classifier.apply(&mut c);
            classify(&pipeline(cli, c)?, a.resume)?;
        }
        Command::Analyze(a) => analyze(cli, a)?,
        Command::Eval(a) => eval(cli, a)?,
        Command::Report => print!("{}", pipeline(cli, load_config(cli)?)?.report()?),
        Command::Run(a) => {
            let mut c = load_config(cli)?;
            a.classifier.apply(&mut c);
            let p = pipeline(cli, c)?;
            p.mine()?;
            p.sample()?;
            p.extract()?;
            let classifier = p.build_classifier()?;
            p.classify(classifier.as_ref(), a.resume)?;
            p.analyze()?;
            print!("{}", p.report()?);
        }
    }
    Ok(())
}

/// Works with or without a config: a bare verdicts file is enough.
fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let mut settings = config.as_ref().map_or_else(AnalysisSettings::default, |c| c.analysis);
    if let Some(level) = a.confidence_level {
        settings.confidence_level = level;
    }
    settings.options.zero_correction |= a.zero_correction;
    settings.options.uncategorized_as_exposed |= a.uncategorized_as_exposed;
    settings.options.categories.strict_outdated |= a.strict_outdated;
    if !(0.0..1.0).contains(&settings.confidence_level) {
        return Err(Failure {
            kind: "invalid",
            message: format!("confidence level must be in [0,1), got {}", settings.confidence_level),
        });
    }

    let pairs = match (&a.windows[..], &config) {
        ([], Some(c)) => c.windows.clone(),
        ([], None) => vec![(0.0, 7.0), (7.0, 14.0)],
        (w, _) => w.to_vec(),
    };
    let windows: Vec<Window> = pairs
        .iter()
        .map(|&(lo, hi)| Window::new(lo, hi).map_err(|e| Failure { kind: "invalid", message: e.to_string() }))
        .collect::<Result<_, _>>()?;
    if let Some((x, y)) = windows
        .iter()
        .enumerate()
        .find_map(|(i, x)| windows[i + 1..].iter().find(|y| x.overlaps(y)).map(|y| (x, y)))
    {
        return Err(Failure {
            kind: "invalid",
            message: format!("windows {x} and {y} overlap"),
        });
    }

    let root = cli
        .output_dir
        .clone()
        .or_else(|| config.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let layout = Layout::new(root);
    let verdicts = a.verdicts.clone().unwrap_or_else(|| layout.verdicts());
    let analysis = analyze_verdicts(
        &verdicts,
        &layout.stage_dir("analyze"),
        &windows,
        settings,
        config.as_ref().map(PipelineConfig::hash),
        cli.force,
    )?;
    print!("{}", analysis.to_text());
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(_) => load_config(cli)?,
        None => {
            let mut c = PipelineConfig::for_repos(Vec::new());
            if let Some(dir) = &cli.output_dir {
                c.output_dir = dir.clone();
            }
            c
        }
    };
    a.classifier.apply(&mut config);
    if config.endpoint.concurrency == 0 {
        return Err(Failure {
            kind: "invalid",
            message: "concurrency must be at least 1".into(),
        });
    }
    let classifier = build_classifier(&config)?;
    let name = format!("{:?}", config.classifier.kind).to_lowercase();
    let out = Layout::new(config.output_dir.clone()).stage_dir("eval");
    evaluate(
        &[(name, classifier.as_ref())],
        &a.datasets,
        &out,
        config.endpoint.concurrency,
        cli.force,
    )?;
    let path = out.join("metrics.txt");
    let text = fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
    print!("{text}");
    Ok(())
}

fn report_failure(f: &Failure) {
    let body = serde_json::json!({ "error": f.kind, "message": f.message });
    let _ = writeln!(std::io::stderr(), "{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_failure(&Failure {
                kind: "usage",
                message: e.render().to_string().trim().to_string(),
            });
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f);
            ExitCode::FAILURE
        }
    }
}
