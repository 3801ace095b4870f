use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use poslab::artgen::{build_dataset, RenderConfig};
use poslab::dataset::{Dataset, DatasetKind};
use poslab::ingest::{build_natural_dataset, load_annotated_corpus};
use poslab::protocol::{aggregate, load_records, run_experiment, Arm, ExperimentConfig, RunOptions, RunStatus};
use poslab::report::{table_csv, write_report};
use poslab::splits::{injected_count, SplitSizes};
use poslab::workspace::Workspace;
use poslab::Exec;

mod check;

#[derive(Parser)]
#[command(name = "poslab", version, about = "Grounded poverty-of-stimulus experiments")]
struct Cli {
    /// Workspace root (default: $POSLAB_WORKSPACE or ./poslab-workspace)
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Run data-parallel loops on the calling thread only
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the artificial dataset
    Gen(GenArgs),
    /// Validate an annotated caption corpus and store it as a dataset
    Ingest(IngestArgs),
    /// Run (or resume) an experiment sweep
    Train(TrainArgs),
    /// Aggregate completed runs into tables and plots
    Report,
    /// Run the gradient and scoring self-tests
    Check(CheckArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 15_000)]
    train: usize,
    #[arg(long, default_value_t = 1_000)]
    validation: usize,
    #[arg(long, default_value_t = 5_000)]
    test: usize,
    #[arg(long, default_value_t = 64)]
    canvas: usize,
    /// Replace an existing dataset of the same name
    #[arg(long)]
    force: bool,
}

impl SplitArgs {
    fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "artificial")]
    name: String,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 0.25)]
    small_object: f64,
    /// Seeded placement jitter (off by default)
    #[arg(long)]
    jitter_seed: Option<u64>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct IngestArgs {
    /// Annotated corpus (JSON lines)
    corpus: PathBuf,
    #[arg(long, default_value = "natural")]
    name: String,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML); defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config and exit
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    eval_steps: Option<Vec<u64>>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Score ROUGE-L on at most this many validation items
    #[arg(long)]
    rouge_items: Option<usize>,
    /// Stop every run after this many updates (resume later)
    #[arg(long, hide = true)]
    stop_after: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Parameters sampled for the finite-difference check
    #[arg(long, default_value_t = 25)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ws = Workspace::resolve(cli.workspace.as_deref());
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Gen(a) => gen(&ws, exec, a),
        Command::Ingest(a) => ingest(&ws, exec, a),
        Command::Train(a) => train(&ws, exec, a),
        Command::Report => report(&ws),
        Command::Check(a) => check::run(a.samples, a.seed),
    }
}

fn prepare_target(ws: &Workspace, name: &str, force: bool) -> Result<PathBuf> {
    ws.ensure()?;
    let dir = ws.datasets_dir().join(name);
    if dir.exists() {
        if !force {
            bail!("dataset {} already exists; pass --force to replace it", dir.display());
        }
        fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    Ok(dir)
}

fn print_counts(ds: &Dataset) {
    let m = &ds.manifest;
    println!(
        "pairs: {}  ambiguous: {}  disambiguating: {}",
        m.counts.total, m.counts.ambiguous, m.counts.disambiguating
    );
    println!(
        "splits: train {}  validation {}  test {}  injection pool {}",
        m.splits.train.len(),
        m.splits.validation.len(),
        m.splits.test.len(),
        m.splits.injection_pool.len()
    );
}

fn gen(ws: &Workspace, exec: Exec, a: GenArgs) -> Result<ExitCode> {
    let cfg = RenderConfig {
        canvas_size: a.split.canvas,
        margin_fraction: a.margin,
        small_object_fraction: a.small_object,
        jitter_seed: a.jitter_seed,
    };
    let ds = build_dataset(a.split.seed, a.split.sizes(), &cfg, exec)?;
    let dir = prepare_target(ws, &a.name, a.split.force)?;
    ds.write_to(&dir, exec)?;
    print_counts(&ds);
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn ingest(ws: &Workspace, exec: Exec, a: IngestArgs) -> Result<ExitCode> {
    let (records, rejected) = load_annotated_corpus(&a.corpus)?;
    for r in &rejected.rejections {
        eprintln!("line {}: {} ({})", r.line, r.reason, r.id.as_deref().unwrap_or("-"));
    }
    println!("accepted {} records, rejected {}", records.len(), rejected.len());
    let ds = build_natural_dataset(&records, a.split.seed, a.split.sizes(), a.split.canvas)?;
    let dir = prepare_target(ws, &a.name, a.split.force)?;
    ds.write_to(&dir, exec)?;
    print_counts(&ds);
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn effective_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &a.dataset {
        cfg.dataset.path = d.clone();
    }
    if let Some(n) = a.train_size {
        cfg.dataset.train_size = Some(n);
    }
    if let Some(r) = &a.rates {
        cfg.injection_rates = r.clone();
    }
    if let Some(arms) = &a.arms {
        cfg.arms = arms.iter().map(|s| s.parse::<Arm>()).collect::<poslab::Result<_>>()?;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(m) = a.max_steps {
        cfg.train.max_steps = m;
    }
    if let Some(e) = &a.eval_steps {
        cfg.eval_steps = e.clone();
    } else if a.max_steps.is_some() {
        cfg.eval_steps.retain(|&s| s <= cfg.train.max_steps);
        if cfg.eval_steps.last() != Some(&cfg.train.max_steps) {
            cfg.eval_steps.push(cfg.train.max_steps);
        }
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(ws: &Workspace, exec: Exec, a: TrainArgs) -> Result<ExitCode> {
    let cfg = effective_config(&a)?;
    if a.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    let path = ws.dataset_path(&cfg.dataset.path);
    let ds = Dataset::read_from(&path, exec).with_context(|| format!("loading dataset {}", path.display()))?;
    let needs_images = cfg.arms.iter().any(|&arm| arm != Arm::NoVision);
    if ds.manifest.kind == DatasetKind::Natural && needs_images && ds.pairs.iter().any(|p| p.image.is_none()) {
        bail!("natural dataset without images supports only the novision arm");
    }
    let base = cfg.dataset.train_size.unwrap_or(ds.manifest.splits.train.len());
    for &rate in &cfg.injection_rates {
        println!("rate {rate}: injected {} disambiguating items", injected_count(rate, base));
    }
    let opts = RunOptions {
        exec,
        stop_after: a.stop_after,
        rouge_items: a.rouge_items,
    };
    let records = run_experiment(&cfg, &ds, ws, opts)?;
    let mut incomplete = 0;
    for r in &records {
        let last = r.rows.last();
        let state = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Running => "interrupted".to_string(),
            RunStatus::Failed { error } => format!("failed: {error}"),
        };
        println!(
            "{} {:<9} rate {:<6} seed {:<3} {}{}",
            r.run_id,
            r.spec.arm.as_str(),
            r.spec.rate,
            r.spec.seed,
            state,
            last.map(|m| format!("  step {} macro-F1 {:.2} ROUGE-L {:.3}", m.step, m.macro_f1, m.rouge_l))
                .unwrap_or_default()
        );
        if r.status != RunStatus::Completed {
            incomplete += 1;
        }
    }
    info!("{} of {} runs completed", records.len() - incomplete, records.len());
    Ok(if incomplete == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn report(ws: &Workspace) -> Result<ExitCode> {
    let records = load_records(ws)?;
    if records.is_empty() {
        bail!("no runs found under {}", ws.runs_dir().display());
    }
    let summary = aggregate(&records)?;
    if summary.failed > 0 {
        println!("excluded {} failed runs", summary.failed);
    }
    let files = write_report(&summary, &ws.reports_dir())?;
    print!("{}", table_csv(&summary));
    for f in files {
        println!("wrote {}", display(&f));
    }
    Ok(ExitCode::SUCCESS)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
