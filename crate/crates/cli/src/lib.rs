//! `msarobust` command line: generate synthetic features, train standard or
//! robust fusion models over several seeds, run diagnostic sweeps, and
//! render the aggregated tables.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use msarobust_core::diagnostics::sweep_runs;
use msarobust_core::{
    aggregate_seeds, emit_report, generate_synthetic, load_features, save_features,
    train_robust, train_standard, AggregateReport, Dataset, DiagnosticConfig, HookPoint,
    Modality, Model, ModelConfig, Optimizer, PerturbationKind, PlanKind, ReportFormat,
    RobustSpec, SyntheticSpec, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Manifest written at the top of a `train` output directory.
pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "msarobust", version, about = "Modality-robustness diagnostics for fusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic feature file from a JSON spec.
    GenData(GenData),
    /// Train one model per seed and write checkpoints.
    Train(Train),
    /// Run the diagnostic sweep over trained runs and aggregate over seeds.
    Diagnose(Diagnose),
    /// Render an aggregate report (optionally against a robust one).
    Report(Report),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Opt {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model_hidden: usize,
    /// Proportion of each training batch to perturb; enables robust training.
    #[arg(long)]
    robust: Option<f64>,
    #[arg(long, requires = "robust", default_value = "balanced")]
    robust_kind: PlanKind,
    #[arg(long, requires = "robust", default_value = "post")]
    hook: HookPoint,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Defaults to 0.003 for adam and 0.05 for sgd.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum, default_value_t = Opt::Adam)]
    opt: Opt,
}

#[derive(Debug, Args)]
struct Diagnose {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10, 0.15, 0.30])]
    proportions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["missing", "noise"])]
    kinds: Vec<PerturbationKind>,
    #[arg(long, value_delimiter = ',', default_values = ["language", "audio", "visual"])]
    modalities: Vec<Modality>,
    #[arg(long, default_value = "post")]
    hook: HookPoint,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
}

#[derive(Debug, Args)]
struct Report {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    format: ReportFormat,
    /// Robust-variant aggregate to pair with `--in`.
    #[arg(long)]
    compare: Option<PathBuf>,
}

/// Echo of a `train` invocation, stored as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `standard` or `robust`.
    pub variant: String,
    pub data: PathBuf,
    pub seeds: Vec<u64>,
    pub model_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub robust: Option<RobustSpec>,
}

/// Directory holding one seed's artifacts inside a `train` output directory.
pub fn seed_dir(runs: &Path, seed: u64) -> PathBuf {
    runs.join(format!("seed-{seed}"))
}

/// Parses and runs `argv` (including the program name), writing reports to
/// `stdout` and diagnostics to `stderr`. Returns the process exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn execute(command: Command, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::GenData(a) => gen_data(a, stdout),
        Command::Train(a) => train(a, stdout),
        Command::Diagnose(a) => diagnose(a, stdout),
        Command::Report(a) => report(a, stdout),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    load_features(path).with_context(|| format!("cannot load features from {}", path.display()))
}

fn gen_data(a: GenData, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let mut spec: SyntheticSpec = serde_json::from_str(&read_text(&a.spec)?)
        .with_context(|| format!("invalid spec {}", a.spec.display()))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let dataset = generate_synthetic(&spec)?;
    save_features(&dataset, &a.out)?;
    writeln!(stdout, "wrote {} records to {}", dataset.len(), a.out.display())?;
    Ok(())
}

fn train(a: Train, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let dataset = load_dataset(&a.data)?;
    let optimizer = match a.opt {
        Opt::Adam => Optimizer::adam(a.lr.unwrap_or(0.003)),
        Opt::Sgd => Optimizer::sgd(a.lr.unwrap_or(0.05)),
    };
    let robust = a.robust.map(|proportion| RobustSpec {
        proportion,
        modality: Modality::Language,
        hook: a.hook,
        kind: a.robust_kind,
    });
    let configs: Vec<(ModelConfig, TrainConfig)> = a
        .seeds
        .iter()
        .map(|&seed| {
            let model = ModelConfig::new(dataset.dims(), a.model_hidden, seed);
            let cfg = TrainConfig {
                epochs: a.epochs,
                batch_size: a.batch,
                optimizer,
                seed,
                robust,
                patience: 0,
            };
            model.validate()?;
            cfg.validate()?;
            Ok((model, cfg))
        })
        .collect::<anyhow::Result<_>>()?;

    let runs = thread::scope(|s| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|(model_cfg, cfg)| {
                let dataset = &dataset;
                s.spawn(move || {
                    let model = Model::new(model_cfg)?;
                    if cfg.robust.is_some() {
                        train_robust(model, dataset, &cfg)
                    } else {
                        train_standard(model, dataset, &cfg)
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let manifest = RunManifest {
        variant: if robust.is_some() { "robust" } else { "standard" }.into(),
        data: a.data.clone(),
        seeds: a.seeds.clone(),
        model_hidden: a.model_hidden,
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer,
        robust,
    };
    for (seed, run) in a.seeds.iter().zip(&runs) {
        let dir = seed_dir(&a.out, *seed);
        run.write_to(&dir)?;
        writeln!(
            stdout,
            "seed {seed}: best epoch {} of {}, wrote {}",
            run.best_epoch,
            run.trace.len(),
            dir.display()
        )?;
    }
    write_text(&a.out.join(RUN_MANIFEST), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn diagnose(a: Diagnose, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let manifest_path = a.runs.join(RUN_MANIFEST);
    let manifest: RunManifest = serde_json::from_str(&read_text(&manifest_path)?)
        .with_context(|| format!("invalid run manifest {}", manifest_path.display()))?;
    let dataset = load_dataset(&a.data)?;
    let cfg = DiagnosticConfig {
        proportions: a.proportions,
        kinds: a.kinds,
        modalities: a.modalities,
        hook: a.hook,
        seeds: a.seeds,
    };
    cfg.validate()?;

    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let path = seed_dir(&a.runs, seed).join("checkpoint.json");
        if !path.is_file() {
            bail!("no checkpoint for seed {seed} at {}", path.display());
        }
        let model = Model::load(&path).with_context(|| format!("cannot load {}", path.display()))?;
        if model.config().dims != dataset.dims() {
            bail!(
                "checkpoint {} expects dims {:?} but {} has {:?}",
                path.display(),
                model.config().dims,
                a.data.display(),
                dataset.dims()
            );
        }
        runs.push((seed, model));
    }

    let aggregate = aggregate_seeds(manifest.variant, &sweep_runs(&runs, &dataset, &cfg)?)?;
    write_text(&a.out, &aggregate.to_json()?)?;
    writeln!(
        stdout,
        "{}: {} diagnostics over {} seeds, wrote {}",
        aggregate.variant,
        aggregate.rows.len(),
        aggregate.seeds.len(),
        a.out.display()
    )?;
    Ok(())
}

fn load_aggregate(path: &Path) -> anyhow::Result<AggregateReport> {
    AggregateReport::from_json(&read_text(path)?)
        .with_context(|| format!("invalid aggregate report {}", path.display()))
}

fn report(a: Report, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let primary = load_aggregate(&a.input)?;
    let robust = a.compare.as_deref().map(load_aggregate).transpose()?;
    stdout.write_all(emit_report(&primary, robust.as_ref(), a.format)?.as_bytes())?;
    Ok(())
}
