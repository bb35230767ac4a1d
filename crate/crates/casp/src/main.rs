use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use casp::error::{Error, Result};
use casp::harness::{
    self, config, emit_report, run_ablation, run_oos, run_optimize, run_tune, run_turnover,
    ExperimentConfig, Report, ReportFormat, RunManifest,
};

#[derive(Parser)]
#[command(name = "casp", version, about = "Covariance-aware portfolio repair: experiment runner")]
struct Cli {
    /// Flat key=value experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Re-run from a manifest written by a previous run (pins config,
    /// timestamp and data fingerprint).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Report file format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Both => ReportFormat::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Repair random candidates with every method; compare variance and
    /// Sharpe against the Euclidean baseline.
    Ablation,
    /// Walk-forward out-of-sample study over the configured split boundaries.
    Oos,
    /// Simulated rebalancing events: turnover, cost and a net-Sharpe proxy.
    Turnover,
    /// Multi-objective optimizer runs per method, with Pareto archives,
    /// hypervolume and per-run logs.
    Optimize {
        /// Sweep the (lambda, gamma) grid on the training split instead of
        /// running the optimizer.
        #[arg(long)]
        tune: bool,
    },
    /// Load prices (and optional ESG inputs), fit the model and write it as
    /// JSON.
    Ingest {
        /// Output path for the model document (default: <out-dir>/model-<ts>.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (mut cfg, pinned_timestamp) = resolve_config(&cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let timestamp = pinned_timestamp.unwrap_or_else(harness::report::timestamp_now);
    let format: ReportFormat = cli.format.into();
    std::fs::create_dir_all(&cli.out_dir)?;

    match cli.command {
        Command::Ablation => {
            let report = run_ablation(&cfg)?;
            finish(&cfg, Report::Ablation(report), format, &cli.out_dir, &timestamp)
        }
        Command::Oos => {
            let report = run_oos(&cfg)?;
            finish(&cfg, Report::Oos(report), format, &cli.out_dir, &timestamp)
        }
        Command::Turnover => {
            let report = run_turnover(&cfg)?;
            finish(&cfg, Report::Turnover(report), format, &cli.out_dir, &timestamp)
        }
        Command::Optimize { tune } => {
            if tune {
                let report = run_tune(&cfg)?;
                return finish(&cfg, Report::Tune(report), format, &cli.out_dir, &timestamp);
            }
            let outcome = run_optimize(&cfg)?;
            let runlog_dir = cli.out_dir.join("runlogs");
            std::fs::create_dir_all(&runlog_dir)?;
            let mut extra_outputs = Vec::new();
            for (stem, jsonl) in &outcome.runlogs {
                let path = runlog_dir.join(format!("{stem}-{timestamp}.jsonl"));
                std::fs::write(&path, jsonl)?;
                extra_outputs.push(path);
            }
            finish_with_extras(
                &cfg,
                Report::Optimize(outcome.report),
                format,
                &cli.out_dir,
                &timestamp,
                extra_outputs,
            )
        }
        Command::Ingest { output } => {
            let prepared = harness::prepare_market(&cfg)?;
            let path = output.unwrap_or_else(|| cli.out_dir.join(format!("model-{timestamp}.json")));
            std::fs::write(&path, prepared.model.to_json()?)?;
            println!("dropped_rows: {}", prepared.dropped_rows);
            println!("assets: {}", prepared.model.n_assets());
            println!("condition_number: {}", prepared.model.meta.condition_number);
            println!("wrote {}", path.display());

            let mut manifest =
                RunManifest::new("ingest", &timestamp, &prepared.fingerprint, cfg.clone());
            manifest.outputs.push(path.display().to_string());
            let mpath = manifest.save(&cli.out_dir)?;
            println!("wrote {}", mpath.display());
            Ok(())
        }
    }
}

/// Load the config from --manifest (pinning its timestamp) or --config, or
/// fall back to defaults.
fn resolve_config(cli: &Cli) -> Result<(ExperimentConfig, Option<String>)> {
    if let Some(mpath) = &cli.manifest {
        if cli.config.is_some() {
            return Err(Error::Config("--config and --manifest are mutually exclusive".into()));
        }
        let manifest = RunManifest::load(mpath)?;
        // Re-running on different data silently invalidates the comparison;
        // verify the fingerprint before doing any work.
        let prepared = harness::prepare_market(&manifest.config)?;
        if prepared.fingerprint != manifest.data_fingerprint {
            return Err(Error::Format(format!(
                "data fingerprint mismatch: manifest has {}, input hashes to {}",
                manifest.data_fingerprint, prepared.fingerprint
            )));
        }
        return Ok((manifest.config, Some(manifest.timestamp)));
    }
    match &cli.config {
        Some(path) => Ok((config::load_config(path)?, None)),
        None => Ok((ExperimentConfig::default(), None)),
    }
}

fn finish(
    cfg: &ExperimentConfig,
    report: Report,
    format: ReportFormat,
    out_dir: &std::path::Path,
    timestamp: &str,
) -> Result<()> {
    finish_with_extras(cfg, report, format, out_dir, timestamp, Vec::new())
}

fn finish_with_extras(
    cfg: &ExperimentConfig,
    report: Report,
    format: ReportFormat,
    out_dir: &std::path::Path,
    timestamp: &str,
    extra_outputs: Vec<PathBuf>,
) -> Result<()> {
    let fingerprint = fingerprint_of(&report);
    let written = emit_report(&report, format, out_dir, timestamp)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    let mut manifest = RunManifest::new(report.experiment_name(), timestamp, &fingerprint, cfg.clone());
    manifest.outputs = written
        .iter()
        .chain(extra_outputs.iter())
        .map(|p| p.display().to_string())
        .collect();
    let mpath = manifest.save(out_dir)?;
    println!("wrote {}", mpath.display());
    Ok(())
}

fn fingerprint_of(report: &Report) -> String {
    match report {
        Report::Ablation(r) => r.data_fingerprint.clone(),
        Report::Oos(r) => r.data_fingerprint.clone(),
        Report::Turnover(r) => r.data_fingerprint.clone(),
        Report::Optimize(r) => r.data_fingerprint.clone(),
        Report::Tune(r) => r.data_fingerprint.clone(),
    }
}
