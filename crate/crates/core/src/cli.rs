//! Command-line front end. Exit codes: 0 success, 1 other failure,
//! 2 usage or configuration error, 3 backend unreachable or broken,
//! 4 dataset failed validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::backends::{CompletionMode, MockFixtures, MockOptions, MockServer};
use crate::datasets::{ingest_lenient, DatasetManifest};
use crate::error::{Error, Result};
use crate::evalharness::{
    read_report, render, render_markdown, run_ablation, write_run_dir, Harness, ReportFormat, RunConfig, RunMode,
};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "VLMC_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "vlmc",
    version,
    about = "Coordinate vision-language experts and evaluate the result"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set seed=7` or `--set panel.0.timeout_ms=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one configuration and write report.json, report.md and timing.json.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory; defaults to runs/<config fingerprint>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Run the eight-row ablation matrix.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write instruction-tuning pairs for the train split.
    ExportTuning {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve fixture-backed mock backends.
    ServeMock {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// fixtures | oracle | echo-expert:<name> | fixed:<text>
        #[arg(long, default_value = "fixtures")]
        mode: String,
        #[arg(long)]
        latency_ms: Option<u64>,
    },
    /// Ingest and validate a dataset without running anything.
    ValidateData {
        #[arg(short, long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// Dataset manifest (JSON) instead of a full run config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Render saved reports as one table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Transport { .. } | Error::Protocol { .. } => 3,
        Error::Validation(_) | Error::Parse { .. } => 4,
        Error::Degenerate(_) | Error::Io(_) | Error::Json(_) => 1,
    }
}

fn init_logging() {
    let filter = EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse arguments, run, and map the outcome to an exit code.
pub async fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let cfg = RunConfig::load(&args.config, &args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub async fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, format } => {
            let format: ReportFormat = format.parse()?;
            let cfg = load_config(&config)?;
            if cfg.mode == RunMode::ExportTuning {
                return Err(Error::usage("mode export_tuning is run with `vlmc export-tuning`"));
            }
            let harness = Harness::new(cfg)?;
            harness.check_health().await?;
            let outcome = harness.run().await?;
            let dir = out.unwrap_or_else(|| Path::new("runs").join(harness.fingerprint().short()));
            write_run_dir(&dir, &outcome.report, &outcome.timing)?;
            print!("{}", render(&outcome.report, format));
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
        Command::Ablate { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| Path::new("runs").join(format!("ablation-{}", cfg.fingerprint().short())));
            let report = run_ablation(&cfg, Some(&dir)).await?;
            print!("{}", report.to_markdown());
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
        Command::ExportTuning { config, out } => {
            let cfg = load_config(&config)?;
            let mut export_cfg = cfg.clone();
            export_cfg.mode = RunMode::ExportTuning;
            export_cfg.validate()?;
            let harness = Harness::new(export_cfg)?;
            harness.check_health().await?;
            let summary = harness.export_tuning_set(&out).await?;
            println!(
                "{} pairs, {} skipped, pairs digest {}",
                summary.count,
                summary.skipped.len(),
                summary.pairs_digest.short()
            );
            Ok(())
        }
        Command::ServeMock {
            fixtures,
            port,
            mode,
            latency_ms,
        } => {
            let mode: CompletionMode = mode.parse()?;
            let fixtures = MockFixtures::load(&fixtures)?;
            let options = MockOptions {
                mode,
                latency: latency_ms.map(std::time::Duration::from_millis),
            };
            let server = MockServer::start(fixtures, options, port).await?;
            println!("listening on {}", server.url());
            tokio::signal::ctrl_c().await?;
            server.shutdown().await;
            Ok(())
        }
        Command::ValidateData { config, manifest } => {
            let manifest = match (config, manifest) {
                (Some(c), _) => RunConfig::load(&c, &[])?.dataset,
                (None, Some(m)) => {
                    let text = std::fs::read_to_string(&m)
                        .map_err(|e| Error::usage(format!("cannot read manifest {}: {e}", m.display())))?;
                    let mut man: DatasetManifest =
                        serde_json::from_str(&text).map_err(|e| Error::usage(format!("invalid manifest: {e}")))?;
                    man.resolve_paths(m.parent().unwrap_or(Path::new(".")));
                    man
                }
                (None, None) => return Err(Error::usage("pass --config or --manifest")),
            };
            let outcome = ingest_lenient(&manifest)?;
            for (split, n) in &outcome.rows_read {
                println!("{split}: {n} rows, {} kept", outcome.dataset.split(*split).len());
            }
            if outcome.rejected.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(Error::Validation(outcome.rejected))
            }
        }
        Command::Report { reports, format } => {
            let format: ReportFormat = format.parse()?;
            let loaded = reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
            match format {
                ReportFormat::Markdown => print!("{}", render_markdown(&loaded.iter().collect::<Vec<_>>())),
                ReportFormat::Json => {
                    for r in &loaded {
                        print!("{}", r.to_json());
                    }
                }
            }
            Ok(())
        }
    }
}
