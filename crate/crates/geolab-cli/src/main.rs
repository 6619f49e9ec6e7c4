//! geolab command-line interface.
//!
//! Exit codes: 0 success, 1 partial episode failures, 2 config or
//! validation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geolab::config::RunConfig;
use geolab::ecosystem::{import_ecosystem, validate_graph};
use geolab::metrics::{emit_report, AggregateOptions, ReportFormat};
use geolab::runner;

#[derive(Parser)]
#[command(name = "geolab", version, about = "Controlled search-environment experiments for web-search agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run-configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured condition list (comma-separated labels).
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
    /// Override the configured parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(conditions) = &self.conditions {
            config.conditions = conditions.clone();
        }
        if let Some(parallelism) = self.parallelism {
            config.parallelism = parallelism;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and export evidence ecosystems for every instance and condition.
    BuildEcosystem {
        #[command(flatten)]
        config: ConfigArgs,
        /// Only export these instance ids (comma-separated).
        #[arg(long, value_delimiter = ',')]
        instances: Option<Vec<String>>,
    },
    /// Run episodes for every instance and condition; resumable by episode id.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Force the first crawl to the injected synthetic result.
        #[arg(long)]
        forced_first_crawl: bool,
    },
    /// Compute metrics reports from trajectory logs.
    Metrics {
        #[command(flatten)]
        config: ConfigArgs,
        /// Logs directory (defaults to <output_dir>/logs).
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Condition the second-search metric on episodes with >=2 searches.
        #[arg(long)]
        conditioned_second_search: bool,
    },
    /// Partition a raw query file into retained/rejected by intent.
    FilterQueries {
        #[command(flatten)]
        config: ConfigArgs,
        /// Raw query file (JSONL with a `query` field per line).
        #[arg(long)]
        raw: PathBuf,
    },
    /// Validate exported ecosystem directories.
    Validate {
        /// Exported ecosystem directories (each containing manifest.json).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Die quietly when stdout is closed early (e.g. piped into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::BuildEcosystem { config, instances } => {
            let config = config.load()?;
            let exported = runner::export_ecosystems(&config, instances.as_deref())?;
            println!("exported {} ecosystem directories", exported.len());
            for dir in &exported {
                println!("  {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, forced_first_crawl } => {
            let mut config = config.load()?;
            if forced_first_crawl {
                config.forced_first_crawl = true;
            }
            let summary = runner::run_experiment(&config)?;
            println!(
                "episodes run: {}, skipped (already logged): {}, failures: {}",
                summary.episodes_run,
                summary.episodes_skipped,
                summary.failures.len()
            );
            for failure in &summary.failures {
                eprintln!("episode failed: {failure}");
            }
            if summary.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Metrics { config, logs, conditioned_second_search } => {
            let config = config.load()?;
            let logs_dir = logs.unwrap_or_else(|| runner::logs_dir(&config));
            let options = AggregateOptions {
                condition_second_search_on_two_searches: conditioned_second_search,
            };
            let reports = runner::compute_reports(&config, &logs_dir, options)?;
            let provenance = format!("# config: {}\n", config.provenance_json()?);
            let text = emit_report(&reports, ReportFormat::AlignedText);
            let csv = emit_report(&reports, ReportFormat::Csv);
            let report_dir = config.output_dir.join("reports");
            std::fs::create_dir_all(&report_dir)?;
            std::fs::write(report_dir.join("metrics.txt"), format!("{provenance}{text}"))?;
            std::fs::write(report_dir.join("metrics.csv"), format!("{provenance}{csv}"))?;
            print!("{text}");
            println!("reports written to {}", report_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::FilterQueries { config, raw } => {
            let config = config.load()?;
            let out_dir = config.output_dir.join("filter");
            let (retained_path, rejected_path, retained, rejected) =
                runner::filter_queries_file(&config, &raw, &out_dir)?;
            println!("retained: {retained}");
            println!("rejected: {rejected}");
            println!("retained file: {}", retained_path.display());
            println!("rejected file: {}", rejected_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { dirs } => {
            let mut violation_count = 0;
            for dir in &dirs {
                let graph = import_ecosystem(dir)?;
                let violations = validate_graph(&graph);
                if violations.is_empty() {
                    println!("{}: ok", dir.display());
                } else {
                    violation_count += violations.len();
                    println!("{}: {} violations", dir.display(), violations.len());
                    for v in violations {
                        println!(
                            "  [{}] {}: {}",
                            v.page_id.as_deref().unwrap_or("-"),
                            v.rule,
                            v.message
                        );
                    }
                }
            }
            if violation_count == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}
