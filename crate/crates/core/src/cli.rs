//! Command-line front end: `run`, `validate` and `partition-report`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::config::{self, ExperimentConfig};
use crate::data::format_float;
use crate::error::{Error, Result};
use crate::federation;
use crate::metrics::{self, MetricsSink};
use crate::partition::{self, PartitionReport};
use crate::Real;

#[derive(Debug, Parser)]
#[command(name = "riskfed", version, about = "Risk-aware federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its artifacts to an output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a configuration and print it with every default resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Partition the configured dataset and report per-client statistics.
    PartitionReport {
        #[arg(long)]
        config: PathBuf,
        /// Write the `client_id,record_index` CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const PARTITION_FILE: &str = "partition.csv";

/// One `run` invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub run_id: String,
}

impl RunManifest {
    pub fn new(config_path: &Path, out_dir: &Path) -> Result<Self> {
        let config = config::parse_config(config_path)?;
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        Ok(RunManifest {
            config_path: config_path.to_path_buf(),
            run_id: format!("{nanos}-{}", config.seed),
            config,
            out_dir: out_dir.to_path_buf(),
        })
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn check_partition(report: &PartitionReport) -> Result<()> {
    if report.is_valid() {
        return Ok(());
    }
    let list: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
    Err(Error::Partition(list.join("; ")))
}

/// Executes `run`, returning the manifest of the completed run.
pub fn run(config_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let manifest = RunManifest::new(config_path, out_dir)?;
    let cfg = &manifest.config;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let setup = federation::prepare::<Real>(cfg)?;
    check_partition(&partition::validate_partition(&setup.plan, &setup.dataset, true))?;
    let mut plan_csv = Vec::new();
    setup
        .plan
        .write_csv(&mut plan_csv)
        .map_err(|e| Error::io(out_dir.join(PARTITION_FILE), e))?;

    let initial = crate::model::init_weights::<Real>(setup.dataset.feature_dim(), cfg.seed)?;
    let fed = federation::Federation::new(crate::LinearModel, setup.clients, cfg.clone())?;
    let (weights, records) = fed.run(initial)?;

    let mut sink = MetricsSink::new(manifest.run_id.clone(), cfg.fingerprint());
    for r in records {
        sink.push(r)?;
    }

    let config_text = format!(
        "# run_id = {}\n# fingerprint = {}\n{}",
        manifest.run_id,
        sink.config_fingerprint,
        cfg.to_config_string()
    );
    write_file(&out_dir.join(CONFIG_FILE), config_text.as_bytes())?;
    metrics::write_metrics_csv(&sink, out_dir.join(METRICS_FILE))?;
    let mut weights_csv = String::from("index,value\n");
    for (i, v) in weights.as_slice().iter().enumerate() {
        weights_csv.push_str(&format!("{i},{}\n", format_float(*v)));
    }
    write_file(&out_dir.join(WEIGHTS_FILE), weights_csv.as_bytes())?;
    write_file(&out_dir.join(PARTITION_FILE), &plan_csv)?;
    Ok(manifest)
}

fn partition_report(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = config::parse_config(config_path)?;
    let setup = federation::prepare::<Real>(&cfg)?;
    let report = partition::validate_partition(&setup.plan, &setup.dataset, true);
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            setup.plan.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
            print!("{}", report.summary());
        }
        None => {
            let stdout = std::io::stdout();
            setup
                .plan
                .write_csv(stdout.lock())
                .map_err(|e| Error::io("<stdout>", e))?;
            eprint!("{}", report.summary());
        }
    }
    check_partition(&report)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let manifest = run(&config, &out)?;
            println!("run {} complete: {}", manifest.run_id, manifest.out_dir.display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = config::parse_config(&config)?;
            let mut stdout = std::io::stdout();
            stdout
                .write_all(cfg.to_config_string().as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Command::PartitionReport { config, out } => partition_report(&config, out.as_deref()),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes:
/// 2 configuration, 3 data, 4 numerical, 1 anything else.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
