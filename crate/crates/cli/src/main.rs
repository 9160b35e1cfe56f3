use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feather_cli::bench::{report, run_bench, BenchConfig};
use feather_cli::config::{parse_literal, read_text, ExperimentConfig};
use feather_cli::experiment::{run, write_run};
use feather_cli::output::{write_csv_file, OverheadRow, Schema};
use feather_cli::sweep::{expand, run_points};
use feather_cli::{calibrate, CliError};
use toml::Value;

#[derive(Debug, Parser)]
#[command(name = "feather", version, about = "Prefix-aware batch scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write step, summary, decision and request CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `out_dir` from the config, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one simulation per axis value and write a merged summary CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config key; defaults to the config's `[sweep]` table.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values, each read as a TOML literal.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Count scheduler operations across queue-length and context grids.
    BenchOverhead {
        /// Benchmark grid; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit cost-model parameters to a targets file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Write fitted parameters here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &Path, seed: Option<u64>) -> Result<(toml::Table, ExperimentConfig), CliError> {
    let mut doc = ExperimentConfig::load_table(config)?;
    if let Some(s) = seed {
        doc.insert("seed".into(), Value::Integer(s as i64));
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let cfg = ExperimentConfig::from_table(doc.clone(), base, config)?;
    Ok((doc, cfg))
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, out, seed } => {
            let (_, cfg) = load(&config, seed)?;
            let result = run(&cfg)?;
            write_run(&out_dir(out, &cfg), &result)?;
            println!("{}", result.summary.line());
        }
        Command::Sweep { config, axis, values, jobs, out, seed } => {
            let (doc, cfg) = load(&config, seed)?;
            let table = cfg.sweep.clone();
            let axis = axis
                .or_else(|| table.as_ref().map(|t| t.axis.clone()))
                .ok_or_else(|| CliError::Usage("--axis is required without a [sweep] table".into()))?;
            let values: Vec<Value> = match values {
                Some(v) => v.iter().map(|s| parse_literal(s.trim())).collect(),
                None => table.as_ref().map(|t| t.values.clone()).unwrap_or_default(),
            };
            let schedulers = table.map(|t| t.schedulers).unwrap_or_default();
            let points = expand(&doc, &config, &axis, &values, &schedulers)?;
            let rows = run_points(&axis, &points, jobs)?;
            let dir = out_dir(out, &cfg);
            std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
            write_csv_file(&dir.join(Schema::Summary.file_name()), Schema::Summary, &rows)?;
            for r in &rows {
                println!("{} = {}  {}", r.axis, r.value, r.line());
            }
        }
        Command::BenchOverhead { config, out } => {
            let cfg: BenchConfig = match &config {
                Some(p) => toml::from_str(&read_text(p)?)
                    .map_err(|e| CliError::Config { path: p.clone(), msg: e.to_string() })?,
                None => BenchConfig::default(),
            };
            let results = run_bench(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
            let rows: Vec<OverheadRow> = results.iter().flat_map(|p| p.rows.iter().cloned()).collect();
            write_csv_file(&out.join(Schema::Overhead.file_name()), Schema::Overhead, &rows)?;
            let text = report(&cfg, &results);
            let path = out.join("overhead_report.txt");
            std::fs::write(&path, &text).map_err(|source| CliError::Io { path, source })?;
            print!("{text}");
        }
        Command::Calibrate { config, out } => {
            let params = calibrate::fit_file(&config)?;
            let text = calibrate::to_toml(&params);
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|source| CliError::Io { path: p, source })?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
