use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jcdo_core::experiment::{
    emit_report, format_table, parse_metrics, parse_summary, run_experiment, run_suite_with, summarize,
    ExperimentConfig, ExperimentError, RunSummary, METRICS_FILE, SUMMARY_FILE,
};

mod oracle;

const OUT_ENV: &str = "JCDO_OUT_DIR";

#[derive(Parser)]
#[command(name = "jcdo", version, about = "Wireless federated edge learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics.
    Run {
        config: PathBuf,
        /// Output directory [default: $JCDO_OUT_DIR or ./jcdo-out].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config in a directory over a range of seeds. Files whose
    /// name starts with `_` are treated as include fragments and skipped.
    Suite {
        config_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// First seed of the range.
        #[arg(long, default_value_t = 1)]
        first_seed: u64,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print reference values from the independent oracles (`list` shows names).
    Oracle { name: String },
    /// Summarise a directory of run outputs.
    Report { records_dir: PathBuf },
}

/// Failure with the process exit code for its category.
struct Failure {
    code: u8,
    message: String,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 5, message: format!("{}: {e}", path.display()) }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Suite { config_dir, seeds, first_seed, parallel, out } => {
            suite(&config_dir, first_seed, seeds, parallel, out)
        }
        Command::Oracle { name } => oracle::print(&name).map_err(|message| Failure { code: 2, message }),
        Command::Report { records_dir } => report(&records_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("jcdo-out"))
}

fn run_dir(out: &Path, cfg: &ExperimentConfig) -> PathBuf {
    out.join(cfg.label()).join(format!("seed-{}", cfg.seed))
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_path(path).map_err(|e| Failure::from(ExperimentError::from(e)))
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let result = run_experiment(&cfg)?;
    let dir = run_dir(&out_dir(out), &cfg);
    emit_report(&dir, &result)?;
    print_summary(&result.summary);
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let tte = s.time_to_epsilon.map_or_else(|| "not reached".to_string(), |t| format!("{t:.4} s"));
    println!(
        "{} seed {}: {} rounds, time to epsilon {tte}, final loss {:.6e}, simulated {:.4} s",
        s.name, s.seed, s.rounds, s.final_loss, s.total_time
    );
}

fn suite(dir: &Path, first_seed: u64, seeds: u64, parallel: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "toml")
                && !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('_'))
        })
        .collect();
    paths.sort();
    let mut configs = Vec::new();
    for path in &paths {
        let base = load(path)?;
        for seed in first_seed..first_seed + seeds {
            configs.push(ExperimentConfig { seed, ..base.clone() });
        }
    }
    let out = out_dir(out);
    let report = run_suite_with(&configs, parallel, |cfg, res| emit_report(&run_dir(&out, cfg), res).map(|_| ()));
    let mut worst = 0u8;
    for run in &report.runs {
        match &run.outcome {
            Ok(s) => print_summary(s),
            Err(f) => {
                eprintln!("{} seed {}: {}", run.name, run.seed, f.message);
                worst = worst.max(f.exit_code as u8);
            }
        }
    }
    print!("{}", format_table(&report.table));
    if worst > 0 {
        return Err(Failure { code: worst, message: "some runs failed".into() });
    }
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let mut found = Vec::new();
    collect_summaries(dir, &mut found)?;
    found.sort();
    let mut summaries = Vec::new();
    for path in found {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| io_failure(p, e));
        let bad = |p: &Path, e: &dyn std::fmt::Display| Failure { code: 2, message: format!("{}: {e}", p.display()) };
        let summary = parse_summary(&read(&path)?).map_err(|e| bad(&path, &e))?;
        let metrics = path.with_file_name(METRICS_FILE);
        let rows = parse_metrics(&read(&metrics)?).map_err(|e| bad(&metrics, &e))?;
        if rows.len() as u64 != summary.rounds {
            return Err(bad(&metrics, &format!("{} rows for {} rounds", rows.len(), summary.rounds)));
        }
        print_summary(&summary);
        summaries.push(summary);
    }
    print!("{}", format_table(&summarize(&summaries)));
    Ok(())
}

fn collect_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), Failure> {
    for entry in fs::read_dir(dir).map_err(|e| io_failure(dir, e))? {
        let path = entry.map_err(|e| io_failure(dir, e))?.path();
        if path.is_dir() {
            collect_summaries(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == SUMMARY_FILE) {
            found.push(path);
        }
    }
    Ok(())
}
