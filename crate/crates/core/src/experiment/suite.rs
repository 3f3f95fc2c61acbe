//! Batches of independent runs and per-scheme statistics.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunResult, RunSummary};
use super::ExperimentError;

/// One entry of a suite: the config's label and seed, and either the
/// run's summary or the error that stopped it.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub name: String,
    pub seed: u64,
    pub outcome: Result<RunSummary, RunFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub exit_code: i32,
    pub message: String,
}

/// Time-to-epsilon statistics of one label across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStats {
    pub name: String,
    pub runs: usize,
    /// Runs that reached epsilon.
    pub reached: usize,
    /// Mean and sample standard deviation over the runs that reached epsilon.
    pub mean: f64,
    pub std: f64,
    /// Median over all runs, counting runs that never reached epsilon as
    /// infinitely slow.
    pub median: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub runs: Vec<SuiteRun>,
    pub table: Vec<SchemeStats>,
}

/// Runs every config on a pool of `parallelism` threads (0 picks the
/// default). A failing run is recorded and does not stop the others.
pub fn run_suite(configs: &[ExperimentConfig], parallelism: usize) -> SuiteReport {
    run_suite_with(configs, parallelism, |_, _| Ok(()))
}

/// [`run_suite`], handing every successful result to `sink` (for example to
/// write its report). An error from `sink` marks that run as failed.
pub fn run_suite_with<F>(configs: &[ExperimentConfig], parallelism: usize, sink: F) -> SuiteReport
where
    F: Fn(&ExperimentConfig, &RunResult) -> Result<(), ExperimentError> + Sync,
{
    let one = |cfg: &ExperimentConfig| {
        let outcome = run_experiment(cfg)
            .and_then(|res| sink(cfg, &res).map(|()| res.summary))
            .map_err(|e| RunFailure { exit_code: e.exit_code(), message: e.to_string() });
        SuiteRun { name: cfg.label(), seed: cfg.seed, outcome }
    };
    let runs: Vec<SuiteRun> = match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| configs.par_iter().map(one).collect()),
        Err(_) => configs.iter().map(one).collect(),
    };
    let summaries: Vec<RunSummary> = runs.iter().filter_map(|r| r.outcome.clone().ok()).collect();
    SuiteReport { table: summarize(&summaries), runs }
}

/// Groups summaries by name, in order of first appearance.
pub fn summarize(summaries: &[RunSummary]) -> Vec<SchemeStats> {
    let mut names: Vec<&str> = Vec::new();
    for s in summaries {
        if !names.contains(&s.name.as_str()) {
            names.push(&s.name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mut times: Vec<f64> = summaries
                .iter()
                .filter(|s| s.name == name)
                .map(|s| s.time_to_epsilon.unwrap_or(f64::INFINITY))
                .collect();
            times.sort_by(f64::total_cmp);
            let reached: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
            let (mean, std) = mean_std(&reached);
            SchemeStats { name: name.to_string(), runs: times.len(), reached: reached.len(), mean, std, median: median(&times) }
        })
        .collect()
}

/// Median of sorted values; NaN for an empty slice.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

/// Plain-text table, one line per label.
pub fn format_table(table: &[SchemeStats]) -> String {
    let mut out = format!("{:<16} {:>5} {:>7} {:>12} {:>12} {:>12}\n", "name", "runs", "reached", "mean_s", "std_s", "median_s");
    for s in table {
        out.push_str(&format!(
            "{:<16} {:>5} {:>7} {:>12.4} {:>12.4} {:>12.4}\n",
            s.name, s.runs, s.reached, s.mean, s.std, s.median
        ));
    }
    out
}
