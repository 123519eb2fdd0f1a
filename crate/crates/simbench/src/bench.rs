//! Benchmark suites: every scenario file of a directory, every mode, a
//! number of seeded repeats.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::episode::run_episode;
use crate::error::{Result, SimError};
use crate::mode::PlannerMode;
use crate::record::{compute_metrics, EpisodeStatus, Metrics};
use crate::scenario::{load_scenario, ScenarioSpec};

/// One episode of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: PlannerMode,
    pub seed: u64,
    pub status: EpisodeStatus,
    pub metrics: Metrics,
}

/// Aggregate of one (scenario, mode) cell. Length and duration average over
/// successful runs only and are `None` without any.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub mode: PlannerMode,
    pub runs: usize,
    pub successes: usize,
    pub mean_length: Option<f64>,
    pub mean_duration: Option<f64>,
    /// Median over the runs' median iteration times.
    pub iteration_time_median_ms: f64,
    pub iteration_time_max_ms: f64,
}

impl SummaryRow {
    pub fn success_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.successes as f64 / self.runs as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteResult {
    pub runs: Vec<RunSummary>,
    pub rows: Vec<SummaryRow>,
    /// Scenario files that could not be loaded, with the reason.
    pub errors: Vec<(PathBuf, String)>,
}

/// Scenario files (`*.toml`) of a directory in name order.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| SimError::Io { path: dir.to_path_buf(), source: e })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Aggregates runs into one row per (scenario, mode), in first-seen order.
pub fn summarize(runs: &[RunSummary]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, PlannerMode)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|(s, m)| *s == r.scenario && *m == r.mode) {
            keys.push((r.scenario.clone(), r.mode));
        }
    }
    keys.into_iter()
        .map(|(scenario, mode)| {
            let cell: Vec<&RunSummary> = runs.iter().filter(|r| r.scenario == scenario && r.mode == mode).collect();
            let ok: Vec<&Metrics> = cell.iter().filter(|r| r.metrics.success).map(|r| &r.metrics).collect();
            SummaryRow {
                runs: cell.len(),
                successes: ok.len(),
                mean_length: mean(&ok.iter().map(|m| m.path_length).collect::<Vec<_>>()),
                mean_duration: mean(&ok.iter().map(|m| m.duration).collect::<Vec<_>>()),
                iteration_time_median_ms: median(cell.iter().map(|r| r.metrics.iteration_time_median_ms).collect()),
                iteration_time_max_ms: cell.iter().map(|r| r.metrics.iteration_time_max_ms).fold(0.0, f64::max),
                scenario,
                mode,
            }
        })
        .collect()
}

/// Runs every loaded scenario with every mode for seeds `0..repeats`.
/// Episodes run in parallel; the result order does not depend on scheduling.
pub fn run_suite(scenarios: &[ScenarioSpec], repeats: u64, modes: &[PlannerMode]) -> Vec<RunSummary> {
    let jobs: Vec<(usize, PlannerMode, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| modes.iter().flat_map(move |&m| (0..repeats).map(move |s| (i, m, s))))
        .collect();
    jobs.into_par_iter()
        .map(|(i, mode, seed)| {
            let record = run_episode(&scenarios[i], mode, seed);
            RunSummary {
                scenario: record.scenario.clone(),
                mode,
                seed,
                status: record.status,
                metrics: compute_metrics(&record),
            }
        })
        .collect()
}

/// Loads every scenario of `dir` and runs the suite. Files that fail to load
/// are reported in [`SuiteResult::errors`] and skipped.
pub fn bench_suite(dir: &Path, repeats: u64, modes: &[PlannerMode]) -> Result<SuiteResult> {
    let mut specs = Vec::new();
    let mut errors = Vec::new();
    for path in scenario_files(dir)? {
        match load_scenario(&path) {
            Ok(s) => specs.push(s),
            Err(e) => errors.push((path, e.to_string())),
        }
    }
    let runs = run_suite(&specs, repeats, modes);
    let rows = summarize(&runs);
    Ok(SuiteResult { runs, rows, errors })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

impl SuiteResult {
    /// Summary table, one row per (scenario, mode).
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "planner",
            "runs",
            "successes",
            "success_rate",
            "length_m",
            "duration_s",
            "iteration_time_median_ms",
            "iteration_time_max_ms",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.mode.name().to_string(),
                r.runs.to_string(),
                r.successes.to_string(),
                format!("{:.3}", r.success_rate()),
                opt(r.mean_length),
                opt(r.mean_duration),
                format!("{:.4}", r.iteration_time_median_ms),
                format!("{:.4}", r.iteration_time_max_ms),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// One line per episode.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "planner",
            "seed",
            "status",
            "success",
            "length_m",
            "duration_s",
            "min_clearance_m",
            "iteration_time_median_ms",
            "iteration_time_max_ms",
        ])?;
        for r in &self.runs {
            let m = &r.metrics;
            w.write_record([
                r.scenario.clone(),
                r.mode.name().to_string(),
                r.seed.to_string(),
                r.status.name().to_string(),
                m.success.to_string(),
                format!("{:.4}", m.path_length),
                format!("{:.3}", m.duration),
                format!("{:.4}", m.min_clearance),
                format!("{:.4}", m.iteration_time_median_ms),
                format!("{:.4}", m.iteration_time_max_ms),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:<8} {:>9} {:>10} {:>12} {:>14}",
            "scenario", "planner", "success", "length m", "duration s", "iter ms (med)"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:<8} {:>5}/{:<3} {:>10} {:>12} {:>14.4}",
                r.scenario,
                r.mode.name(),
                r.successes,
                r.runs,
                r.mean_length.map_or("-".into(), |x| format!("{x:.3}")),
                r.mean_duration.map_or("-".into(), |x| format!("{x:.2}")),
                r.iteration_time_median_ms
            )?;
        }
        for (p, e) in &self.errors {
            writeln!(f, "skipped {}: {e}", p.display())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(success: bool, length: f64) -> RunSummary {
        RunSummary {
            scenario: "s".into(),
            mode: PlannerMode::Cf,
            seed: 0,
            status: if success { EpisodeStatus::Reached } else { EpisodeStatus::Timeout },
            metrics: Metrics {
                path_length: length,
                duration: 2.0 * length,
                success,
                min_clearance: 0.1,
                final_goal_distance: 0.0,
                iteration_time_median_ms: 0.05,
                iteration_time_max_ms: 0.1,
                fallback_fraction: 0.0,
            },
        }
    }

    #[test]
    fn rate_and_means_over_successes() {
        let mut runs: Vec<RunSummary> = (0..7).map(|_| run(true, 1.0)).collect();
        runs.extend((0..3).map(|_| run(false, 9.0)));
        let rows = summarize(&runs);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].runs, 10);
        assert!((rows[0].success_rate() - 0.7).abs() < 1e-12);
        assert_eq!(rows[0].mean_length, Some(1.0));
        assert_eq!(rows[0].mean_duration, Some(2.0));
    }

    #[test]
    fn no_success_leaves_means_empty() {
        let rows = summarize(&[run(false, 1.0)]);
        assert_eq!(rows[0].mean_length, None);
    }
}
