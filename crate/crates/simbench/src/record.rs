//! Per-step episode logs, their CSV form and the derived metrics.

use std::fmt;
use std::io::Write;

use crate::error::Result;
use crate::mode::PlannerMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Reached,
    Collided,
    Timeout,
    /// The controller raised an error; the message is in [`RunRecord::message`].
    Aborted,
}

impl EpisodeStatus {
    pub fn name(&self) -> &'static str {
        match self {
            EpisodeStatus::Reached => "reached",
            EpisodeStatus::Collided => "collided",
            EpisodeStatus::Timeout => "timeout",
            EpisodeStatus::Aborted => "aborted",
        }
    }
}

/// Operating mode of the live controller at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveMode {
    Normal,
    Fallback,
}

impl ActiveMode {
    pub fn name(&self) -> &'static str {
        match self {
            ActiveMode::Normal => "normal",
            ActiveMode::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot_cmd: Vec<f64>,
    pub ee_position: [f64; 3],
    /// `[w, x, y, z]`.
    pub ee_orientation: [f64; 4],
    pub min_clearance: f64,
    pub mode: ActiveMode,
    /// Some control point had obstacle points within `d_range`.
    pub avoidance_active: bool,
    /// Wall-clock seconds spent computing this step's command.
    pub iteration_time: f64,
}

/// Event counts of one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeCounters {
    pub plans_succeeded: usize,
    pub plans_failed: usize,
    pub deliveries: usize,
    pub selections: usize,
    pub best_deleted: usize,
    pub fallback_steps: usize,
    /// Terminal statuses of evaluated agents.
    pub agents_reached: usize,
    pub agents_collided: usize,
    pub agents_stopped: usize,
    pub agents_deviated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub mode: PlannerMode,
    pub seed: u64,
    pub status: EpisodeStatus,
    pub steps: Vec<StepLog>,
    pub goal_position: [f64; 3],
    pub xi: f64,
    pub max_time: f64,
    pub counters: EpisodeCounters,
    pub message: Option<String>,
}

impl RunRecord {
    pub fn header(&self) -> Vec<String> {
        let n = self.steps.first().map_or(0, |s| s.q.len());
        let mut h = vec!["t".to_string()];
        h.extend((0..n).map(|i| format!("q{i}")));
        h.extend((0..n).map(|i| format!("qdot_cmd{i}")));
        h.extend(["ee_x", "ee_y", "ee_z", "ee_qw", "ee_qx", "ee_qy", "ee_qz", "min_clearance", "mode", "avoidance_active"].map(String::from));
        h.push("iteration_time_s".into());
        h
    }

    /// Per-step CSV. Without `timing` the iteration-time column is left
    /// out, which makes the output a pure function of (scenario, mode, seed).
    pub fn write_csv<W: Write>(&self, out: W, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.header();
        if !timing {
            header.pop();
        }
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            row.push(s.t.to_string());
            row.extend(s.q.iter().map(f64::to_string));
            row.extend(s.qdot_cmd.iter().map(f64::to_string));
            row.extend(s.ee_position.iter().map(f64::to_string));
            row.extend(s.ee_orientation.iter().map(f64::to_string));
            row.push(s.min_clearance.to_string());
            row.push(s.mode.name().into());
            row.push(u8::from(s.avoidance_active).to_string());
            if timing {
                row.push(s.iteration_time.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self, timing: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, timing).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub path_length: f64,
    pub duration: f64,
    pub success: bool,
    pub min_clearance: f64,
    pub final_goal_distance: f64,
    pub iteration_time_median_ms: f64,
    pub iteration_time_max_ms: f64,
    /// Share of steps run in fallback mode.
    pub fallback_fraction: f64,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// EE polyline length of a sequence of positions.
pub fn polyline_length(points: &[[f64; 3]]) -> f64 {
    points.windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Success needs the goal status, the final EE within `xi` of the goal, a
/// positive clearance at every step and a duration within the limit.
pub fn compute_metrics(record: &RunRecord) -> Metrics {
    let positions: Vec<[f64; 3]> = record.steps.iter().map(|s| s.ee_position).collect();
    let duration = record.steps.last().map_or(0.0, |s| s.t);
    let min_clearance = record.steps.iter().map(|s| s.min_clearance).fold(f64::INFINITY, f64::min);
    let final_goal_distance = positions.last().map_or(f64::INFINITY, |p| dist(p, &record.goal_position));
    let mut times: Vec<f64> = record.steps.iter().map(|s| s.iteration_time * 1e3).collect();
    let max = times.iter().copied().fold(0.0, f64::max);
    let fallback = record.steps.iter().filter(|s| s.mode == ActiveMode::Fallback).count();
    Metrics {
        path_length: polyline_length(&positions),
        duration,
        success: record.status == EpisodeStatus::Reached
            && min_clearance > 0.0
            && final_goal_distance <= record.xi
            && duration <= record.max_time,
        min_clearance,
        final_goal_distance,
        iteration_time_median_ms: median(&mut times),
        iteration_time_max_ms: max,
        fallback_fraction: if record.steps.is_empty() { 0.0 } else { fallback as f64 / record.steps.len() as f64 },
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "success = {}", self.success)?;
        writeln!(f, "path_length_m = {:.4}", self.path_length)?;
        writeln!(f, "duration_s = {:.3}", self.duration)?;
        writeln!(f, "min_clearance_m = {:.4}", self.min_clearance)?;
        writeln!(f, "final_goal_distance_m = {:.4}", self.final_goal_distance)?;
        writeln!(f, "iteration_time_median_ms = {:.4}", self.iteration_time_median_ms)?;
        writeln!(f, "iteration_time_max_ms = {:.4}", self.iteration_time_max_ms)?;
        write!(f, "fallback_fraction = {:.3}", self.fallback_fraction)
    }
}
