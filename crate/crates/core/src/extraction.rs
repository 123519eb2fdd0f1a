//! Avoidance directions mined from a joint trajectory: one unit field vector
//! per (control point, obstacle).

use crate::error::Result;
use crate::kinematics::{control_point_positions, RobotModel};
use crate::planner::GlobalTrajectory;
use crate::world::{ObstacleState, SpatialGrid, WorldSnapshot, GRID_CELL};
use crate::{JointVector, Vec3};

/// Cross products shorter than this are treated as collinear.
pub const EPS_CROSS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianPath {
    pub control_point: usize,
    pub samples: Vec<Vec3>,
}

/// Forward kinematics of every waypoint for every control point. A
/// two-waypoint trajectory gets its joint-space midpoint inserted so that
/// every path has at least three samples.
pub fn cartesian_paths(model: &RobotModel, traj: &GlobalTrajectory) -> Result<Vec<CartesianPath>> {
    let mut waypoints: Vec<JointVector> = traj.waypoints.clone();
    if waypoints.len() == 2 {
        let mid = (&waypoints[0] + &waypoints[1]) * 0.5;
        waypoints.insert(1, mid);
    }
    let mut paths: Vec<CartesianPath> = (0..model.n_control_points())
        .map(|i| CartesianPath { control_point: i, samples: Vec::with_capacity(waypoints.len()) })
        .collect();
    for q in &waypoints {
        for (path, p) in paths.iter_mut().zip(control_point_positions(model, q)?) {
            path.samples.push(p);
        }
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extracted {
    Unit(Vec3),
    /// The defining cross product vanished.
    Degenerate,
    /// The path never entered the interaction ball.
    NoInteraction,
}

impl Extracted {
    pub fn unit(&self) -> Option<Vec3> {
        match self {
            Extracted::Unit(v) => Some(*v),
            _ => None,
        }
    }
}

fn normalized_cross(a: &Vec3, b: &Vec3) -> Extracted {
    let c = a.cross(b);
    let n = c.norm();
    if n < EPS_CROSS {
        Extracted::Degenerate
    } else {
        Extracted::Unit(c / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg1Output {
    pub b: Extracted,
    /// Index of the closest path sample.
    pub tau: usize,
    pub p_c: Vec3,
    pub v_c: Vec3,
    /// Closest obstacle point.
    pub obstacle_point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2Output {
    pub b: Extracted,
    /// `(tau_min, tau, tau_max)` when the path enters the ball.
    pub window: Option<(usize, usize, usize)>,
}

fn nearest_point(points: &[Vec3], grid: &SpatialGrid, x: &Vec3) -> (usize, f64) {
    grid.nearest(points, x).expect("obstacle has points")
}

/// Closest-approach extraction: `b = unit(d_c x v_c)` at the path sample
/// closest to the obstacle, with the central difference index clamped to the
/// path interior.
pub fn extract_alg1(path: &CartesianPath, points: &[Vec3]) -> Alg1Output {
    let grid = SpatialGrid::build(points, GRID_CELL);
    alg1_indexed(path, points, &grid)
}

fn alg1_indexed(path: &CartesianPath, points: &[Vec3], grid: &SpatialGrid) -> Alg1Output {
    let s = &path.samples;
    assert!(s.len() >= 3, "path needs at least three samples");
    let mut tau = 0;
    let mut best = (0usize, f64::INFINITY);
    for (t, x) in s.iter().enumerate() {
        let (k, d) = nearest_point(points, grid, x);
        if d < best.1 {
            best = (k, d);
            tau = t;
        }
    }
    let p_c = s[tau];
    let tc = tau.clamp(1, s.len() - 2);
    let v_c = s[tc + 1] - s[tc - 1];
    let obstacle_point = points[best.0];
    let d_c = obstacle_point - p_c;
    Alg1Output { b: normalized_cross(&d_c, &v_c), tau, p_c, v_c, obstacle_point }
}

/// Pass-through extraction: entry and exit samples of the ball of radius `r`
/// around the obstacle and the sample halfway between them give
/// `b = unit(v_in x v_out)`.
pub fn extract_alg2(path: &CartesianPath, points: &[Vec3], r: f64) -> Alg2Output {
    let grid = SpatialGrid::build(points, GRID_CELL);
    alg2_indexed(path, points, &grid, r)
}

fn alg2_indexed(path: &CartesianPath, points: &[Vec3], grid: &SpatialGrid, r: f64) -> Alg2Output {
    let s = &path.samples;
    let inside: Vec<usize> = (0..s.len()).filter(|&t| nearest_point(points, grid, &s[t]).1 <= r).collect();
    let (Some(&t_min), Some(&t_max)) = (inside.first(), inside.last()) else {
        return Alg2Output { b: Extracted::NoInteraction, window: None };
    };
    let tau = (t_min + t_max) / 2;
    let v_in = s[t_min] - s[tau];
    let v_out = s[t_max] - s[tau];
    Alg2Output { b: normalized_cross(&v_in, &v_out), window: Some((t_min, tau, t_max)) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Best,
    Alg1,
    Alg2,
    /// Bootstrap field before any extraction.
    Default,
}

/// Where a stored vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    Extracted,
    /// Pass-through extraction had no usable answer; the closest-approach vector was substituted.
    Alg1Substitute,
    /// Closest-approach extraction was degenerate; a vector perpendicular to the motion was chosen.
    Perpendicular,
    /// Never extracted (bootstrap).
    Default,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagneticFieldSet {
    /// `b[i][j]` for control point `i` and obstacle `j`.
    pub b: Vec<Vec<Vec3>>,
    pub sources: Vec<Vec<EntrySource>>,
    pub provenance: Provenance,
    pub snapshot_time: f64,
}

impl MagneticFieldSet {
    /// Every entry set to `v`, marked as default.
    pub fn uniform(n_cp: usize, n_obstacles: usize, v: Vec3, snapshot_time: f64) -> Self {
        let v = v.normalize();
        Self {
            b: vec![vec![v; n_obstacles]; n_cp],
            sources: vec![vec![EntrySource::Default; n_obstacles]; n_cp],
            provenance: Provenance::Default,
            snapshot_time,
        }
    }

    pub fn n_control_points(&self) -> usize {
        self.b.len()
    }

    pub fn n_obstacles(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Deterministic unit vector perpendicular to `v`.
pub fn perpendicular_fallback(v: &Vec3) -> Vec3 {
    v.cross(&Vec3::z()).try_normalize(EPS_CROSS).unwrap_or_else(Vec3::y)
}

/// Per-entry diagnostics of [`build_field_sets`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryDiagnostics {
    pub control_point: usize,
    pub obstacle: usize,
    pub alg1: Alg1Output,
    pub alg2: Alg2Output,
}

/// Field sets from both extractors plus per-entry diagnostics.
#[derive(Debug, Clone)]
pub struct FieldSets {
    pub alg1: MagneticFieldSet,
    pub alg2: MagneticFieldSet,
    pub diagnostics: Vec<EntryDiagnostics>,
}

fn extract_entry(path: &CartesianPath, obs: &ObstacleState, r: f64) -> EntryDiagnostics {
    EntryDiagnostics {
        control_point: path.control_point,
        obstacle: obs.id,
        alg1: alg1_indexed(path, &obs.points, obs.grid()),
        alg2: alg2_indexed(path, &obs.points, obs.grid(), r),
    }
}

/// Runs both extractors for every (control point, obstacle) pair of the
/// planning snapshot. Unusable pass-through entries take the closest-approach vector;
/// degenerate closest-approach entries take [`perpendicular_fallback`] of the motion direction.
pub fn build_field_sets(model: &RobotModel, traj: &GlobalTrajectory, snapshot: &WorldSnapshot, r: f64) -> Result<FieldSets> {
    let paths = cartesian_paths(model, traj)?;
    let n_o = snapshot.n_obstacles();
    let t = snapshot.t();
    let mut alg1 = MagneticFieldSet::uniform(paths.len(), n_o, Vec3::z(), t).with_provenance(Provenance::Alg1);
    let mut alg2 = MagneticFieldSet::uniform(paths.len(), n_o, Vec3::z(), t).with_provenance(Provenance::Alg2);
    let mut diagnostics = Vec::with_capacity(paths.len() * n_o);
    for path in &paths {
        let i = path.control_point;
        for obs in snapshot.obstacles() {
            let j = obs.id;
            let e = extract_entry(path, obs, r);
            let (b1, s1) = match e.alg1.b {
                Extracted::Unit(v) => (v, EntrySource::Extracted),
                _ => (perpendicular_fallback(&e.alg1.v_c), EntrySource::Perpendicular),
            };
            let (b2, s2) = match e.alg2.b {
                Extracted::Unit(v) => (v, EntrySource::Extracted),
                _ => (b1, EntrySource::Alg1Substitute),
            };
            alg1.b[i][j] = b1;
            alg1.sources[i][j] = s1;
            alg2.b[i][j] = b2;
            alg2.sources[i][j] = s2;
            diagnostics.push(e);
        }
    }
    Ok(FieldSets { alg1, alg2, diagnostics })
}
