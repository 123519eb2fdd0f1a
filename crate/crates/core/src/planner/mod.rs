//! Configuration-space pre-planners. Their coarse joint paths are not
//! executed; they only feed the field extraction.

mod prm;
mod rrt;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::Sender;
use nalgebra::Isometry3;

use crate::error::{Error, Result};
use crate::kinematics::{ik_solve_filtered, link_frames, sphere_centers, IkConfig, RobotModel};
use crate::world::{any_sphere_within, WorldSnapshot};
use crate::JointVector;

pub use prm::plan_prm;
pub use rrt::plan_rrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlannerSource {
    Prm,
    Rrt,
}

impl PlannerSource {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerSource::Prm => "prm",
            PlannerSource::Rrt => "rrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrajectory {
    pub waypoints: Vec<JointVector>,
    pub source: PlannerSource,
    pub snapshot_time: f64,
    /// Wall-clock seconds spent planning.
    pub plan_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerBudget {
    pub t_global: f64,
    /// PRM roadmap samples, or RRT extension attempts.
    pub max_samples: usize,
    /// Largest joint-space distance between consecutive output waypoints, and
    /// the RRT extension step.
    pub step_max: f64,
    /// Required clearance `c_plan` of every checked configuration.
    pub clearance: f64,
    pub rng_seed: u64,
    /// PRM neighbours per node.
    pub neighbors: usize,
    /// Joint-space spacing of edge collision checks.
    pub edge_resolution: f64,
    /// Abort when `t_global` wall-clock seconds have passed. Disabling it makes
    /// the result depend on the seed alone.
    pub wall_clock: bool,
}

impl Default for PlannerBudget {
    fn default() -> Self {
        Self {
            t_global: 0.2,
            max_samples: 300,
            step_max: 0.3,
            clearance: 0.01,
            rng_seed: 0,
            neighbors: 10,
            edge_resolution: 0.05,
            wall_clock: true,
        }
    }
}

impl PlannerBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_global > 0.0
            && self.max_samples > 0
            && self.step_max > 0.0
            && self.clearance >= 0.0
            && self.neighbors > 0
            && self.edge_resolution > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("planner budget values must be positive".into()))
        }
    }
}

/// Joint limits hold and every collision sphere keeps more than `clearance`
/// from every obstacle point.
pub fn config_collision_free(model: &RobotModel, q: &JointVector, snapshot: &WorldSnapshot, clearance: f64) -> bool {
    if q.len() != model.dof() || !model.within_limits(q) {
        return false;
    }
    let Ok(frames) = link_frames(model, q) else { return false };
    !any_sphere_within(snapshot, model, &sphere_centers(model, &frames), clearance)
}

/// Straight joint-space edge checked at spacing at most `resolution`.
pub fn edge_collision_free(
    model: &RobotModel,
    q_a: &JointVector,
    q_b: &JointVector,
    snapshot: &WorldSnapshot,
    clearance: f64,
    resolution: f64,
) -> bool {
    let n = ((q_b - q_a).norm() / resolution).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let s = k as f64 / n as f64;
        config_collision_free(model, &q_a.lerp(q_b, s), snapshot, clearance)
    })
}

/// Inserts evenly spaced points so consecutive waypoints are at most `step`
/// apart.
pub fn subdivide(path: &[JointVector], step: f64) -> Vec<JointVector> {
    let mut out = Vec::with_capacity(path.len());
    for w in path.windows(2) {
        let n = ((&w[1] - &w[0]).norm() / step).ceil().max(1.0) as usize;
        for k in 0..n {
            out.push(w[0].lerp(&w[1], k as f64 / n as f64));
        }
    }
    if let Some(last) = path.last() {
        out.push(last.clone());
    }
    out
}

/// Independent re-check of a trajectory against a snapshot.
pub fn validate_trajectory(
    model: &RobotModel,
    traj: &GlobalTrajectory,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
) -> std::result::Result<(), String> {
    let w = &traj.waypoints;
    if w.len() < 2 {
        return Err(format!("{} waypoints", w.len()));
    }
    for (k, q) in w.iter().enumerate() {
        if !config_collision_free(model, q, snapshot, budget.clearance) {
            return Err(format!("waypoint {k} in collision"));
        }
    }
    for (k, pair) in w.windows(2).enumerate() {
        let gap = (&pair[1] - &pair[0]).norm();
        if gap > budget.step_max * (1.0 + 1e-9) {
            return Err(format!("edge {k} spans {gap:.4} rad"));
        }
        if !edge_collision_free(model, &pair[0], &pair[1], snapshot, budget.clearance, budget.edge_resolution) {
            return Err(format!("edge {k} in collision"));
        }
    }
    Ok(())
}

/// Wall-clock guard shared by the planners.
pub(crate) struct Deadline(Option<Instant>);

impl Deadline {
    pub(crate) fn new(budget: &PlannerBudget, started: Instant) -> Self {
        Deadline(budget.wall_clock.then(|| started + Duration::from_secs_f64(budget.t_global)))
    }

    pub(crate) fn expired(&self) -> bool {
        self.0.is_some_and(|d| Instant::now() >= d)
    }
}

pub(crate) fn check_endpoints(
    model: &RobotModel,
    q_start: &JointVector,
    q_goal: &JointVector,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
) -> Result<()> {
    budget.validate()?;
    crate::error::check_dim(model.dof(), q_start.len())?;
    crate::error::check_dim(model.dof(), q_goal.len())?;
    if !config_collision_free(model, q_start, snapshot, budget.clearance) {
        return Err(Error::PlanningFailed("start configuration in collision".into()));
    }
    if !config_collision_free(model, q_goal, snapshot, budget.clearance) {
        return Err(Error::PlanningFailed("goal configuration in collision".into()));
    }
    Ok(())
}

pub(crate) fn finish(
    path: Vec<JointVector>,
    source: PlannerSource,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
    started: Instant,
) -> GlobalTrajectory {
    GlobalTrajectory {
        waypoints: subdivide(&path, budget.step_max),
        source,
        snapshot_time: snapshot.t(),
        plan_duration: started.elapsed().as_secs_f64(),
    }
}

/// Runs the selected planner.
pub fn plan(
    source: PlannerSource,
    model: &RobotModel,
    q_start: &JointVector,
    q_goal: &JointVector,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
) -> Result<GlobalTrajectory> {
    match source {
        PlannerSource::Prm => plan_prm(model, q_start, q_goal, snapshot, budget),
        PlannerSource::Rrt => plan_rrt(model, q_start, q_goal, snapshot, budget),
    }
}

/// Collision-free IK solution for the goal pose, seeded from `q_seed`.
pub fn goal_configuration(
    model: &RobotModel,
    goal: &Isometry3<f64>,
    q_seed: &JointVector,
    snapshot: &WorldSnapshot,
    clearance: f64,
    ik: &IkConfig,
) -> Result<JointVector> {
    ik_solve_filtered(model, goal, q_seed, ik, |q| config_collision_free(model, q, snapshot, clearance))
}

/// Output of one planning cycle.
#[derive(Debug, Clone)]
pub enum PlanningEvent {
    Trajectory(GlobalTrajectory),
    Failure { snapshot_time: f64, reason: String },
}

/// Periodic planner: every `t_global` seconds it captures the newest world
/// snapshot and robot configuration, plans towards the (cached) goal
/// configuration and publishes the outcome. Returns once `stop` is set or the
/// receiver is gone.
#[allow(clippy::too_many_arguments)]
pub fn planning_loop<W, S>(
    model: &RobotModel,
    goal: &Isometry3<f64>,
    source: PlannerSource,
    world_source: W,
    state_source: S,
    budget: &PlannerBudget,
    ik: &IkConfig,
    sink: &Sender<PlanningEvent>,
    stop: &AtomicBool,
) where
    W: Fn() -> Arc<WorldSnapshot>,
    S: Fn() -> JointVector,
{
    let mut cached_goal: Option<JointVector> = None;
    let period = Duration::from_secs_f64(budget.t_global);
    let mut cycle = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let started = Instant::now();
        let snapshot = world_source();
        let q = state_source();
        let goal_q = match cached_goal.take().filter(|g| config_collision_free(model, g, &snapshot, budget.clearance)) {
            Some(g) => Ok(g),
            None => goal_configuration(model, goal, &q, &snapshot, budget.clearance, ik),
        };
        let event = match goal_q {
            Err(e) => PlanningEvent::Failure { snapshot_time: snapshot.t(), reason: e.to_string() },
            Ok(g) => {
                let cycle_budget = PlannerBudget { rng_seed: budget.rng_seed.wrapping_add(cycle), ..*budget };
                let remaining = budget.t_global - started.elapsed().as_secs_f64();
                let result = if remaining <= 0.0 {
                    Err(Error::PlanningFailed("budget exhausted".into()))
                } else {
                    plan(source, model, &q, &g, &snapshot, &PlannerBudget { t_global: remaining, ..cycle_budget })
                };
                cached_goal = Some(g);
                match result {
                    Ok(mut traj) => {
                        traj.plan_duration = started.elapsed().as_secs_f64();
                        PlanningEvent::Trajectory(traj)
                    }
                    Err(e) => PlanningEvent::Failure { snapshot_time: snapshot.t(), reason: e.to_string() },
                }
            }
        };
        if sink.send(event).is_err() {
            return;
        }
        cycle += 1;
        let spent = started.elapsed();
        if spent < period {
            std::thread::sleep(period - spent);
        }
    }
}

#[cfg(test)]
pub(crate) mod test_worlds {
    use crate::world::{MotionScript, PointCloudObstacle, Primitive, WorldSnapshot};
    use crate::Vec3;

    pub fn box_at(id: usize, center: Vec3, half: Vec3) -> PointCloudObstacle {
        PointCloudObstacle::from_primitive(id, &Primitive::Box { half_extents: half }, 0.03, center, MotionScript::Static).unwrap()
    }

    pub fn single_box(center: Vec3, half: Vec3) -> WorldSnapshot {
        WorldSnapshot::new(vec![box_at(0, center, half)], 0.0).unwrap()
    }
}
