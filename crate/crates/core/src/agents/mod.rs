//! Predictive agents: copies of the robot rolled out in a frozen snapshot with
//! one candidate parameter set each, ranked by a cost and monitored against
//! the real robot.

mod cfp;
mod pool;

use std::sync::Arc;

use crate::control::{compute_command_with, step_agent_dynamics, AvoidanceMode, CommandContext};
use crate::error::{Error, Result};
use crate::extraction::MagneticFieldSet;
use crate::forces::{GoalPose, SteeringParameters};
use crate::kinematics::{orientation_error, sphere_centers, JointState, KinematicState, RobotModel};
use crate::world::{capped_clearance, WorldSnapshot};
use crate::{Vec3, Vec6};

pub use cfp::{branch_candidates, rollout_slice_branching};
pub use pool::{AgentPool, BestParameters, CohortOutcome, RolloutWorkers};

/// How a parameter set differs from the one it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variation {
    Base,
    /// Circular-field gain multiplied by the factor relative to the nominal gain.
    CfGain(f64),
    /// Field vector of one (control point, obstacle) pair replaced during a
    /// proximity-triggered branch.
    Branch { control_point: usize, obstacle: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub steering: SteeringParameters,
    pub fields: Arc<MagneticFieldSet>,
    pub variation: Variation,
}

impl ParameterSet {
    pub fn new(steering: SteeringParameters, fields: MagneticFieldSet) -> Self {
        Self { steering, fields: Arc::new(fields), variation: Variation::Base }
    }

    /// Gain factor relative to the nominal parameters.
    fn gain(&self) -> f64 {
        match self.variation {
            Variation::CfGain(g) => g,
            _ => 1.0,
        }
    }

    /// Steering parameters with any gain variation undone.
    pub fn nominal_steering(&self) -> SteeringParameters {
        SteeringParameters { k_cf: self.steering.k_cf / self.gain(), ..self.steering }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Running,
    Queued,
    ReachedGoal,
    Collided,
    Deviated,
    /// Stopped by the step timeout.
    Stopped,
}

impl AgentStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, AgentStatus::Running | AgentStatus::Queued)
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: u64,
    pub params: ParameterSet,
    pub snapshot: Arc<WorldSnapshot>,
    /// Time of the first predicted sample.
    pub start_time: f64,
    pub state: JointState,
    pub ee_velocity: Vec6,
    /// `predicted[k]` is the state at `start_time + k * rollout_dt`; index 0 is
    /// the spawn state.
    pub predicted: Vec<JointState>,
    pub ee_path: Vec<Vec3>,
    /// Clearance per predicted sample, capped at `c_safe`.
    pub clearances: Vec<f64>,
    pub status: AgentStatus,
    pub cost: Option<f64>,
    pub steps_used: usize,
    /// Proximity already seen per `[control point][obstacle]` (branching only).
    pub encountered: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameworkConfig {
    /// Prediction steps per slice.
    pub n_ps: usize,
    pub max_parallel: usize,
    /// Joint-space deviation (rad, Euclidean norm) that deletes an agent.
    pub deviation_limit: f64,
    pub rollout_dt: f64,
    pub n_agent_extras: usize,
    pub lambda_time: f64,
    pub lambda_len: f64,
    pub lambda_clear: f64,
    pub c_safe: f64,
    /// EE position tolerance for reaching the goal.
    pub goal_tolerance: f64,
    pub orientation_tolerance: f64,
    /// An agent is stopped after this many slices without a terminal status.
    pub timeout_slices: usize,
    /// Upper bound on agents alive at once in proximity-branching mode.
    pub max_branch_agents: usize,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            n_ps: 50,
            max_parallel: 4,
            deviation_limit: 0.2,
            rollout_dt: 0.01,
            n_agent_extras: 2,
            lambda_time: 1.0,
            lambda_len: 1.0,
            lambda_clear: 10.0,
            c_safe: 0.05,
            goal_tolerance: 0.1,
            orientation_tolerance: 0.1,
            timeout_slices: 50,
            max_branch_agents: 16,
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_ps > 0
            && self.max_parallel > 0
            && self.deviation_limit > 0.0
            && self.rollout_dt > 0.0
            && self.lambda_time >= 0.0
            && self.lambda_len >= 0.0
            && self.lambda_clear >= 0.0
            && self.c_safe > 0.0
            && self.goal_tolerance > 0.0
            && self.orientation_tolerance > 0.0
            && self.timeout_slices > 0
            && self.max_branch_agents > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("framework parameters must be positive".into()))
        }
    }

    /// Steps after which an agent is stopped.
    pub fn timeout_steps(&self) -> usize {
        self.timeout_slices * self.n_ps
    }
}

/// EE within the position and orientation tolerances of the goal.
pub fn at_goal(pose: &nalgebra::Isometry3<f64>, goal: &GoalPose, config: &FrameworkConfig) -> bool {
    (goal.position - pose.translation.vector).norm() <= config.goal_tolerance
        && orientation_error(&goal.orientation, &pose.rotation).norm() <= config.orientation_tolerance
}

impl Agent {
    /// A fresh agent at `state`. Its initial sample is evaluated immediately.
    pub fn new(
        id: u64,
        params: ParameterSet,
        snapshot: Arc<WorldSnapshot>,
        state: JointState,
        ee_velocity: Vec6,
        model: &RobotModel,
        config: &FrameworkConfig,
    ) -> Result<Self> {
        let kin = KinematicState::new(model, &state.q)?;
        let clearance = capped_clearance(&snapshot, model, &sphere_centers(model, &kin.frames), config.c_safe);
        let n_o = snapshot.n_obstacles();
        Ok(Self {
            id,
            params,
            snapshot,
            start_time: state.t,
            predicted: vec![state.clone()],
            ee_path: vec![kin.ee_pose.translation.vector],
            clearances: vec![clearance],
            state,
            ee_velocity,
            status: AgentStatus::Running,
            cost: None,
            steps_used: 0,
            encountered: vec![vec![false; n_o]; model.n_control_points()],
        })
    }

    /// Predicted duration so far.
    pub fn duration(&self, config: &FrameworkConfig) -> f64 {
        self.steps_used as f64 * config.rollout_dt
    }

    pub fn summary(&self, config: &FrameworkConfig) -> PredictionSummary<'_> {
        PredictionSummary {
            status: self.status,
            duration: self.duration(config),
            ee_path: &self.ee_path,
            clearances: &self.clearances,
            dt: config.rollout_dt,
        }
    }

    fn finish(&mut self, status: AgentStatus, config: &FrameworkConfig) {
        self.status = status;
        self.cost = Some(evaluate_cost(&self.summary(config), config));
    }
}

/// New agents for a field delivery: `(P_best, B_best)` when a best set
/// exists, `(P_best, B_alg1)`, `(P_best, B_alg2)`, then the extras, which
/// scale the nominal circular-field gain by 1/2, 2, 1/4, 4, ... and alternate
/// between the two new field sets in pairs.
#[allow(clippy::too_many_arguments)]
pub fn spawn_on_fields(
    p_best: &ParameterSet,
    has_best: bool,
    b_alg1: &Arc<MagneticFieldSet>,
    b_alg2: &Arc<MagneticFieldSet>,
    state: &JointState,
    ee_velocity: &Vec6,
    snapshot: &Arc<WorldSnapshot>,
    first_id: u64,
    model: &RobotModel,
    config: &FrameworkConfig,
) -> Result<Vec<Agent>> {
    let nominal = p_best.nominal_steering();
    let base = |fields: &Arc<MagneticFieldSet>| ParameterSet {
        steering: p_best.steering,
        fields: fields.clone(),
        variation: p_best.variation,
    };
    let mut sets = Vec::with_capacity(3 + config.n_agent_extras);
    if has_best {
        sets.push(p_best.clone());
    }
    sets.push(base(b_alg1));
    sets.push(base(b_alg2));
    for e in 0..config.n_agent_extras {
        let power = (e / 2 + 1) as i32;
        let factor = if e % 2 == 0 { 0.5f64.powi(power) } else { 2f64.powi(power) };
        let fields = if (e / 2) % 2 == 0 { b_alg1 } else { b_alg2 };
        sets.push(ParameterSet {
            steering: SteeringParameters { k_cf: nominal.k_cf * factor, ..nominal },
            fields: fields.clone(),
            variation: Variation::CfGain(factor),
        });
    }
    sets.into_iter()
        .enumerate()
        .map(|(k, p)| Agent::new(first_id + k as u64, p, snapshot.clone(), state.clone(), *ee_velocity, model, config))
        .collect()
}

/// Advances a running or queued agent by up to `n_ps` steps of the command
/// pipeline in its own snapshot. Ends as `ReachedGoal`, `Collided`,
/// `Stopped` (timeout) or `Queued`.
pub fn rollout_slice(agent: Agent, model: &RobotModel, goal: &GoalPose, config: &FrameworkConfig) -> Result<Agent> {
    rollout_slice_branching(agent, model, goal, config, None).map(|(a, _)| a)
}

pub(crate) fn rollout_core<F>(mut agent: Agent, model: &RobotModel, goal: &GoalPose, config: &FrameworkConfig, mut after_step: F) -> Result<Agent>
where
    F: FnMut(&mut Agent, &KinematicState),
{
    if agent.status.is_terminal() {
        return Ok(agent);
    }
    agent.status = AgentStatus::Running;
    let params = agent.params.clone();
    let snapshot = agent.snapshot.clone();
    let ctx = CommandContext {
        model,
        snapshot: &snapshot,
        goal,
        params: &params.steering,
        fields: &params.fields.b,
        mode: AvoidanceMode::CIRCULAR_FIELD,
    };
    let mut kin = KinematicState::new(model, &agent.state.q)?;
    if agent.steps_used == 0 && at_goal(&kin.ee_pose, goal, config) {
        agent.finish(AgentStatus::ReachedGoal, config);
        return Ok(agent);
    }
    for _ in 0..config.n_ps {
        let out = compute_command_with(&ctx, kin, &agent.state, &agent.ee_velocity, config.rollout_dt)?;
        let step = step_agent_dynamics(&agent.state, &out.command.qdot, config.rollout_dt, model)?;
        agent.state = step.state;
        agent.ee_velocity = step.ee_velocity;
        agent.steps_used += 1;
        kin = KinematicState::new(model, &agent.state.q)?;
        let clearance = capped_clearance(&snapshot, model, &sphere_centers(model, &kin.frames), config.c_safe);
        agent.predicted.push(agent.state.clone());
        agent.ee_path.push(kin.ee_pose.translation.vector);
        agent.clearances.push(clearance);
        if clearance <= 0.0 {
            agent.finish(AgentStatus::Collided, config);
            return Ok(agent);
        }
        if at_goal(&kin.ee_pose, goal, config) {
            agent.finish(AgentStatus::ReachedGoal, config);
            return Ok(agent);
        }
        if agent.steps_used >= config.timeout_steps() {
            agent.finish(AgentStatus::Stopped, config);
            return Ok(agent);
        }
        after_step(&mut agent, &kin);
    }
    agent.status = AgentStatus::Queued;
    Ok(agent)
}

/// Inputs of [`evaluate_cost`].
#[derive(Debug, Clone, Copy)]
pub struct PredictionSummary<'a> {
    pub status: AgentStatus,
    /// Predicted time until the terminal sample.
    pub duration: f64,
    pub ee_path: &'a [Vec3],
    /// Clearance per sample; the first (spawn) sample is not integrated.
    pub clearances: &'a [f64],
    pub dt: f64,
}

/// `lambda_time * T + lambda_len * L + lambda_clear * sum(max(0, c_safe - c_k) dt)`;
/// `+inf` after a collision, plus `lambda_time * horizon` when stopped by the
/// timeout.
pub fn evaluate_cost(summary: &PredictionSummary<'_>, config: &FrameworkConfig) -> f64 {
    if summary.status == AgentStatus::Collided {
        return f64::INFINITY;
    }
    let length: f64 = summary.ee_path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let penalty: f64 = summary.clearances.iter().skip(1).map(|&c| (config.c_safe - c).max(0.0) * summary.dt).sum();
    let mut cost = config.lambda_time * summary.duration + config.lambda_len * length + config.lambda_clear * penalty;
    if summary.status == AgentStatus::Stopped {
        cost += config.lambda_time * config.timeout_steps() as f64 * config.rollout_dt;
    }
    cost
}

/// Index of the agent with the lowest finite cost. Ties prefer the newer
/// snapshot, then the lower id. `None` signals that the fallback governs.
pub fn select_best(agents: &[&Agent]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, a) in agents.iter().enumerate() {
        let Some(c) = a.cost.filter(|c| c.is_finite()) else { continue };
        if a.status == AgentStatus::Collided || a.status == AgentStatus::Deviated {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let o = agents[b];
                let oc = o.cost.unwrap();
                let better = c < oc
                    || (c == oc && (a.snapshot.t() > o.snapshot.t() || (a.snapshot.t() == o.snapshot.t() && a.id < o.id)));
                if better {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Delete,
}

/// Compares real samples `(t, q)` with the agent's prediction at the nearest
/// predicted time. Deletes on a strict excess of `deviation_limit` or when a
/// sample lies beyond the predicted horizon.
pub fn monitor_deviation<'a, I>(real: I, agent: &Agent, config: &FrameworkConfig) -> Verdict
where
    I: IntoIterator<Item = &'a JointState>,
{
    for s in real {
        let k = ((s.t - agent.start_time) / config.rollout_dt).round();
        if k < 0.0 {
            continue;
        }
        let Some(pred) = agent.predicted.get(k as usize) else { return Verdict::Delete };
        if (&s.q - &pred.q).norm() > config.deviation_limit {
            return Verdict::Delete;
        }
    }
    Verdict::Keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GovernorMode {
    Normal,
    Fallback,
}

/// Normal iff some agent reached the goal and has not been invalidated.
pub fn fallback_governor<'a, I>(agents: I) -> GovernorMode
where
    I: IntoIterator<Item = &'a Agent>,
{
    if agents.into_iter().any(|a| a.status == AgentStatus::ReachedGoal) {
        GovernorMode::Normal
    } else {
        GovernorMode::Fallback
    }
}
