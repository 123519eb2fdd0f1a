//! From task-space forces to joint-velocity commands, and the simplified
//! dynamics used both by the simulated robot and by predictive agents.

use nalgebra::DMatrix;

use crate::error::{check_dim, Result};
use crate::forces::{
    aggregate_force, joint_limit_avoidance, steering_force_ee, EeAvoidance, GoalPose, PointLaw, SteeringForce,
    SteeringParameters,
};
use crate::kinematics::{pseudoinverse, JointState, KinematicState, RobotModel};
use crate::world::WorldSnapshot;
use crate::{Error, JointVector, Vec3, Vec6};

#[derive(Debug, Clone)]
pub struct CommandInputs {
    pub q: JointVector,
    pub qdot: JointVector,
    pub ee_velocity: Vec6,
    pub steering: Vec6,
    /// Forces on the body control points, EE excluded, in model order.
    pub cp_forces: Vec<Vec3>,
    pub dt: f64,
}

/// `J_ee^# f`, with the damping flag of the pseudoinverse.
pub fn ee_task_acceleration(j_ee: &DMatrix<f64>, f_see: &Vec6) -> Result<(JointVector, bool)> {
    check_dim(6, j_ee.nrows())?;
    let pinv = pseudoinverse(j_ee);
    Ok((&pinv.matrix * f_see, pinv.damped))
}

/// `sum_i J_i^T f_i`.
pub fn body_accelerations(cp_jacobians: &[&DMatrix<f64>], cp_forces: &[Vec3]) -> Result<JointVector> {
    check_dim(cp_jacobians.len(), cp_forces.len())?;
    let n = cp_jacobians.first().map_or(0, |j| j.ncols());
    let mut acc = JointVector::zeros(n);
    for (j, f) in cp_jacobians.iter().zip(cp_forces) {
        check_dim(3, j.nrows())?;
        check_dim(n, j.ncols())?;
        acc += j.transpose() * f;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    pub qdot: JointVector,
    /// Some component hit its velocity limit.
    pub velocity_clamped: bool,
}

/// `qdot_d + (qdd_ee + qdd_cp + qdd_jla) dt` with `qdot_d = J_ee^# xdot_ee`,
/// clamped per joint to the velocity limits.
pub fn joint_command(
    inputs: &CommandInputs,
    qdd_ee: &JointVector,
    qdd_cp: &JointVector,
    qdd_jla: &JointVector,
    model: &RobotModel,
) -> Result<JointCommand> {
    let j = crate::kinematics::jacobian(model, &inputs.q, model.ee_index())?;
    let pinv = pseudoinverse(&j);
    command_from_parts(&pinv.matrix, inputs, qdd_ee, qdd_cp, qdd_jla, model)
}

fn command_from_parts(
    ee_pinv: &DMatrix<f64>,
    inputs: &CommandInputs,
    qdd_ee: &JointVector,
    qdd_cp: &JointVector,
    qdd_jla: &JointVector,
    model: &RobotModel,
) -> Result<JointCommand> {
    let n = model.dof();
    for v in [qdd_ee, qdd_cp, qdd_jla] {
        check_dim(n, v.len())?;
    }
    if !(inputs.dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be > 0".into()));
    }
    let qdot_d = ee_pinv * inputs.ee_velocity;
    let mut qdot = qdot_d + (qdd_ee + qdd_cp + qdd_jla) * inputs.dt;
    let mut velocity_clamped = false;
    for (v, &lim) in qdot.iter_mut().zip(model.velocity_limits()) {
        if v.abs() > lim {
            *v = v.signum() * lim;
            velocity_clamped = true;
        }
    }
    Ok(JointCommand { qdot, velocity_clamped })
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: JointState,
    pub ee_velocity: Vec6,
    /// Some joint position was clamped to its limit.
    pub position_clamped: bool,
}

/// Perfect tracking of the command over one step:
/// `q += qdot_cmd dt`, `qdot = qdot_cmd`, `xdot_ee = J_ee(q_new) qdot`.
pub fn step_agent_dynamics(state: &JointState, qdot_cmd: &JointVector, dt: f64, model: &RobotModel) -> Result<StepResult> {
    check_dim(model.dof(), state.q.len())?;
    check_dim(model.dof(), qdot_cmd.len())?;
    let mut q = &state.q + qdot_cmd * dt;
    let position_clamped = model.clamp_to_limits(&mut q);
    let j = crate::kinematics::jacobian(model, &q, model.ee_index())?;
    let twist = &j * qdot_cmd;
    let ee_velocity = Vec6::from_iterator(twist.iter().copied());
    Ok(StepResult { state: JointState { q, qdot: qdot_cmd.clone(), t: state.t + dt }, ee_velocity, position_clamped })
}

/// Force law applied at the body control points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyAvoidance {
    /// Circular field plus the repulsive circular-field-like term.
    CircularField,
    /// Pure distance-based repulsion.
    Fallback,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvoidanceMode {
    pub ee: EeAvoidance,
    pub body: BodyAvoidance,
}

impl AvoidanceMode {
    pub const CIRCULAR_FIELD: Self = Self { ee: EeAvoidance::CircularField, body: BodyAvoidance::CircularField };
    pub const FALLBACK: Self = Self { ee: EeAvoidance::CircularField, body: BodyAvoidance::Fallback };
    pub const POTENTIAL_FIELD: Self = Self { ee: EeAvoidance::PotentialField, body: BodyAvoidance::Fallback };
    pub const ATTRACT_ONLY: Self = Self { ee: EeAvoidance::None, body: BodyAvoidance::None };
}

/// Everything the command pipeline reads besides the robot state.
#[derive(Clone, Copy)]
pub struct CommandContext<'a> {
    pub model: &'a RobotModel,
    pub snapshot: &'a WorldSnapshot,
    pub goal: &'a GoalPose,
    pub params: &'a SteeringParameters,
    /// Field vectors indexed `[control point][obstacle id]`.
    pub fields: &'a [Vec<Vec3>],
    pub mode: AvoidanceMode,
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub command: JointCommand,
    pub steering: SteeringForce,
    pub kinematics: KinematicState,
    /// The pseudoinverse of the EE Jacobian was damped.
    pub damped: bool,
    /// Some control point had obstacle points in range.
    pub obstacles_in_range: bool,
    pub distance_clamped: bool,
}

/// The full pipeline: kinematics, forces, joint accelerations, command.
/// A pure function of its inputs.
pub fn compute_command(ctx: &CommandContext<'_>, state: &JointState, ee_velocity: &Vec6, dt: f64) -> Result<CommandOutput> {
    let kin = KinematicState::new(ctx.model, &state.q)?;
    compute_command_with(ctx, kin, state, ee_velocity, dt)
}

/// [`compute_command`] with the kinematics of `state.q` already evaluated.
pub fn compute_command_with(
    ctx: &CommandContext<'_>,
    kin: KinematicState,
    state: &JointState,
    ee_velocity: &Vec6,
    dt: f64,
) -> Result<CommandOutput> {
    let model = ctx.model;
    check_dim(model.n_control_points(), ctx.fields.len())?;
    let ee = model.ee_index();
    let steering = steering_force_ee(
        &kin.ee_pose,
        ee_velocity,
        ctx.snapshot,
        &ctx.fields[ee],
        ctx.goal,
        ctx.params,
        ctx.mode.ee,
    );
    let mut obstacles_in_range = false;
    let mut distance_clamped = false;
    if ctx.mode.ee != EeAvoidance::None {
        ctx.snapshot.for_each_in_range(&kin.cp_positions[ee], ctx.params.d_range, |_, _, _| obstacles_in_range = true);
    }

    let n_body = model.n_control_points() - 1;
    let mut body_jacobians = Vec::with_capacity(n_body);
    let mut body_forces = Vec::with_capacity(n_body);
    for i in (0..model.n_control_points()).filter(|&i| i != ee) {
        let jac = &kin.cp_jacobians[i];
        let f = match ctx.mode.body {
            BodyAvoidance::None => Vec3::zeros(),
            mode => {
                let x = kin.cp_positions[i];
                let xdot = jac * &state.qdot;
                let xdot = Vec3::new(xdot[0], xdot[1], xdot[2]);
                let law = if mode == BodyAvoidance::Fallback { PointLaw::Fallback } else { PointLaw::CircularFieldWithRepulsion };
                let agg = aggregate_force(&x, &xdot, ctx.snapshot, &ctx.fields[i], ctx.params, law);
                obstacles_in_range |= agg.points > 0;
                distance_clamped |= agg.clamped;
                agg.force * ctx.params.k_body
            }
        };
        body_jacobians.push(jac);
        body_forces.push(f);
    }

    let pinv = pseudoinverse(kin.ee_jacobian(model));
    let qdd_ee = &pinv.matrix * steering.total;
    let qdd_cp = body_accelerations(&body_jacobians, &body_forces)?;
    let qdd_jla = joint_limit_avoidance(&state.q, model, ctx.params);
    let inputs = CommandInputs {
        q: state.q.clone(),
        qdot: state.qdot.clone(),
        ee_velocity: *ee_velocity,
        steering: steering.total,
        cp_forces: body_forces,
        dt,
    };
    let command = command_from_parts(&pinv.matrix, &inputs, &qdd_ee, &qdd_cp, &qdd_jla, model)?;
    Ok(CommandOutput { command, steering, kinematics: kin, damped: pinv.damped, obstacles_in_range, distance_clamped })
}
