//! Serial-chain kinematics with modified Denavit-Hartenberg parameters.
//!
//! Link `0` is the fixed base frame; link `k` (for `1 <= k <= n`) is the frame
//! attached to joint `k`. Control points are rigid offsets on a link, and
//! exactly one of them is the end effector (EE). The EE orientation is the
//! orientation of the link it is attached to.

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::{JointVector, Vec3};

/// Smallest singular value below which the pseudoinverse switches to damping.
pub const SIGMA_MIN: f64 = 1e-4;
/// Damping factor used for singular values below [`SIGMA_MIN`].
pub const DAMPING: f64 = 0.01;

/// One revolute joint in modified DH form: `RotX(alpha) * TransX(a) * RotZ(q + theta_offset) * TransZ(d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhJoint {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhJoint {
    pub fn new(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        Self { a, alpha, d, theta_offset }
    }

    /// Transform from the previous link frame to this joint's frame.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let twist = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha),
        );
        let offset = Isometry3::translation(self.a, 0.0, 0.0);
        let rotate = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + self.theta_offset),
        );
        let lift = Isometry3::translation(0.0, 0.0, self.d);
        twist * offset * rotate * lift
    }

    /// Origin of this joint's frame expressed in the previous link frame.
    /// Independent of the joint angle.
    pub fn origin_in_parent(&self) -> Vec3 {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Vector3::new(self.a, 0.0, 0.0) + rot * Vector3::new(0.0, 0.0, self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.min, self.max)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// A point rigidly attached to a link where avoidance forces act.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPointAttachment {
    pub link_index: usize,
    pub local_offset: Vec3,
    pub is_ee: bool,
}

impl ControlPointAttachment {
    pub fn body(link_index: usize, local_offset: Vec3) -> Self {
        Self { link_index, local_offset, is_ee: false }
    }

    pub fn ee(link_index: usize, local_offset: Vec3) -> Self {
        Self { link_index, local_offset, is_ee: true }
    }
}

/// Sphere used for clearance and collision checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionSphere {
    pub link_index: usize,
    pub local_offset: Vec3,
    pub radius: f64,
}

/// Immutable serial-chain description.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    joints: Vec<DhJoint>,
    joint_limits: Vec<JointLimit>,
    velocity_limits: Vec<f64>,
    control_points: Vec<ControlPointAttachment>,
    collision_spheres: Vec<CollisionSphere>,
    ee_index: usize,
}

impl RobotModel {
    pub fn new(
        joints: Vec<DhJoint>,
        joint_limits: Vec<JointLimit>,
        velocity_limits: Vec<f64>,
        control_points: Vec<ControlPointAttachment>,
        collision_spheres: Vec<CollisionSphere>,
    ) -> Result<Self> {
        let n = joints.len();
        if n == 0 {
            return Err(Error::InvalidModel("at least one joint is required".into()));
        }
        if joint_limits.len() != n || velocity_limits.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} joints but {} position limits and {} velocity limits",
                n,
                joint_limits.len(),
                velocity_limits.len()
            )));
        }
        for (k, lim) in joint_limits.iter().enumerate() {
            if !(lim.min < lim.max) {
                return Err(Error::InvalidModel(format!("joint {k}: limit min must be < max")));
            }
        }
        for (k, v) in velocity_limits.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::InvalidModel(format!("joint {k}: velocity limit must be > 0")));
            }
        }
        let ee: Vec<usize> = control_points
            .iter()
            .enumerate()
            .filter(|(_, cp)| cp.is_ee)
            .map(|(i, _)| i)
            .collect();
        if ee.len() != 1 {
            return Err(Error::InvalidModel(format!(
                "exactly one end-effector attachment required, found {}",
                ee.len()
            )));
        }
        for (i, cp) in control_points.iter().enumerate() {
            if cp.link_index > n {
                return Err(Error::InvalidModel(format!(
                    "control point {i} references link {} (max {n})",
                    cp.link_index
                )));
            }
        }
        for (i, s) in collision_spheres.iter().enumerate() {
            if s.link_index > n {
                return Err(Error::InvalidModel(format!(
                    "sphere {i} references link {} (max {n})",
                    s.link_index
                )));
            }
            if !(s.radius > 0.0) {
                return Err(Error::InvalidModel(format!("sphere {i}: radius must be > 0")));
            }
        }
        Ok(Self {
            joints,
            joint_limits,
            velocity_limits,
            control_points,
            collision_spheres,
            ee_index: ee[0],
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[DhJoint] {
        &self.joints
    }

    pub fn joint_limits(&self) -> &[JointLimit] {
        &self.joint_limits
    }

    pub fn velocity_limits(&self) -> &[f64] {
        &self.velocity_limits
    }

    pub fn control_points(&self) -> &[ControlPointAttachment] {
        &self.control_points
    }

    pub fn collision_spheres(&self) -> &[CollisionSphere] {
        &self.collision_spheres
    }

    /// Index of the EE in [`Self::control_points`].
    pub fn ee_index(&self) -> usize {
        self.ee_index
    }

    pub fn n_control_points(&self) -> usize {
        self.control_points.len()
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.joint_limits).all(|(v, lim)| lim.contains(*v))
    }

    pub fn clamp_to_limits(&self, q: &mut JointVector) -> bool {
        let mut clamped = false;
        for (v, lim) in q.iter_mut().zip(&self.joint_limits) {
            let c = lim.clamp(*v);
            if c != *v {
                *v = c;
                clamped = true;
            }
        }
        clamped
    }

    pub fn random_configuration<R: Rng>(&self, rng: &mut R) -> JointVector {
        DVector::from_iterator(
            self.dof(),
            self.joint_limits.iter().map(|l| rng.random_range(l.min..=l.max)),
        )
    }

    /// Planar arm in the xy-plane with the given link lengths, joints at
    /// the link roots, EE at the tip of the last link. Limits are +-pi.
    pub fn planar(lengths: &[f64]) -> Result<Self> {
        let mut joints = Vec::with_capacity(lengths.len());
        let mut prev = 0.0;
        for &l in lengths {
            joints.push(DhJoint::new(prev, 0.0, 0.0, 0.0));
            prev = l;
        }
        let n = joints.len();
        let limits = vec![JointLimit::new(-std::f64::consts::PI, std::f64::consts::PI); n];
        let ee = ControlPointAttachment::ee(n, Vector3::new(prev, 0.0, 0.0));
        let spheres = vec![CollisionSphere { link_index: n, local_offset: Vector3::new(prev, 0.0, 0.0), radius: 0.05 }];
        Self::new(joints, limits, vec![2.0; n], vec![ee], spheres)
    }

    /// Representative 7-DOF arm (Panda-like geometry) with the EE and four
    /// body control points on the upper links.
    pub fn demo_7dof() -> Self {
        use std::f64::consts::FRAC_PI_2;
        let joints = vec![
            DhJoint::new(0.0, 0.0, 0.333, 0.0),
            DhJoint::new(0.0, -FRAC_PI_2, 0.0, 0.0),
            DhJoint::new(0.0, FRAC_PI_2, 0.316, 0.0),
            DhJoint::new(0.0825, FRAC_PI_2, 0.0, 0.0),
            DhJoint::new(-0.0825, -FRAC_PI_2, 0.384, 0.0),
            DhJoint::new(0.0, FRAC_PI_2, 0.0, 0.0),
            DhJoint::new(0.088, FRAC_PI_2, 0.0, 0.0),
        ];
        let limits = vec![
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-1.7628, 1.7628),
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-3.0718, -0.0698),
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-0.0175, 3.7525),
            JointLimit::new(-2.8973, 2.8973),
        ];
        let vel = vec![2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61];
        let tool = Vector3::new(0.0, 0.0, 0.2);
        let forearm = joints[4].origin_in_parent();
        let control_points = vec![
            ControlPointAttachment::body(4, Vector3::zeros()),
            ControlPointAttachment::body(4, 0.5 * forearm),
            ControlPointAttachment::body(5, Vector3::zeros()),
            ControlPointAttachment::body(7, Vector3::zeros()),
            ControlPointAttachment::ee(7, tool),
        ];

        // spheres along every rigid segment between consecutive frame origins
        let mut spheres = Vec::new();
        let radius = 0.06;
        let segment = |link: usize, to: Vec3, spheres: &mut Vec<CollisionSphere>| {
            let len = to.norm();
            let count = (len / radius).ceil().max(1.0) as usize;
            for s in 0..=count {
                let frac = s as f64 / count as f64;
                spheres.push(CollisionSphere { link_index: link, local_offset: to * frac, radius });
            }
        };
        for (k, j) in joints.iter().enumerate() {
            let to = j.origin_in_parent();
            if to.norm() > 1e-9 {
                segment(k, to, &mut spheres);
            }
        }
        segment(7, tool, &mut spheres);

        Self::new(joints, limits, vel, control_points, spheres).expect("demo model is valid")
    }
}

/// Joint positions and velocities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: JointVector,
    pub qdot: JointVector,
    pub t: f64,
}

impl JointState {
    pub fn at_rest(q: JointVector, t: f64) -> Self {
        let n = q.len();
        Self { q, qdot: DVector::zeros(n), t }
    }
}

/// A frame that can be queried through forward kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Link(usize),
    ControlPoint(usize),
}

/// Pose of every link frame, base first (`n + 1` entries).
pub fn link_frames(model: &RobotModel, q: &JointVector) -> Result<Vec<Isometry3<f64>>> {
    check_dim(model.dof(), q.len())?;
    let mut frames = Vec::with_capacity(model.dof() + 1);
    let mut current = Isometry3::identity();
    frames.push(current);
    for (joint, &angle) in model.joints.iter().zip(q.iter()) {
        current *= joint.transform(angle);
        frames.push(current);
    }
    Ok(frames)
}

pub fn forward_kinematics(model: &RobotModel, q: &JointVector, frame: Frame) -> Result<Isometry3<f64>> {
    let frames = link_frames(model, q)?;
    match frame {
        Frame::Link(k) => frames.get(k).copied().ok_or(Error::InvalidFrame(k)),
        Frame::ControlPoint(i) => {
            let cp = model.control_points.get(i).ok_or(Error::InvalidFrame(i))?;
            Ok(attachment_pose(&frames, cp))
        }
    }
}

fn attachment_pose(frames: &[Isometry3<f64>], cp: &ControlPointAttachment) -> Isometry3<f64> {
    let link = frames[cp.link_index];
    link * Isometry3::translation(cp.local_offset.x, cp.local_offset.y, cp.local_offset.z)
}

pub fn ee_pose(model: &RobotModel, q: &JointVector) -> Result<Isometry3<f64>> {
    forward_kinematics(model, q, Frame::ControlPoint(model.ee_index))
}

pub fn control_point_positions(model: &RobotModel, q: &JointVector) -> Result<Vec<Vec3>> {
    let frames = link_frames(model, q)?;
    Ok(model
        .control_points
        .iter()
        .map(|cp| frames[cp.link_index] * nalgebra::Point3::from(cp.local_offset))
        .map(|p| p.coords)
        .collect())
}

/// World-frame centers of all collision spheres.
pub fn sphere_centers(model: &RobotModel, frames: &[Isometry3<f64>]) -> Vec<Vec3> {
    model
        .collision_spheres
        .iter()
        .map(|s| (frames[s.link_index] * nalgebra::Point3::from(s.local_offset)).coords)
        .collect()
}

/// Translational Jacobian (3 x n) of a world point rigidly attached to `link`.
pub fn point_jacobian(frames: &[Isometry3<f64>], link: usize, point: &Vec3) -> DMatrix<f64> {
    let n = frames.len() - 1;
    let mut jac = DMatrix::zeros(3, n);
    for k in 1..=link {
        let axis = frames[k].rotation * Vector3::z();
        let lever = point - frames[k].translation.vector;
        let col = axis.cross(&lever);
        jac.fixed_view_mut::<3, 1>(0, k - 1).copy_from(&col);
    }
    jac
}

/// Geometric Jacobian (6 x n): translational rows on top of rotational rows.
pub fn full_jacobian(frames: &[Isometry3<f64>], link: usize, point: &Vec3) -> DMatrix<f64> {
    let n = frames.len() - 1;
    let mut jac = DMatrix::zeros(6, n);
    for k in 1..=link {
        let axis = frames[k].rotation * Vector3::z();
        let lever = point - frames[k].translation.vector;
        jac.fixed_view_mut::<3, 1>(0, k - 1).copy_from(&axis.cross(&lever));
        jac.fixed_view_mut::<3, 1>(3, k - 1).copy_from(&axis);
    }
    jac
}

/// Jacobian of control point `attachment`: 6 x n for the EE, 3 x n otherwise.
pub fn jacobian(model: &RobotModel, q: &JointVector, attachment: usize) -> Result<DMatrix<f64>> {
    let frames = link_frames(model, q)?;
    let cp = model.control_points.get(attachment).ok_or(Error::InvalidFrame(attachment))?;
    let p = attachment_pose(&frames, cp).translation.vector;
    Ok(if cp.is_ee {
        full_jacobian(&frames, cp.link_index, &p)
    } else {
        point_jacobian(&frames, cp.link_index, &p)
    })
}

/// Kinematic quantities for one configuration, computed once and shared by
/// the force and command stages.
#[derive(Debug, Clone)]
pub struct KinematicState {
    pub frames: Vec<Isometry3<f64>>,
    pub cp_positions: Vec<Vec3>,
    /// One Jacobian per control point; 6 x n for the EE, 3 x n otherwise.
    pub cp_jacobians: Vec<DMatrix<f64>>,
    pub ee_pose: Isometry3<f64>,
}

impl KinematicState {
    pub fn new(model: &RobotModel, q: &JointVector) -> Result<Self> {
        let frames = link_frames(model, q)?;
        let mut cp_positions = Vec::with_capacity(model.n_control_points());
        let mut cp_jacobians = Vec::with_capacity(model.n_control_points());
        let mut ee = Isometry3::identity();
        for cp in &model.control_points {
            let pose = attachment_pose(&frames, cp);
            let p = pose.translation.vector;
            if cp.is_ee {
                ee = pose;
                cp_jacobians.push(full_jacobian(&frames, cp.link_index, &p));
            } else {
                cp_jacobians.push(point_jacobian(&frames, cp.link_index, &p));
            }
            cp_positions.push(p);
        }
        Ok(Self { frames, cp_positions, cp_jacobians, ee_pose: ee })
    }

    pub fn ee_jacobian(&self, model: &RobotModel) -> &DMatrix<f64> {
        &self.cp_jacobians[model.ee_index]
    }
}

/// Result of [`pseudoinverse`].
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// True when some singular value fell below [`SIGMA_MIN`] and was damped.
    pub damped: bool,
    pub min_singular_value: f64,
}

/// Moore-Penrose pseudoinverse via SVD. Singular values below [`SIGMA_MIN`]
/// are inverted as `s / (s^2 + DAMPING^2)` instead of `1 / s`, and the result
/// is flagged as damped. Exact zeros therefore map to zero, as in the exact
/// pseudoinverse.
pub fn pseudoinverse(j: &DMatrix<f64>) -> PseudoInverse {
    let (m, n) = j.shape();
    if m == 0 || n == 0 {
        return PseudoInverse { matrix: DMatrix::zeros(n, m), damped: false, min_singular_value: 0.0 };
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut damped = false;
    let mut min_sv = f64::INFINITY;
    let inv: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            min_sv = min_sv.min(s);
            if s < SIGMA_MIN {
                damped = true;
                s / (s * s + DAMPING * DAMPING)
            } else {
                1.0 / s
            }
        })
        .collect();
    let k = inv.len();
    let mut scaled_vt = v_t.transpose(); // n x k
    for c in 0..k {
        scaled_vt.column_mut(c).scale_mut(inv[c]);
    }
    let matrix = scaled_vt * u.columns(0, k).transpose();
    PseudoInverse { matrix, damped, min_singular_value: min_sv }
}

/// Orientation error `goal * current^-1` as a scaled axis (world frame).
pub fn orientation_error(goal: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vec3 {
    (goal * current.inverse()).scaled_axis()
}

/// Six-dimensional pose error `(goal position - position, orientation error)`.
pub fn pose_error(goal: &Isometry3<f64>, current: &Isometry3<f64>) -> Vector6<f64> {
    let dp = goal.translation.vector - current.translation.vector;
    let dr = orientation_error(&goal.rotation, &current.rotation);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub max_iterations: usize,
    pub restarts: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub damping: f64,
    /// Largest task-space correction applied per iteration (m or rad).
    pub max_step: f64,
    pub seed: u64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            restarts: 10,
            position_tolerance: 1e-3,
            orientation_tolerance: 0.01,
            damping: 0.05,
            max_step: 0.2,
            seed: 0,
        }
    }
}

/// Damped-least-squares IK for the EE pose, with seeded random restarts
/// inside the joint limits. The seed configuration is tried first.
pub fn ik_solve(
    model: &RobotModel,
    goal: &Isometry3<f64>,
    q_seed: &JointVector,
    config: &IkConfig,
) -> Result<JointVector> {
    ik_solve_filtered(model, goal, q_seed, config, |_| true)
}

/// [`ik_solve`] that additionally rejects converged solutions failing `accept`
/// (for example configurations in collision) and moves on to the next restart.
pub fn ik_solve_filtered<F: Fn(&JointVector) -> bool>(
    model: &RobotModel,
    goal: &Isometry3<f64>,
    q_seed: &JointVector,
    config: &IkConfig,
    accept: F,
) -> Result<JointVector> {
    check_dim(model.dof(), q_seed.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut start = q_seed.clone();
    model.clamp_to_limits(&mut start);
    for attempt in 0..=config.restarts {
        if attempt > 0 {
            start = model.random_configuration(&mut rng);
        }
        if let Some(q) = ik_descend(model, goal, start.clone(), config) {
            if accept(&q) {
                return Ok(q);
            }
        }
    }
    Err(Error::IkNoConvergence { restarts: config.restarts })
}

fn ik_descend(model: &RobotModel, goal: &Isometry3<f64>, mut q: JointVector, config: &IkConfig) -> Option<JointVector> {
    let ee = model.control_points[model.ee_index];
    let lambda2 = config.damping * config.damping;
    for _ in 0..config.max_iterations {
        let frames = link_frames(model, &q).ok()?;
        let pose = attachment_pose(&frames, &ee);
        let err = pose_error(goal, &pose);
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        if pos_err <= config.position_tolerance && rot_err <= config.orientation_tolerance {
            return Some(q);
        }
        let mut e = DVector::from_column_slice(err.as_slice());
        let norm = e.norm();
        if norm > config.max_step {
            e *= config.max_step / norm;
        }
        let jac = full_jacobian(&frames, ee.link_index, &pose.translation.vector);
        let jjt = &jac * jac.transpose() + DMatrix::identity(6, 6) * lambda2;
        let step = jjt.cholesky().map(|c| jac.transpose() * c.solve(&e))?;
        q += step;
        model.clamp_to_limits(&mut q);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn dv(v: &[f64]) -> JointVector {
        DVector::from_column_slice(v)
    }

    #[test]
    fn one_link_fk() {
        let m = RobotModel::planar(&[1.0]).unwrap();
        let p = ee_pose(&m, &dv(&[0.0])).unwrap().translation.vector;
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let p = ee_pose(&m, &dv(&[FRAC_PI_2])).unwrap().translation.vector;
        assert_relative_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn two_link_fk() {
        let m = RobotModel::planar(&[1.0, 1.0]).unwrap();
        let p = ee_pose(&m, &dv(&[FRAC_PI_2, -FRAC_PI_2])).unwrap().translation.vector;
        assert_relative_eq!(p, Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn fk_errors() {
        let m = RobotModel::planar(&[1.0, 1.0]).unwrap();
        assert_eq!(
            forward_kinematics(&m, &dv(&[0.0]), Frame::Link(0)),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(forward_kinematics(&m, &dv(&[0.0, 0.0]), Frame::Link(3)), Err(Error::InvalidFrame(3)));
        assert_eq!(forward_kinematics(&m, &dv(&[0.0, 0.0]), Frame::ControlPoint(1)), Err(Error::InvalidFrame(1)));
    }

    #[test]
    fn control_points_midpoint_and_base() {
        let base = RobotModel::planar(&[1.0, 1.0]).unwrap();
        let cps = vec![
            ControlPointAttachment::body(0, Vector3::zeros()),
            ControlPointAttachment::body(2, Vector3::new(0.5, 0.0, 0.0)),
            ControlPointAttachment::body(1, Vector3::new(0.5, 0.0, 0.0)),
            ControlPointAttachment::ee(2, Vector3::new(1.0, 0.0, 0.0)),
        ];
        let m = RobotModel::new(
            base.joints().to_vec(),
            base.joint_limits().to_vec(),
            base.velocity_limits().to_vec(),
            cps,
            vec![],
        )
        .unwrap();
        let p = control_point_positions(&m, &dv(&[0.0, 0.0])).unwrap();
        assert_eq!(p.len(), 4);
        assert_relative_eq!(p[0], Vector3::zeros());
        assert_relative_eq!(p[2], Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        let p = control_point_positions(&m, &dv(&[1.3, -0.4])).unwrap();
        assert_eq!(p[0], Vector3::zeros());
        let jac = jacobian(&m, &dv(&[1.3, -0.4]), 0).unwrap();
        assert!(jac.iter().all(|v| *v == 0.0));
        // link-1 point does not move with joint 2
        let jac = jacobian(&m, &dv(&[1.3, -0.4]), 2).unwrap();
        assert!(jac.column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ee_only_model_positions_match_fk() {
        let m = RobotModel::planar(&[0.7, 0.4]).unwrap();
        let q = dv(&[0.3, 0.9]);
        let p = control_point_positions(&m, &q).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0], ee_pose(&m, &q).unwrap().translation.vector);
    }

    #[test]
    fn one_link_jacobian() {
        let m = RobotModel::planar(&[1.0]).unwrap();
        let j = jacobian(&m, &dv(&[0.0]), 0).unwrap();
        assert_eq!(j.shape(), (6, 1));
        assert_relative_eq!(j[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(j[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(j[(2, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(j[(5, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn model_validation() {
        let j = vec![DhJoint::new(0.0, 0.0, 0.0, 0.0)];
        let lim = vec![JointLimit::new(-1.0, 1.0)];
        let ee = ControlPointAttachment::ee(1, Vector3::x());
        assert!(RobotModel::new(vec![], vec![], vec![], vec![ee], vec![]).is_err());
        assert!(RobotModel::new(j.clone(), vec![JointLimit::new(1.0, 1.0)], vec![1.0], vec![ee], vec![]).is_err());
        assert!(RobotModel::new(j.clone(), lim.clone(), vec![1.0], vec![], vec![]).is_err());
        assert!(RobotModel::new(j.clone(), lim.clone(), vec![1.0], vec![ee, ee], vec![]).is_err());
        assert!(RobotModel::new(j.clone(), lim.clone(), vec![1.0], vec![ControlPointAttachment::ee(2, Vector3::x())], vec![]).is_err());
        let bad_sphere = CollisionSphere { link_index: 1, local_offset: Vector3::zeros(), radius: 0.0 };
        assert!(RobotModel::new(j.clone(), lim.clone(), vec![1.0], vec![ee], vec![bad_sphere]).is_err());
        assert!(RobotModel::new(j, lim, vec![1.0], vec![ee], vec![]).is_ok());
    }

    #[test]
    fn demo_model_shape() {
        let m = RobotModel::demo_7dof();
        assert_eq!(m.dof(), 7);
        assert_eq!(m.n_control_points(), 5);
        assert!(m.control_points()[m.ee_index()].is_ee);
        assert!(m.collision_spheres().len() >= 10);
    }

    #[test]
    fn pinv_identity_and_rank_deficient() {
        let p = pseudoinverse(&DMatrix::identity(3, 3));
        assert!(!p.damped);
        assert_relative_eq!(p.matrix, DMatrix::identity(3, 3), epsilon = 1e-15);

        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pseudoinverse(&j);
        assert!(p.damped);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert_relative_eq!(p.matrix, expected, epsilon = 1e-15);
    }

    #[test]
    fn pinv_near_singular_is_bounded() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-8]);
        let p = pseudoinverse(&j);
        assert!(p.damped);
        assert!(p.matrix.amax() < 1.0 / DAMPING);
    }

    #[test]
    fn ik_fixed_point_and_planar_goal() {
        let m = RobotModel::demo_7dof();
        let q = dv(&[0.1, -0.5, 0.2, -2.0, 0.1, 1.8, 0.6]);
        let goal = ee_pose(&m, &q).unwrap();
        let sol = ik_solve(&m, &goal, &q, &IkConfig::default()).unwrap();
        assert_eq!(sol, q);

        let planar = RobotModel::planar(&[1.0, 1.0]).unwrap();
        let goal = Isometry3::translation(1.0, 1.0, 0.0);
        let sol = ik_solve(&planar, &goal, &dv(&[0.3, -0.3]), &IkConfig::default()).unwrap();
        let p = ee_pose(&planar, &sol).unwrap().translation.vector;
        assert!((p - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-3);
        assert!(planar.within_limits(&sol));
    }

    #[test]
    fn ik_unreachable_fails() {
        let planar = RobotModel::planar(&[1.0, 1.0]).unwrap();
        let goal = Isometry3::translation(2.5, 0.0, 0.0);
        let cfg = IkConfig { restarts: 3, ..IkConfig::default() };
        assert_eq!(
            ik_solve(&planar, &goal, &dv(&[0.0, 0.0]), &cfg),
            Err(Error::IkNoConvergence { restarts: 3 })
        );
    }

    #[test]
    fn dh_transform_quarter_turn() {
        let j = DhJoint::new(0.0, 0.0, 0.0, PI / 2.0);
        let t = j.transform(0.0);
        assert_relative_eq!(t * Vector3::x(), Vector3::y(), epsilon = 1e-15);
    }
}
