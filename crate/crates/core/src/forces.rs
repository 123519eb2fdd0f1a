//! Artificial force fields acting on control points.
//!
//! All forces are accelerations on a unit mass. Relative quantities follow
//! one convention throughout: `d = x_obstacle - x` points from the robot to
//! the obstacle and `ddot = v_obstacle - xdot`.

use nalgebra::{Isometry3, UnitQuaternion};

use crate::kinematics::{orientation_error, RobotModel};
use crate::world::WorldSnapshot;
use crate::{JointVector, Vec3, Vec6};

/// Relative speeds below this produce no circular-field force.
pub const EPS_VELOCITY: f64 = 1e-9;
/// Distances below this are clamped.
pub const EPS_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringParameters {
    /// Circular-field gain.
    pub k_cf: f64,
    /// Attractive scaling factors; only their product enters the gate.
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Speed at or below which an opposing attractor is switched off.
    pub v_min: f64,
    /// Goal vicinity radius.
    pub xi: f64,
    /// Nominal cruise speed.
    pub v_max: f64,
    pub d_range: f64,
    /// Logistic amplitude `0.5 * (1 + tanh(alpha - beta * |d|))`.
    pub alpha: f64,
    pub beta: f64,
    pub k_jla: f64,
    pub jla_margin: f64,
    /// Velocity servo gain of the attractor.
    pub k_d: f64,
    pub k_o: f64,
    pub k_w: f64,
    /// Repulsion gain of the potential-field baseline.
    pub k_apf: f64,
    /// Scaling of the forces on body control points.
    pub k_body: f64,
}

impl Default for SteeringParameters {
    fn default() -> Self {
        Self {
            k_cf: 0.05,
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            v_min: 0.05,
            xi: 0.1,
            v_max: 0.2,
            d_range: 0.4,
            alpha: 6.0,
            beta: 40.0,
            k_jla: 2.0,
            jla_margin: 0.2,
            k_d: 8.0,
            k_o: 4.0,
            k_w: 4.0,
            k_apf: 0.002,
            k_body: 1.0,
        }
    }
}

impl SteeringParameters {
    pub fn w(&self) -> f64 {
        self.w1 * self.w2 * self.w3
    }

    pub fn validate(&self) -> crate::Result<()> {
        let nonneg = [
            ("k_cf", self.k_cf),
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("v_min", self.v_min),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("k_jla", self.k_jla),
            ("k_d", self.k_d),
            ("k_o", self.k_o),
            ("k_w", self.k_w),
            ("k_apf", self.k_apf),
            ("k_body", self.k_body),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(crate::Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        for (name, v) in [("xi", self.xi), ("v_max", self.v_max), ("d_range", self.d_range), ("jla_margin", self.jla_margin)] {
            if !(v > 0.0) {
                return Err(crate::Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Logistic amplitude used by the repulsive and fallback forces.
    pub fn amplitude(&self, distance: f64) -> f64 {
        0.5 * (1.0 + (self.alpha - self.beta * distance).tanh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalPose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl GoalPose {
    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self { position: iso.translation.vector, orientation: iso.rotation }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(self.position.into(), self.orientation)
    }
}

/// A force together with whether the distance had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointForce {
    pub force: Vec3,
    pub distance_clamped: bool,
}

fn translational(v: &Vec6) -> Vec3 {
    v.fixed_rows::<3>(0).into_owned()
}

fn stack(t: Vec3, r: Vec3) -> Vec6 {
    Vec6::new(t.x, t.y, t.z, r.x, r.y, r.z)
}

/// Velocity-limiting attractor: a velocity servo towards a saturated desired
/// velocity (cruise at `v_max` outside `xi`, proportional inside), plus a
/// PD orientation term.
pub fn vlc_force(x: &Isometry3<f64>, xdot: &Vec6, goal: &GoalPose, params: &SteeringParameters) -> Vec6 {
    let e = goal.position - x.translation.vector;
    let dist = e.norm();
    let v_des = if dist > params.xi { e * (params.v_max / dist) } else { e * (params.v_max / params.xi) };
    let f_t = (v_des - translational(xdot)) * params.k_d;
    let theta = orientation_error(&goal.orientation, &x.rotation);
    let omega: Vec3 = xdot.fixed_rows::<3>(3).into_owned();
    let f_r = theta * params.k_o - omega * params.k_w;
    stack(f_t, f_r)
}

/// Attractor gate: zero while the attractor opposes slow motion far from the
/// goal, `w1 * w2 * w3` otherwise. A robot at rest (`|xdot| < EPS_VELOCITY`)
/// has no motion to oppose and is always gated open.
pub fn k_vlc_gate(xdot: &Vec3, f_vlc: &Vec3, x: &Vec3, goal: &GoalPose, params: &SteeringParameters) -> f64 {
    let speed = xdot.norm();
    let closed = speed >= EPS_VELOCITY
        && xdot.dot(f_vlc) <= 0.0
        && speed <= params.v_min
        && (goal.position - x).norm() > params.xi;
    if closed {
        0.0
    } else {
        params.w()
    }
}

/// Circular-field force of one obstacle point:
/// `k_cf / |d| * u x (c x u)` with `u = ddot / |ddot|` and `c = n x b`.
pub fn cf_force_single(d: &Vec3, ddot: &Vec3, n: &Vec3, b: &Vec3, k_cf: f64) -> PointForce {
    let speed = ddot.norm();
    if speed < EPS_VELOCITY {
        return PointForce { force: Vec3::zeros(), distance_clamped: false };
    }
    let (dist, clamped) = clamp_distance(d.norm());
    let u = ddot / speed;
    let current = n.cross(b);
    let field = current.cross(&u);
    PointForce { force: u.cross(&field) * (k_cf / dist), distance_clamped: clamped }
}

fn clamp_distance(dist: f64) -> (f64, bool) {
    if dist < EPS_DISTANCE {
        (EPS_DISTANCE, true)
    } else {
        (dist, false)
    }
}

/// Per-point force laws that share the facing/range filter and the
/// `1 / sum(m_j)` normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLaw {
    CircularField,
    /// Circular field plus the repulsive circular-field-like term.
    CircularFieldWithRepulsion,
    Fallback,
}

/// Aggregated force on a control point and the number of contributing points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateForce {
    pub force: Vec3,
    pub points: usize,
    pub clamped: bool,
}

/// Sum of a per-point law over all facing (`n . d < 0`), in-range
/// (`|d| <= d_range`) points, divided by their count. Summation runs in
/// obstacle-id then point-index order.
pub fn aggregate_force(
    x: &Vec3,
    xdot: &Vec3,
    snapshot: &WorldSnapshot,
    b_row: &[Vec3],
    params: &SteeringParameters,
    law: PointLaw,
) -> AggregateForce {
    let mut sum = Vec3::zeros();
    let mut count = 0usize;
    let mut clamped = false;
    snapshot.for_each_in_range(x, params.d_range, |obs, i, _| {
        let d = obs.points[i] - x;
        let n = &obs.normals[i];
        if n.dot(&d) >= 0.0 {
            return;
        }
        count += 1;
        let ddot = obs.velocity - xdot;
        let f = match law {
            PointLaw::CircularField => cf_force_single(&d, &ddot, n, &b_row[obs.id], params.k_cf),
            PointLaw::CircularFieldWithRepulsion => {
                let cf = cf_force_single(&d, &ddot, n, &b_row[obs.id], params.k_cf);
                let r = repulsive_cf_force(&d, &ddot, params);
                PointForce { force: cf.force + r.force, distance_clamped: cf.distance_clamped || r.distance_clamped }
            }
            PointLaw::Fallback => fallback_repulsive_force(&d, params),
        };
        clamped |= f.distance_clamped;
        sum += f.force;
    });
    if count == 0 {
        return AggregateForce { force: Vec3::zeros(), points: 0, clamped: false };
    }
    AggregateForce { force: sum / count as f64, points: count, clamped }
}

/// Total circular-field force on a point moving with `xdot`.
pub fn cf_force_total(x: &Vec3, xdot: &Vec3, snapshot: &WorldSnapshot, b_row: &[Vec3], params: &SteeringParameters) -> Vec3 {
    aggregate_force(x, xdot, snapshot, b_row, params, PointLaw::CircularField).force
}

/// Repulsive circular-field-like force `u x (-d_hat x u) * amplitude(|d|)`:
/// the part of `-d_hat` perpendicular to the relative velocity.
pub fn repulsive_cf_force(d: &Vec3, ddot: &Vec3, params: &SteeringParameters) -> PointForce {
    let speed = ddot.norm();
    if speed < EPS_VELOCITY {
        return PointForce { force: Vec3::zeros(), distance_clamped: false };
    }
    let raw = d.norm();
    let (dist, clamped) = clamp_distance(raw);
    let d_hat = if raw > 0.0 { d / raw } else { Vec3::zeros() };
    let u = ddot / speed;
    let inner = (-d_hat).cross(&u);
    PointForce { force: u.cross(&inner) * params.amplitude(dist), distance_clamped: clamped }
}

/// Pure distance-based repulsion `-amplitude(|d|) * d_hat` used while no
/// valid prediction exists.
pub fn fallback_repulsive_force(d: &Vec3, params: &SteeringParameters) -> PointForce {
    let raw = d.norm();
    let (dist, clamped) = clamp_distance(raw);
    let d_hat = if raw > 0.0 { d / raw } else { Vec3::zeros() };
    PointForce { force: -d_hat * params.amplitude(dist), distance_clamped: clamped }
}

/// Classic inverse-distance repulsion from the closest in-range point of
/// every obstacle, for the potential-field baseline.
pub fn apf_repulsive_force(x: &Vec3, snapshot: &WorldSnapshot, params: &SteeringParameters) -> Vec3 {
    let mut total = Vec3::zeros();
    for obs in snapshot.obstacles() {
        let mut best: Option<(usize, f64)> = None;
        obs.grid().for_each_within(&obs.points, x, params.d_range, |i, d| match best {
            Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
            _ => best = Some((i, d)),
        });
        if let Some((i, _)) = best {
            let d = obs.points[i] - x;
            let (dist, _) = clamp_distance(d.norm());
            let mag = params.k_apf * (1.0 / dist - 1.0 / params.d_range) / (dist * dist);
            total -= d / dist * mag;
        }
    }
    total
}

/// Piecewise-linear spring pushing joints out of a `jla_margin` band at
/// each limit.
pub fn joint_limit_avoidance(q: &JointVector, model: &RobotModel, params: &SteeringParameters) -> JointVector {
    let m = params.jla_margin;
    JointVector::from_iterator(
        q.len(),
        q.iter().zip(model.joint_limits()).map(|(&v, lim)| {
            if v < lim.min + m {
                params.k_jla * (lim.min + m - v) / m
            } else if v > lim.max - m {
                -params.k_jla * (v - (lim.max - m)) / m
            } else {
                0.0
            }
        }),
    )
}

/// EE steering force and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringForce {
    pub total: Vec6,
    pub avoidance: Vec3,
    pub vlc: Vec6,
    pub gate: f64,
}

/// How the EE avoids obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EeAvoidance {
    CircularField,
    PotentialField,
    None,
}

/// EE steering force: avoidance on the translational rows plus the gated
/// attractor on all six.
pub fn steering_force_ee(
    pose: &Isometry3<f64>,
    twist: &Vec6,
    snapshot: &WorldSnapshot,
    b_row: &[Vec3],
    goal: &GoalPose,
    params: &SteeringParameters,
    avoidance: EeAvoidance,
) -> SteeringForce {
    let x = pose.translation.vector;
    let v = translational(twist);
    let vlc = vlc_force(pose, twist, goal, params);
    let gate = k_vlc_gate(&v, &translational(&vlc), &x, goal, params);
    let avoid = match avoidance {
        EeAvoidance::CircularField => cf_force_total(&x, &v, snapshot, b_row, params),
        EeAvoidance::PotentialField => apf_repulsive_force(&x, snapshot, params),
        EeAvoidance::None => Vec3::zeros(),
    };
    let total = vlc * gate + stack(avoid, Vec3::zeros());
    SteeringForce { total, avoidance: avoid, vlc, gate }
}
