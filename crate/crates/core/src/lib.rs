//! Reactive whole-body obstacle avoidance for serial manipulators using
//! circular (magnetic-field-like) force fields, informed by avoidance
//! directions mined from a sampling-based configuration-space pre-planner and
//! evaluated by predictive agents.
//!
//! The crate is organised bottom-up:
//!
//! * [`kinematics`]: modified-DH chains, control points, Jacobians, pseudoinverse, IK.
//! * [`world`]: point-cloud obstacles, spatial index, normals, scripted motion.
//! * [`forces`]: goal attraction, circular-field avoidance, repulsion, joint-limit springs.
//! * [`control`]: task-space forces to joint-velocity commands, rollout stepping.
//! * [`planner`]: PRM / RRT-Connect pre-planners and the periodic planning loop.
//! * [`extraction`]: per control point / obstacle field vectors from a joint trajectory.
//! * [`agents`]: predictive agents, cost, selection, deviation monitor, fallback governor.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod control;
mod error;
pub mod extraction;
pub mod forces;
pub mod kinematics;
pub mod planner;
pub mod world;

pub use error::{Error, Result};

pub use nalgebra;

/// Three-vector used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Six-vector (translation, rotation) used for task-space forces and twists.
pub type Vec6 = nalgebra::Vector6<f64>;
/// Joint-space vector.
pub type JointVector = nalgebra::DVector<f64>;
