//! Proximity-triggered branching of the circular-field-planner baseline: when
//! a control point first comes within range of an obstacle, copies of the
//! agent explore the other rotation senses for that pair.

use std::sync::Arc;

use super::{rollout_core, Agent, FrameworkConfig, Variation};
use crate::error::Result;
use crate::extraction::perpendicular_fallback;
use crate::forces::GoalPose;
use crate::kinematics::{KinematicState, RobotModel};
use crate::Vec3;

/// Four field vectors around an obstacle at `d` for a point moving with `v`:
/// `+-unit(d x v)` (pass left or right in the plane of motion) and
/// `+-unit(d x (d x v))` (pass over or under it).
pub fn branch_candidates(d: &Vec3, v: &Vec3) -> [Vec3; 4] {
    let side = d.cross(v).try_normalize(1e-12).unwrap_or_else(|| perpendicular_fallback(d));
    let over = d.cross(&side).try_normalize(1e-12).unwrap_or_else(|| perpendicular_fallback(&side));
    [side, -side, over, -over]
}

fn children_on_encounter(agent: &mut Agent, kin: &KinematicState, out: &mut Vec<Agent>, range: f64) {
    let snapshot = agent.snapshot.clone();
    for i in 0..kin.cp_positions.len() {
        let x = kin.cp_positions[i];
        for obs in snapshot.obstacles() {
            let j = obs.id;
            if agent.encountered[i][j] {
                continue;
            }
            let mut nearest: Option<(usize, f64)> = None;
            obs.grid().for_each_within(&obs.points, &x, range, |k, d| match nearest {
                Some((bk, bd)) if d > bd || (d == bd && k > bk) => {}
                _ => nearest = Some((k, d)),
            });
            let Some((k, _)) = nearest else { continue };
            agent.encountered[i][j] = true;
            let jac = &kin.cp_jacobians[i];
            let vel = jac.rows(0, 3) * &agent.state.qdot;
            let v = Vec3::new(vel[0], vel[1], vel[2]);
            let d = obs.points[k] - x;
            let current = agent.params.fields.b[i][j];
            let mut candidates = branch_candidates(&d, &v).to_vec();
            // the candidate closest to the agent's own vector is already being explored
            let own = (0..4).max_by(|&a, &b| candidates[a].dot(&current).total_cmp(&candidates[b].dot(&current))).unwrap();
            candidates.remove(own);
            for b in candidates {
                let mut child = agent.clone();
                let mut fields = (*child.params.fields).clone();
                fields.b[i][j] = b;
                child.params.fields = Arc::new(fields);
                child.params.variation = Variation::Branch { control_point: i, obstacle: j };
                out.push(child);
            }
        }
    }
}

/// [`super::rollout_slice`], optionally spawning branch children on first
/// proximity. Children carry the parent's history and get their ids from
/// the caller.
pub fn rollout_slice_branching(
    agent: Agent,
    model: &RobotModel,
    goal: &GoalPose,
    config: &FrameworkConfig,
    branching: Option<f64>,
) -> Result<(Agent, Vec<Agent>)> {
    let mut children = Vec::new();
    let agent = rollout_core(agent, model, goal, config, |a, kin| {
        if let Some(range) = branching {
            children_on_encounter(a, kin, &mut children, range);
        }
    })?;
    Ok((agent, children))
}
