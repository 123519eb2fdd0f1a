use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_endpoints, config_collision_free, edge_collision_free, finish, Deadline, GlobalTrajectory, PlannerBudget, PlannerSource};
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::world::WorldSnapshot;
use crate::JointVector;

const GOAL_BIAS: f64 = 0.1;
const SHORTCUT_ATTEMPTS: usize = 50;

struct Tree {
    nodes: Vec<JointVector>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: JointVector) -> Self {
        Self { nodes: vec![root], parent: vec![usize::MAX] }
    }

    fn nearest(&self, q: &JointVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn push(&mut self, q: JointVector, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node path.
    fn path_to(&self, mut i: usize) -> Vec<JointVector> {
        let mut out = vec![self.nodes[i].clone()];
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(self.nodes[i].clone());
        }
        out.reverse();
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

struct Checker<'a> {
    model: &'a RobotModel,
    snapshot: &'a WorldSnapshot,
    budget: &'a PlannerBudget,
}

impl Checker<'_> {
    fn edge(&self, a: &JointVector, b: &JointVector) -> bool {
        edge_collision_free(self.model, a, b, self.snapshot, self.budget.clearance, self.budget.edge_resolution)
    }

    fn extend(&self, tree: &mut Tree, target: &JointVector) -> Extend {
        let near = tree.nearest(target);
        let delta = target - &tree.nodes[near];
        let dist = delta.norm();
        let (q_new, reached) = if dist <= self.budget.step_max {
            (target.clone(), true)
        } else {
            (&tree.nodes[near] + delta * (self.budget.step_max / dist), false)
        };
        if !config_collision_free(self.model, &q_new, self.snapshot, self.budget.clearance) || !self.edge(&tree.nodes[near], &q_new) {
            return Extend::Trapped;
        }
        let id = tree.push(q_new, near);
        if reached {
            Extend::Reached(id)
        } else {
            Extend::Advanced(id)
        }
    }

    fn connect(&self, tree: &mut Tree, target: &JointVector, deadline: &Deadline) -> Option<usize> {
        loop {
            if deadline.expired() {
                return None;
            }
            match self.extend(tree, target) {
                Extend::Reached(id) => return Some(id),
                Extend::Advanced(_) => {}
                Extend::Trapped => return None,
            }
        }
    }
}

/// Bidirectional RRT-Connect with goal bias, followed by random-pair
/// shortcutting.
pub fn plan_rrt(
    model: &RobotModel,
    q_start: &JointVector,
    q_goal: &JointVector,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
) -> Result<GlobalTrajectory> {
    let started = Instant::now();
    let deadline = Deadline::new(budget, started);
    check_endpoints(model, q_start, q_goal, snapshot, budget)?;
    let checker = Checker { model, snapshot, budget };
    if checker.edge(q_start, q_goal) {
        return Ok(finish(vec![q_start.clone(), q_goal.clone()], PlannerSource::Rrt, snapshot, budget, started));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    let mut a = Tree::new(q_start.clone());
    let mut b = Tree::new(q_goal.clone());
    // true while `a` is rooted at the start
    let mut a_is_start = true;
    let mut path = None;
    for _ in 0..budget.max_samples {
        if deadline.expired() {
            return Err(Error::PlanningFailed("budget exhausted while growing trees".into()));
        }
        let target = if rng.random::<f64>() < GOAL_BIAS { b.nodes[0].clone() } else { model.random_configuration(&mut rng) };
        let new_id = match checker.extend(&mut a, &target) {
            Extend::Reached(id) | Extend::Advanced(id) => Some(id),
            Extend::Trapped => None,
        };
        if let Some(id) = new_id {
            let q_new = a.nodes[id].clone();
            if let Some(other) = checker.connect(&mut b, &q_new, &deadline) {
                let mut first = a.path_to(id);
                let mut second = b.path_to(other);
                second.reverse();
                // the meeting configuration appears in both halves
                second.remove(0);
                first.extend(second);
                if !a_is_start {
                    first.reverse();
                }
                path = Some(first);
                break;
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    let Some(mut path) = path else {
        return Err(Error::PlanningFailed("trees did not connect within the sample budget".into()));
    };

    for _ in 0..SHORTCUT_ATTEMPTS {
        if path.len() < 3 || deadline.expired() {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if checker.edge(&path[i], &path[j]) {
            path.drain(i + 1..j);
        }
    }
    Ok(finish(path, PlannerSource::Rrt, snapshot, budget, started))
}
