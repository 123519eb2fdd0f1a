use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_endpoints, config_collision_free, edge_collision_free, finish, Deadline, GlobalTrajectory, PlannerBudget, PlannerSource};
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::world::WorldSnapshot;
use crate::JointVector;

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then node index
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], start: usize, goal: usize) -> Option<Vec<usize>> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut prev = vec![usize::MAX; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Entry { cost: 0.0, node: start });
    while let Some(Entry { cost, node }) = heap.pop() {
        if node == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                prev[next] = node;
                heap.push(Entry { cost: c, node: next });
            }
        }
    }
    None
}

fn remove_edge(adj: &mut [Vec<(usize, f64)>], a: usize, b: usize) {
    adj[a].retain(|&(n, _)| n != b);
    adj[b].retain(|&(n, _)| n != a);
}

/// Single-query lazy PRM: sample collision-free nodes, wire each to its
/// nearest neighbours without checking edges, then alternate shortest-path
/// search and edge validation until a fully valid path remains.
pub fn plan_prm(
    model: &RobotModel,
    q_start: &JointVector,
    q_goal: &JointVector,
    snapshot: &WorldSnapshot,
    budget: &PlannerBudget,
) -> Result<GlobalTrajectory> {
    let started = Instant::now();
    let deadline = Deadline::new(budget, started);
    check_endpoints(model, q_start, q_goal, snapshot, budget)?;
    let (c, res) = (budget.clearance, budget.edge_resolution);
    if edge_collision_free(model, q_start, q_goal, snapshot, c, res) {
        return Ok(finish(vec![q_start.clone(), q_goal.clone()], PlannerSource::Prm, snapshot, budget, started));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    let mut nodes = vec![q_start.clone(), q_goal.clone()];
    for _ in 0..budget.max_samples {
        if deadline.expired() {
            return Err(Error::PlanningFailed("budget exhausted while sampling".into()));
        }
        let q = model.random_configuration(&mut rng);
        if config_collision_free(model, &q, snapshot, c) {
            nodes.push(q);
        }
    }

    let n = nodes.len();
    let k = budget.neighbors.min(n - 1);
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen = HashSet::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i).map(|j| ((&nodes[j] - &nodes[i]).norm(), j)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in order.iter().take(k) {
            if seen.insert((i.min(j), i.max(j))) {
                adj[i].push((j, d));
                adj[j].push((i, d));
            }
        }
    }

    let mut verified = HashSet::new();
    loop {
        if deadline.expired() {
            return Err(Error::PlanningFailed("budget exhausted while searching".into()));
        }
        let Some(path) = dijkstra(&adj, 0, 1) else {
            return Err(Error::PlanningFailed("no roadmap connection between start and goal".into()));
        };
        let mut valid = true;
        for w in path.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            if verified.contains(&key) {
                continue;
            }
            if edge_collision_free(model, &nodes[w[0]], &nodes[w[1]], snapshot, c, res) {
                verified.insert(key);
            } else {
                remove_edge(&mut adj, w[0], w[1]);
                valid = false;
                break;
            }
        }
        if valid {
            let waypoints = path.into_iter().map(|i| nodes[i].clone()).collect();
            return Ok(finish(waypoints, PlannerSource::Prm, snapshot, budget, started));
        }
    }
}
