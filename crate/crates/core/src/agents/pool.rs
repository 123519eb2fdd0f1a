use std::collections::VecDeque;
use std::sync::Arc;
use std::thread::JoinHandle;

use arc_swap::ArcSwapOption;
use crossbeam_channel::{unbounded, Receiver, Sender};
use rayon::prelude::*;

use super::{
    fallback_governor, monitor_deviation, rollout_slice, rollout_slice_branching, select_best, spawn_on_fields, Agent,
    AgentStatus, FrameworkConfig, GovernorMode, ParameterSet, Verdict,
};
use crate::error::Result;
use crate::extraction::MagneticFieldSet;
use crate::forces::GoalPose;
use crate::kinematics::{JointState, RobotModel};
use crate::world::WorldSnapshot;
use crate::Vec6;

/// Bookkeeping of the predictive framework for one robot: the cohort spawned
/// by the latest delivery, the agent whose parameters currently drive the
/// robot, and the real trajectory needed for deviation checks.
///
/// Rollouts of one round run in parallel; results are merged in queue order,
/// so the pool is deterministic.
#[derive(Debug)]
pub struct AgentPool {
    config: FrameworkConfig,
    pending: VecDeque<Agent>,
    finished: Vec<Agent>,
    best: Option<Agent>,
    history: Vec<JointState>,
    next_id: u64,
    /// Range that triggers branching, when enabled.
    branching: Option<f64>,
    spawned_in_cycle: usize,
    last_outcomes: Vec<CohortOutcome>,
}

/// Result of one agent of the most recently evaluated cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortOutcome {
    pub id: u64,
    pub status: AgentStatus,
    pub cost: Option<f64>,
    pub steps: usize,
    pub selected: bool,
}

impl AgentPool {
    pub fn new(config: FrameworkConfig) -> Self {
        Self {
            config,
            pending: VecDeque::new(),
            finished: Vec::new(),
            best: None,
            history: Vec::new(),
            next_id: 0,
            branching: None,
            spawned_in_cycle: 0,
            last_outcomes: Vec::new(),
        }
    }

    /// Proximity-triggered branching within `range` (baseline planner mode).
    pub fn with_branching(mut self, range: f64) -> Self {
        self.branching = Some(range);
        self
    }

    pub fn config(&self) -> &FrameworkConfig {
        &self.config
    }

    pub fn best(&self) -> Option<&Agent> {
        self.best.as_ref()
    }

    /// Outcomes of the cohort evaluated by the latest [`AgentPool::select`].
    pub fn last_outcomes(&self) -> &[CohortOutcome] {
        &self.last_outcomes
    }

    /// Agents still rolling out.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Agents alive: pending, finished but not yet evaluated, and the best.
    pub fn alive(&self) -> usize {
        self.pending.len() + self.finished.len() + usize::from(self.best.is_some())
    }

    fn take_ids(&mut self, n: usize) -> u64 {
        let first = self.next_id;
        self.next_id += n as u64;
        first
    }

    fn start_cohort(&mut self, agents: Vec<Agent>, t: f64) {
        self.spawned_in_cycle = agents.len();
        self.pending = agents.into();
        self.finished.clear();
        let keep_from = self.best.as_ref().map_or(t, |b| b.start_time.min(t));
        self.history.retain(|s| s.t >= keep_from - 1e-9);
    }

    /// Field delivery: spawns the cohort at the current robot state and drops
    /// every older agent except the current best.
    #[allow(clippy::too_many_arguments)]
    pub fn deliver(
        &mut self,
        bootstrap: &ParameterSet,
        alg1: MagneticFieldSet,
        alg2: MagneticFieldSet,
        state: &JointState,
        ee_velocity: &Vec6,
        snapshot: &Arc<WorldSnapshot>,
        model: &RobotModel,
    ) -> Result<()> {
        let p_best = self.best.as_ref().map_or(bootstrap, |b| &b.params).clone();
        let n = 2 + usize::from(self.best.is_some()) + self.config.n_agent_extras;
        let first = self.take_ids(n);
        let agents = spawn_on_fields(
            &p_best,
            self.best.is_some(),
            &Arc::new(alg1),
            &Arc::new(alg2),
            state,
            ee_velocity,
            snapshot,
            first,
            model,
            &self.config,
        )?;
        self.start_cohort(agents, state.t);
        Ok(())
    }

    /// Starts a cycle with a single root agent (branching mode).
    pub fn spawn_root(
        &mut self,
        bootstrap: &ParameterSet,
        state: &JointState,
        ee_velocity: &Vec6,
        snapshot: &Arc<WorldSnapshot>,
        model: &RobotModel,
    ) -> Result<()> {
        let params = self.best.as_ref().map_or(bootstrap, |b| &b.params).clone();
        let id = self.take_ids(1);
        let agent = Agent::new(id, params, snapshot.clone(), state.clone(), *ee_velocity, model, &self.config)?;
        self.start_cohort(vec![agent], state.t);
        Ok(())
    }

    /// One scheduling round: up to `max_parallel` agents from the front of
    /// the queue advance by one slice; unfinished ones rejoin at the back.
    pub fn run_round(&mut self, model: &RobotModel, goal: &GoalPose) -> Result<()> {
        let n = self.config.max_parallel.min(self.pending.len());
        if n == 0 {
            return Ok(());
        }
        let batch: Vec<Agent> = self.pending.drain(..n).collect();
        let config = self.config;
        let branching = self.branching;
        let results: Vec<Result<(Agent, Vec<Agent>)>> =
            batch.into_par_iter().map(|a| rollout_slice_branching(a, model, goal, &config, branching)).collect();
        for r in results {
            let (agent, children) = r?;
            for mut child in children {
                if self.spawned_in_cycle >= config.max_branch_agents {
                    break;
                }
                child.id = self.take_ids(1);
                self.spawned_in_cycle += 1;
                self.pending.push_back(child);
            }
            if agent.status.is_terminal() {
                self.finished.push(agent);
            } else {
                self.pending.push_back(agent);
            }
        }
        Ok(())
    }

    /// Records a real robot sample and checks the best agent against it.
    /// Returns true when the best agent was deleted.
    pub fn observe(&mut self, real: &JointState) -> bool {
        self.history.push(real.clone());
        let Some(best) = &self.best else { return false };
        if monitor_deviation([real], best, &self.config) == Verdict::Delete {
            self.best = None;
            return true;
        }
        false
    }

    /// Every agent of the current cohort reached a terminal status.
    pub fn cohort_complete(&self) -> bool {
        self.pending.is_empty() && !self.finished.is_empty()
    }

    /// Once the cohort is complete: checks every finished agent against the
    /// real trajectory since its spawn, then promotes the cheapest survivor.
    /// Returns true when a new best was selected. Without a finite-cost
    /// survivor the previous best stays in charge.
    pub fn select(&mut self) -> bool {
        if !self.cohort_complete() {
            return false;
        }
        for a in &mut self.finished {
            if a.status == AgentStatus::Collided {
                continue;
            }
            let since: Vec<&JointState> = self.history.iter().filter(|s| s.t >= a.start_time - 1e-9).collect();
            if monitor_deviation(since, a, &self.config) == Verdict::Delete {
                a.status = AgentStatus::Deviated;
            }
        }
        let refs: Vec<&Agent> = self.finished.iter().collect();
        let chosen = select_best(&refs);
        self.last_outcomes = self
            .finished
            .iter()
            .enumerate()
            .map(|(k, a)| CohortOutcome { id: a.id, status: a.status, cost: a.cost, steps: a.steps_used, selected: chosen == Some(k) })
            .collect();
        let changed = match chosen {
            Some(i) => {
                self.best = Some(self.finished.swap_remove(i));
                true
            }
            None => false,
        };
        self.finished.clear();
        changed
    }

    /// Mode for the next decision tick.
    pub fn mode(&self) -> GovernorMode {
        fallback_governor(self.best.iter())
    }

    /// Invalidates every agent, as when the environment stops matching all
    /// predictions.
    pub fn invalidate_all(&mut self) {
        self.pending.clear();
        self.finished.clear();
        self.best = None;
    }
}

/// Atomic hand-off of the parameter set that drives the robot: readers get
/// the old or the new set, never a mix, and never block.
#[derive(Debug, Default)]
pub struct BestParameters {
    inner: ArcSwapOption<ParameterSet>,
}

impl BestParameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, params: ParameterSet) {
        self.inner.store(Some(Arc::new(params)));
    }

    pub fn clear(&self) {
        self.inner.store(None);
    }

    pub fn load(&self) -> Option<Arc<ParameterSet>> {
        self.inner.load_full()
    }
}

/// Bounded pool of rollout threads. Each submitted agent advances by one
/// slice and comes back on [`RolloutWorkers::results`].
pub struct RolloutWorkers {
    jobs: Option<Sender<Agent>>,
    results: Receiver<Result<Agent>>,
    handles: Vec<JoinHandle<()>>,
}

impl RolloutWorkers {
    pub fn start(threads: usize, model: Arc<RobotModel>, goal: GoalPose, config: FrameworkConfig) -> Self {
        let (job_tx, job_rx) = unbounded::<Agent>();
        let (res_tx, res_rx) = unbounded();
        let handles = (0..threads.max(1))
            .map(|_| {
                let jobs = job_rx.clone();
                let results = res_tx.clone();
                let model = model.clone();
                std::thread::spawn(move || {
                    for agent in jobs.iter() {
                        if results.send(rollout_slice(agent, &model, &goal, &config)).is_err() {
                            return;
                        }
                    }
                })
            })
            .collect();
        Self { jobs: Some(job_tx), results: res_rx, handles }
    }

    pub fn submit(&self, agent: Agent) {
        if let Some(tx) = &self.jobs {
            // workers only stop after `shutdown`, so the channel is open
            let _ = tx.send(agent);
        }
    }

    pub fn results(&self) -> &Receiver<Result<Agent>> {
        &self.results
    }

    /// Closes the job queue and joins the workers.
    pub fn shutdown(mut self) {
        self.jobs.take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
