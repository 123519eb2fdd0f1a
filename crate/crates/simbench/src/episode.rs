//! Closed-loop episodes in simulated time.
//!
//! The live controller ticks every `dt_live`. In the informed modes a planning
//! cycle starts every `t_global` on the current snapshot and its fields are
//! delivered `t_global` later, as if the planner had run concurrently for its
//! whole budget. The agent pool advances one scheduling round per tick.
//! Nothing depends on wall-clock time except the logged iteration times.

use std::sync::Arc;
use std::time::Instant;

use icf_core::agents::{at_goal, AgentPool, AgentStatus, GovernorMode, ParameterSet};
use icf_core::control::{compute_command, step_agent_dynamics, AvoidanceMode, CommandContext};
use icf_core::extraction::{build_field_sets, MagneticFieldSet};
use icf_core::kinematics::JointState;
use icf_core::planner::{config_collision_free, goal_configuration, plan, GlobalTrajectory, PlannerBudget};
use icf_core::world::{min_clearance, world_at, WorldSnapshot};
use icf_core::{JointVector, Vec3, Vec6};

use crate::mode::PlannerMode;
use crate::record::{ActiveMode, EpisodeCounters, EpisodeStatus, RunRecord, StepLog};
use crate::scenario::ScenarioSpec;

/// Slack when comparing simulated times that are sums of `dt`.
const TIME_EPS: f64 = 1e-9;

struct InFlight {
    deliver_at: f64,
    result: Option<(GlobalTrajectory, Arc<WorldSnapshot>)>,
}

/// Informed pre-planning in simulated time.
struct PlanningCycle {
    next_start: f64,
    in_flight: Option<InFlight>,
    goal_q: Option<JointVector>,
    cycle: u64,
    seed: u64,
}

impl PlanningCycle {
    fn budget(&self, spec: &ScenarioSpec) -> PlannerBudget {
        PlannerBudget {
            rng_seed: self.seed.wrapping_add(self.cycle),
            wall_clock: false,
            ..spec.planner.budget
        }
    }

    fn start(&mut self, spec: &ScenarioSpec, mode: PlannerMode, q: &JointVector, snapshot: &Arc<WorldSnapshot>, counters: &mut EpisodeCounters) {
        let source = mode.pre_planner().expect("informed mode");
        let budget = self.budget(spec);
        let model = &spec.model;
        let cached = self.goal_q.take().filter(|g| config_collision_free(model, g, snapshot, budget.clearance));
        let goal_q = match cached {
            Some(g) => Ok(g),
            None => {
                let ik = icf_core::kinematics::IkConfig { seed: budget.rng_seed, ..spec.planner.ik };
                goal_configuration(model, &spec.goal.to_isometry(), q, snapshot, budget.clearance, &ik)
            }
        };
        let result = goal_q.and_then(|g| {
            let r = plan(source, model, q, &g, snapshot, &budget);
            self.goal_q = Some(g);
            r
        });
        let result = match result {
            Ok(traj) => {
                counters.plans_succeeded += 1;
                Some((traj, snapshot.clone()))
            }
            Err(_) => {
                counters.plans_failed += 1;
                None
            }
        };
        self.in_flight = Some(InFlight { deliver_at: snapshot.t() + budget.t_global, result });
        self.next_start = snapshot.t() + budget.t_global;
        self.cycle += 1;
    }
}

/// Mixes the episode seed into the scenario's planner seed.
fn episode_seed(base: u64, seed: u64) -> u64 {
    base ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs one episode. Every outcome, including internal errors, ends up as a
/// status in the record.
pub fn run_episode(spec: &ScenarioSpec, mode: PlannerMode, seed: u64) -> RunRecord {
    let mut record = RunRecord {
        scenario: spec.name.clone(),
        mode,
        seed,
        status: EpisodeStatus::Timeout,
        steps: Vec::new(),
        goal_position: spec.goal.position.into(),
        xi: spec.steering.xi,
        max_time: spec.max_time,
        counters: EpisodeCounters::default(),
        message: None,
    };
    if let Err(e) = episode_loop(spec, mode, seed, &mut record) {
        record.status = EpisodeStatus::Aborted;
        record.message = Some(e.to_string());
    }
    record
}

fn episode_loop(spec: &ScenarioSpec, mode: PlannerMode, seed: u64, record: &mut RunRecord) -> icf_core::Result<()> {
    let model = spec.model.as_ref();
    let dt = spec.dt_live;
    let n_cp = model.n_control_points();
    let world0 = WorldSnapshot::new(spec.obstacles.clone(), 0.0)?;
    let bootstrap = ParameterSet::new(spec.steering, MagneticFieldSet::uniform(n_cp, world0.n_obstacles(), Vec3::z(), 0.0));

    let mut pool = match mode {
        PlannerMode::Cfp => Some(AgentPool::new(spec.agents).with_branching(spec.steering.d_range)),
        PlannerMode::IcfPrm | PlannerMode::IcfRrt => Some(AgentPool::new(spec.agents)),
        _ => None,
    };
    let mut planning = mode.pre_planner().map(|_| PlanningCycle {
        next_start: 0.0,
        in_flight: None,
        goal_q: None,
        cycle: 0,
        seed: episode_seed(spec.planner.budget.rng_seed, seed),
    });
    // fields of the latest delivery, used by the EE in fallback before any agent succeeded
    let mut latest_fields: Option<Arc<MagneticFieldSet>> = None;
    let mut next_root = 0.0;

    let mut state = JointState::at_rest(spec.start_q.clone(), 0.0);
    let mut ee_velocity = Vec6::zeros();
    let mut k: u64 = 0;
    loop {
        let t = k as f64 * dt;
        state.t = t;
        let snapshot = Arc::new(world_at(&world0, t));

        if let Some(pool) = pool.as_mut() {
            if pool.observe(&state) {
                record.counters.best_deleted += 1;
            }
            if let Some(cycle) = planning.as_mut() {
                if cycle.in_flight.as_ref().is_some_and(|f| t + TIME_EPS >= f.deliver_at) {
                    if let Some((traj, plan_snapshot)) = cycle.in_flight.take().and_then(|f| f.result) {
                        let sets = build_field_sets(model, &traj, &plan_snapshot, spec.planner.extraction_radius)?;
                        latest_fields = Some(Arc::new(sets.alg1.clone()));
                        pool.deliver(&bootstrap, sets.alg1, sets.alg2, &state, &ee_velocity, &snapshot, model)?;
                        record.counters.deliveries += 1;
                    }
                }
                // a new cycle waits for the running cohort to be evaluated
                if cycle.in_flight.is_none() && pool.pending() == 0 && t + TIME_EPS >= cycle.next_start {
                    cycle.start(spec, mode, &state.q, &snapshot, &mut record.counters);
                }
            } else if pool.pending() == 0 && t + TIME_EPS >= next_root {
                pool.spawn_root(&bootstrap, &state, &ee_velocity, &snapshot, model)?;
                next_root = t + spec.planner.budget.t_global;
            }
            pool.run_round(model, &spec.goal)?;
            if pool.cohort_complete() {
                if pool.select() {
                    record.counters.selections += 1;
                }
                for o in pool.last_outcomes() {
                    match o.status {
                        AgentStatus::ReachedGoal => record.counters.agents_reached += 1,
                        AgentStatus::Collided => record.counters.agents_collided += 1,
                        AgentStatus::Stopped => record.counters.agents_stopped += 1,
                        _ => record.counters.agents_deviated += 1,
                    }
                }
            }
        }

        let governor = pool.as_ref().map_or(GovernorMode::Fallback, |p| p.mode());
        let best = pool.as_ref().and_then(|p| p.best());
        let (steering, fields, avoidance) = match mode {
            PlannerMode::Apf => (spec.steering, bootstrap.fields.clone(), AvoidanceMode::POTENTIAL_FIELD),
            PlannerMode::Attract => (spec.steering, bootstrap.fields.clone(), AvoidanceMode::ATTRACT_ONLY),
            PlannerMode::Cf => (spec.steering, bootstrap.fields.clone(), AvoidanceMode::FALLBACK),
            _ => match (governor, best) {
                (GovernorMode::Normal, Some(b)) => (b.params.steering, b.params.fields.clone(), AvoidanceMode::CIRCULAR_FIELD),
                _ => {
                    let fields = best.map(|b| b.params.fields.clone()).or_else(|| latest_fields.clone()).unwrap_or_else(|| bootstrap.fields.clone());
                    (spec.steering, fields, AvoidanceMode::FALLBACK)
                }
            },
        };
        let active = if mode.uses_agents() && avoidance != AvoidanceMode::CIRCULAR_FIELD { ActiveMode::Fallback } else { ActiveMode::Normal };
        if active == ActiveMode::Fallback {
            record.counters.fallback_steps += 1;
        }
        let ctx = CommandContext { model, snapshot: &snapshot, goal: &spec.goal, params: &steering, fields: &fields.b, mode: avoidance };

        let started = Instant::now();
        let out = compute_command(&ctx, &state, &ee_velocity, dt)?;
        let iteration_time = started.elapsed().as_secs_f64().max(1e-9);

        let clearance = min_clearance(&snapshot, model, &state.q)?.distance;
        let pose = out.kinematics.ee_pose;
        let rot = pose.rotation.quaternion();
        record.steps.push(StepLog {
            t,
            q: state.q.iter().copied().collect(),
            qdot_cmd: out.command.qdot.iter().copied().collect(),
            ee_position: pose.translation.vector.into(),
            ee_orientation: [rot.w, rot.i, rot.j, rot.k],
            min_clearance: clearance,
            mode: active,
            avoidance_active: out.obstacles_in_range,
            iteration_time,
        });

        if clearance <= 0.0 {
            record.status = EpisodeStatus::Collided;
            return Ok(());
        }
        if at_goal(&pose, &spec.goal, &spec.agents) {
            record.status = EpisodeStatus::Reached;
            return Ok(());
        }
        if t + dt > spec.max_time + TIME_EPS {
            record.status = EpisodeStatus::Timeout;
            return Ok(());
        }
        let step = step_agent_dynamics(&state, &out.command.qdot, dt, model)?;
        state = step.state;
        ee_velocity = step.ee_velocity;
        k += 1;
    }
}
