//! Extraction diagnostics for the `extract-dump` command.

use std::fmt::Write;

use icf_core::extraction::{build_field_sets, Extracted};
use icf_core::planner::{goal_configuration, plan, PlannerBudget};
use icf_core::Vec3;

use crate::error::Result;
use crate::scenario::ScenarioSpec;

fn vec(v: &Vec3) -> String {
    format!("({:.4}, {:.4}, {:.4})", v.x, v.y, v.z)
}

fn extracted(e: &Extracted) -> String {
    match e {
        Extracted::Unit(v) => vec(v),
        Extracted::Degenerate => "degenerate".into(),
        Extracted::NoInteraction => "no-interaction".into(),
    }
}

/// Plans once from the start configuration in the initial world and reports,
/// per (control point, obstacle), both extractors' intermediate values and
/// the stored field vectors.
pub fn extraction_report(spec: &ScenarioSpec, seed: u64) -> Result<String> {
    let model = spec.model.as_ref();
    let world = spec.initial_world()?;
    let budget = PlannerBudget { wall_clock: false, rng_seed: spec.planner.budget.rng_seed ^ seed, ..spec.planner.budget };
    let mut out = String::new();
    let goal_q = goal_configuration(model, &spec.goal.to_isometry(), &spec.start_q, &world, budget.clearance, &spec.planner.ik)?;
    let traj = plan(spec.planner.source, model, &spec.start_q, &goal_q, &world, &budget)?;
    let sets = build_field_sets(model, &traj, &world, spec.planner.extraction_radius)?;
    let _ = writeln!(out, "scenario = {}", spec.name);
    let _ = writeln!(out, "pre_planner = {}", traj.source.name());
    let _ = writeln!(out, "waypoints = {}", traj.waypoints.len());
    let _ = writeln!(out, "extraction_radius = {}", spec.planner.extraction_radius);
    for d in &sets.diagnostics {
        let (i, j) = (d.control_point, d.obstacle);
        let _ = writeln!(out, "\n[cp {i}, obstacle {j}]");
        let _ = writeln!(out, "alg1.tau = {}", d.alg1.tau);
        let _ = writeln!(out, "alg1.p_c = {}", vec(&d.alg1.p_c));
        let _ = writeln!(out, "alg1.v_c = {}", vec(&d.alg1.v_c));
        let _ = writeln!(out, "alg1.obstacle_point = {}", vec(&d.alg1.obstacle_point));
        let _ = writeln!(out, "alg1.b = {}", extracted(&d.alg1.b));
        match d.alg2.window {
            Some((lo, mid, hi)) => {
                let _ = writeln!(out, "alg2.window = ({lo}, {mid}, {hi})");
            }
            None => {
                let _ = writeln!(out, "alg2.window = none");
            }
        }
        let _ = writeln!(out, "alg2.b = {}", extracted(&d.alg2.b));
        let _ = writeln!(out, "stored.alg1 = {} ({:?})", vec(&sets.alg1.b[i][j]), sets.alg1.sources[i][j]);
        let _ = writeln!(out, "stored.alg2 = {} ({:?})", vec(&sets.alg2.b[i][j]), sets.alg2.sources[i][j]);
    }
    Ok(out)
}
