//! Scenario files: TOML with every table closed against unknown keys.
//! The grammar is documented in `docs/scenario-format.md`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use icf_core::agents::FrameworkConfig;
use icf_core::forces::{GoalPose, SteeringParameters};
use icf_core::kinematics::{
    ee_pose, CollisionSphere, ControlPointAttachment, DhJoint, IkConfig, JointLimit, RobotModel,
};
use icf_core::nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Quaternion};
use icf_core::planner::{PlannerBudget, PlannerSource};
use icf_core::world::{
    estimate_normals, min_clearance, read_cloud, MotionScript, PointCloudObstacle, Primitive, Waypoint, WorldSnapshot,
};
use icf_core::{JointVector, Vec3};
use serde::Deserialize;

use crate::error::{Result, SimError};

pub const DEFAULT_SPACING: f64 = 0.02;
pub const DEFAULT_NORMAL_NEIGHBORS: usize = 12;
pub const DEFAULT_MAX_TIME: f64 = 60.0;
pub const DEFAULT_DT_LIVE: f64 = 0.01;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "default_max_time")]
    max_time: f64,
    #[serde(default = "default_dt_live")]
    dt_live: f64,
    start_q: Vec<f64>,
    goal: GoalBlock,
    robot: RobotBlock,
    #[serde(default)]
    obstacles: Vec<ObstacleBlock>,
    #[serde(default)]
    steering: SteeringBlock,
    #[serde(default)]
    agents: AgentsBlock,
    #[serde(default)]
    planner: PlannerBlock,
}

fn default_max_time() -> f64 {
    DEFAULT_MAX_TIME
}

fn default_dt_live() -> f64 {
    DEFAULT_DT_LIVE
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalBlock {
    position: [f64; 3],
    /// `[w, x, y, z]`; the start orientation when absent.
    orientation: Option<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotBlock {
    preset: Option<String>,
    #[serde(default)]
    joints: Vec<JointRow>,
    #[serde(default)]
    control_points: Vec<ControlPointRow>,
    #[serde(default)]
    spheres: Vec<SphereRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRow {
    a: f64,
    alpha: f64,
    d: f64,
    #[serde(default)]
    theta_offset: f64,
    min: f64,
    max: f64,
    max_velocity: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlPointRow {
    link: usize,
    #[serde(default)]
    offset: [f64; 3],
    #[serde(default)]
    ee: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereRow {
    link: usize,
    #[serde(default)]
    offset: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
enum ObstacleBlock {
    Box {
        half_extents: [f64; 3],
        center: [f64; 3],
        spacing: Option<f64>,
        motion: Option<MotionBlock>,
    },
    Sphere {
        radius: f64,
        center: [f64; 3],
        spacing: Option<f64>,
        motion: Option<MotionBlock>,
    },
    Cylinder {
        radius: f64,
        half_height: f64,
        center: [f64; 3],
        spacing: Option<f64>,
        motion: Option<MotionBlock>,
    },
    Cloud {
        file: PathBuf,
        #[serde(default)]
        center: [f64; 3],
        normal_neighbors: Option<usize>,
        /// Normals are oriented towards this point when estimated.
        viewpoint: Option<[f64; 3]>,
        motion: Option<MotionBlock>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum MotionBlock {
    Static,
    ConstantVelocity { velocity: [f64; 3] },
    WaypointLoop { waypoints: Vec<WaypointRow> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointRow {
    t: f64,
    position: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SteeringBlock {
    k_cf: f64,
    w1: f64,
    w2: f64,
    w3: f64,
    v_min: f64,
    xi: f64,
    v_max: f64,
    d_range: f64,
    alpha: f64,
    beta: f64,
    k_jla: f64,
    jla_margin: f64,
    k_d: f64,
    k_o: f64,
    k_w: f64,
    k_apf: f64,
    k_body: f64,
}

impl Default for SteeringBlock {
    fn default() -> Self {
        let p = SteeringParameters::default();
        Self {
            k_cf: p.k_cf,
            w1: p.w1,
            w2: p.w2,
            w3: p.w3,
            v_min: p.v_min,
            xi: p.xi,
            v_max: p.v_max,
            d_range: p.d_range,
            alpha: p.alpha,
            beta: p.beta,
            k_jla: p.k_jla,
            jla_margin: p.jla_margin,
            k_d: p.k_d,
            k_o: p.k_o,
            k_w: p.k_w,
            k_apf: p.k_apf,
            k_body: p.k_body,
        }
    }
}

impl From<SteeringBlock> for SteeringParameters {
    fn from(b: SteeringBlock) -> Self {
        Self {
            k_cf: b.k_cf,
            w1: b.w1,
            w2: b.w2,
            w3: b.w3,
            v_min: b.v_min,
            xi: b.xi,
            v_max: b.v_max,
            d_range: b.d_range,
            alpha: b.alpha,
            beta: b.beta,
            k_jla: b.k_jla,
            jla_margin: b.jla_margin,
            k_d: b.k_d,
            k_o: b.k_o,
            k_w: b.k_w,
            k_apf: b.k_apf,
            k_body: b.k_body,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AgentsBlock {
    n_ps: usize,
    max_parallel: usize,
    deviation_limit: f64,
    rollout_dt: f64,
    extras: usize,
    lambda_time: f64,
    lambda_len: f64,
    lambda_clear: f64,
    c_safe: f64,
    goal_tolerance: f64,
    orientation_tolerance: f64,
    timeout_slices: usize,
    max_branch_agents: usize,
}

impl Default for AgentsBlock {
    fn default() -> Self {
        let c = FrameworkConfig::default();
        Self {
            n_ps: c.n_ps,
            max_parallel: c.max_parallel,
            deviation_limit: c.deviation_limit,
            rollout_dt: c.rollout_dt,
            extras: c.n_agent_extras,
            lambda_time: c.lambda_time,
            lambda_len: c.lambda_len,
            lambda_clear: c.lambda_clear,
            c_safe: c.c_safe,
            goal_tolerance: c.goal_tolerance,
            orientation_tolerance: c.orientation_tolerance,
            timeout_slices: c.timeout_slices,
            max_branch_agents: c.max_branch_agents,
        }
    }
}

impl From<AgentsBlock> for FrameworkConfig {
    fn from(b: AgentsBlock) -> Self {
        Self {
            n_ps: b.n_ps,
            max_parallel: b.max_parallel,
            deviation_limit: b.deviation_limit,
            rollout_dt: b.rollout_dt,
            n_agent_extras: b.extras,
            lambda_time: b.lambda_time,
            lambda_len: b.lambda_len,
            lambda_clear: b.lambda_clear,
            c_safe: b.c_safe,
            goal_tolerance: b.goal_tolerance,
            orientation_tolerance: b.orientation_tolerance,
            timeout_slices: b.timeout_slices,
            max_branch_agents: b.max_branch_agents,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlannerBlock {
    pre_planner: String,
    t_global: f64,
    seed: u64,
    max_samples: usize,
    step_max: f64,
    clearance: f64,
    neighbors: usize,
    edge_resolution: f64,
    /// Interaction radius of the pass-through extraction; `d_range` when absent.
    extraction_radius: Option<f64>,
    ik_restarts: usize,
    ik_iterations: usize,
}

impl Default for PlannerBlock {
    fn default() -> Self {
        let b = PlannerBudget::default();
        let ik = IkConfig::default();
        Self {
            pre_planner: "prm".into(),
            t_global: b.t_global,
            seed: b.rng_seed,
            max_samples: b.max_samples,
            step_max: b.step_max,
            clearance: b.clearance,
            neighbors: b.neighbors,
            edge_resolution: b.edge_resolution,
            extraction_radius: None,
            ik_restarts: ik.restarts,
            ik_iterations: ik.max_iterations,
        }
    }
}

/// Pre-planner settings of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    pub source: PlannerSource,
    pub budget: PlannerBudget,
    pub ik: IkConfig,
    pub extraction_radius: f64,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    pub model: Arc<RobotModel>,
    pub obstacles: Vec<PointCloudObstacle>,
    pub start_q: JointVector,
    pub goal: GoalPose,
    pub steering: SteeringParameters,
    pub agents: FrameworkConfig,
    pub planner: PlannerSettings,
    pub max_time: f64,
    pub dt_live: f64,
}

impl ScenarioSpec {
    /// World at `t = 0`.
    pub fn initial_world(&self) -> Result<WorldSnapshot> {
        Ok(WorldSnapshot::new(self.obstacles.clone(), 0.0)?)
    }

    /// Collects every invariant violation.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.start_q.len() != self.model.dof() {
            problems.push(format!("start_q has {} entries, robot has {} joints", self.start_q.len(), self.model.dof()));
        } else {
            if !self.model.within_limits(&self.start_q) {
                problems.push("start_q violates the joint limits".into());
            }
            match self.initial_world().and_then(|w| Ok(min_clearance(&w, &self.model, &self.start_q)?)) {
                Ok(c) if c.distance <= 0.0 => {
                    problems.push(format!("start configuration is in collision (clearance {:.4} m)", c.distance))
                }
                Ok(_) => {}
                Err(e) => problems.push(e.to_string()),
            }
        }
        if !(self.max_time > 0.0) {
            problems.push("max_time must be > 0".into());
        }
        if !(self.dt_live > 0.0) {
            problems.push("dt_live must be > 0".into());
        }
        if let Err(e) = self.steering.validate() {
            problems.push(format!("steering: {e}"));
        }
        if let Err(e) = self.agents.validate() {
            problems.push(format!("agents: {e}"));
        }
        if let Err(e) = self.planner.budget.validate() {
            problems.push(format!("planner: {e}"));
        }
        if !(self.planner.extraction_radius > 0.0) {
            problems.push("planner: extraction_radius must be > 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::Invalid(problems))
        }
    }
}

/// Reads, parses and validates a scenario file. Cloud files are resolved
/// relative to the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, base).map_err(|e| match e {
        SimError::Parse { message, .. } => SimError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

/// [`load_scenario`] on text already in memory.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioSpec> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| SimError::Parse { path: PathBuf::from("<memory>"), message: e.to_string() })?;
    build(file, base_dir)
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn build_robot(block: &RobotBlock) -> Result<RobotModel> {
    match (&block.preset, block.joints.is_empty()) {
        (Some(p), true) if block.control_points.is_empty() && block.spheres.is_empty() => match p.as_str() {
            "demo7" => Ok(RobotModel::demo_7dof()),
            other => Err(SimError::Invalid(vec![format!("robot: unknown preset `{other}` (known: demo7)")])),
        },
        (Some(_), _) => Err(SimError::Invalid(vec!["robot: `preset` excludes joints, control_points and spheres".into()])),
        (None, true) => Err(SimError::Invalid(vec!["robot: give either `preset` or `joints`".into()])),
        (None, false) => {
            let joints = block.joints.iter().map(|j| DhJoint::new(j.a, j.alpha, j.d, j.theta_offset)).collect();
            let limits = block.joints.iter().map(|j| JointLimit::new(j.min, j.max)).collect();
            let vel = block.joints.iter().map(|j| j.max_velocity).collect();
            let cps = block
                .control_points
                .iter()
                .map(|c| {
                    if c.ee {
                        ControlPointAttachment::ee(c.link, v3(c.offset))
                    } else {
                        ControlPointAttachment::body(c.link, v3(c.offset))
                    }
                })
                .collect();
            let spheres = block
                .spheres
                .iter()
                .map(|s| CollisionSphere { link_index: s.link, local_offset: v3(s.offset), radius: s.radius })
                .collect();
            Ok(RobotModel::new(joints, limits, vel, cps, spheres)?)
        }
    }
}

fn build_motion(m: Option<MotionBlock>) -> MotionScript {
    match m {
        None | Some(MotionBlock::Static) => MotionScript::Static,
        Some(MotionBlock::ConstantVelocity { velocity }) => MotionScript::ConstantVelocity(v3(velocity)),
        Some(MotionBlock::WaypointLoop { waypoints }) => {
            MotionScript::WaypointLoop(waypoints.iter().map(|w| Waypoint { t: w.t, position: v3(w.position) }).collect())
        }
    }
}

fn build_obstacle(id: usize, block: ObstacleBlock, base_dir: &Path) -> Result<PointCloudObstacle> {
    let primitive = |shape, center: [f64; 3], spacing: Option<f64>, motion| -> Result<PointCloudObstacle> {
        let spacing = spacing.unwrap_or(DEFAULT_SPACING);
        if !(spacing > 0.0) {
            return Err(SimError::Invalid(vec![format!("obstacle {id}: spacing must be > 0")]));
        }
        Ok(PointCloudObstacle::from_primitive(id, &shape, spacing, v3(center), build_motion(motion))?)
    };
    match block {
        ObstacleBlock::Box { half_extents, center, spacing, motion } => {
            if half_extents.iter().any(|h| !(*h > 0.0)) {
                return Err(SimError::Invalid(vec![format!("obstacle {id}: half_extents must be > 0")]));
            }
            primitive(Primitive::Box { half_extents: v3(half_extents) }, center, spacing, motion)
        }
        ObstacleBlock::Sphere { radius, center, spacing, motion } => {
            if !(radius > 0.0) {
                return Err(SimError::Invalid(vec![format!("obstacle {id}: radius must be > 0")]));
            }
            primitive(Primitive::Sphere { radius }, center, spacing, motion)
        }
        ObstacleBlock::Cylinder { radius, half_height, center, spacing, motion } => {
            if !(radius > 0.0 && half_height > 0.0) {
                return Err(SimError::Invalid(vec![format!("obstacle {id}: radius and half_height must be > 0")]));
            }
            primitive(Primitive::Cylinder { radius, half_height }, center, spacing, motion)
        }
        ObstacleBlock::Cloud { file, center, normal_neighbors, viewpoint, motion } => {
            let path = if file.is_absolute() { file } else { base_dir.join(file) };
            if !path.is_file() {
                return Err(SimError::MissingFile(path));
            }
            let raw = read_cloud(&path)?;
            let normals = match raw.normals {
                Some(n) => n.iter().map(|v| v.normalize()).collect(),
                None => {
                    let k = normal_neighbors.unwrap_or(DEFAULT_NORMAL_NEIGHBORS);
                    // body-frame viewpoint
                    let view = v3(viewpoint.unwrap_or([0.0, 0.0, 0.5])) - v3(center);
                    estimate_normals(&raw.points, k, &view)?.into_iter().map(|e| e.normal).collect()
                }
            };
            let pose = Isometry3::from_parts(Translation3::new(center[0], center[1], center[2]), UnitQuaternion::identity());
            Ok(PointCloudObstacle::new(id, raw.points, normals, pose, build_motion(motion))?)
        }
    }
}

fn build(file: ScenarioFile, base_dir: &Path) -> Result<ScenarioSpec> {
    let model = build_robot(&file.robot)?;
    let start_q = DVector::from_vec(file.start_q);
    if start_q.len() != model.dof() {
        return Err(SimError::Invalid(vec![format!(
            "start_q has {} entries, robot has {} joints",
            start_q.len(),
            model.dof()
        )]));
    }
    let orientation = match file.goal.orientation {
        Some([w, x, y, z]) => {
            let q = Quaternion::new(w, x, y, z);
            if !(q.norm() > 1e-9) {
                return Err(SimError::Invalid(vec!["goal: orientation must be a non-zero quaternion".into()]));
            }
            UnitQuaternion::from_quaternion(q)
        }
        None => ee_pose(&model, &start_q)?.rotation,
    };
    let goal = GoalPose::new(v3(file.goal.position), orientation);
    let obstacles = file
        .obstacles
        .into_iter()
        .enumerate()
        .map(|(id, b)| build_obstacle(id, b, base_dir))
        .collect::<Result<Vec<_>>>()?;
    let steering: SteeringParameters = file.steering.into();
    let p = file.planner;
    let source = match p.pre_planner.as_str() {
        "prm" => PlannerSource::Prm,
        "rrt" => PlannerSource::Rrt,
        other => return Err(SimError::Invalid(vec![format!("planner: unknown pre_planner `{other}` (prm | rrt)")])),
    };
    let budget = PlannerBudget {
        t_global: p.t_global,
        max_samples: p.max_samples,
        step_max: p.step_max,
        clearance: p.clearance,
        rng_seed: p.seed,
        neighbors: p.neighbors,
        edge_resolution: p.edge_resolution,
        wall_clock: true,
    };
    let ik = IkConfig { restarts: p.ik_restarts, max_iterations: p.ik_iterations, seed: p.seed, ..IkConfig::default() };
    let spec = ScenarioSpec {
        name: file.name,
        description: file.description,
        model: Arc::new(model),
        obstacles,
        start_q,
        goal,
        planner: PlannerSettings { source, budget, ik, extraction_radius: p.extraction_radius.unwrap_or(steering.d_range) },
        steering,
        agents: file.agents.into(),
        max_time: file.max_time,
        dt_live: file.dt_live,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
start_q = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]

[goal]
position = [0.4, 0.2, 0.4]

[robot]
preset = "demo7"
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.max_time, DEFAULT_MAX_TIME);
        assert_eq!(s.dt_live, DEFAULT_DT_LIVE);
        assert_eq!(s.steering, SteeringParameters::default());
        assert_eq!(s.agents, FrameworkConfig::default());
        assert_eq!(s.planner.source, PlannerSource::Prm);
        assert_eq!(s.planner.extraction_radius, s.steering.d_range);
        assert!(s.obstacles.is_empty());
        let start = ee_pose(&s.model, &s.start_q).unwrap();
        assert!(s.goal.orientation.angle_to(&start.rotation) < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[goal]", "[goal]\nposition_typo = 1");
        assert!(matches!(parse_scenario(&text, Path::new(".")), Err(SimError::Parse { .. })));
        let text = format!("{MINIMAL}\n[steering]\nk_fc = 0.1\n");
        let err = parse_scenario(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("k_fc"), "{err}");
        assert!(err.contains("line"), "{err}");
        let text = format!("{MINIMAL}\n[[obstacles]]\nshape = \"sphere\"\nradius = 0.1\ncenter = [1, 1, 1]\ncolour = 3\n");
        assert!(parse_scenario(&text, Path::new(".")).is_err());
    }

    #[test]
    fn start_in_collision_is_rejected() {
        // sphere around the base link
        let text = format!("{MINIMAL}\n[[obstacles]]\nshape = \"sphere\"\nradius = 0.1\ncenter = [0.0, 0.0, 0.2]\n");
        match parse_scenario(&text, Path::new(".")) {
            Err(SimError::Invalid(p)) => assert!(p.iter().any(|m| m.contains("collision")), "{p:?}"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn missing_cloud_file_names_the_path() {
        let text = format!("{MINIMAL}\n[[obstacles]]\nshape = \"cloud\"\nfile = \"nowhere/cloud.xyz\"\n");
        let err = parse_scenario(&text, Path::new("/tmp")).unwrap_err();
        assert!(err.to_string().contains("nowhere/cloud.xyz"), "{err}");
    }

    #[test]
    fn motion_and_custom_robot() {
        let text = r#"
name = "planar"
start_q = [0.5, 0.5]
[goal]
position = [1.0, 1.0, 0.0]
orientation = [1.0, 0.0, 0.0, 0.0]
[robot]
joints = [
  { a = 0.0, alpha = 0.0, d = 0.0, min = -3.0, max = 3.0, max_velocity = 2.0 },
  { a = 1.0, alpha = 0.0, d = 0.0, min = -3.0, max = 3.0, max_velocity = 2.0 },
]
control_points = [ { link = 2, offset = [1.0, 0.0, 0.0], ee = true } ]
spheres = [ { link = 2, offset = [1.0, 0.0, 0.0], radius = 0.05 } ]
[[obstacles]]
shape = "box"
half_extents = [0.1, 0.1, 0.1]
center = [-2.0, 0.0, 0.0]
motion = { kind = "constant_velocity", velocity = [0.1, 0.0, 0.0] }
[[obstacles]]
shape = "cylinder"
radius = 0.1
half_height = 0.2
center = [0.0, -2.0, 0.0]
motion = { kind = "waypoint_loop", waypoints = [ { t = 0.0, position = [0.0, -2.0, 0.0] }, { t = 1.0, position = [0.0, -2.5, 0.0] } ] }
[planner]
pre_planner = "rrt"
"#;
        let s = parse_scenario(text, Path::new(".")).unwrap();
        assert_eq!(s.model.dof(), 2);
        assert_eq!(s.obstacles.len(), 2);
        assert_eq!(s.obstacles[0].motion, MotionScript::ConstantVelocity(Vec3::new(0.1, 0.0, 0.0)));
        assert_eq!(s.planner.source, PlannerSource::Rrt);
    }
}
