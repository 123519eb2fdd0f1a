//! Point-cloud obstacles and immutable, timestamped world snapshots.

mod cloud;
mod grid;
mod normals;
mod primitives;

use std::sync::Arc;

use nalgebra::{Isometry3, Point3};

pub use cloud::{parse_cloud, read_cloud, RawCloud};
pub use grid::SpatialGrid;
pub use normals::{estimate_normals, NormalEstimate};
pub use primitives::{sample_surface, Primitive};

use crate::error::{Error, Result};
use crate::kinematics::{link_frames, sphere_centers, RobotModel};
use crate::{JointVector, Vec3};

/// Default cell edge of the per-obstacle spatial grid.
pub const GRID_CELL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vec3,
}

/// Translational motion of an obstacle's frame origin.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MotionScript {
    #[default]
    Static,
    ConstantVelocity(Vec3),
    /// Piecewise-linear through absolute positions, repeating with period
    /// `t_last - t_first`. Close the loop by repeating the first position.
    WaypointLoop(Vec<Waypoint>),
}

impl MotionScript {
    pub fn validate(&self) -> Result<()> {
        if let MotionScript::WaypointLoop(wps) = self {
            if wps.is_empty() {
                return Err(Error::InvalidObstacle("waypoint loop needs at least one waypoint".into()));
            }
            if wps.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return Err(Error::InvalidObstacle("waypoint times must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        match self {
            MotionScript::Static => true,
            MotionScript::ConstantVelocity(v) => *v == Vec3::zeros(),
            MotionScript::WaypointLoop(w) => w.len() < 2,
        }
    }

    /// Origin position and velocity at absolute time `t`.
    pub fn evaluate(&self, initial: &Vec3, t: f64) -> (Vec3, Vec3) {
        match self {
            MotionScript::Static => (*initial, Vec3::zeros()),
            MotionScript::ConstantVelocity(v) => (initial + v * t, *v),
            MotionScript::WaypointLoop(wps) => {
                if wps.len() == 1 {
                    return (wps[0].position, Vec3::zeros());
                }
                let t0 = wps[0].t;
                let period = wps[wps.len() - 1].t - t0;
                let tau = t0 + (t - t0).rem_euclid(period);
                let seg = wps.windows(2).find(|w| tau < w[1].t).unwrap_or(&wps[wps.len() - 2..]);
                let (a, b) = (seg[0], seg[1]);
                let vel = (b.position - a.position) / (b.t - a.t);
                (a.position + vel * (tau - a.t), vel)
            }
        }
    }
}

/// Obstacle definition: a rigid point cloud with per-point normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudObstacle {
    pub id: usize,
    /// Body-frame points.
    pub points: Vec<Vec3>,
    /// Body-frame unit normals, one per point.
    pub normals: Vec<Vec3>,
    /// Pose at `t = 0`. Only the translation evolves over time.
    pub pose: Isometry3<f64>,
    pub motion: MotionScript,
}

impl PointCloudObstacle {
    pub fn new(id: usize, points: Vec<Vec3>, normals: Vec<Vec3>, pose: Isometry3<f64>, motion: MotionScript) -> Result<Self> {
        if points.is_empty() || points.len() != normals.len() {
            return Err(Error::InvalidObstacle(format!(
                "obstacle {id}: {} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(k) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidObstacle(format!("obstacle {id}: normal {k} is not unit length")));
        }
        motion.validate()?;
        Ok(Self { id, points, normals, pose, motion })
    }

    pub fn from_primitive(id: usize, shape: &Primitive, spacing: f64, center: Vec3, motion: MotionScript) -> Result<Self> {
        let (points, normals) = sample_surface(shape, spacing);
        Self::new(id, points, normals, Isometry3::translation(center.x, center.y, center.z), motion)
    }
}

/// World-frame state of one obstacle inside a snapshot.
#[derive(Debug, Clone)]
pub struct ObstacleState {
    pub id: usize,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Rigid translational velocity shared by every point.
    pub velocity: Vec3,
    pub origin: Vec3,
    grid: SpatialGrid,
}

impl ObstacleState {
    fn at(def: &PointCloudObstacle, t: f64) -> Self {
        let (origin, velocity) = def.motion.evaluate(&def.pose.translation.vector, t);
        let rot = def.pose.rotation;
        let points: Vec<Vec3> = def.points.iter().map(|p| rot * p + origin).collect();
        let normals = def.normals.iter().map(|n| rot * n).collect();
        let grid = SpatialGrid::build(&points, GRID_CELL);
        Self { id: def.id, points, normals, velocity, origin, grid }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Closest point `(index, distance)` to `x`.
    pub fn nearest(&self, x: &Vec3) -> Option<(usize, f64)> {
        self.grid.nearest(&self.points, x)
    }
}

/// One answer of [`query_range`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeHit {
    pub obstacle_id: usize,
    pub point_index: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub velocity: Vec3,
}

/// Immutable world at time `t`. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    t: f64,
    definitions: Arc<Vec<PointCloudObstacle>>,
    obstacles: Vec<Arc<ObstacleState>>,
}

impl WorldSnapshot {
    /// Builds the snapshot at time `t`. Obstacle ids must be `0..n` in order.
    pub fn new(definitions: Vec<PointCloudObstacle>, t: f64) -> Result<Self> {
        for (k, d) in definitions.iter().enumerate() {
            if d.id != k {
                return Err(Error::InvalidObstacle(format!("obstacle at position {k} has id {}", d.id)));
            }
        }
        let obstacles = definitions.iter().map(|d| Arc::new(ObstacleState::at(d, t))).collect();
        Ok(Self { t, definitions: Arc::new(definitions), obstacles })
    }

    pub fn empty() -> Self {
        Self { t: 0.0, definitions: Arc::new(Vec::new()), obstacles: Vec::new() }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn obstacles(&self) -> &[Arc<ObstacleState>] {
        &self.obstacles
    }

    pub fn definitions(&self) -> &[PointCloudObstacle] {
        &self.definitions
    }

    pub fn n_obstacles(&self) -> usize {
        self.obstacles.len()
    }

    pub fn total_points(&self) -> usize {
        self.obstacles.iter().map(|o| o.points.len()).sum()
    }

    /// Calls `visit` for every in-range point, ordered by obstacle id and
    /// then point index.
    pub fn for_each_in_range<F: FnMut(&ObstacleState, usize, f64)>(&self, x: &Vec3, d_range: f64, mut visit: F) {
        let mut hits: Vec<(usize, f64)> = Vec::new();
        for obs in &self.obstacles {
            hits.clear();
            obs.grid.for_each_within(&obs.points, x, d_range, |i, d| hits.push((i, d)));
            hits.sort_unstable_by_key(|h| h.0);
            for &(i, d) in &hits {
                visit(obs, i, d);
            }
        }
    }
}

/// All obstacle points in the closed ball `|p - x| <= d_range`, ordered by
/// obstacle id and then point index.
pub fn query_range(snapshot: &WorldSnapshot, x: &Vec3, d_range: f64) -> Vec<RangeHit> {
    let mut out = Vec::new();
    snapshot.for_each_in_range(x, d_range, |obs, i, _| {
        out.push(RangeHit {
            obstacle_id: obs.id,
            point_index: i,
            point: obs.points[i],
            normal: obs.normals[i],
            velocity: obs.velocity,
        })
    });
    out
}

/// Snapshot advanced by `dt`. Static obstacles share their cached state.
pub fn advance_world(snapshot: &WorldSnapshot, dt: f64) -> WorldSnapshot {
    world_at(snapshot, snapshot.t + dt)
}

/// Snapshot of the same definitions at absolute time `t`. Static obstacles
/// share their cached state.
pub fn world_at(snapshot: &WorldSnapshot, t: f64) -> WorldSnapshot {
    let obstacles = snapshot
        .definitions
        .iter()
        .zip(&snapshot.obstacles)
        .map(|(def, prev)| if def.motion.is_static() { Arc::clone(prev) } else { Arc::new(ObstacleState::at(def, t)) })
        .collect();
    WorldSnapshot { t, definitions: Arc::clone(&snapshot.definitions), obstacles }
}

/// Closest (sphere, obstacle point) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub sphere: usize,
    pub obstacle_id: usize,
    pub point_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearance {
    /// Signed distance; negative means penetration, `+inf` for an empty world.
    pub distance: f64,
    pub witness: Option<Witness>,
}

/// Minimum over all (collision sphere, obstacle point) pairs of the point's
/// distance to the sphere surface.
pub fn min_clearance(snapshot: &WorldSnapshot, model: &RobotModel, q: &JointVector) -> Result<Clearance> {
    let frames = link_frames(model, q)?;
    Ok(clearance_from_centers(snapshot, model, &sphere_centers(model, &frames)))
}

pub fn clearance_from_centers(snapshot: &WorldSnapshot, model: &RobotModel, centers: &[Vec3]) -> Clearance {
    let mut best = Clearance { distance: f64::INFINITY, witness: None };
    for (s, (sphere, c)) in model.collision_spheres().iter().zip(centers).enumerate() {
        for obs in snapshot.obstacles() {
            if let Some((i, d)) = obs.nearest(c) {
                let gap = d - sphere.radius;
                if gap < best.distance {
                    best = Clearance {
                        distance: gap,
                        witness: Some(Witness { sphere: s, obstacle_id: obs.id, point_index: i }),
                    };
                }
            }
        }
    }
    best
}

/// `min(min_clearance, cap)`: exact below `cap`, `cap` otherwise. Only points
/// within `radius + cap` of each sphere center are visited.
pub fn capped_clearance(snapshot: &WorldSnapshot, model: &RobotModel, centers: &[Vec3], cap: f64) -> f64 {
    let mut best = cap;
    for (sphere, c) in model.collision_spheres().iter().zip(centers) {
        for obs in snapshot.obstacles() {
            obs.grid.for_each_within(&obs.points, c, sphere.radius + best, |_, d| best = best.min(d - sphere.radius));
        }
    }
    best
}

/// Whether any sphere comes within `margin` of any obstacle point, i.e.
/// `min_clearance <= margin`. Stops at the first hit.
pub fn any_sphere_within(snapshot: &WorldSnapshot, model: &RobotModel, centers: &[Vec3], margin: f64) -> bool {
    model.collision_spheres().iter().zip(centers).any(|(sphere, c)| {
        snapshot.obstacles().iter().any(|obs| {
            let mut hit = false;
            // slightly widened query so rounding in `r + margin` cannot drop a point
            let reach = (sphere.radius + margin) * (1.0 + 1e-12) + 1e-12;
            obs.grid.for_each_within(&obs.points, c, reach, |_, d| hit |= d - sphere.radius <= margin);
            hit
        })
    })
}

/// World-frame position of point `index` on obstacle `id`, if present.
pub fn point_of(snapshot: &WorldSnapshot, id: usize, index: usize) -> Option<Point3<f64>> {
    snapshot.obstacles().get(id).and_then(|o| o.points.get(index)).map(|p| Point3::from(*p))
}
