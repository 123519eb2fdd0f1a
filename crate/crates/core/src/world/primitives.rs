use std::f64::consts::PI;

use crate::Vec3;

/// Analytic shapes that scenarios sample into point clouds. Points are
/// expressed relative to the shape center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
    /// Axis along z.
    Cylinder { radius: f64, half_height: f64 },
}

/// Points and outward unit normals on the primitive's surface with roughly
/// `spacing` between neighbours.
pub fn sample_surface(shape: &Primitive, spacing: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    assert!(spacing > 0.0, "spacing must be positive");
    let mut pts = Vec::new();
    let mut nrm = Vec::new();
    match *shape {
        Primitive::Box { half_extents: h } => {
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let nu = cells(2.0 * h[u], spacing);
                let nv = cells(2.0 * h[v], spacing);
                for sign in [-1.0, 1.0] {
                    let mut n = Vec3::zeros();
                    n[axis] = sign;
                    for i in 0..nu {
                        for j in 0..nv {
                            let mut p = Vec3::zeros();
                            p[axis] = sign * h[axis];
                            p[u] = -h[u] + (i as f64 + 0.5) * 2.0 * h[u] / nu as f64;
                            p[v] = -h[v] + (j as f64 + 0.5) * 2.0 * h[v] / nv as f64;
                            pts.push(p);
                            nrm.push(n);
                        }
                    }
                }
            }
        }
        Primitive::Sphere { radius } => {
            let count = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(8.0) as usize;
            let golden = PI * (3.0 - 5f64.sqrt());
            for i in 0..count {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                let n = Vec3::new(r * th.cos(), y, r * th.sin());
                pts.push(n * radius);
                nrm.push(n);
            }
        }
        Primitive::Cylinder { radius, half_height } => {
            let around = cells(2.0 * PI * radius, spacing).max(6);
            let rings = cells(2.0 * half_height, spacing);
            for k in 0..rings {
                let z = -half_height + (k as f64 + 0.5) * 2.0 * half_height / rings as f64;
                for i in 0..around {
                    let th = 2.0 * PI * i as f64 / around as f64;
                    let n = Vec3::new(th.cos(), th.sin(), 0.0);
                    pts.push(Vec3::new(radius * n.x, radius * n.y, z));
                    nrm.push(n);
                }
            }
            // caps: concentric rings
            let radial = cells(radius, spacing);
            for sign in [-1.0, 1.0] {
                let n = Vec3::new(0.0, 0.0, sign);
                for k in 0..radial {
                    let r = (k as f64 + 0.5) * radius / radial as f64;
                    let m = cells(2.0 * PI * r, spacing).max(3);
                    for i in 0..m {
                        let th = 2.0 * PI * i as f64 / m as f64;
                        pts.push(Vec3::new(r * th.cos(), r * th.sin(), sign * half_height));
                        nrm.push(n);
                    }
                }
            }
        }
    }
    (pts, nrm)
}

fn cells(length: f64, spacing: f64) -> usize {
    ((length / spacing).ceil() as usize).max(1)
}
