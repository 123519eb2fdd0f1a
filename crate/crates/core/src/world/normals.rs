use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::Vec3;

/// Relative eigenvalue threshold below which a neighbourhood counts as rank deficient.
const RANK_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vec3,
    /// The neighbourhood did not span a plane; `normal` points at the viewpoint.
    pub degenerate: bool,
}

/// Plane-fit normals from the `k` nearest neighbours (the point itself
/// included), oriented towards `viewpoint`.
pub fn estimate_normals(points: &[Vec3], k: usize, viewpoint: &Vec3) -> Result<Vec<NormalEstimate>> {
    if k < 3 || points.len() < k {
        return Err(Error::InvalidParameter(format!(
            "normal estimation needs |points| >= k >= 3 (|points| = {}, k = {k})",
            points.len()
        )));
    }
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    Ok(points
        .iter()
        .map(|p| {
            scratch.clear();
            scratch.extend(points.iter().enumerate().map(|(i, q)| ((q - p).norm_squared(), i)));
            scratch.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            let neigh = &scratch[..k];
            let mean = neigh.iter().fold(Vec3::zeros(), |acc, &(_, i)| acc + points[i]) / k as f64;
            let cov = neigh.iter().fold(Matrix3::zeros(), |acc, &(_, i)| {
                let d = points[i] - mean;
                acc + d * d.transpose()
            }) / k as f64;
            fit_normal(&cov, p, viewpoint)
        })
        .collect())
}

fn towards_viewpoint(p: &Vec3, viewpoint: &Vec3) -> Vec3 {
    (viewpoint - p).try_normalize(0.0).unwrap_or_else(Vec3::z)
}

fn fit_normal(cov: &Matrix3<f64>, p: &Vec3, viewpoint: &Vec3) -> NormalEstimate {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= RANK_EPS * largest {
        return NormalEstimate { normal: towards_viewpoint(p, viewpoint), degenerate: true };
    }
    let mut n: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if n.dot(&(viewpoint - p)) < 0.0 {
        n = -n;
    }
    NormalEstimate { normal: n, degenerate: false }
}
