use crate::Vec3;

/// Uniform-grid index over a fixed point set.
///
/// Cells are stored in compressed form (`cell_start` offsets into `indices`).
/// Range answers are exact: every candidate is re-checked with the same
/// closed-ball predicate a brute-force scan would use.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    indices: Vec<u32>,
    lo: Vec3,
    hi: Vec3,
}

impl SpatialGrid {
    pub fn build(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        if points.is_empty() {
            return Self {
                origin: Vec3::zeros(),
                cell,
                dims: [0; 3],
                cell_start: vec![0],
                indices: Vec::new(),
                lo: Vec3::zeros(),
                hi: Vec3::zeros(),
            };
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize) + 1);
        let total = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; total + 1];
        let mut grid = Self { origin: lo, cell, dims, cell_start: Vec::new(), indices: Vec::new(), lo, hi };
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            indices[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid.cell_start = counts;
        grid.indices = indices;
        grid
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_range(&self, lo: f64, hi: f64, axis: usize) -> Option<(usize, usize)> {
        if hi < self.lo[axis] || lo > self.hi[axis] {
            return None;
        }
        let a = (((lo - self.origin[axis]) / self.cell).floor().max(0.0) as usize).min(self.dims[axis] - 1);
        let b = (((hi - self.origin[axis]) / self.cell).floor().max(0.0) as usize).min(self.dims[axis] - 1);
        Some((a, b))
    }

    /// Calls `visit(index, distance)` for every point with `|p - x| <= radius`,
    /// in unspecified order.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, points: &[Vec3], x: &Vec3, radius: f64, mut visit: F) {
        if self.is_empty() {
            return;
        }
        let Some((x0, x1)) = self.cell_range(x.x - radius, x.x + radius, 0) else { return };
        let Some((y0, y1)) = self.cell_range(x.y - radius, x.y + radius, 1) else { return };
        let Some((z0, z1)) = self.cell_range(x.z - radius, x.z + radius, 2) else { return };
        for cz in z0..=z1 {
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    let k = self.flat([cx, cy, cz]);
                    let (s, e) = (self.cell_start[k] as usize, self.cell_start[k + 1] as usize);
                    for &i in &self.indices[s..e] {
                        let d = (points[i as usize] - x).norm();
                        if d <= radius {
                            visit(i as usize, d);
                        }
                    }
                }
            }
        }
    }

    /// Indices of all points in the closed ball, ascending.
    pub fn within(&self, points: &[Vec3], x: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(points, x, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Exact nearest point `(index, distance)`; ties go to the lower index.
    pub fn nearest(&self, points: &[Vec3], x: &Vec3) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let outside = (self.lo - x).sup(&(x - self.hi)).sup(&Vec3::zeros()).norm();
        let far = (self.hi - self.lo).norm() + outside;
        let mut radius = outside + self.cell;
        loop {
            let mut best: Option<(usize, f64)> = None;
            self.for_each_within(points, x, radius, |i, d| match best {
                Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
                _ => best = Some((i, d)),
            });
            if best.is_some() {
                return best;
            }
            if radius > far {
                // unreachable for a non-empty grid, kept as a guard against NaN input
                return None;
            }
            radius *= 2.0;
        }
    }
}
