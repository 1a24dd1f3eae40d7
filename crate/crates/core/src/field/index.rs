use std::collections::HashMap;

use nalgebra::Vector3;

type Key = [i64; 3];

/// Uniform voxel hash over point positions.
///
/// Queries are exact: every candidate returned by the cell walk is checked
/// against the true Euclidean distance.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    cell: f64,
    cells: HashMap<Key, Vec<u32>>,
    lo: Key,
    hi: Key,
    positions: Vec<Vector3<f64>>,
}

impl VoxelGrid {
    pub fn new(positions: Vec<Vector3<f64>>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<Key, Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in positions.iter().enumerate() {
            let k = key(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            cells.entry(k).or_default().push(i as u32);
        }
        Self { cell, cells, lo, hi, positions }
    }

    /// Cell edge that puts a handful of points in each occupied cell for
    /// surface-like clouds.
    pub fn suggested_cell(positions: &[Vector3<f64>]) -> f64 {
        if positions.len() < 2 {
            return 1.0;
        }
        let mut lo = positions[0];
        let mut hi = positions[0];
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let diag = (hi - lo).norm();
        let cell = 2.0 * diag / (positions.len() as f64).sqrt();
        if cell > 0.0 && cell.is_finite() {
            cell
        } else {
            1.0
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &Vector3<f64> {
        &self.positions[i]
    }

    /// Indices with `‖p − center‖ ≤ r`, ascending.
    pub fn radius(&self, center: &Vector3<f64>, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(center, r, |i| {
            if (self.positions[i] - center).norm() <= r {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// The `k` nearest points as `(index, distance)`, ordered by distance then index.
    pub fn knn(&self, center: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.len());
        let mut r = self.cell;
        loop {
            let mut found: Vec<(usize, f64)> = Vec::new();
            self.for_each_candidate(center, r, |i| {
                let d = (self.positions[i] - center).norm();
                if d <= r {
                    found.push((i, d));
                }
            });
            if found.len() >= k {
                found.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                found.truncate(k);
                return found;
            }
            r *= 2.0;
        }
    }

    fn for_each_candidate(&self, center: &Vector3<f64>, r: f64, mut f: impl FnMut(usize)) {
        if self.is_empty() {
            return;
        }
        let a = key(&(center - Vector3::repeat(r)), self.cell);
        let b = key(&(center + Vector3::repeat(r)), self.cell);
        let lo = [a[0].max(self.lo[0]), a[1].max(self.lo[1]), a[2].max(self.lo[2])];
        let hi = [b[0].min(self.hi[0]), b[1].min(self.hi[1]), b[2].min(self.hi[2])];
        if (0..3).any(|i| lo[i] > hi[i]) {
            return;
        }
        let volume = (0..3).fold(1u128, |acc, i| acc.saturating_mul((hi[i] - lo[i] + 1) as u128));
        if volume > self.cells.len() as u128 {
            for (k, idx) in &self.cells {
                if (0..3).all(|i| k[i] >= lo[i] && k[i] <= hi[i]) {
                    idx.iter().for_each(|&i| f(i as usize));
                }
            }
            return;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(idx) = self.cells.get(&[x, y, z]) {
                        idx.iter().for_each(|&i| f(i as usize));
                    }
                }
            }
        }
    }
}

fn key(p: &Vector3<f64>, cell: f64) -> Key {
    // saturating float->int casts keep huge radii well-defined
    [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_radius(pts: &[Vector3<f64>], c: &Vector3<f64>, r: f64) -> Vec<usize> {
        (0..pts.len()).filter(|&i| (pts[i] - c).norm() <= r).collect()
    }

    fn brute_knn(pts: &[Vector3<f64>], c: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - c).norm())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    fn cloud() -> impl Strategy<Value = Vec<Vector3<f64>>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -0.2..0.2f64), 1..400)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_brute_force(pts in cloud(), cell in 0.01..0.7f64, r in 0.0..0.6f64, k in 1usize..12, q in 0usize..1000) {
            let grid = VoxelGrid::new(pts.clone(), cell);
            let c = pts[q % pts.len()] + Vector3::new(0.013, -0.007, 0.002);
            prop_assert_eq!(grid.radius(&c, r), brute_radius(&pts, &c, r));
            prop_assert_eq!(grid.knn(&c, k), brute_knn(&pts, &c, k));
        }
    }

    #[test]
    fn huge_radius_returns_everything() {
        let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let grid = VoxelGrid::new(pts, 0.05);
        assert_eq!(grid.radius(&Vector3::zeros(), 1e12), (0..50).collect::<Vec<_>>());
        assert_eq!(grid.radius(&Vector3::zeros(), f64::INFINITY).len(), 50);
    }

    #[test]
    fn query_far_outside_the_grid() {
        let pts = vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)];
        let grid = VoxelGrid::new(pts, 0.05);
        assert!(grid.radius(&Vector3::new(100.0, 0.0, 0.0), 1.0).is_empty());
        assert_eq!(grid.knn(&Vector3::new(100.0, 0.0, 0.0), 1)[0].0, 1);
    }
}
