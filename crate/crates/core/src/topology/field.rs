use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TopologyError;
use crate::geometry::Aabb;
use crate::mpm::{box_aabb, knife_sdf, SweptVolume};
use crate::Vec3;

/// Node-sampled scalar field on a regular grid, `values[(i * ny + j) * nz + k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub res: [usize; 3],
    pub origin: Vec3,
    pub cell: f64,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(res: [usize; 3], origin: Vec3, cell: f64, fill: f64) -> Self {
        Self { res, origin, cell, values: vec![fill; res[0] * res[1] * res[2]] }
    }

    /// Grid covering `bounds` with at least `margin` on every side.
    pub fn covering(bounds: &Aabb, margin: f64, cell: f64, fill: f64) -> Self {
        let b = bounds.expanded(margin);
        let e = b.extent();
        let res = [0, 1, 2].map(|k| ((e[k] / cell).ceil() as usize + 1).max(8));
        Self::new(res, b.min, cell, fill)
    }

    pub fn from_fn(res: [usize; 3], origin: Vec3, cell: f64, f: impl Fn(&Vec3) -> f64) -> Self {
        let mut s = Self::new(res, origin, cell, 0.0);
        for idx in 0..s.values.len() {
            s.values[idx] = f(&s.node_position_flat(idx));
        }
        s
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.res[1] + j) * self.res[2] + k
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.res[2];
        let j = idx / self.res[2] % self.res[1];
        [idx / (self.res[1] * self.res[2]), j, k]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.cell
    }

    pub fn node_position_flat(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.unflatten(idx);
        self.node_position(i, j, k)
    }

    /// Cell containing `x` (clamped) and the fractional position inside it.
    pub fn locate(&self, x: &Vec3) -> ([usize; 3], Vec3) {
        let g = (x - self.origin) / self.cell;
        let mut base = [0usize; 3];
        let mut frac = Vec3::zeros();
        for d in 0..3 {
            let hi = (self.res[d] - 2) as f64;
            let b = g[d].floor().clamp(0.0, hi);
            base[d] = b as usize;
            frac[d] = (g[d] - b).clamp(0.0, 1.0);
        }
        (base, frac)
    }

    /// Trilinear interpolation.
    pub fn sample(&self, x: &Vec3) -> f64 {
        let (b, t) = self.locate(x);
        let mut acc = 0.0;
        for c in 0..8 {
            let (di, dj, dk) = (c & 1, c >> 1 & 1, c >> 2 & 1);
            let w = (if di == 1 { t.x } else { 1.0 - t.x })
                * (if dj == 1 { t.y } else { 1.0 - t.y })
                * (if dk == 1 { t.z } else { 1.0 - t.z });
            acc += w * self.values[self.index(b[0] + di, b[1] + dj, b[2] + dk)];
        }
        acc
    }
}

/// Uniform bucket grid over a point set, CSR layout, indices ascending per bucket.
pub(crate) struct PointHash {
    origin: Vec3,
    h: f64,
    dims: [usize; 3],
    start: Vec<u32>,
    items: Vec<u32>,
}

impl PointHash {
    pub fn new(points: &[Vec3], h: f64) -> Self {
        let b = Aabb::from_points(points);
        let dims = [0, 1, 2].map(|k| ((b.extent()[k] / h).floor() as usize + 1).max(1));
        let mut hash = Self { origin: b.min, h, dims, start: Vec::new(), items: Vec::new() };
        let n = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n + 1];
        let cells: Vec<usize> = points.iter().map(|p| hash.flat(hash.cell_of(p))).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        hash.start = counts;
        hash.items = items;
        hash
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.h).floor() as i64)
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        let c = [0, 1, 2].map(|k| c[k].clamp(0, self.dims[k] as i64 - 1) as usize);
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    fn bucket(&self, c: [i64; 3]) -> &[u32] {
        if (0..3).any(|k| c[k] < 0 || c[k] >= self.dims[k] as i64) {
            return &[];
        }
        let f = self.flat(c);
        &self.items[self.start[f] as usize..self.start[f + 1] as usize]
    }

    /// Exact nearest distance from `q` to the point set, searching shells of
    /// buckets outward until no unvisited bucket can hold a closer point.
    pub fn nearest_distance(&self, points: &[Vec3], q: &Vec3) -> f64 {
        let c = self.cell_of(q);
        // Clamp the start into the grid; shells beyond the grid are empty.
        let cc = [0, 1, 2].map(|k| c[k].clamp(0, self.dims[k] as i64 - 1));
        // Buckets in shell r + 1 are at least r cells away along their shell
        // axis; every bucket is at least `gap` cells away along clamped axes.
        let gap2: f64 = (0..3).map(|k| ((c[k] - cc[k]).unsigned_abs().saturating_sub(1) as f64).powi(2)).sum();
        let max_r = self.dims.iter().copied().max().unwrap() as i64;
        let mut best = f64::INFINITY;
        for r in 0..=max_r {
            for i in -r..=r {
                for j in -r..=r {
                    let edge = i.abs() == r || j.abs() == r;
                    let ks: Vec<i64> = if edge { (-r..=r).collect() } else { vec![-r, r] };
                    for k in ks {
                        for &idx in self.bucket([cc[0] + i, cc[1] + j, cc[2] + k]) {
                            best = best.min((q - points[idx as usize]).norm());
                        }
                        if r == 0 {
                            break;
                        }
                    }
                }
            }
            if best <= ((r * r) as f64 + gap2).sqrt() * self.h {
                break;
            }
        }
        best
    }
}

/// Union-of-spheres field `min_p |x - x_p| - r_p` on the nodes of `grid`.
pub fn particle_sdf_field(points: &[Vec3], r_p: f64, grid: &ScalarField) -> Result<ScalarField, TopologyError> {
    if points.is_empty() {
        return Err(TopologyError::EmptyPointSet);
    }
    if r_p <= 0.0 {
        return Err(TopologyError::InvalidParameter("influence radius must be positive".into()));
    }
    let hash = PointHash::new(points, r_p.max(grid.cell));
    let mut out = grid.clone();
    let eval = |(idx, v): (usize, &mut f64)| *v = hash.nearest_distance(points, &grid.node_position_flat(idx)) - r_p;
    if out.values.len() >= 4096 {
        out.values.par_iter_mut().enumerate().for_each(eval);
    } else {
        out.values.iter_mut().enumerate().for_each(eval);
    }
    Ok(out)
}

/// Subtract the swept blade from `field`. Blade half-thickness is inflated to
/// at least one field cell so the carved slab always contains a node layer.
pub fn carve_swept_volume(field: &ScalarField, swept: &SweptVolume) -> ScalarField {
    let mut out = field.clone();
    let mut half = swept.half_extents;
    half.x = half.x.max(field.cell);
    let margin = 2.0 * field.cell;
    for pose in &swept.poses {
        let bb = box_aabb(pose, &half).expanded(margin);
        let lo = [0, 1, 2].map(|d| ((bb.min[d] - field.origin[d]) / field.cell).floor().max(0.0) as usize);
        let hi = [0, 1, 2].map(|d| {
            (((bb.max[d] - field.origin[d]) / field.cell).ceil().max(0.0) as usize).min(field.res[d] - 1)
        });
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let idx = out.index(i, j, k);
                    let x = out.node_position(i, j, k);
                    let d = -knife_sdf(&x, pose, &half);
                    if d > out.values[idx] {
                        out.values[idx] = d;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_particle_values() {
        let grid = ScalarField::new([9, 9, 9], Vec3::zeros(), 0.1, 0.0);
        let f = particle_sdf_field(&[Vec3::new(0.4, 0.4, 0.4)], 0.2, &grid).unwrap();
        assert_eq!(f.values[f.index(4, 4, 4)], -0.2);
        assert!(f.values[f.index(6, 4, 4)].abs() < 1e-15);
    }

    #[test]
    fn hash_field_equals_brute_force_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..500).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 0.5).collect();
        let grid = ScalarField::new([12, 12, 12], Vec3::repeat(-0.1), 0.06, 0.0);
        let f = particle_sdf_field(&pts, 0.03, &grid).unwrap();
        for _ in 0..20 {
            let idx = rng.random_range(0..f.values.len());
            let x = f.node_position_flat(idx);
            let brute = pts.iter().map(|p| (x - p).norm()).fold(f64::INFINITY, f64::min) - 0.03;
            assert_eq!(f.values[idx].to_bits(), brute.to_bits());
        }
    }

    #[test]
    fn empty_points_error() {
        let grid = ScalarField::new([8, 8, 8], Vec3::zeros(), 0.1, 0.0);
        assert!(particle_sdf_field(&[], 0.1, &grid).is_err());
    }
}
