//! Point-set distances, exact assignment and farthest point sampling.
//!
//! Conventions: chamfer uses squared nearest distances, Hausdorff and EMD
//! use plain Euclidean distances.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::{Blob, BlobError};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("point clouds differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("empty point cloud")]
    Empty,
    #[error("label {label} out of range for {k} clusters")]
    LabelRange { label: usize, k: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Blob(#[from] BlobError),
}

/// Static k-d tree over borrowed points. Nodes are stored implicitly: the
/// median of every index range is the splitting point.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    idx: Vec<u32>,
    axis: Vec<u8>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut t = Self { points, idx: (0..points.len() as u32).collect(), axis: vec![0; points.len()] };
        t.build(0, points.len());
        t
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= 1 {
            return;
        }
        let pts = self.points;
        let mut mn = Vec3::repeat(f64::INFINITY);
        let mut mx = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.idx[lo..hi] {
            mn = mn.inf(&pts[i as usize]);
            mx = mx.sup(&pts[i as usize]);
        }
        let ax = (mx - mn).imax();
        let mid = (lo + hi) / 2;
        self.idx[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a as usize][ax].total_cmp(&pts[b as usize][ax]).then(a.cmp(&b))
        });
        self.axis[mid] = ax as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Nearest point as `(squared distance, index)`; ties go to the lower index.
    pub fn nearest(&self, q: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(q, 0, self.idx.len(), &mut best);
        best
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, best: &mut (f64, usize)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.idx[mid] as usize;
        let p = &self.points[i];
        let d2 = (q - p).norm_squared();
        if d2 < best.0 || (d2 == best.0 && i < best.1) {
            *best = (d2, i);
        }
        if hi - lo == 1 {
            return;
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - p[ax];
        let (first, second) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, first.0, first.1, best);
        if diff * diff <= best.0 {
            self.search(q, second.0, second.1, best);
        }
    }
}

fn directed_sq(x: &[Vec3], tree: &KdTree) -> Vec<f64> {
    if x.len() >= 4096 {
        x.par_iter().map(|p| tree.nearest(p).0).collect()
    } else {
        x.iter().map(|p| tree.nearest(p).0).collect()
    }
}

/// Mean squared nearest distance from X to Y plus the symmetric term.
pub fn chamfer(x: &[Vec3], y: &[Vec3]) -> f64 {
    if x.is_empty() || y.is_empty() {
        return f64::NAN;
    }
    let (tx, ty) = (KdTree::new(x), KdTree::new(y));
    let a: f64 = directed_sq(x, &ty).iter().sum::<f64>() / x.len() as f64;
    let b: f64 = directed_sq(y, &tx).iter().sum::<f64>() / y.len() as f64;
    a + b
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(x: &[Vec3], y: &[Vec3]) -> f64 {
    if x.is_empty() || y.is_empty() {
        return f64::NAN;
    }
    let (tx, ty) = (KdTree::new(x), KdTree::new(y));
    let a = directed_sq(x, &ty).into_iter().fold(0.0, f64::max);
    let b = directed_sq(y, &tx).into_iter().fold(0.0, f64::max);
    a.max(b).sqrt()
}

/// Optimal assignment of rows to columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

/// Exact minimum-cost assignment for an `n x m` cost matrix with `n <= m`
/// (shortest augmenting paths with potentials, O(n^2 m)). Rows are inserted
/// in order and ties keep the lowest column, so the result is deterministic.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Assignment {
    let n = cost.len();
    if n == 0 {
        return Assignment { row_to_col: Vec::new(), total_cost: 0.0 };
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) matched to column j; column 0 is the virtual root.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total_cost = row_to_col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Assignment { row_to_col, total_cost }
}

/// Earth mover's distance between equal-size clouds: minimum mean matched
/// distance over bijections.
pub fn emd(x: &[Vec3], y: &[Vec3]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::SizeMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(MetricError::Empty);
    }
    let cost: Vec<Vec<f64>> = x.iter().map(|a| y.iter().map(|b| (a - b).norm()).collect()).collect();
    Ok(hungarian_match(&cost).total_cost / x.len() as f64)
}

/// Chamfer + EMD + Hausdorff.
pub fn pos_loss(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricError> {
    Ok(chamfer(pred, gt) + emd(pred, gt)? + hausdorff(pred, gt))
}

fn bce(p: f64, y: bool) -> f64 {
    const EPS: f64 = 1e-12;
    if y {
        -p.max(EPS).ln()
    } else {
        -(1.0 - p).max(EPS).ln()
    }
}

/// Permutation-invariant cluster loss: `probs[n][k]` is the predicted
/// probability that point `n` belongs to cluster `k`. The cost of pairing
/// ground-truth cluster `i` with predicted cluster `j` is the mean binary
/// cross-entropy over points; the result is the mean cost over the optimal
/// pairing.
pub fn topo_matching_loss(probs: &[Vec<f64>], gt: &[usize]) -> Result<f64, MetricError> {
    if probs.len() != gt.len() {
        return Err(MetricError::SizeMismatch(probs.len(), gt.len()));
    }
    if probs.is_empty() {
        return Err(MetricError::Empty);
    }
    let k = probs[0].len();
    if let Some(&label) = gt.iter().find(|&&g| g >= k) {
        return Err(MetricError::LabelRange { label, k });
    }
    let n = gt.len() as f64;
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| probs.iter().zip(gt).map(|(p, &g)| bce(p[j], g == i)).sum::<f64>() / n).collect())
        .collect();
    Ok(hungarian_match(&cost).total_cost / k as f64)
}

/// Quantized squared distance used to break near-ties by index so that
/// selections do not depend on rounding noise from rigid transforms or f32
/// storage.
pub(crate) fn tie_quantum(points: &[Vec3]) -> f64 {
    let c = crate::geometry::centroid(points);
    let r2 = points.iter().map(|p| (p - c).norm_squared()).fold(0.0, f64::max);
    1e-6 * r2
}

#[inline]
pub(crate) fn tie_key(d2: f64, q: f64) -> u64 {
    if q > 0.0 {
        (d2 / q).round() as u64
    } else {
        0
    }
}

/// Farthest point sampling from index 0. Returns `min(n, N)` indices; the
/// next pick maximizes the distance to the selected set, ties to the lower
/// index.
pub fn fps(points: &[Vec3], n: usize) -> Vec<usize> {
    let n = n.min(points.len());
    if n == 0 {
        return Vec::new();
    }
    let q = tie_quantum(points);
    let mut out = Vec::with_capacity(n);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut cur = 0;
    for _ in 0..n {
        out.push(cur);
        let c = points[cur];
        let mut best = (0u64, usize::MAX);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((points[i] - c).norm_squared());
            let key = tie_key(*d, q);
            if best.1 == usize::MAX || key > best.0 {
                best = (key, i);
            }
        }
        cur = best.1;
    }
    out
}

pub fn parse_xyz(text: &str) -> Result<Vec<Vec3>, MetricError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MetricError::Parse { line: ln + 1, msg: e.to_string() })?;
        if vals.len() < 3 {
            return Err(MetricError::Parse { line: ln + 1, msg: "expected three coordinates".into() });
        }
        out.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn format_xyz(points: &[Vec3]) -> String {
    let mut s = String::with_capacity(points.len() * 40);
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn read_xyz(path: &Path) -> Result<Vec<Vec3>, MetricError> {
    parse_xyz(&std::fs::read_to_string(path)?)
}

pub fn write_xyz(path: &Path, points: &[Vec3]) -> Result<(), MetricError> {
    Ok(std::fs::write(path, format_xyz(points))?)
}

/// Loads `.xyz` text or a TCUT blob with a `position` field.
pub fn read_points(path: &Path) -> Result<Vec<Vec3>, MetricError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"TCUT") {
        let blob = Blob::from_bytes(&bytes)?;
        return Ok(crate::mpm::ParticleSet::positions_from_blob(&blob)?);
    }
    parse_xyz(&String::from_utf8_lossy(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    #[test]
    fn chamfer_closed_form() {
        let x = [Vec3::zeros()];
        let y = [Vec3::x()];
        assert_eq!(chamfer(&x, &y), 2.0);
        assert_eq!(chamfer(&x, &x), 0.0);
    }

    #[test]
    fn hausdorff_closed_form() {
        let x = [Vec3::zeros()];
        let y = [Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)];
        assert_eq!(hausdorff(&x, &y), 2.0);
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = cloud(&mut rng, 300);
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random()) * 1.4 - Vec3::repeat(0.2);
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| ((q - p).norm_squared(), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            assert_eq!(tree.nearest(&q), brute);
        }
    }

    #[test]
    fn antidiagonal_assignment() {
        let a = hungarian_match(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(a.row_to_col, vec![1, 0]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn rectangular_assignment() {
        let a = hungarian_match(&[vec![5.0, 1.0, 3.0], vec![1.0, 5.0, 0.5]]);
        assert_eq!(a.row_to_col, vec![1, 2]);
        assert_eq!(a.total_cost, 1.5);
    }

    #[test]
    fn uniform_two_cluster_loss_is_ln2() {
        let probs = vec![vec![0.5, 0.5]; 10];
        let gt: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert!((topo_matching_loss(&probs, &gt).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fps_line() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(fps(&pts, 2), vec![0, 9]);
        assert_eq!(fps(&pts, 3), vec![0, 9, 4]);
        assert_eq!(fps(&pts, 10).len(), 10);
    }

    #[test]
    fn xyz_round_trip() {
        let pts = vec![Vec3::new(0.1, -2.0, 3.5), Vec3::new(1e-7, 0.0, 4.0)];
        let back = parse_xyz(&format!("# header\n{}\n", format_xyz(&pts))).unwrap();
        assert_eq!(back, pts);
        assert!(parse_xyz("1 2").is_err());
    }
}
