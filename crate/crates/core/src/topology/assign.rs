use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use super::{ScalarField, SurfaceMesh, TopologyError, MAX_CLUSTERS};
use crate::geometry::point_triangle_distance;
use crate::Vec3;

/// Component id per field node, flooded through negative nodes from the
/// nodes that bracket each mesh vertex. Positive nodes and negative regions
/// without a surface stay -1.
fn node_labels(field: &ScalarField, mesh: &SurfaceMesh) -> Vec<i32> {
    let mut vcomp = vec![u32::MAX; mesh.vertices.len()];
    for (f, &c) in mesh.faces.iter().zip(&mesh.component) {
        for &v in f {
            vcomp[v as usize] = vcomp[v as usize].min(c);
        }
    }
    let mut seeds: Vec<(u32, u32)> = Vec::new();
    for (v, e) in mesh.vertex_edges.iter().enumerate() {
        if vcomp[v] == u32::MAX {
            continue;
        }
        for &n in e {
            if field.values[n as usize] < 0.0 {
                seeds.push((n, vcomp[v]));
            }
        }
    }
    seeds.sort_unstable();
    seeds.dedup_by_key(|s| s.0);
    let mut label = vec![-1i32; field.values.len()];
    let mut queue = VecDeque::with_capacity(seeds.len());
    for &(n, c) in &seeds {
        label[n as usize] = c as i32;
        queue.push_back(n as usize);
    }
    let res = field.res;
    while let Some(n) = queue.pop_front() {
        let c = field.unflatten(n);
        for d in 0..3 {
            for step in [-1i64, 1] {
                let m = c[d] as i64 + step;
                if m < 0 || m >= res[d] as i64 {
                    continue;
                }
                let mut nb = c;
                nb[d] = m as usize;
                let idx = field.index(nb[0], nb[1], nb[2]);
                if label[idx] < 0 && field.values[idx] < 0.0 {
                    label[idx] = label[n];
                    queue.push_back(idx);
                }
            }
        }
    }
    label
}

/// Triangles bucketed on a cubic grid of side `h`.
struct TriangleBuckets<'a> {
    mesh: &'a SurfaceMesh,
    h: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> TriangleBuckets<'a> {
    fn new(mesh: &'a SurfaceMesh, h: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (fi, f) in mesh.faces.iter().enumerate() {
            let vs = f.map(|v| mesh.vertices[v as usize]);
            let lo = vs[0].inf(&vs[1]).inf(&vs[2]);
            let hi = vs[0].sup(&vs[1]).sup(&vs[2]);
            let a = [0, 1, 2].map(|d| (lo[d] / h).floor() as i64);
            let b = [0, 1, 2].map(|d| (hi[d] / h).floor() as i64);
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        cells.entry([i, j, k]).or_default().push(fi as u32);
                    }
                }
            }
        }
        Self { mesh, h, cells }
    }

    /// Closest component within `tau` as `(distance, component)`.
    fn nearest(&self, x: &Vec3, tau: f64) -> Option<(f64, u32)> {
        let a = [0, 1, 2].map(|d| ((x[d] - tau) / self.h).floor() as i64);
        let b = [0, 1, 2].map(|d| ((x[d] + tau) / self.h).floor() as i64);
        let mut best: Option<(f64, u32)> = None;
        for i in a[0]..=b[0] {
            for j in a[1]..=b[1] {
                for k in a[2]..=b[2] {
                    let Some(list) = self.cells.get(&[i, j, k]) else { continue };
                    for &fi in list {
                        let f = self.mesh.faces[fi as usize];
                        let [p, q, r] = f.map(|v| self.mesh.vertices[v as usize]);
                        let d = point_triangle_distance(x, &p, &q, &r);
                        let c = self.mesh.component[fi as usize];
                        if d < tau && best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                            best = Some((d, c));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Component id per point. With a `field` (the carved field the mesh was
/// extracted from) points inside the zero level set take the component
/// flooded into their cell; everything else takes the closest component
/// surface within `tau`, ties to the lower id, or -1.
pub fn assign_clusters(points: &[Vec3], mesh: &SurfaceMesh, field: Option<&ScalarField>, tau: f64) -> Vec<i32> {
    if mesh.is_empty() {
        return vec![-1; points.len()];
    }
    let nodes = field.filter(|_| mesh.vertex_edges.len() == mesh.vertices.len()).map(|f| (f, node_labels(f, mesh)));
    let buckets = TriangleBuckets::new(mesh, tau.max(1e-12));
    let one = |x: &Vec3| -> i32 {
        if let Some((f, lab)) = &nodes {
            if f.sample(x) < 0.0 {
                let (b, _) = f.locate(x);
                let mut best: Option<(f64, usize)> = None;
                for c in 0..8 {
                    let idx = f.index(b[0] + (c & 1), b[1] + (c >> 1 & 1), b[2] + (c >> 2 & 1));
                    let v = f.values[idx];
                    if v < 0.0 && lab[idx] >= 0 && best.is_none_or(|(bv, bi)| v < bv || (v == bv && idx < bi)) {
                        best = Some((v, idx));
                    }
                }
                if let Some((_, idx)) = best {
                    return lab[idx];
                }
            }
        }
        buckets.nearest(x, tau).map_or(-1, |(_, c)| c as i32)
    };
    if points.len() >= 4096 {
        points.par_iter().map(one).collect()
    } else {
        points.iter().map(one).collect()
    }
}

/// Maps fresh component ids onto persistent global ids. Components are
/// visited largest first (ties by fresh id); each inherits the global id
/// most of its particles held before (ties to the smaller id) unless a
/// larger component already took it, in which case it gets the smallest
/// id not held by any previous or already mapped cluster. Particles with a
/// negative fresh label stay -1.
pub fn persist_cluster_ids(previous: &[i32], fresh: &[i32]) -> Result<Vec<i32>, TopologyError> {
    if previous.len() != fresh.len() {
        return Err(TopologyError::LengthMismatch(previous.len(), fresh.len()));
    }
    let ncomp = fresh.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut size = vec![0usize; ncomp];
    let mut votes: Vec<HashMap<i32, usize>> = vec![HashMap::new(); ncomp];
    let mut taken = [false; MAX_CLUSTERS];
    let mut over_budget = 0;
    for (&p, &f) in previous.iter().zip(fresh) {
        if p >= 0 {
            match taken.get_mut(p as usize) {
                Some(t) => *t = true,
                None => over_budget += 1,
            }
        }
        if f >= 0 {
            size[f as usize] += 1;
            if p >= 0 {
                *votes[f as usize].entry(p).or_default() += 1;
            }
        }
    }
    if over_budget > 0 {
        return Err(TopologyError::InvalidParameter("previous labels exceed the cluster budget".into()));
    }
    let mut order: Vec<usize> = (0..ncomp).filter(|&c| size[c] > 0).collect();
    order.sort_by(|&a, &b| size[b].cmp(&size[a]).then(a.cmp(&b)));
    let mut claimed = [false; MAX_CLUSTERS];
    let mut map = vec![-1i32; ncomp];
    for &c in &order {
        let majority = votes[c].iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&id, _)| id);
        let id = match majority {
            Some(id) if !claimed[id as usize] => id as usize,
            _ => (0..MAX_CLUSTERS)
                .find(|&i| !claimed[i] && !taken[i])
                .ok_or(TopologyError::ClusterBudget(order.len()))?,
        };
        claimed[id] = true;
        map[c] = id as i32;
    }
    Ok(fresh.iter().map(|&f| if f >= 0 { map[f as usize] } else { -1 }).collect())
}
