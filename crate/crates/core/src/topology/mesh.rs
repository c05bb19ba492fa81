use super::SurfaceMesh;
use crate::Vec3;

fn one_rings(mesh: &SurfaceMesh) -> Vec<Vec<u32>> {
    let mut rings = vec![Vec::new(); mesh.vertices.len()];
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            rings[a as usize].push(b);
            rings[b as usize].push(a);
        }
    }
    for r in &mut rings {
        r.sort_unstable();
        r.dedup();
    }
    rings
}

/// Umbrella smoothing `v <- v + alpha * (mean(ring) - v)`, all vertices
/// updated from the previous pass. Connectivity is untouched.
pub fn laplacian_smooth(mesh: &SurfaceMesh, alpha: f64, iters: usize) -> SurfaceMesh {
    let mut out = mesh.clone();
    if alpha == 0.0 || iters == 0 {
        return out;
    }
    let rings = one_rings(mesh);
    let mut next = out.vertices.clone();
    for _ in 0..iters {
        for (i, ring) in rings.iter().enumerate() {
            if ring.is_empty() {
                continue;
            }
            let mean = ring.iter().fold(Vec3::zeros(), |acc, &j| acc + out.vertices[j as usize]) / ring.len() as f64;
            next[i] = out.vertices[i] + (mean - out.vertices[i]) * alpha;
        }
        std::mem::swap(&mut out.vertices, &mut next);
    }
    out
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[parent[x as usize] as usize];
        parent[x as usize] = p;
        x = p;
    }
    x
}

/// Labels faces by vertex-connected component. Ids are ordered by face
/// count, largest first; equal counts by lowest face index.
pub fn connected_components(mesh: &SurfaceMesh) -> SurfaceMesh {
    let mut out = mesh.clone();
    let mut parent: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    for f in &mesh.faces {
        for &v in &f[1..] {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, v));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    // root -> (face count, first face)
    let mut stats: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    let roots: Vec<u32> = mesh.faces.iter().map(|f| find(&mut parent, f[0])).collect();
    for (fi, &r) in roots.iter().enumerate() {
        let e = stats.entry(r).or_insert((0, fi));
        e.0 += 1;
    }
    let mut order: Vec<(u32, (usize, usize))> = stats.into_iter().collect();
    order.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let mut id = std::collections::HashMap::new();
    for (k, (r, _)) in order.iter().enumerate() {
        id.insert(*r, k as u32);
    }
    out.component = roots.iter().map(|r| id[r]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_mesh(n: usize) -> SurfaceMesh {
        let mut m = SurfaceMesh::default();
        for i in 0..=n {
            for j in 0..=n {
                m.vertices.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| (i * (n + 1) + j) as u32;
        for i in 0..n {
            for j in 0..n {
                m.faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                m.faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        m.component = vec![0; m.faces.len()];
        m
    }

    #[test]
    fn zero_alpha_is_identity() {
        let m = grid_mesh(3);
        assert_eq!(laplacian_smooth(&m, 0.0, 5), m);
        assert_eq!(laplacian_smooth(&m, 0.5, 0), m);
    }

    #[test]
    fn planar_interior_fixed() {
        let m = grid_mesh(4);
        let s = laplacian_smooth(&m, 0.5, 1);
        for i in 1..4 {
            for j in 1..4 {
                let v = i * 5 + j;
                assert!((s.vertices[v] - m.vertices[v]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn components_ordered_by_size() {
        let mut m = grid_mesh(1);
        let big = grid_mesh(2);
        let off = m.vertices.len() as u32;
        m.vertices.extend(big.vertices.iter().map(|v| v + Vec3::new(10.0, 0.0, 0.0)));
        m.faces.extend(big.faces.iter().map(|f| f.map(|i| i + off)));
        let c = connected_components(&m);
        assert_eq!(c.num_components(), 2);
        assert_eq!(c.component_sizes(), vec![8, 2]);
        assert_eq!(&c.component[..2], &[1, 1]);
    }
}
