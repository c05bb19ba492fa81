//! Marching cubes over a [`ScalarField`].
//!
//! The 256-case triangle table is built once from face rules instead of being
//! transcribed: on each cube face the crossing edges are paired so that
//! negative corners on an ambiguous face stay separated, the face segments
//! chain into closed loops around the cube, and each loop is fanned into
//! triangles. Neighbouring cells resolve a shared face identically, so the
//! extracted surface has no cracks.

use std::sync::OnceLock;

use super::{ScalarField, SurfaceMesh};
use crate::Vec3;

/// Corner `c` sits at `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
fn corner(c: usize) -> Vec3 {
    Vec3::new((c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64)
}

/// Edges as `(low corner, high corner)`, the two corners differing in one bit.
pub const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn edge_id(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == key).expect("not a cube edge")
}

/// Faces as corner cycles, counter-clockwise seen from outside the cube.
fn faces() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let at = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            let mut f = [at(0, 0), at(1, 0), at(1, 1), at(0, 1)];
            let n = (corner(f[1]) - corner(f[0])).cross(&(corner(f[2]) - corner(f[1])));
            let outward = if side == 1 { 1.0 } else { -1.0 };
            if n[axis] * outward < 0.0 {
                f.reverse();
            }
            out.push(f);
        }
    }
    out
}

fn build_case(mask: usize, faces: &[[usize; 4]]) -> Vec<[u8; 3]> {
    let neg = |c: usize| mask >> c & 1 == 1;
    let mut next = [usize::MAX; 12];
    for f in faces {
        for k in 0..4 {
            if !(neg(f[k]) && !neg(f[(k + 1) % 4])) {
                continue;
            }
            // Walk backwards to the nearest positive-to-negative crossing.
            for back in 1..4 {
                let m = (k + 4 - back) % 4;
                if !neg(f[m]) && neg(f[(m + 1) % 4]) {
                    next[edge_id(f[k], f[(k + 1) % 4])] = edge_id(f[m], f[(m + 1) % 4]);
                    break;
                }
            }
        }
    }
    let mut tris = Vec::new();
    let mut seen = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            ring.push(e as u8);
            e = next[e];
        }
        for i in 1..ring.len() - 1 {
            tris.push([ring[0], ring[i], ring[i + 1]]);
        }
    }
    tris
}

/// Triangles (as cube-edge triples) for every corner sign mask; bit `c` set
/// means corner `c` is inside (negative).
pub fn case_table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = faces();
        let mut table: Vec<_> = (0..256).map(|m| build_case(m, &faces)).collect();
        // Orient so normals point from inside to outside.
        let mid = |e: u8| {
            let (a, b) = EDGES[e as usize];
            (corner(a) + corner(b)) * 0.5
        };
        let t = table[1][0];
        let n = (mid(t[1]) - mid(t[0])).cross(&(mid(t[2]) - mid(t[0])));
        if n.dot(&Vec3::repeat(1.0)) < 0.0 {
            for case in &mut table {
                for tri in case.iter_mut() {
                    tri.swap(1, 2);
                }
            }
        }
        table
    })
}

/// Extract the zero level set. Vertices are shared between neighbouring
/// cells; `vertex_edges` records the two grid nodes bracketing each vertex.
pub fn marching_cubes(field: &ScalarField) -> SurfaceMesh {
    let table = case_table();
    let [nx, ny, nz] = field.res;
    let mut mesh = SurfaceMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    let total = nx * ny * nz;
    let mut vid = vec![u32::MAX; 3 * total];
    let strides = [ny * nz, nz, 1];
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let base = field.index(i, j, k);
                let node = |c: usize| base + (c & 1) * strides[0] + (c >> 1 & 1) * strides[1] + (c >> 2 & 1) * strides[2];
                let mut mask = 0usize;
                for c in 0..8 {
                    if field.values[node(c)] < 0.0 {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                for tri in &table[mask] {
                    let mut f = [0u32; 3];
                    for (slot, &e) in f.iter_mut().zip(tri) {
                        let (a, b) = EDGES[e as usize];
                        let (na, nb) = (node(a), node(b));
                        let axis = (a ^ b).trailing_zeros() as usize;
                        let key = 3 * na + axis;
                        if vid[key] == u32::MAX {
                            let (va, vb) = (field.values[na], field.values[nb]);
                            let t = va / (va - vb);
                            let pa = field.node_position_flat(na);
                            let pb = field.node_position_flat(nb);
                            vid[key] = mesh.vertices.len() as u32;
                            mesh.vertices.push(pa + (pb - pa) * t);
                            mesh.vertex_edges.push([na as u32, nb as u32]);
                        }
                        *slot = vid[key];
                    }
                    mesh.faces.push(f);
                }
            }
        }
    }
    mesh.component = vec![0; mesh.faces.len()];
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn every_case_is_closed_on_the_cube_surface() {
        // Each crossing edge must be used by exactly one loop.
        let table = case_table();
        for (mask, tris) in table.iter().enumerate() {
            let crossing = EDGES.iter().filter(|(a, b)| (mask >> a & 1) != (mask >> b & 1)).count();
            let mut used: Vec<u8> = tris.iter().flatten().copied().collect();
            used.sort();
            used.dedup();
            assert_eq!(used.len(), crossing, "case {mask}");
            assert_eq!(tris.is_empty(), mask == 0 || mask == 255);
        }
    }

    #[test]
    fn complement_cases_mirror_orientation() {
        // Flipping all signs flips the surface orientation, with the same loops
        // wherever no face is ambiguous.
        let table = case_table();
        assert_eq!(table[1].len(), 1);
        let mut a: Vec<_> = table[1][0].to_vec();
        let mut b: Vec<_> = table[254][0].to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn sphere_mesh_is_watertight_and_outward() {
        let r = 0.3;
        let f = ScalarField::from_fn([40, 40, 40], Vec3::repeat(-0.5), 1.0 / 39.0, |p| p.norm() - r);
        let m = marching_cubes(&f);
        assert!(!m.faces.is_empty());
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &m.faces {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
            let (p0, p1, p2) = (m.vertices[t[0] as usize], m.vertices[t[1] as usize], m.vertices[t[2] as usize]);
            let n = (p1 - p0).cross(&(p2 - p0));
            assert!(n.dot(&(p0 + p1 + p2)) >= 0.0);
        }
        assert!(edges.values().all(|&c| c == 2));
    }
}
