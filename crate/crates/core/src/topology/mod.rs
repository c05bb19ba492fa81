//! Fragment discovery: a union-of-spheres field over the particles, carved
//! by the knife sweep, meshed with marching cubes, smoothed, split into
//! connected components, and mapped back to particles as persistent
//! cluster ids.

mod assign;
mod field;
mod marching_cubes;
mod mesh;
mod pipeline;

pub use crate::mpm::SweptVolume;
pub use assign::{assign_clusters, persist_cluster_ids};
pub use field::{carve_swept_volume, particle_sdf_field, ScalarField};
pub use marching_cubes::{case_table, marching_cubes, EDGES};
pub use mesh::{connected_components, laplacian_smooth};
pub use pipeline::{discover_topology, update_damage, CutDetector, TopologyParams, TopologyReport, TopologyState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

/// Upper bound on live fragments.
pub const MAX_CLUSTERS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cluster budget exceeded ({0} live clusters, at most 32)")]
    ClusterBudget(usize),
    #[error("label arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Triangle mesh with a per-face component id. `vertex_edges[v]` holds the
/// two field nodes whose edge produced vertex `v` (empty for meshes not
/// built by marching cubes).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub component: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertex_edges: Vec<[u32; 2]>,
}

impl SurfaceMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn num_components(&self) -> usize {
        self.component.iter().max().map_or(0, |&c| c as usize + 1)
    }

    /// Face count per component.
    pub fn component_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_components()];
        for &c in &self.component {
            out[c as usize] += 1;
        }
        out
    }

    /// Submesh of one component with compacted vertices.
    pub fn component_mesh(&self, id: u32) -> SurfaceMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = SurfaceMesh::default();
        for (f, &c) in self.faces.iter().zip(&self.component) {
            if c != id {
                continue;
            }
            let mut g = [0u32; 3];
            for (k, &v) in f.iter().enumerate() {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = out.vertices.len() as u32;
                    out.vertices.push(self.vertices[v as usize]);
                    if !self.vertex_edges.is_empty() {
                        out.vertex_edges.push(self.vertex_edges[v as usize]);
                    }
                }
                g[k] = remap[v as usize];
            }
            out.faces.push(g);
            out.component.push(0);
        }
        out
    }

    /// Signed volume enclosed by the mesh (positive for outward winding).
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn to_obj(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_obj())
    }
}
