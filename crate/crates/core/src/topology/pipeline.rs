use serde::{Deserialize, Serialize};

use super::{
    assign_clusters, carve_swept_volume, connected_components, laplacian_smooth, marching_cubes, particle_sdf_field,
    persist_cluster_ids, ScalarField, SurfaceMesh, SweptVolume, TopologyError,
};
use crate::blob::{Blob, BlobError};
use crate::geometry::Aabb;
use crate::metrics::fps;
use crate::mpm::{damage_rule, ParticleSet};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyParams {
    /// Field node spacing as a multiple of the mean particle spacing.
    pub cell_scale: f64,
    /// Particle influence radius as a multiple of the mean particle spacing.
    pub influence_scale: f64,
    /// Surface proximity threshold as a multiple of the field cell.
    pub tau_scale: f64,
    pub smooth_alpha: f64,
    pub smooth_iters: usize,
    /// Fragments below `max(min_cluster_particles, min_cluster_fraction * N)`
    /// particles are left unlabeled.
    pub min_cluster_particles: usize,
    pub min_cluster_fraction: f64,
    /// FPS budget per fragment in the emitted state.
    pub points_per_cluster: usize,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            cell_scale: 1.0,
            influence_scale: 1.1,
            tau_scale: 1.5,
            smooth_alpha: 0.5,
            smooth_iters: 10,
            min_cluster_particles: 10,
            min_cluster_fraction: 0.005,
            points_per_cluster: 1024,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let ok = self.cell_scale > 0.0
            && self.influence_scale > 0.0
            && self.tau_scale > 0.0
            && (0.0..1.0).contains(&self.smooth_alpha)
            && (0.0..1.0).contains(&self.min_cluster_fraction)
            && self.points_per_cluster > 0;
        if ok {
            Ok(())
        } else {
            Err(TopologyError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Downsampled labeled point cloud. Points are grouped by label in
/// ascending order, each group in FPS order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyState {
    pub points: Vec<[f32; 3]>,
    pub labels: Vec<u8>,
    pub frame: u64,
}

impl TopologyState {
    /// Per-label FPS of the labeled points; negative labels are skipped.
    pub fn from_labels(points: &[Vec3], labels: &[i32], per_cluster: usize, frame: u64) -> Self {
        let mut out = Self { frame, ..Self::default() };
        let k = labels.iter().copied().max().unwrap_or(-1);
        for c in 0..=k {
            let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let sub: Vec<Vec3> = members.iter().map(|&i| points[i]).collect();
            for j in fps(&sub, per_cluster) {
                let p = sub[j];
                out.points.push([p.x as f32, p.y as f32, p.z as f32]);
                out.labels.push(c as u8);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct labels in ascending order.
    pub fn cluster_ids(&self) -> Vec<u8> {
        let mut ids = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_ids().len()
    }

    pub fn cluster_points(&self, id: u8) -> Vec<Vec3> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == id)
            .map(|(p, _)| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect()
    }

    pub fn all_points(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)).collect()
    }

    pub fn to_blob(&self) -> Blob {
        let mut b = Blob::new(self.len());
        b.push_f32("position", 3, self.points.iter().flatten().copied().collect());
        b.push_u32("label", 1, self.labels.iter().map(|&l| l as u32).collect());
        b
    }

    pub fn from_blob(blob: &Blob, frame: u64) -> Result<Self, BlobError> {
        let x = blob.f32s("position")?;
        let l = blob.u32s("label")?;
        Ok(Self {
            points: x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            labels: l.iter().map(|&v| v as u8).collect(),
            frame,
        })
    }
}

/// Everything produced by one topology update.
#[derive(Clone, Debug)]
pub struct TopologyReport {
    pub state: TopologyState,
    pub mesh: SurfaceMesh,
    /// Persistent id per particle, -1 when unassigned.
    pub labels: Vec<i32>,
    pub unassigned: usize,
}

/// Full pipeline: particle field, sweep carve, marching cubes, smoothing,
/// components, assignment and id persistence. Particle `cluster_id`s are
/// read as the previous labels and overwritten with the new ones.
pub fn discover_topology(
    particles: &mut ParticleSet,
    swept: &SweptVolume,
    params: &TopologyParams,
    frame: u64,
) -> Result<TopologyReport, TopologyError> {
    params.validate()?;
    if particles.is_empty() {
        return Err(TopologyError::EmptyPointSet);
    }
    let pts = particles.positions();
    let spacing = particles.spacing();
    let cell = params.cell_scale * spacing;
    let r_p = params.influence_scale * spacing;
    let grid = ScalarField::covering(&Aabb::from_points(&pts), r_p + 2.0 * cell, cell, 0.0);
    let mut field = particle_sdf_field(&pts, r_p, &grid)?;
    if !swept.is_empty() {
        field = carve_swept_volume(&field, swept);
    }
    let raw = marching_cubes(&field);
    let mesh = connected_components(&laplacian_smooth(&raw, params.smooth_alpha, params.smooth_iters));
    // Distances are taken to the unsmoothed surface: smoothing rounds convex
    // edges inward and would strand edge particles beyond tau.
    let surface = SurfaceMesh { component: mesh.component.clone(), ..raw };
    let mut fresh = assign_clusters(&pts, &surface, Some(&field), params.tau_scale * cell);
    let min_size = params.min_cluster_particles.max((params.min_cluster_fraction * pts.len() as f64).ceil() as usize);
    drop_small(&mut fresh, min_size);
    let labels = persist_cluster_ids(&particles.labels(), &fresh)?;
    for (p, &l) in particles.particles.iter_mut().zip(&labels) {
        p.cluster_id = l;
    }
    let unassigned = labels.iter().filter(|&&l| l < 0).count();
    let state = TopologyState::from_labels(&pts, &labels, params.points_per_cluster, frame);
    Ok(TopologyReport { state, mesh, labels, unassigned })
}

/// Re-evaluates the damage rule on every particle against its current
/// deformation, with no new plastic flow. Damage never clears.
pub fn update_damage(particles: &mut ParticleSet) {
    let mats = &particles.materials;
    for p in &mut particles.particles {
        let u = damage_rule(&mats[p.material as usize], p.j(), p.yield_stress, 0.0, p.damaged);
        p.yield_stress = u.yield_stress;
        p.damaged = u.damaged;
    }
}

fn drop_small(labels: &mut [i32], min_size: usize) {
    let k = labels.iter().copied().max().unwrap_or(-1);
    if k < 0 {
        return;
    }
    let mut count = vec![0usize; k as usize + 1];
    for &l in labels.iter().filter(|&&l| l >= 0) {
        count[l as usize] += 1;
    }
    for l in labels.iter_mut() {
        if *l >= 0 && count[*l as usize] < min_size {
            *l = -1;
        }
    }
}

/// Fires once the knife has been still for `still_frames` consecutive frames
/// and more particles are damaged than at the previous firing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutDetector {
    pub speed_eps: f64,
    pub still_frames: usize,
    still: usize,
    last_damaged: usize,
}

impl CutDetector {
    pub fn new(initial_damaged: usize) -> Self {
        Self { speed_eps: 1e-4, still_frames: 10, still: 0, last_damaged: initial_damaged }
    }

    /// Feed one frame; returns true when a topology update is due.
    pub fn update(&mut self, knife_speed: f64, damaged: usize) -> bool {
        if knife_speed < self.speed_eps {
            self.still += 1;
        } else {
            self.still = 0;
        }
        if self.still >= self.still_frames && damaged > self.last_damaged {
            self.last_damaged = damaged;
            return true;
        }
        false
    }

    pub fn reset(&mut self, damaged: usize) {
        self.still = 0;
        self.last_damaged = damaged;
    }
}
