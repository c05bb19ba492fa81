use serde::{Deserialize, Serialize};

use super::MaterialParams;
use crate::blob::{Blob, BlobError};
use crate::geometry::Aabb;
use crate::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: Vec3,
    pub v: Vec3,
    pub f: Mat3,
    pub c: Mat3,
    pub mass: f64,
    pub volume0: f64,
    pub material: u8,
    pub yield_stress: f64,
    pub plastic_strain: f64,
    pub damaged: bool,
    pub cluster_id: i32,
}

impl Particle {
    pub fn new(x: Vec3, volume0: f64, material: u8, mat: &MaterialParams) -> Self {
        Self {
            x,
            v: Vec3::zeros(),
            f: Mat3::identity(),
            c: Mat3::zeros(),
            mass: mat.rho * volume0,
            volume0,
            material,
            yield_stress: mat.yield_stress0,
            plastic_strain: 0.0,
            damaged: false,
            cluster_id: 0,
        }
    }

    pub fn j(&self) -> f64 {
        self.f.determinant()
    }
}

/// Lagrangian state of every body in the scene plus its material table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub materials: Vec<MaterialParams>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn labels(&self) -> Vec<i32> {
        self.particles.iter().map(|p| p.cluster_id).collect()
    }

    pub fn damaged_count(&self) -> usize {
        self.particles.iter().filter(|p| p.damaged).count()
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.particles.iter().fold(Vec3::zeros(), |acc, p| acc + p.v * p.mass)
    }

    pub fn max_speed(&self) -> f64 {
        self.particles.iter().map(|p| p.v.norm()).fold(0.0, f64::max)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.particles.iter().map(|p| 0.5 * p.mass * p.v.norm_squared()).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.particles.iter().map(|p| &p.x))
    }

    /// Mean lattice spacing, from the mean particle rest volume.
    pub fn spacing(&self) -> f64 {
        let v = self.particles.iter().map(|p| p.volume0).sum::<f64>() / self.len().max(1) as f64;
        v.cbrt()
    }

    /// Append another set, remapping its material indices.
    pub fn append(&mut self, mut other: ParticleSet) {
        let offset = self.materials.len() as u8;
        self.materials.append(&mut other.materials);
        for p in &mut other.particles {
            p.material += offset;
        }
        self.particles.append(&mut other.particles);
    }

    /// Snapshot as a `TCUT` blob with `f32` kinematics.
    pub fn to_blob(&self) -> Blob {
        let mut b = Blob::new(self.len());
        let ps = &self.particles;
        b.push_f32("position", 3, ps.iter().flat_map(|p| p.x.iter().map(|&c| c as f32).collect::<Vec<_>>()).collect());
        b.push_f32("velocity", 3, ps.iter().flat_map(|p| p.v.iter().map(|&c| c as f32).collect::<Vec<_>>()).collect());
        b.push_f32("J", 1, ps.iter().map(|p| p.j() as f32).collect());
        b.push_u32("material", 1, ps.iter().map(|p| p.material as u32).collect());
        b.push_bits("damaged", ps.iter().map(|p| p.damaged).collect());
        b.push_u32("cluster", 1, ps.iter().map(|p| p.cluster_id as u32).collect());
        b
    }

    /// Positions from a snapshot blob.
    pub fn positions_from_blob(blob: &Blob) -> Result<Vec<Vec3>, BlobError> {
        let x = blob.f32s("position")?;
        Ok(x.chunks_exact(3).map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect())
    }
}
