use serde::{Deserialize, Serialize};

use super::{MaterialParams, Particle, ParticleSet, SimError};
use crate::geometry::{box_sdf, Aabb};
use crate::{Pose, Vec3};

/// Analytic solid, centred at the origin of its local frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    Ellipsoid { radii: [f64; 3] },
}

impl Shape {
    /// Signed distance (approximate for ellipsoids), negative inside.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Box { half_extents } => box_sdf(p, &Vec3::from(half_extents)),
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Ellipsoid { radii } => {
                let r = Vec3::from(radii);
                let k0 = p.component_div(&r).norm();
                let k1 = p.component_div(&r.component_mul(&r)).norm();
                if k1 == 0.0 {
                    -r.min()
                } else {
                    k0 * (k0 - 1.0) / k1
                }
            }
        }
    }

    /// Radius of a bounding sphere.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Box { half_extents } => Vec3::from(half_extents).norm(),
            Shape::Sphere { radius } => radius,
            Shape::Ellipsoid { radii } => Vec3::from(radii).max(),
        }
    }

    pub fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Box { half_extents } => Shape::Box { half_extents: half_extents.map(|h| h * s) },
            Shape::Sphere { radius } => Shape::Sphere { radius: radius * s },
            Shape::Ellipsoid { radii } => Shape::Ellipsoid { radii: radii.map(|h| h * s) },
        }
    }

    /// Half extents of the axis-aligned local bounding box.
    pub fn local_bounds(&self) -> Vec3 {
        match *self {
            Shape::Box { half_extents } => Vec3::from(half_extents),
            Shape::Sphere { radius } => Vec3::repeat(radius),
            Shape::Ellipsoid { radii } => Vec3::from(radii),
        }
    }
}

/// Sample a solid on a lattice aligned with its local frame, `particles_per_cell`
/// particles per grid cell of size `dx`. Particles within `skin_thickness` of the
/// surface get the skin material (index 1), the rest the core (index 0).
pub fn spawn_object(
    shape: &Shape,
    pose: &Pose,
    core: MaterialParams,
    skin: MaterialParams,
    skin_thickness: f64,
    dx: f64,
    particles_per_cell: u32,
) -> Result<ParticleSet, SimError> {
    if skin_thickness < 0.0 || particles_per_cell == 0 {
        return Err(SimError::InvalidConfig("negative skin thickness or zero particles per cell".into()));
    }
    core.validate()?;
    skin.validate()?;
    let per_axis = (particles_per_cell as f64).cbrt().round().max(1.0);
    let s = dx / per_axis;
    let ext = shape.local_bounds();
    let n = ext.map(|e| (e / s).floor() as i64 + 1);
    let mut particles = Vec::new();
    for i in -n.x..=n.x {
        for j in -n.y..=n.y {
            for k in -n.z..=n.z {
                let local = Vec3::new(i as f64, j as f64, k as f64) * s;
                let d = shape.sdf(&local);
                if d >= 0.0 {
                    continue;
                }
                let material = u8::from(d > -skin_thickness);
                let mat = if material == 1 { &skin } else { &core };
                particles.push(Particle::new(pose.transform_point(&local), s * s * s, material, mat));
            }
        }
    }
    if particles.is_empty() {
        return Err(SimError::DegenerateGeometry);
    }
    Ok(ParticleSet { particles, materials: vec![core, skin] })
}

/// Particle-free check that a posed shape lies inside `domain` with `margin`.
pub fn shape_fits(shape: &Shape, pose: &Pose, domain: &Aabb, margin: f64) -> bool {
    let r = pose.rotation_matrix().abs() * shape.local_bounds();
    let lo = pose.position - r;
    let hi = pose.position + r;
    (0..3).all(|k| lo[k] >= domain.min[k] + margin && hi[k] <= domain.max[k] - margin)
}
