//! MLS-MPM solver: quadratic B-spline APIC transfers with the fused
//! (moving least squares) force, fixed-corotated elasticity, von Mises skin
//! plasticity, volumetric/softening damage and a box knife with SDF contact.

mod constitutive;
mod grid;
mod knife;
mod material;
mod particles;
mod sim;
mod spawn;

pub use constitutive::{
    compute_stress, energy_fixed_corotated, kirchhoff_fixed_corotated, piola_fixed_corotated, polar_rotation,
    regularize_inverted, svd_rv, sym_eigenvalues, von_mises_return_map,
};
pub use grid::{bspline_weights, g2p, grid_update, p2g, update_deformation, Grid, P2gStats};
pub use knife::{box_aabb, knife_sdf, ContactMode, KnifeCommand, KnifeState, Oscillation};
pub use material::{damage_rule, DamageUpdate, MaterialParams};
pub use particles::{Particle, ParticleSet};
pub use sim::{ConservationStats, SimConfig, Simulation, SweptVolume};
pub use spawn::{shape_fits, spawn_object, Shape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("degenerate geometry: shape contains no particles")]
    DegenerateGeometry,
    #[error("particle {index} at {position:?} is outside the grid support")]
    OutsideGrid { index: usize, position: [f64; 3] },
    #[error("CFL violation: particle {index} moves at {speed} (limit {limit})")]
    Cfl { index: usize, speed: f64, limit: f64 },
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
