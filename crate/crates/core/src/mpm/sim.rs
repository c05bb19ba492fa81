use serde::{Deserialize, Serialize};

use super::grid::{self, Contribution, Grid};
use super::knife::box_aabb;
use super::{ContactMode, KnifeCommand, KnifeState, ParticleSet, SimError};
use crate::geometry::Aabb;
use crate::{Pose, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub grid_res: usize,
    pub domain_min: Vec3,
    pub domain_size: f64,
    pub dt: f64,
    pub substeps_per_frame: usize,
    pub gravity: Vec3,
    /// Linear velocity damping rate on grid nodes, in 1/s.
    pub damping: f64,
    /// Number of node layers at each face treated as wall.
    pub boundary_cells: usize,
    pub floor_friction: f64,
    /// Kelvin-Voigt viscosity on the symmetric velocity gradient.
    pub viscosity: f64,
    pub knife_contact: ContactMode,
    /// Track P2G/G2P conservation residuals every substep.
    pub check_conservation: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_res: 64,
            domain_min: Vec3::zeros(),
            domain_size: 1.0,
            dt: 2e-4,
            substeps_per_frame: 25,
            gravity: Vec3::new(0.0, -9.8, 0.0),
            damping: 0.0,
            boundary_cells: 3,
            floor_friction: 0.5,
            viscosity: 0.0,
            knife_contact: ContactMode::Slip,
            check_conservation: false,
        }
    }
}

impl SimConfig {
    pub fn dx(&self) -> f64 {
        self.domain_size / self.grid_res as f64
    }

    pub fn frame_dt(&self) -> f64 {
        self.dt * self.substeps_per_frame as f64
    }

    pub fn domain(&self) -> Aabb {
        Aabb { min: self.domain_min, max: self.domain_min.add_scalar(self.domain_size) }
    }

    /// Height of the floor plane particles rest on.
    pub fn floor_height(&self) -> f64 {
        self.domain_min.y + self.dx() * self.boundary_cells as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.domain_size > 0.0 && self.grid_res >= 8 && self.substeps_per_frame >= 1) {
            return Err(SimError::InvalidConfig("dt, domain size, grid resolution and substeps must be positive".into()));
        }
        if self.boundary_cells < 2 || 2 * self.boundary_cells >= self.grid_res {
            return Err(SimError::InvalidConfig("boundary cells must be in [2, res/2)".into()));
        }
        if !(self.damping >= 0.0 && self.viscosity >= 0.0 && self.floor_friction >= 0.0) {
            return Err(SimError::InvalidConfig("damping, viscosity and friction must be non-negative".into()));
        }
        Ok(())
    }
}

/// Knife poses recorded while the blade overlaps the object. The carve
/// applied by topology discovery is the union of these boxes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweptVolume {
    pub poses: Vec<Pose>,
    pub half_extents: Vec3,
}

impl SweptVolume {
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Signed distance to the union of recorded blade boxes.
    pub fn sdf(&self, x: &Vec3) -> f64 {
        self.poses.iter().map(|p| super::knife_sdf(x, p, &self.half_extents)).fold(f64::INFINITY, f64::min)
    }

    fn record(&mut self, pose: Pose, min_step: f64) {
        if let Some(last) = self.poses.last() {
            let moved = (last.position - pose.position).norm();
            let turned = last.rotation.angle_to(&pose.rotation);
            if moved < min_step && turned < 1e-3 {
                return;
            }
        }
        self.poses.push(pose);
    }
}

/// Largest residuals seen since the last reset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationStats {
    pub substeps: u64,
    pub max_mass_rel_err: f64,
    pub max_p2g_momentum_rel_err: f64,
    pub max_g2p_momentum_rel_err: f64,
}

/// A scene: particles, one knife and the background grid.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: SimConfig,
    pub particles: ParticleSet,
    pub knife: KnifeState,
    pub grid: Grid,
    pub swept: SweptVolume,
    pub frame: u64,
    pub time: f64,
    pub stats: ConservationStats,
    scratch: Vec<Contribution>,
}

impl Simulation {
    pub fn new(config: SimConfig, particles: ParticleSet, knife: KnifeState) -> Result<Self, SimError> {
        config.validate()?;
        for m in &particles.materials {
            m.validate()?;
        }
        if knife.half_extents.min() <= 0.0 {
            return Err(SimError::InvalidConfig("knife half extents must be positive".into()));
        }
        let grid = Grid::new(config.grid_res, config.domain_min, config.domain_size);
        let swept = SweptVolume { poses: Vec::new(), half_extents: knife.half_extents };
        Ok(Self {
            config,
            particles,
            knife,
            grid,
            swept,
            frame: 0,
            time: 0.0,
            stats: ConservationStats::default(),
            scratch: Vec::new(),
        })
    }

    /// Advance one frame under `cmd`.
    pub fn step(&mut self, cmd: &KnifeCommand) -> Result<(), SimError> {
        match cmd {
            KnifeCommand::Teleport(pose) => {
                self.knife.pose = *pose;
                self.knife.linear_velocity = Vec3::zeros();
                self.knife.angular_velocity = Vec3::zeros();
            }
            KnifeCommand::Twist { .. } => {
                let (v, w) = cmd.velocities();
                self.knife.linear_velocity = v;
                self.knife.angular_velocity = w;
            }
        }
        for _ in 0..self.config.substeps_per_frame {
            self.substep()?;
        }
        self.frame += 1;
        Ok(())
    }

    pub fn substep(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        grid::prepare(&self.grid, &self.particles, dt, self.config.viscosity, &mut self.scratch)?;
        grid::scatter(&mut self.grid, &self.scratch);
        if self.config.check_conservation {
            let s = grid::p2g_stats(&self.grid, &self.scratch);
            self.stats.max_mass_rel_err = self.stats.max_mass_rel_err.max(s.mass_rel_err);
            self.stats.max_p2g_momentum_rel_err = self.stats.max_p2g_momentum_rel_err.max(s.momentum_rel_err);
        }
        self.record_sweep();
        grid::grid_update(&mut self.grid, dt, &self.config.gravity, Some(&self.knife), &self.config);
        grid::g2p(&self.grid, &mut self.particles, dt)?;
        if self.config.check_conservation {
            let gm = self.grid.velocity_momentum();
            let pm = self.particles.momentum();
            let scale: f64 = self.particles.particles.iter().map(|p| p.mass * p.v.norm()).sum();
            let err = if scale > 0.0 { (gm - pm).norm() / scale } else { (gm - pm).norm() };
            self.stats.max_g2p_momentum_rel_err = self.stats.max_g2p_momentum_rel_err.max(err);
        }
        grid::update_deformation(&mut self.particles, dt);
        self.knife.advance(dt);
        self.time += dt;
        self.stats.substeps += 1;
        Ok(())
    }

    fn record_sweep(&mut self) {
        let Some((lo, hi)) = self.grid.active else { return };
        let g = &self.grid;
        let body = Aabb { min: g.node_position(lo[0], lo[1], lo[2]), max: g.node_position(hi[0], hi[1], hi[2]) };
        let pose = self.knife.effective_pose();
        if box_aabb(&pose, &self.knife.half_extents).overlaps(&body) {
            self.swept.record(pose, self.grid.dx / 8.0);
        }
    }

    /// Add `dv` to every particle of `cluster` (all particles when `None`);
    /// the settling nudge for loose fragments.
    pub fn push(&mut self, cluster: Option<i32>, dv: Vec3) {
        for p in &mut self.particles.particles {
            if cluster.is_none_or(|c| c == p.cluster_id) {
                p.v += dv;
            }
        }
    }
}
