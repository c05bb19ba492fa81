//! Scene configuration and the cutting session that drives a simulation
//! through whole cuts: place the blade, sweep it through the object, settle,
//! retract and rediscover the topology.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::GoalSpec;
use crate::geometry::yaw;
use crate::mpm::{
    shape_fits, spawn_object, KnifeCommand, KnifeState, MaterialParams, Oscillation, ParticleSet, Shape, SimConfig,
    SimError, Simulation,
};
use crate::spectral::{evaluate_fragments, Evaluation, SpectralConfig, SpectralError};
use crate::topology::{discover_topology, TopologyError, TopologyParams, TopologyReport, TopologyState};
use crate::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Height of the lowest particle above the floor at spawn, in cells.
pub const REST_GAP: f64 = 0.2;

/// A solid resting on the floor. `position` is the world `(x, z)` of its
/// center; the height follows from the floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: Shape,
    pub position: [f64; 2],
    /// Rotation about world `y`, radians.
    pub yaw: f64,
    pub scale: f64,
    pub skin_thickness: f64,
    pub particles_per_cell: u32,
    pub core: MaterialParams,
    pub skin: MaterialParams,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            name: "block".into(),
            shape: Shape::Box { half_extents: [0.1, 0.05, 0.1] },
            position: [0.5, 0.5],
            yaw: 0.0,
            scale: 1.0,
            skin_thickness: 0.0,
            particles_per_cell: 8,
            core: MaterialParams::core(),
            skin: MaterialParams::skin(),
        }
    }
}

impl ObjectSpec {
    pub fn shape(&self) -> Shape {
        self.shape.scaled(self.scale)
    }

    /// Nominal pose with the shape's bottom a quarter cell above the floor.
    pub fn pose(&self, sim: &SimConfig) -> Pose {
        let h = self.shape().local_bounds().y;
        let y = sim.floor_height() + h + sim.dx() / 4.0;
        Pose::new(Vec3::new(self.position[0], y, self.position[1]), yaw(self.yaw))
    }

    /// Whether the posed object stays clear of the side and ceiling wall
    /// layers. The bottom rests on the floor by construction.
    pub fn fits(&self, sim: &SimConfig) -> bool {
        let margin = sim.dx() * (sim.boundary_cells as f64 + 1.0);
        let mut domain = sim.domain();
        domain.min.y = sim.floor_height() - margin;
        shape_fits(&self.shape(), &self.pose(sim), &domain, margin)
    }

    /// Particles with the lowest one `REST_GAP` cells above the floor,
    /// whatever the lattice phase, so the object starts where it rests.
    pub fn spawn(&self, sim: &SimConfig) -> Result<ParticleSet, SimError> {
        let mut ps = spawn_object(
            &self.shape(),
            &self.pose(sim),
            self.core,
            self.skin,
            self.skin_thickness,
            sim.dx(),
            self.particles_per_cell,
        )?;
        let shift = sim.floor_height() + REST_GAP * sim.dx() - ps.bounds().min.y;
        for p in &mut ps.particles {
            p.x.y += shift;
        }
        Ok(ps)
    }
}

/// Blade geometry; thickness and oscillation amplitude are in grid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnifeSpec {
    pub half_thickness_cells: f64,
    pub half_height: f64,
    pub half_length: f64,
    pub frequency: f64,
    pub amplitude_cells: f64,
    /// World height of the blade center when parked.
    pub park_height: f64,
}

impl Default for KnifeSpec {
    fn default() -> Self {
        Self {
            half_thickness_cells: 0.6,
            half_height: 0.1,
            half_length: 0.15,
            frequency: 20.0,
            amplitude_cells: 0.5,
            park_height: 0.9,
        }
    }
}

impl KnifeSpec {
    pub fn half_extents(&self, dx: f64) -> Vec3 {
        Vec3::new(self.half_thickness_cells * dx, self.half_height, self.half_length)
    }

    pub fn build(&self, sim: &SimConfig, pose: Pose) -> KnifeState {
        let osc = Oscillation { frequency: self.frequency, amplitude: self.amplitude_cells * sim.dx() };
        KnifeState::new(pose, self.half_extents(sim.dx()), osc)
    }
}

/// Scripted cut execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutParams {
    /// Descent speed, m/s.
    pub speed: f64,
    /// Gap between the blade edge and the object top at the start.
    pub clearance: f64,
    /// The sweep ends once the blade's lowest point is this many cells
    /// below the floor plane.
    pub depth_cells: f64,
    /// Still frames after the sweep and after retracting.
    pub settle_frames: usize,
    pub max_frames: usize,
}

impl Default for CutParams {
    fn default() -> Self {
        Self { speed: 0.5, clearance: 0.01, depth_cells: 1.0, settle_frames: 10, max_frames: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub sim: SimConfig,
    pub object: ObjectSpec,
    pub knife: KnifeSpec,
    pub cut: CutParams,
    pub topology: TopologyParams,
    pub spectral: SpectralConfig,
    pub goal: GoalSpec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            object: ObjectSpec::default(),
            knife: KnifeSpec::default(),
            cut: CutParams::default(),
            topology: TopologyParams::default(),
            spectral: SpectralConfig { k_eig: 6, ..SpectralConfig::default() },
            goal: GoalSpec::default(),
        }
    }
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.sim.validate()?;
        self.topology.validate()?;
        self.spectral.validate()?;
        self.goal.validate().map_err(SceneError::Invalid)?;
        if !(self.cut.speed > 0.0 && self.cut.clearance >= 0.0 && self.object.scale > 0.0) {
            return Err(SceneError::Invalid("cut speed and object scale must be positive".into()));
        }
        if !self.object.fits(&self.sim) {
            return Err(SceneError::Invalid(format!("object `{}` does not fit the domain", self.object.name)));
        }
        Ok(())
    }
}

/// One knife action: a start pose followed either by the scripted vertical
/// sweep (`twists` empty) or by per-frame twists `[v, w]` in m/s and rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutAction {
    pub start: Pose,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub twists: Vec<[f32; 6]>,
}

impl CutAction {
    /// Scripted sweep from `start`, rounded through `f32` so the action
    /// survives storage unchanged.
    pub fn scripted(start: Pose) -> Self {
        Self { start: start.quantized(), twists: Vec::new() }
    }
}

pub fn twist_command(t: &[f32; 6]) -> KnifeCommand {
    KnifeCommand::Twist { v: [t[0], t[1], t[2]], w: [t[3], t[4], t[5]] }
}

/// Mutable simulation plus its current topology.
#[derive(Clone, Debug)]
pub struct CutSession {
    pub config: SceneConfig,
    pub sim: Simulation,
    pub topo: TopologyState,
    pub cuts: usize,
}

impl CutSession {
    pub fn new(config: SceneConfig) -> Result<Self, SceneError> {
        config.validate()?;
        let particles = config.object.spawn(&config.sim)?;
        let c = config.object.position;
        let park = Pose::from_position(Vec3::new(c[0], config.knife.park_height, c[1]));
        let knife = config.knife.build(&config.sim, park);
        let sim = Simulation::new(config.sim.clone(), particles, knife)?;
        let mut s = Self { config, sim, topo: TopologyState::default(), cuts: 0 };
        s.update_topology()?;
        Ok(s)
    }

    pub fn step(&mut self, cmd: &KnifeCommand) -> Result<(), SceneError> {
        Ok(self.sim.step(cmd)?)
    }

    /// Knife pose over `(x, z)` with the given yaw, edge `clearance` above the
    /// current object top.
    pub fn approach_pose(&self, x: f64, z: f64, angle: f64) -> Pose {
        let top = self.sim.particles.bounds().max.y;
        let y = top + self.config.cut.clearance + self.sim.knife.half_extents.y;
        Pose::new(Vec3::new(x, y, z), yaw(angle))
    }

    /// Vertical slice at world `x` through the object's center line.
    pub fn slice_action(&self, x: f64) -> CutAction {
        CutAction::scripted(self.approach_pose(x, self.config.object.position[1], 0.0))
    }

    /// Runs one action to completion and updates the topology.
    pub fn execute_cut(&mut self, action: &CutAction) -> Result<TopologyReport, SceneError> {
        self.sweep(action)?;
        self.finish_cut()
    }

    /// Knife motion of an action without settling or topology.
    pub fn sweep(&mut self, action: &CutAction) -> Result<(), SceneError> {
        self.step(&KnifeCommand::Teleport(action.start))?;
        if action.twists.is_empty() {
            let stop = self.config.sim.floor_height() - self.config.cut.depth_cells * self.config.sim.dx();
            let down = KnifeCommand::twist(Vec3::new(0.0, -self.config.cut.speed, 0.0), Vec3::zeros());
            let mut frames = 0;
            while self.sim.knife.aabb().min.y > stop {
                if frames == self.config.cut.max_frames {
                    return Err(SceneError::Invalid("cut did not reach the floor".into()));
                }
                self.step(&down)?;
                frames += 1;
            }
        } else {
            for t in &action.twists {
                self.step(&twist_command(t))?;
            }
        }
        Ok(())
    }

    /// Settle, park the knife, settle again and rediscover the topology.
    pub fn finish_cut(&mut self) -> Result<TopologyReport, SceneError> {
        self.settle()?;
        let p = self.sim.knife.pose;
        let park = Pose::new(Vec3::new(p.position.x, self.config.knife.park_height, p.position.z), p.rotation);
        self.step(&KnifeCommand::Teleport(park.quantized()))?;
        self.settle()?;
        self.cuts += 1;
        self.update_topology()
    }

    fn settle(&mut self) -> Result<(), SceneError> {
        for _ in 0..self.config.cut.settle_frames {
            self.step(&KnifeCommand::zero())?;
        }
        Ok(())
    }

    pub fn update_topology(&mut self) -> Result<TopologyReport, SceneError> {
        let frame = self.sim.frame;
        let report = discover_topology(&mut self.sim.particles, &self.sim.swept, &self.config.topology, frame)?;
        self.topo = report.state.clone();
        Ok(report)
    }

    pub fn evaluate(&self, goal: &[Vec3]) -> Result<Evaluation, SceneError> {
        Ok(evaluate_fragments(&self.topo, goal, &self.config.spectral)?)
    }
}
