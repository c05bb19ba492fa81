use serde::{Deserialize, Serialize};

use crate::geometry::{box_sdf, box_sdf_normal, Aabb};
use crate::{Pose, Vec3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// Remove the relative velocity component pointing into the blade.
    #[default]
    Slip,
    /// Nodes inside the blade move with it.
    Sticky,
}

/// Sinusoidal sawing motion along the blade's long (local `z`) axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Thin box blade. Local frame: `x` is the blade normal, `y` points from the
/// edge to the spine, `z` runs along the blade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnifeState {
    pub pose: Pose,
    pub half_extents: Vec3,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    pub oscillation: Oscillation,
    /// Time driving the oscillation phase.
    pub time: f64,
}

/// Per-frame knife input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnifeCommand {
    /// World-frame linear and angular velocity, held for the whole frame.
    Twist { v: [f32; 3], w: [f32; 3] },
    /// Place the knife at a pose, at rest.
    Teleport(Pose),
}

impl KnifeCommand {
    pub fn zero() -> Self {
        KnifeCommand::Twist { v: [0.0; 3], w: [0.0; 3] }
    }

    pub fn twist(v: Vec3, w: Vec3) -> Self {
        KnifeCommand::Twist {
            v: [v.x as f32, v.y as f32, v.z as f32],
            w: [w.x as f32, w.y as f32, w.z as f32],
        }
    }

    /// Linear and angular velocity of a twist (zero for a teleport).
    pub fn velocities(&self) -> (Vec3, Vec3) {
        match self {
            KnifeCommand::Twist { v, w } => (
                Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64),
                Vec3::new(w[0] as f64, w[1] as f64, w[2] as f64),
            ),
            KnifeCommand::Teleport(_) => (Vec3::zeros(), Vec3::zeros()),
        }
    }
}

impl KnifeState {
    pub fn new(pose: Pose, half_extents: Vec3, oscillation: Oscillation) -> Self {
        Self {
            pose,
            half_extents,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            oscillation,
            time: 0.0,
        }
    }

    fn blade_axis(&self) -> Vec3 {
        self.pose.rotation * Vec3::z()
    }

    fn phase(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.oscillation.frequency * self.time
    }

    /// Pose including the oscillation offset.
    pub fn effective_pose(&self) -> Pose {
        let s = self.oscillation.amplitude * self.phase().sin();
        Pose { position: self.pose.position + self.blade_axis() * s, rotation: self.pose.rotation }
    }

    pub fn sdf(&self, x: &Vec3) -> f64 {
        knife_sdf(x, &self.effective_pose(), &self.half_extents)
    }

    /// Outward blade normal at `x` in world coordinates.
    pub fn normal(&self, x: &Vec3) -> Vec3 {
        let pose = self.effective_pose();
        let local = pose.inverse_transform_point(x);
        pose.rotation * box_sdf_normal(&local, &self.half_extents)
    }

    /// Outward normal at `x` and whether it belongs to a blade face (local
    /// `x`) rather than the edge, spine or ends.
    pub fn face_normal(&self, x: &Vec3) -> (Vec3, bool) {
        let pose = self.effective_pose();
        let n = box_sdf_normal(&pose.inverse_transform_point(x), &self.half_extents);
        (pose.rotation * n, n.x != 0.0 && n.y == 0.0 && n.z == 0.0)
    }

    /// Rigid velocity of the blade material at `x`.
    pub fn velocity_at(&self, x: &Vec3) -> Vec3 {
        let w = 2.0 * std::f64::consts::PI * self.oscillation.frequency;
        let osc = self.blade_axis() * (self.oscillation.amplitude * w * self.phase().cos());
        let c = self.effective_pose().position;
        self.linear_velocity + self.angular_velocity.cross(&(x - c)) + osc
    }

    pub fn advance(&mut self, dt: f64) {
        self.pose = self.pose.integrate(&self.linear_velocity, &self.angular_velocity, dt);
        self.time += dt;
    }

    pub fn aabb(&self) -> Aabb {
        box_aabb(&self.effective_pose(), &self.half_extents)
    }
}

/// Signed distance to an oriented box.
pub fn knife_sdf(x: &Vec3, pose: &Pose, half: &Vec3) -> f64 {
    box_sdf(&pose.inverse_transform_point(x), half)
}

pub fn box_aabb(pose: &Pose, half: &Vec3) -> Aabb {
    let r = pose.rotation_matrix().abs();
    let e = r * half;
    Aabb { min: pose.position - e, max: pose.position + e }
}
