//! JSON text frames exchanged with teleoperation clients.

use serde::{Deserialize, Serialize};
use topocut_core::datagen::GoalSpec;
use topocut_core::scene::ObjectSpec;

/// Cluster label sent for particles outside every fragment.
pub const UNASSIGNED: u8 = u8::MAX;

/// Upper bound on points per state frame.
pub const MAX_POINTS: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Knife twist in m/s and rad/s, held until the next twist.
    Twist { v: [f32; 3], w: [f32; 3] },
    CutCommit,
    Reset { object: Box<ObjectSpec> },
    Goal { spec: GoalSpec },
    ClaimControl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnifeFrame {
    pub pos: [f64; 3],
    /// `[x, y, z, w]`.
    pub quat: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFrame {
    #[serde(rename = "R_total")]
    pub r_total: f64,
    #[serde(rename = "N_C")]
    pub n_c: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State { tick: u64, points: Vec<[f32; 3]>, clusters: Vec<u8>, knife: KnifeFrame, reward: RewardFrame },
    /// Reply to `claim_control`.
    Control { granted: bool },
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server frames always serialize")
    }
}
