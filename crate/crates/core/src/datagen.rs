//! Goal shapes, episode runners, replay and the on-disk demonstration format.
//!
//! An episode is a chain of topology states joined by knife actions. Each
//! tuple stores the state before the cut, the action with its mask over that
//! state's points, the state after, and the spectral reward of the state
//! after.
//!
//! Dataset layout: `manifest.json` plus one `episode_NNNNN.tcut` blob per
//! episode with fields
//!
//! ```text
//! state_offsets u32      n_states + 1 prefix offsets into state_points / state_labels
//! state_points  f32 x 3  all states concatenated
//! state_labels  u32
//! state_frames  u32 x 2  frame as (low, high) words
//! action_pose   u32 x 14 start pose, seven f64 (x y z qw qi qj qk) as (low, high) words
//! twist_offsets u32      n + 1
//! twists        f32 x 6
//! mask_offsets  u32      n + 1
//! mask          bits
//! reward        f32      one per tuple
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::blob::{Blob, BlobError};
use crate::geometry::yaw;
use crate::metrics::chamfer;
use crate::planner::{MPPIConfig, PlanError, Planner, SessionRollout};
use crate::policy::{action_to_mask, ActionMask};
use crate::mpm::KnifeCommand;
use crate::scene::{twist_command, CutAction, CutSession, ObjectSpec, SceneConfig, SceneError};
use crate::spectral::evaluate_fragments;
use crate::topology::TopologyState;
use crate::{Pose, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema version {0} is not supported")]
    Version(u32),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("no pose fits the domain after {0} draws")]
    PoseRejected(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    #[default]
    Slice,
    Stick,
    Dice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSampling {
    /// Inclusive lattice spanning the box exactly; the point count is the
    /// nearest lattice to `sample_count`.
    #[default]
    Grid,
    /// Exactly `sample_count` uniform draws.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    pub dims: [f64; 3],
    pub sample_count: usize,
    #[serde(default)]
    pub sampling: GoalSampling,
}

impl Default for GoalSpec {
    fn default() -> Self {
        Self { kind: GoalKind::Slice, dims: [0.04, 0.1, 0.2], sample_count: 1625, sampling: GoalSampling::Grid }
    }
}

impl GoalSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !self.dims.iter().all(|d| *d > 0.0) || self.sample_count == 0 {
            return Err("goal dims and sample count must be positive".into());
        }
        let mut d = self.dims;
        d.sort_by(f64::total_cmp);
        let ok = match self.kind {
            GoalKind::Slice => d[0] <= 0.5 * d[1],
            GoalKind::Stick => d[1] <= 0.5 * d[2],
            GoalKind::Dice => d[2] <= 1.5 * d[0],
        };
        if !ok {
            return Err(format!("dims {:?} do not match a {:?} goal", self.dims, self.kind));
        }
        Ok(())
    }

    /// Per-axis lattice counts for grid sampling.
    pub fn grid_counts(&self) -> [usize; 3] {
        let volume: f64 = self.dims.iter().product();
        let h = (volume / self.sample_count as f64).cbrt();
        self.dims.map(|d| ((d / h).round() as usize).max(2))
    }
}

/// Samples of the axis-aligned box `[0, dims]`.
pub fn generate_goal<R: Rng + ?Sized>(spec: &GoalSpec, rng: &mut R) -> Vec<Vec3> {
    match spec.sampling {
        GoalSampling::Grid => {
            let n = spec.grid_counts();
            let axis = |k: usize, i: usize| spec.dims[k] * i as f64 / (n[k] - 1) as f64;
            let mut out = Vec::with_capacity(n[0] * n[1] * n[2]);
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        out.push(Vec3::new(axis(0, i), axis(1, j), axis(2, k)));
                    }
                }
            }
            out
        }
        GoalSampling::Uniform => (0..spec.sample_count)
            .map(|_| Vec3::from_fn(|k, _| rng.random_range(0.0..=spec.dims[k])))
            .collect(),
    }
}

/// Ranges for pose randomization. Translations are offsets from the
/// object's nominal position in units of the domain size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseRanges {
    pub x: [f64; 2],
    pub z: [f64; 2],
    pub yaw_deg: [f64; 2],
    pub scale: [f64; 2],
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self { x: [-0.4, 0.4], z: [-0.2, 0.2], yaw_deg: [-15.0, 15.0], scale: [0.8, 1.2] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRandomization {
    pub translation: [f64; 2],
    pub yaw: f64,
    pub scale: f64,
}

impl Default for PoseRandomization {
    fn default() -> Self {
        Self { translation: [0.0; 2], yaw: 0.0, scale: 1.0 }
    }
}

pub const MAX_POSE_DRAWS: usize = 100;

/// Draws translation, yaw and scale until the object fits the domain.
pub fn randomize_pose<R: Rng + ?Sized>(
    object: &ObjectSpec,
    ranges: &PoseRanges,
    sim: &crate::mpm::SimConfig,
    rng: &mut R,
) -> Result<(ObjectSpec, PoseRandomization), DatagenError> {
    let draw = |r: &mut R, [lo, hi]: [f64; 2]| if lo < hi { r.random_range(lo..=hi) } else { lo };
    for _ in 0..MAX_POSE_DRAWS {
        let p = PoseRandomization {
            translation: [draw(rng, ranges.x) * sim.domain_size, draw(rng, ranges.z) * sim.domain_size],
            yaw: draw(rng, ranges.yaw_deg).to_radians(),
            scale: draw(rng, ranges.scale),
        };
        let posed = apply_pose(object, &p);
        if posed.fits(sim) {
            return Ok((posed, p));
        }
    }
    Err(DatagenError::PoseRejected(MAX_POSE_DRAWS))
}

pub fn apply_pose(object: &ObjectSpec, p: &PoseRandomization) -> ObjectSpec {
    ObjectSpec {
        position: [object.position[0] + p.translation[0], object.position[1] + p.translation[1]],
        yaw: object.yaw + p.yaw,
        scale: object.scale * p.scale,
        ..object.clone()
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `root xor splitmix64(i)`.
pub fn episode_seed(root: u64, i: u64) -> u64 {
    root ^ splitmix64(i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Scripted,
    Mppi,
    Teleop,
}

/// Where the actions of an episode come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum EpisodeSource {
    /// Fixed actions, executed in order.
    Scripted { actions: Vec<CutAction> },
    /// Parallel slices of the given thickness along the object's local `x`,
    /// starting from its low end.
    Slices { thickness: f64 },
    /// Receding-horizon MPPI refining the slice schedule: each cut starts at
    /// the scheduled pose and runs `cut_frames` planned twist frames.
    Mppi { config: MPPIConfig, thickness: f64, cut_frames: usize, stop_reward: Option<f64> },
}

impl EpisodeSource {
    pub fn kind(&self) -> SourceKind {
        match self {
            EpisodeSource::Mppi { .. } => SourceKind::Mppi,
            _ => SourceKind::Scripted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationTuple {
    pub topo_t: TopologyState,
    pub action: CutAction,
    pub mask: ActionMask,
    pub topo_next: TopologyState,
    pub reward: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Scene with the posed object; enough to replay.
    pub scene: SceneConfig,
    pub pose_randomization: PoseRandomization,
    pub source: SourceKind,
    pub seed: u64,
    pub initial: TopologyState,
    pub tuples: Vec<DemonstrationTuple>,
    pub complete: bool,
    pub error: Option<String>,
}

impl EpisodeRecord {
    pub fn final_topology(&self) -> &TopologyState {
        self.tuples.last().map_or(&self.initial, |t| &t.topo_next)
    }

    /// Cluster counts of the initial and every later state.
    pub fn cluster_counts(&self) -> Vec<usize> {
        std::iter::once(&self.initial).chain(self.tuples.iter().map(|t| &t.topo_next)).map(|s| s.num_clusters()).collect()
    }
}

/// Slice start pose `k` (1-based) of a schedule with the given thickness.
pub fn slice_pose(session: &CutSession, thickness: f64, k: usize) -> Pose {
    let obj = &session.config.object;
    let half = obj.shape().local_bounds().x;
    let rot = yaw(obj.yaw);
    let offset = rot * Vec3::new(-half + k as f64 * thickness, 0.0, 0.0);
    let p = session.approach_pose(obj.position[0] + offset.x, obj.position[1] + offset.z, obj.yaw);
    Pose::new(p.position, rot)
}

pub fn run_episode(
    scene: &SceneConfig,
    source: &EpisodeSource,
    max_cuts: usize,
    seed: u64,
) -> Result<EpisodeRecord, DatagenError> {
    run_episode_posed(scene, PoseRandomization::default(), source, max_cuts, seed)
}

fn run_episode_posed(
    scene: &SceneConfig,
    pose_randomization: PoseRandomization,
    source: &EpisodeSource,
    max_cuts: usize,
    seed: u64,
) -> Result<EpisodeRecord, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let goal = generate_goal(&scene.goal, &mut rng);
    let mut session = CutSession::new(scene.clone())?;
    let mut record = EpisodeRecord {
        scene: scene.clone(),
        pose_randomization,
        source: source.kind(),
        seed,
        initial: session.topo.clone(),
        tuples: Vec::new(),
        complete: true,
        error: None,
    };
    let mut planner = match source {
        EpisodeSource::Mppi { config, .. } => Some(Planner::new(config.clone())?),
        _ => None,
    };
    for k in 1..=max_cuts {
        let action = match source {
            EpisodeSource::Scripted { actions } => match actions.get(k - 1) {
                Some(a) => a.clone(),
                None => break,
            },
            EpisodeSource::Slices { thickness } => CutAction::scripted(slice_pose(&session, *thickness, k)),
            EpisodeSource::Mppi { thickness, cut_frames, .. } => {
                let start = slice_pose(&session, *thickness, k).quantized();
                let planner = planner.as_mut().expect("planner");
                match plan_cut(&session, planner, start, *cut_frames, &goal, &mut rng) {
                    Ok(a) => a,
                    Err(e) => {
                        record.complete = false;
                        record.error = Some(e.to_string());
                        break;
                    }
                }
            }
        };
        let topo_t = session.topo.clone();
        let mask = action_to_mask(&topo_t.all_points(), &action.start);
        let step = session
            .execute_cut(&action)
            .and_then(|_| Ok(evaluate_fragments(&session.topo, &goal, &session.config.spectral)?));
        match step {
            Ok(eval) => {
                let reward = eval.r_total as f32;
                record.tuples.push(DemonstrationTuple { topo_t, action, mask, topo_next: session.topo.clone(), reward });
                if let EpisodeSource::Mppi { stop_reward, .. } = source {
                    let stop = stop_reward.unwrap_or(scene.spectral.reward.success_threshold() * max_cuts as f64);
                    if eval.r_total >= stop {
                        break;
                    }
                }
            }
            Err(e) => {
                record.complete = false;
                record.error = Some(e.to_string());
                break;
            }
        }
    }
    Ok(record)
}

/// Receding-horizon control of one cut: replan every frame, execute the
/// first action, record it as a twist.
fn plan_cut(
    session: &CutSession,
    planner: &mut Planner,
    start: Pose,
    frames: usize,
    goal: &[Vec3],
    rng: &mut ChaCha8Rng,
) -> Result<CutAction, DatagenError> {
    let frame_dt = session.config.sim.frame_dt();
    let descent = session.config.cut.speed * frame_dt;
    planner.u.actions = vec![[0.0, -descent, 0.0, 0.0, 0.0, 0.0]; planner.config.horizon];
    let mut live = session.clone();
    live.step(&KnifeCommand::Teleport(start))?;
    let mut twists = Vec::with_capacity(frames);
    for _ in 0..frames {
        let model = SessionRollout { session: &live, goal };
        let out = planner.plan(&model, rng)?;
        let tw = out.next_action.map(|a| (a / frame_dt) as f32);
        live.step(&twist_command(&tw))?;
        twists.push(tw);
        planner.u.actions.pop();
        planner.u.actions.push([0.0, -descent, 0.0, 0.0, 0.0, 0.0]);
    }
    Ok(CutAction { start, twists })
}

/// Re-executes every action of a record from its scene. Differences from the
/// recorded topologies are logged with their Chamfer distance.
pub fn replay(record: &EpisodeRecord) -> Result<EpisodeRecord, DatagenError> {
    let actions: Vec<CutAction> = record.tuples.iter().map(|t| t.action.clone()).collect();
    let mut out = run_episode_posed(
        &record.scene,
        record.pose_randomization,
        &EpisodeSource::Scripted { actions },
        record.tuples.len(),
        record.seed,
    )?;
    out.source = record.source;
    for (i, (a, b)) in record.tuples.iter().zip(&out.tuples).enumerate() {
        if a.topo_next != b.topo_next {
            let d = chamfer(&a.topo_next.all_points(), &b.topo_next.all_points());
            warn!("replay diverged at step {i}: chamfer {d:.3e}");
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub file: String,
    pub sha256: String,
    pub seed: u64,
    pub source: SourceKind,
    pub complete: bool,
    pub error: Option<String>,
    pub tuples: usize,
    pub scene: SceneConfig,
    pub pose_randomization: PoseRandomization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub episodes: Vec<EpisodeEntry>,
    /// Free-form echo of the generating configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

fn split_u64(v: u64) -> [u32; 2] {
    [v as u32, (v >> 32) as u32]
}

fn join_u64(w: &[u32]) -> u64 {
    w[0] as u64 | (w[1] as u64) << 32
}

fn pose_words(p: &Pose) -> Vec<u32> {
    let q = p.rotation.into_inner();
    [p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k].iter().flat_map(|v| split_u64(v.to_bits())).collect()
}

fn words_pose(w: &[u32]) -> Pose {
    let v: Vec<f64> = w.chunks_exact(2).map(|c| f64::from_bits(join_u64(c))).collect();
    let q = UnitQuaternion::new_unchecked(Quaternion::new(v[3], v[4], v[5], v[6]));
    Pose::new(Vec3::new(v[0], v[1], v[2]), q)
}

fn offsets<I: Iterator<Item = usize>>(lens: I) -> Vec<u32> {
    let mut out = vec![0u32];
    for l in lens {
        out.push(out.last().unwrap() + l as u32);
    }
    out
}

pub fn episode_blob(record: &EpisodeRecord) -> Blob {
    let states: Vec<&TopologyState> =
        std::iter::once(&record.initial).chain(record.tuples.iter().map(|t| &t.topo_next)).collect();
    let mut b = Blob::new(record.tuples.len());
    b.push_u32("state_offsets", 1, offsets(states.iter().map(|s| s.len())));
    b.push_f32("state_points", 3, states.iter().flat_map(|s| s.points.iter().flatten().copied()).collect());
    b.push_u32("state_labels", 1, states.iter().flat_map(|s| s.labels.iter().map(|&l| l as u32)).collect());
    b.push_u32("state_frames", 2, states.iter().flat_map(|s| split_u64(s.frame)).collect());
    b.push_u32("action_pose", 14, record.tuples.iter().flat_map(|t| pose_words(&t.action.start)).collect());
    b.push_u32("twist_offsets", 1, offsets(record.tuples.iter().map(|t| t.action.twists.len())));
    b.push_f32("twists", 6, record.tuples.iter().flat_map(|t| t.action.twists.iter().flatten().copied()).collect());
    b.push_u32("mask_offsets", 1, offsets(record.tuples.iter().map(|t| t.mask.len())));
    b.push_bits("mask", record.tuples.iter().flat_map(|t| t.mask.iter().copied()).collect());
    b.push_f32("reward", 1, record.tuples.iter().map(|t| t.reward).collect());
    b
}

fn episode_from_blob(blob: &Blob, entry: &EpisodeEntry) -> Result<EpisodeRecord, DatagenError> {
    let so = blob.u32s("state_offsets")?;
    let pts = blob.f32s("state_points")?;
    let labels = blob.u32s("state_labels")?;
    let frames = blob.u32s("state_frames")?;
    let poses = blob.u32s("action_pose")?;
    let to = blob.u32s("twist_offsets")?;
    let tw = blob.f32s("twists")?;
    let mo = blob.u32s("mask_offsets")?;
    let mask = blob.bits("mask")?;
    let reward = blob.f32s("reward")?;
    let n = reward.len();
    let shape_ok = so.len() == n + 2
        && frames.len() == 2 * (n + 1)
        && poses.len() == 14 * n
        && to.len() == n + 1
        && mo.len() == n + 1
        && *so.last().unwrap() as usize == labels.len()
        && pts.len() == 3 * labels.len()
        && *to.last().unwrap() as usize * 6 == tw.len()
        && *mo.last().unwrap() as usize == mask.len();
    if !shape_ok {
        return Err(BlobError::Shape("episode".into()).into());
    }
    let state = |i: usize| {
        let (a, b) = (so[i] as usize, so[i + 1] as usize);
        TopologyState {
            points: pts[3 * a..3 * b].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            labels: labels[a..b].iter().map(|&l| l as u8).collect(),
            frame: join_u64(&frames[2 * i..2 * i + 2]),
        }
    };
    let states: Vec<TopologyState> = (0..=n).map(state).collect();
    let tuples = (0..n)
        .map(|i| {
            let (ta, tb) = (to[i] as usize, to[i + 1] as usize);
            DemonstrationTuple {
                topo_t: states[i].clone(),
                action: CutAction {
                    start: words_pose(&poses[14 * i..14 * (i + 1)]),
                    twists: tw[6 * ta..6 * tb].chunks_exact(6).map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]]).collect(),
                },
                mask: mask[mo[i] as usize..mo[i + 1] as usize].to_vec(),
                topo_next: states[i + 1].clone(),
                reward: reward[i],
            }
        })
        .collect();
    Ok(EpisodeRecord {
        scene: entry.scene.clone(),
        pose_randomization: entry.pose_randomization,
        source: entry.source,
        seed: entry.seed,
        initial: states[0].clone(),
        tuples,
        complete: entry.complete,
        error: entry.error.clone(),
    })
}

pub fn write_dataset(dir: &Path, records: &[EpisodeRecord], config: serde_json::Value) -> Result<Manifest, DatagenError> {
    std::fs::create_dir_all(dir)?;
    let mut episodes = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let file = format!("episode_{i:05}.tcut");
        let bytes = episode_blob(r).to_bytes();
        std::fs::write(dir.join(&file), &bytes)?;
        episodes.push(EpisodeEntry {
            file,
            sha256: hex::encode(Sha256::digest(&bytes)),
            seed: r.seed,
            source: r.source,
            complete: r.complete,
            error: r.error.clone(),
            tuples: r.tuples.len(),
            scene: r.scene.clone(),
            pose_randomization: r.pose_randomization,
        });
    }
    let manifest = Manifest { schema_version: SCHEMA_VERSION, episodes, config };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<EpisodeRecord>), DatagenError> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DatagenError::Version(manifest.schema_version));
    }
    let mut records = Vec::with_capacity(manifest.episodes.len());
    for e in &manifest.episodes {
        let bytes = std::fs::read(dir.join(&e.file))?;
        if hex::encode(Sha256::digest(&bytes)) != e.sha256 {
            return Err(DatagenError::Checksum(e.file.clone()));
        }
        records.push(episode_from_blob(&Blob::from_bytes(&bytes)?, e)?);
    }
    Ok((manifest, records))
}

/// Batch of randomized episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub scene: SceneConfig,
    pub ranges: PoseRanges,
    pub source: EpisodeSource,
    pub episodes: usize,
    pub max_cuts: usize,
    pub root_seed: u64,
    /// Extra object geometries; episode `i` uses `objects[i % len]` when
    /// non-empty, the scene object otherwise.
    pub objects: Vec<ObjectSpec>,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            ranges: PoseRanges::default(),
            source: EpisodeSource::Slices { thickness: 0.04 },
            episodes: 1,
            max_cuts: 5,
            root_seed: 0,
            objects: Vec::new(),
        }
    }
}

/// Runs every episode of a batch in parallel; episode `i` uses
/// `episode_seed(root_seed, i)` for its pose draw and goal.
pub fn run_batch(cfg: &DatagenConfig) -> Result<Vec<EpisodeRecord>, DatagenError> {
    (0..cfg.episodes)
        .into_par_iter()
        .map(|i| {
            let seed = episode_seed(cfg.root_seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = if cfg.objects.is_empty() { &cfg.scene.object } else { &cfg.objects[i % cfg.objects.len()] };
            let (object, pose) = randomize_pose(base, &cfg.ranges, &cfg.scene.sim, &mut rng)?;
            let scene = SceneConfig { object, ..cfg.scene.clone() };
            run_episode_posed(&scene, pose, &cfg.source, cfg.max_cuts, seed)
        })
        .collect()
}

/// Summary statistics of a dataset, for logs.
pub fn dataset_summary(records: &[EpisodeRecord]) -> BTreeMap<&'static str, f64> {
    let tuples: usize = records.iter().map(|r| r.tuples.len()).sum();
    let mean_reward = records.iter().flat_map(|r| r.tuples.iter().map(|t| t.reward as f64)).sum::<f64>() / tuples.max(1) as f64;
    BTreeMap::from([
        ("episodes", records.len() as f64),
        ("tuples", tuples as f64),
        ("incomplete", records.iter().filter(|r| !r.complete).count() as f64),
        ("mean_reward", mean_reward),
    ])
}
