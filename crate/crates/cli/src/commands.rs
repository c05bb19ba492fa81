//! Batch subcommands. Each returns the JSON printed on stdout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use topocut_core::datagen::{
    dataset_summary, generate_goal, run_batch, run_episode, write_dataset, DatagenConfig, EpisodeSource, GoalKind, GoalSpec,
};
use topocut_core::mpm::KnifeCommand;
use topocut_core::planner::MPPIConfig;
use topocut_core::scene::{CutSession, SceneConfig};
use topocut_core::spectral::{evaluate_fragments, normalize_reward, SpectralConfig, Task};
use topocut_core::topology::TopologyState;
use topocut_core::Vec3;

/// Bad input: missing or malformed files and invalid configs. Exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_error(format!("cannot parse {}: {e}", path.display())))
}

pub fn load_scene(path: &Path) -> Result<SceneConfig> {
    let cfg: SceneConfig = load_json(path)?;
    cfg.validate().map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub frames: usize,
    pub out: PathBuf,
    /// World `x` of a vertical slice run during the frames.
    pub slice_x: Option<f64>,
    pub topology: Option<PathBuf>,
}

/// Headless run writing one `frame_NNNNN.tcut` particle snapshot per frame.
pub fn simulate(args: &SimulateArgs) -> Result<Value> {
    let cfg = load_scene(&args.config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut session = CutSession::new(cfg)?;
    let down = KnifeCommand::twist(Vec3::new(0.0, -session.config.cut.speed, 0.0), Vec3::zeros());
    let mut commands = Vec::with_capacity(args.frames);
    if let Some(x) = args.slice_x {
        commands.push(KnifeCommand::Teleport(session.slice_action(x).start));
    }
    let floor = session.config.sim.floor_height() - session.config.cut.depth_cells * session.config.sim.dx();
    for frame in 1..=args.frames {
        let cmd = match commands.pop() {
            Some(c) => c,
            None if args.slice_x.is_some() && session.sim.knife.aabb().min.y > floor => down,
            None => KnifeCommand::zero(),
        };
        session.step(&cmd)?;
        let path = args.out.join(format!("frame_{frame:05}.tcut"));
        session.sim.particles.to_blob().write(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut report = json!({
        "frames": args.frames,
        "particles": session.sim.particles.len(),
        "damaged": session.sim.particles.damaged_count(),
    });
    if let Some(path) = &args.topology {
        session.update_topology()?;
        fs::write(path, serde_json::to_string(&session.topo)?).with_context(|| format!("writing {}", path.display()))?;
        report["clusters"] = json!(session.topo.num_clusters());
    }
    Ok(report)
}

/// A goal given either as a shape spec or as explicit points.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GoalInput {
    Points { points: Vec<[f64; 3]> },
    Spec(GoalSpec),
}

pub struct EvaluateArgs {
    pub topo: PathBuf,
    pub goal: PathBuf,
    pub config: Option<PathBuf>,
    pub task: Option<Task>,
    pub seed: u64,
}

#[derive(Serialize)]
struct FragmentReport {
    cluster_id: u8,
    d_spec: Option<f64>,
    reward: f64,
}

fn task_of(kind: GoalKind) -> Task {
    match kind {
        GoalKind::Slice => Task::Slice,
        GoalKind::Stick => Task::Stick,
        GoalKind::Dice => Task::Dice,
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Value> {
    let topo: TopologyState = load_json(&args.topo)?;
    if topo.is_empty() {
        return Err(input_error(format!("{} has no points", args.topo.display())));
    }
    let spectral = match &args.config {
        Some(p) => load_json::<SpectralConfig>(p)?,
        None => SceneConfig::default().spectral,
    };
    spectral.validate().map_err(|e| input_error(e.to_string()))?;
    let (goal, kind) = match load_json::<GoalInput>(&args.goal)? {
        GoalInput::Points { points } => (points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect::<Vec<_>>(), None),
        GoalInput::Spec(spec) => {
            spec.validate().map_err(input_error)?;
            (generate_goal(&spec, &mut ChaCha8Rng::seed_from_u64(args.seed)), Some(spec.kind))
        }
    };
    let eval = evaluate_fragments(&topo, &goal, &spectral).map_err(|e| input_error(e.to_string()))?;
    let task = args.task.or(kind.map(task_of));
    let fragments: Vec<FragmentReport> =
        eval.fragments.iter().map(|f| FragmentReport { cluster_id: f.cluster_id, d_spec: f.d_spec, reward: f.reward }).collect();
    Ok(json!({
        "fragments": fragments,
        "R_total": eval.r_total,
        "N_C": eval.n_c,
        "R_hat": task.map(|t| normalize_reward(eval.r_total, t)),
        "task": task,
        "config": spectral,
    }))
}

/// One MPPI demonstration episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanJob {
    pub scene: SceneConfig,
    pub mppi: MPPIConfig,
    pub cuts: usize,
    pub thickness: f64,
    pub cut_frames: usize,
    pub stop_reward: Option<f64>,
}

impl Default for PlanJob {
    fn default() -> Self {
        Self { scene: SceneConfig::default(), mppi: MPPIConfig::default(), cuts: 5, thickness: 0.04, cut_frames: 40, stop_reward: None }
    }
}

pub fn plan(config: &Path, seed: u64, out: Option<&Path>) -> Result<Value> {
    let job: PlanJob = load_json(config)?;
    job.scene.validate().map_err(|e| input_error(e.to_string()))?;
    job.mppi.validate().map_err(|e| input_error(e.to_string()))?;
    let source = EpisodeSource::Mppi {
        config: job.mppi.clone(),
        thickness: job.thickness,
        cut_frames: job.cut_frames,
        stop_reward: job.stop_reward,
    };
    let rec = run_episode(&job.scene, &source, job.cuts, seed)?;
    if let Some(dir) = out {
        write_dataset(dir, std::slice::from_ref(&rec), serde_json::to_value(&job)?)?;
    }
    Ok(json!({
        "seed": seed,
        "cuts": rec.tuples.len(),
        "rewards": rec.tuples.iter().map(|t| t.reward).collect::<Vec<_>>(),
        "clusters": rec.cluster_counts(),
        "complete": rec.complete,
        "error": rec.error,
    }))
}

pub fn datagen(config: &Path, out: &Path, seed: Option<u64>, episodes: Option<usize>) -> Result<Value> {
    let mut cfg: DatagenConfig = load_json(config)?;
    if let Some(s) = seed {
        cfg.root_seed = s;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    cfg.scene.validate().map_err(|e| input_error(e.to_string()))?;
    let records = run_batch(&cfg)?;
    let manifest = write_dataset(out, &records, serde_json::to_value(&cfg)?)?;
    Ok(json!({ "summary": dataset_summary(&records), "episodes": manifest.episodes.len() }))
}
