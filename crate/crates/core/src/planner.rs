//! Model predictive path integral control over knife twist sequences.
//!
//! Each iteration perturbs the mean sequence with Gaussian noise, scores
//! every perturbed sequence with a rollout model, and moves the mean by the
//! softmax-weighted average perturbation. Actions are per-frame increments:
//! three translations and three rotations.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::SMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{twist_command, CutSession};
use crate::spectral::{evaluate_clouds, evaluate_fragments, SpectralConfig};
use crate::Vec3;

pub type Action = [f64; 6];
pub type Matrix6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("no viable sample")]
    NoViableSample,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MPPIConfig {
    pub horizon: usize,
    pub samples: usize,
    /// Diagonal of the per-action noise covariance.
    pub noise_var: Action,
    pub lambda: f64,
    pub iters: usize,
    /// Quadratic action penalty `a^T R a` per step.
    pub control_penalty: Matrix6,
    /// Per-component magnitude clamp on actions.
    pub action_limit: Action,
    /// Replace the first perturbation with zero so the current mean is
    /// always among the scored samples.
    pub include_nominal: bool,
}

impl Default for MPPIConfig {
    fn default() -> Self {
        let (t, r) = (0.01f64.powi(2), 0.02f64.powi(2));
        Self {
            horizon: 40,
            samples: 64,
            noise_var: [t, t, t, r, r, r],
            lambda: 0.1,
            iters: 8,
            control_penalty: Matrix6::identity(),
            action_limit: [0.01, 0.01, 0.01, 0.05, 0.05, 0.05],
            include_nominal: true,
        }
    }
}

impl MPPIConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let psd = self.control_penalty.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12)
            && (self.control_penalty - self.control_penalty.transpose()).amax() <= 1e-12;
        if self.horizon < 1 || self.samples < 2 || self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(PlanError::InvalidConfig("need horizon >= 1, samples >= 2, lambda > 0".into()));
        }
        if !self.noise_var.iter().all(|v| *v >= 0.0) || !self.action_limit.iter().all(|v| *v > 0.0) || !psd {
            return Err(PlanError::InvalidConfig("noise must be non-negative, limits positive, penalty PSD".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub actions: Vec<Action>,
}

impl ActionSequence {
    pub fn zeros(h: usize) -> Self {
        Self { actions: vec![[0.0; 6]; h] }
    }

    pub fn clamped(mut self, limit: &Action) -> Self {
        for a in &mut self.actions {
            for (v, l) in a.iter_mut().zip(limit) {
                *v = v.clamp(-l, *l);
            }
        }
        self
    }
}

/// Scores an action sequence from a fixed start state.
pub trait RolloutModel: Sync {
    /// Reward `R_total` after executing `actions`; `Err` marks a failed rollout.
    fn reward(&self, actions: &[Action]) -> Result<f64, String>;
}

/// `K x H` independent Gaussian perturbations.
pub fn sample_perturbations<R: Rng + ?Sized>(cfg: &MPPIConfig, rng: &mut R) -> Vec<Vec<Action>> {
    let std = cfg.noise_var.map(f64::sqrt);
    (0..cfg.samples)
        .map(|_| {
            (0..cfg.horizon)
                .map(|_| {
                    let mut a = [0.0; 6];
                    for (v, s) in a.iter_mut().zip(&std) {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = z * s;
                    }
                    a
                })
                .collect()
        })
        .collect()
}

/// `sum_t a_t^T R a_t`.
pub fn control_cost(actions: &[Action], penalty: &Matrix6) -> f64 {
    actions
        .iter()
        .map(|a| {
            let v = nalgebra::SVector::<f64, 6>::from_column_slice(a);
            (v.transpose() * penalty * v)[(0, 0)]
        })
        .sum()
}

/// `J = -R_total + sum a^T R a`, or `+inf` when the rollout fails.
pub fn rollout_cost(model: &dyn RolloutModel, actions: &[Action], cfg: &MPPIConfig) -> f64 {
    match model.reward(actions) {
        Ok(r) if r.is_finite() => -r + control_cost(actions, &cfg.control_penalty),
        Ok(_) => f64::INFINITY,
        Err(e) => {
            log::debug!("rollout failed: {e}");
            f64::INFINITY
        }
    }
}

/// `exp(-(J_k - min J) / lambda)`, normalized; infinite costs get weight 0.
pub fn softmax_weights(costs: &[f64], lambda: f64) -> Result<Vec<f64>, PlanError> {
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(PlanError::NoViableSample);
    }
    let w: Vec<f64> = costs.iter().map(|&c| if c.is_finite() { (-(c - min) / lambda).exp() } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `U + sum_k w_k eps_k`.
pub fn mppi_update(u: &ActionSequence, eps: &[Vec<Action>], costs: &[f64], lambda: f64) -> Result<ActionSequence, PlanError> {
    if eps.len() != costs.len() || eps.iter().any(|e| e.len() != u.actions.len()) {
        return Err(PlanError::Shape(format!("{} perturbations, {} costs", eps.len(), costs.len())));
    }
    let w = softmax_weights(costs, lambda)?;
    let mut out = u.clone();
    for (k, e) in eps.iter().enumerate() {
        if w[k] == 0.0 {
            continue;
        }
        for (a, d) in out.actions.iter_mut().zip(e) {
            for c in 0..6 {
                a[c] += w[k] * d[c];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// Cost of the mean sequence after this iteration.
    pub mean_cost: f64,
    pub best_cost: f64,
    pub viable: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub next_action: Action,
    /// Optimized sequence before the shift.
    pub sequence: ActionSequence,
    /// Cost of the warm start followed by one entry per iteration.
    pub initial_cost: f64,
    pub iterations: Vec<IterationLog>,
}

/// Receding-horizon MPPI state: the warm-start sequence.
#[derive(Clone, Debug)]
pub struct Planner {
    pub config: MPPIConfig,
    pub u: ActionSequence,
}

impl Planner {
    pub fn new(config: MPPIConfig) -> Result<Self, PlanError> {
        config.validate()?;
        let u = ActionSequence::zeros(config.horizon);
        Ok(Self { config, u })
    }

    pub fn with_warm_start(config: MPPIConfig, u: ActionSequence) -> Result<Self, PlanError> {
        config.validate()?;
        if u.actions.len() != config.horizon {
            return Err(PlanError::Shape(format!("warm start of length {}", u.actions.len())));
        }
        Ok(Self { config, u })
    }

    /// Refines the sequence `iters` times, returns its first action and
    /// shifts the sequence left with a zero tail.
    pub fn plan<R: Rng + ?Sized>(&mut self, model: &dyn RolloutModel, rng: &mut R) -> Result<PlanOutput, PlanError> {
        let cfg = &self.config;
        let initial_cost = rollout_cost(model, &self.u.actions, cfg);
        let mut iterations = Vec::with_capacity(cfg.iters);
        for _ in 0..cfg.iters {
            let mut raw = sample_perturbations(cfg, rng);
            if cfg.include_nominal {
                raw[0].iter_mut().for_each(|a| *a = [0.0; 6]);
            }
            // Perturbations are measured after clamping so the update stays
            // inside the limits.
            let samples: Vec<ActionSequence> = raw
                .iter()
                .map(|e| {
                    let mut s = self.u.clone();
                    for (a, d) in s.actions.iter_mut().zip(e) {
                        for c in 0..6 {
                            a[c] += d[c];
                        }
                    }
                    s.clamped(&cfg.action_limit)
                })
                .collect();
            let eps: Vec<Vec<Action>> = samples
                .iter()
                .map(|s| s.actions.iter().zip(&self.u.actions).map(|(a, b)| std::array::from_fn(|c| a[c] - b[c])).collect())
                .collect();
            let costs: Vec<f64> = samples.par_iter().map(|s| rollout_cost(model, &s.actions, cfg)).collect();
            self.u = mppi_update(&self.u, &eps, &costs, cfg.lambda)?.clamped(&cfg.action_limit);
            iterations.push(IterationLog {
                mean_cost: rollout_cost(model, &self.u.actions, cfg),
                best_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
                viable: costs.iter().filter(|c| c.is_finite()).count(),
            });
        }
        let sequence = self.u.clone();
        let next_action = self.u.actions[0];
        self.u.actions.remove(0);
        self.u.actions.push([0.0; 6]);
        Ok(PlanOutput { next_action, sequence, initial_cost, iterations })
    }
}

/// Rollouts on a clone of a cutting session: execute the actions as twists,
/// finish the cut and score the resulting fragments.
pub struct SessionRollout<'a> {
    pub session: &'a CutSession,
    pub goal: &'a [Vec3],
}

impl RolloutModel for SessionRollout<'_> {
    fn reward(&self, actions: &[Action]) -> Result<f64, String> {
        let mut s = self.session.clone();
        let dt = s.config.sim.frame_dt();
        for a in actions {
            s.step(&twist_command(&a.map(|v| (v / dt) as f32))).map_err(|e| e.to_string())?;
        }
        if s.sim.particles.damaged_count() > self.session.sim.particles.damaged_count() {
            s.finish_cut().map_err(|e| e.to_string())?;
        }
        evaluate_fragments(&s.topo, self.goal, &s.config.spectral).map(|e| e.r_total).map_err(|e| e.to_string())
    }
}

/// One-dimensional cut-position benchmark. A lattice box spans
/// `[0, length]` along `x`; a cut at `x` keeps the layers at or below `x`,
/// and the fragment is scored against the fragment of the optimal cut
/// `target`. The cut position is `start` plus the summed `x` increments of
/// the action sequence. Positions outside the box score as the nearest end,
/// minus a linear penalty on the excess.
pub struct CutSurrogate {
    pub layers: usize,
    pub cross: [usize; 2],
    pub length: f64,
    pub start: f64,
    pub target: f64,
    pub spectral: SpectralConfig,
    goal: Vec<Vec3>,
    cache: Mutex<HashMap<usize, f64>>,
}

impl CutSurrogate {
    pub fn new(layers: usize, cross: [usize; 2], length: f64, start: f64, target: f64, spectral: SpectralConfig) -> Self {
        let mut s = Self { layers, cross, length, start, target, spectral, goal: Vec::new(), cache: Mutex::new(HashMap::new()) };
        s.goal = s.fragment(s.layers_at(target));
        s
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.layers - 1) as f64
    }

    pub fn position(&self, actions: &[Action]) -> f64 {
        self.start + actions.iter().map(|a| a[0]).sum::<f64>()
    }

    /// Layers kept by a cut at `x`, at least one.
    pub fn layers_at(&self, x: f64) -> usize {
        ((x / self.spacing()).floor() as i64 + 1).clamp(1, self.layers as i64) as usize
    }

    fn fragment(&self, m: usize) -> Vec<Vec3> {
        let h = self.spacing();
        let mut out = Vec::with_capacity(m * self.cross[0] * self.cross[1]);
        for i in 0..m {
            for j in 0..self.cross[0] {
                for k in 0..self.cross[1] {
                    out.push(Vec3::new(i as f64, j as f64, k as f64) * h);
                }
            }
        }
        out
    }

    /// Reward of the fragment kept by `m` layers.
    pub fn layer_reward(&self, m: usize) -> Result<f64, String> {
        if let Some(r) = self.cache.lock().unwrap().get(&m) {
            return Ok(*r);
        }
        let e = evaluate_clouds(&[(0, self.fragment(m))], &self.goal, &self.spectral).map_err(|e| e.to_string())?;
        let r = e.r_total;
        self.cache.lock().unwrap().insert(m, r);
        Ok(r)
    }

    pub fn reward_at(&self, x: f64) -> Result<f64, String> {
        let inside = x.clamp(0.0, self.length);
        Ok(self.layer_reward(self.layers_at(inside))? - (x - inside).abs() / self.length)
    }
}

impl RolloutModel for CutSurrogate {
    fn reward(&self, actions: &[Action]) -> Result<f64, String> {
        self.reward_at(self.position(actions))
    }
}
