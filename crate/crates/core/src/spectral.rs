//! Spectral shape descriptors of point clouds and the reward built on them.
//!
//! A cloud is reduced to `num_point` samples by farthest point sampling,
//! connected into a symmetrized k-nearest-neighbour graph with Gaussian
//! weights, and described by the smallest eigenpairs of its combinatorial
//! Laplacian. Every step depends on pairwise distances only; near-ties in
//! distance are broken by index after quantization, so a rigidly moved
//! cloud produces the same graph.

use std::collections::HashMap;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{chamfer, emd, fps, hausdorff, tie_key, tie_quantum};
use crate::topology::TopologyState;
use crate::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("need more than {k} points for a {k}-nearest-neighbour graph, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("all retained edges have zero length (duplicate points)")]
    ZeroSigma,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("descriptors differ: {0}")]
    Mismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "sigma")]
pub enum SigmaMode {
    /// Mean length of the retained edges.
    MeanEdge,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// `alpha |dL|^2 + beta |A^T A - B^T B|^2`. The eigenvector term vanishes
    /// for orthonormal columns, so only eigenvalues discriminate.
    #[default]
    Literal,
    /// Replaces the eigenvector term by `|A A^T - B B^T|^2` over sample rows;
    /// needs equal sample counts.
    GramFull,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    #[default]
    InverseScaling,
    Piecewise,
}

/// Distance-to-reward mapping. `kappa` scales every fragment reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub variant: RewardVariant,
    pub kappa: f64,
    pub c: f64,
    pub gamma: f64,
    pub delta: f64,
    pub tau_thresh: f64,
    pub r_max: f64,
    /// Fragment reward counted as a successful piece. Defaults to half the
    /// reward of a perfect match.
    pub success_threshold: Option<f64>,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            variant: RewardVariant::InverseScaling,
            kappa: 1.0,
            c: 1.0,
            gamma: 1.0,
            delta: 2.0,
            tau_thresh: 0.5,
            r_max: 1.0,
            success_threshold: None,
        }
    }
}

impl RewardParams {
    pub fn piecewise() -> Self {
        Self { variant: RewardVariant::Piecewise, gamma: 0.5, ..Self::default() }
    }

    pub fn success_threshold(&self) -> f64 {
        self.success_threshold.unwrap_or_else(|| 0.5 * reward(0.0, self))
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.kappa > 0.0 && self.gamma > 0.0) {
            return Err(SpectralError::InvalidConfig("kappa and gamma must be positive".into()));
        }
        if self.variant == RewardVariant::Piecewise && !(self.delta > self.gamma && self.tau_thresh >= 0.0) {
            return Err(SpectralError::InvalidConfig("piecewise reward needs delta > gamma and tau >= 0".into()));
        }
        Ok(())
    }
}

/// Fragment reward for spectral distance `d`.
pub fn reward(d: f64, p: &RewardParams) -> f64 {
    match p.variant {
        RewardVariant::InverseScaling => p.kappa * (p.c - p.gamma * d).max(0.0),
        RewardVariant::Piecewise => {
            let r = if d <= p.tau_thresh {
                p.r_max - p.gamma * d
            } else {
                p.r_max - p.gamma * p.tau_thresh - p.delta * (d - p.tau_thresh)
            };
            p.kappa * r
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub num_point: usize,
    pub knn_k: usize,
    pub sigma_mode: SigmaMode,
    pub k_eig: usize,
    pub alpha_w: f64,
    pub beta_w: f64,
    pub distance_mode: DistanceMode,
    pub reward: RewardParams,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            num_point: 512,
            knn_k: 30,
            sigma_mode: SigmaMode::MeanEdge,
            k_eig: 32,
            alpha_w: 1.0,
            beta_w: 1.0,
            distance_mode: DistanceMode::Literal,
            reward: RewardParams::default(),
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.knn_k == 0 || self.knn_k >= self.num_point || self.k_eig == 0 || self.k_eig > self.num_point {
            return Err(SpectralError::InvalidConfig("need 0 < knn_k < num_point and 0 < k_eig <= num_point".into()));
        }
        if let SigmaMode::Fixed(s) = self.sigma_mode {
            if s.is_nan() || s <= 0.0 {
                return Err(SpectralError::InvalidConfig("fixed sigma must be positive".into()));
            }
        }
        self.reward.validate()
    }
}

/// Smallest Laplacian eigenpairs of a sampled cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDescriptor {
    pub eigenvalues: Vec<f64>,
    /// `n x k` with orthonormal columns, rows in sampling order.
    pub eigenvectors: DMatrix<f64>,
    /// Size of the cloud before sampling.
    pub source_size: usize,
    /// Connected components of the neighbour graph.
    pub components: usize,
}

impl SpectralDescriptor {
    pub fn samples(&self) -> usize {
        self.eigenvectors.nrows()
    }
}

/// Symmetrized kNN graph as a dense weight matrix. Edge `(i, j)` exists when
/// either endpoint is among the other's `k` nearest.
pub fn knn_graph(points: &[Vec3], k: usize, sigma: SigmaMode) -> Result<DMatrix<f64>, SpectralError> {
    let n = points.len();
    if n <= k {
        return Err(SpectralError::TooFewPoints { n, k });
    }
    let q = tie_quantum(points);
    let mut adj = vec![false; n * n];
    let mut keys: Vec<(u64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        keys.clear();
        keys.extend((0..n).filter(|&j| j != i).map(|j| (tie_key((points[i] - points[j]).norm_squared(), q), j)));
        if k < keys.len() {
            keys.select_nth_unstable(k - 1);
        }
        for &(_, j) in &keys[..k] {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
    }
    let sigma = match sigma {
        SigmaMode::Fixed(s) => s,
        SigmaMode::MeanEdge => {
            let (mut sum, mut count) = (0.0, 0usize);
            for i in 0..n {
                for j in i + 1..n {
                    if adj[i * n + j] {
                        sum += (points[i] - points[j]).norm();
                        count += 1;
                    }
                }
            }
            sum / count as f64
        }
    };
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(SpectralError::ZeroSigma);
    }
    let s2 = sigma * sigma;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if adj[i * n + j] {
                let v = (-(points[i] - points[j]).norm_squared() / s2).exp();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Ok(w)
}

/// `L = D - W`.
pub fn laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -w.clone();
    for i in 0..w.nrows() {
        l[(i, i)] = w.row(i).iter().sum::<f64>() - w[(i, i)];
    }
    l
}

fn graph_components(w: &DMatrix<f64>) -> usize {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && w[(i, j)] != 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// The `k` smallest eigenpairs of a symmetric matrix, ascending. Each
/// eigenvector's largest-magnitude entry is made positive (first such entry
/// on near-ties).
pub fn eig_smallest(l: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>), SpectralError> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(SpectralError::NotSymmetric);
    }
    let scale = l.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in i + 1..n {
            if (l[(i, j)] - l[(j, i)]).abs() > 1e-12 * scale {
                return Err(SpectralError::NotSymmetric);
            }
        }
    }
    let k = k.min(n);
    let eig = nalgebra::SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut vals = Vec::with_capacity(k);
    let mut vecs = DMatrix::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        vals.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx);
        let peak = v.amax();
        let pivot = v.iter().position(|x| x.abs() >= peak * (1.0 - 1e-9)).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        vecs.set_column(c, &(v * sign));
    }
    Ok((vals, vecs))
}

/// Descriptor of the cloud sampled down to `n` points (all points when the
/// cloud is smaller).
pub fn descriptor_at(points: &[Vec3], n: usize, cfg: &SpectralConfig) -> Result<SpectralDescriptor, SpectralError> {
    let idx = fps(points, n);
    let sample: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let w = knn_graph(&sample, cfg.knn_k, cfg.sigma_mode)?;
    let components = graph_components(&w);
    let (eigenvalues, eigenvectors) = eig_smallest(&laplacian(&w), cfg.k_eig.min(sample.len()))?;
    Ok(SpectralDescriptor { eigenvalues, eigenvectors, source_size: points.len(), components })
}

pub fn spectral_descriptor(points: &[Vec3], cfg: &SpectralConfig) -> Result<SpectralDescriptor, SpectralError> {
    descriptor_at(points, cfg.num_point, cfg)
}

pub fn spectral_distance(
    a: &SpectralDescriptor,
    b: &SpectralDescriptor,
    alpha_w: f64,
    beta_w: f64,
    mode: DistanceMode,
) -> Result<f64, SpectralError> {
    let k = a.eigenvalues.len();
    if b.eigenvalues.len() != k {
        return Err(SpectralError::Mismatch(format!("k_eig {} vs {}", k, b.eigenvalues.len())));
    }
    for d in [a, b] {
        if d.components != 1 {
            warn!("comparing a descriptor whose graph has {} components", d.components);
        }
    }
    let dl: f64 = a.eigenvalues.iter().zip(&b.eigenvalues).map(|(x, y)| (x - y).powi(2)).sum();
    let dv = match mode {
        DistanceMode::Literal => {
            let ga = a.eigenvectors.transpose() * &a.eigenvectors;
            let gb = b.eigenvectors.transpose() * &b.eigenvectors;
            (ga - gb).norm_squared()
        }
        DistanceMode::GramFull => {
            if a.samples() != b.samples() {
                return Err(SpectralError::Mismatch(format!("sample counts {} vs {}", a.samples(), b.samples())));
            }
            // |AA^T - BB^T|^2 = |A^T A|^2 + |B^T B|^2 - 2 |A^T B|^2
            let aa = (a.eigenvectors.transpose() * &a.eigenvectors).norm_squared();
            let bb = (b.eigenvectors.transpose() * &b.eigenvectors).norm_squared();
            let ab = (a.eigenvectors.transpose() * &b.eigenvectors).norm_squared();
            (aa + bb - 2.0 * ab).max(0.0)
        }
    };
    Ok(alpha_w * dl + beta_w * dv)
}

/// Goal descriptors keyed by sample count, so a fragment is always compared
/// with the goal sampled at the same density.
pub struct GoalDescriptors<'a> {
    goal: &'a [Vec3],
    cfg: &'a SpectralConfig,
    cache: HashMap<usize, SpectralDescriptor>,
}

impl<'a> GoalDescriptors<'a> {
    pub fn new(goal: &'a [Vec3], cfg: &'a SpectralConfig) -> Self {
        Self { goal, cfg, cache: HashMap::new() }
    }

    pub fn get(&mut self, n: usize) -> Result<&SpectralDescriptor, SpectralError> {
        let n = n.min(self.goal.len()).min(self.cfg.num_point);
        if !self.cache.contains_key(&n) {
            let d = descriptor_at(self.goal, n, self.cfg)?;
            self.cache.insert(n, d);
        }
        Ok(&self.cache[&n])
    }

    /// Spectral distance from `points` to the goal.
    pub fn distance(&mut self, points: &[Vec3]) -> Result<f64, SpectralError> {
        let n = points.len().min(self.goal.len()).min(self.cfg.num_point);
        let frag = descriptor_at(points, n, self.cfg)?;
        let cfg = self.cfg;
        let goal = self.get(n)?;
        spectral_distance(&frag, goal, cfg.alpha_w, cfg.beta_w, cfg.distance_mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentScore {
    pub cluster_id: u8,
    pub points: usize,
    /// `None` when the fragment is too small for the neighbour graph.
    pub d_spec: Option<f64>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fragments: Vec<FragmentScore>,
    #[serde(rename = "R_total")]
    pub r_total: f64,
    #[serde(rename = "N_C")]
    pub n_c: usize,
}

/// Scores every cluster of `topo` against the goal shape.
pub fn evaluate_fragments(topo: &TopologyState, goal: &[Vec3], cfg: &SpectralConfig) -> Result<Evaluation, SpectralError> {
    let clusters: Vec<(u8, Vec<Vec3>)> = topo.cluster_ids().into_iter().map(|c| (c, topo.cluster_points(c))).collect();
    evaluate_clouds(&clusters, goal, cfg)
}

/// [`evaluate_fragments`] over explicit `(id, points)` fragments.
pub fn evaluate_clouds(fragments: &[(u8, Vec<Vec3>)], goal: &[Vec3], cfg: &SpectralConfig) -> Result<Evaluation, SpectralError> {
    cfg.validate()?;
    if goal.len() <= cfg.knn_k {
        return Err(SpectralError::TooFewPoints { n: goal.len(), k: cfg.knn_k });
    }
    let mut sizes: Vec<usize> = fragments
        .iter()
        .filter(|(_, p)| p.len() > cfg.knn_k)
        .map(|(_, p)| p.len().min(goal.len()).min(cfg.num_point))
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let goals: HashMap<usize, SpectralDescriptor> = sizes
        .par_iter()
        .map(|&n| descriptor_at(goal, n, cfg).map(|d| (n, d)))
        .collect::<Result<_, _>>()?;
    let scored: Vec<FragmentScore> = fragments
        .par_iter()
        .map(|(id, pts)| {
            if pts.len() <= cfg.knn_k {
                warn!("fragment {id} has {} points, scored 0", pts.len());
                return Ok(FragmentScore { cluster_id: *id, points: pts.len(), d_spec: None, reward: 0.0 });
            }
            let n = pts.len().min(goal.len()).min(cfg.num_point);
            let frag = descriptor_at(pts, n, cfg)?;
            let d = spectral_distance(&frag, &goals[&n], cfg.alpha_w, cfg.beta_w, cfg.distance_mode)?;
            Ok(FragmentScore { cluster_id: *id, points: pts.len(), d_spec: Some(d), reward: reward(d, &cfg.reward) })
        })
        .collect::<Result<_, SpectralError>>()?;
    let r_total = scored.iter().map(|f| f.reward).sum();
    let threshold = cfg.reward.success_threshold();
    let n_c = scored.iter().filter(|f| f.d_spec.is_some() && f.reward >= threshold).count();
    Ok(Evaluation { fragments: scored, r_total, n_c })
}

/// Pairwise spectral distances between every row cloud and every column
/// cloud, each pair sampled at their common size.
pub fn loss_matrix(rows: &[Vec<Vec3>], cols: &[Vec<Vec3>], cfg: &SpectralConfig) -> Result<Vec<Vec<f64>>, SpectralError> {
    rows.par_iter()
        .map(|r| {
            cols.iter()
                .map(|c| {
                    let n = r.len().min(c.len()).min(cfg.num_point);
                    let a = descriptor_at(r, n, cfg)?;
                    let b = descriptor_at(c, n, cfg)?;
                    spectral_distance(&a, &b, cfg.alpha_w, cfg.beta_w, cfg.distance_mode)
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Slice,
    Stick,
    Dice,
}

impl Task {
    /// Human teleoperation reward used for normalization.
    pub fn human_baseline(self) -> f64 {
        match self {
            Task::Slice => 3.3,
            Task::Stick => 1.7,
            Task::Dice => 3.9,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "slice" => Ok(Task::Slice),
            "stick" => Ok(Task::Stick),
            "dice" => Ok(Task::Dice),
            _ => Err(format!("unknown task {s:?} (expected slice, stick or dice)")),
        }
    }
}

pub fn normalize_reward(r: f64, task: Task) -> f64 {
    r / task.human_baseline()
}

/// Alignment-free baselines: each fragment is compared with the goal after
/// moving both centroids to the origin, and the distance `d` becomes the
/// similarity `1 / (1 + d / l)` with `l` the goal's bounding-box diagonal.
/// Scores are summed over fragments like the spectral reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub chamfer: f64,
    pub emd: f64,
    pub hausdorff: f64,
}

pub fn metric_scores(fragments: &[Vec<Vec3>], goal: &[Vec3], num_point: usize) -> MetricScores {
    let center = |pts: &[Vec3]| {
        let c = crate::geometry::centroid(pts);
        pts.iter().map(|p| p - c).collect::<Vec<_>>()
    };
    let g = center(goal);
    let scale = crate::geometry::Aabb::from_points(&g).diagonal().max(f64::MIN_POSITIVE);
    let sim = |d: f64| 1.0 / (1.0 + d / scale);
    let mut out = MetricScores::default();
    for frag in fragments.iter().filter(|f| !f.is_empty()) {
        let f = center(frag);
        let n = f.len().min(g.len()).min(num_point);
        let fs: Vec<Vec3> = fps(&f, n).into_iter().map(|i| f[i]).collect();
        let gs: Vec<Vec3> = fps(&g, n).into_iter().map(|i| g[i]).collect();
        out.chamfer += sim(chamfer(&f, &g).sqrt());
        out.hausdorff += sim(hausdorff(&f, &g));
        out.emd += sim(emd(&fs, &gs).expect("equal sizes"));
    }
    out
}
