//! Discrete-diffusion kernels over per-point cut masks, and the mapping
//! between knife poses, masks and cut planes.
//!
//! A mask labels each point of the conditioning cloud 0 or 1. The forward
//! process flips every bit independently with probability `beta_t` per step;
//! the reverse kernel samples keep-vs-flip from prior log-probabilities plus
//! a two-class score. No network lives here: [`ScoreFunction`] is the seam
//! and [`OracleScore`] realizes it from a known clean mask.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, frame_rotation, Aabb};
use crate::{Mat3, Pose, Vec3};

pub type ActionMask = Vec<bool>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("beta must lie strictly between 0 and 1, got {0}")]
    InvalidBeta(f64),
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("step {t} outside 1..={len}")]
    StepOutOfRange { t: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("degenerate cut set")]
    DegenerateCutSet,
    #[error("cut and uncut points are not linearly separable")]
    NotSeparable,
}

/// Per-step flip probabilities `beta_1..beta_T`, each in (0, 0.5].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self, PolicyError> {
        if betas.is_empty() {
            return Err(PolicyError::InvalidSchedule("empty".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 0.5)) {
            return Err(PolicyError::InvalidSchedule(format!("beta {b} outside (0, 0.5]")));
        }
        Ok(Self { betas })
    }

    /// `beta_t = t / (2T)`.
    pub fn linear(steps: usize) -> Result<Self, PolicyError> {
        Self::new((1..=steps).map(|t| t as f64 / (2 * steps) as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> Result<f64, PolicyError> {
        self.check(t)?;
        Ok(self.betas[t - 1])
    }

    /// Marginal flip probability after steps `1..=t`:
    /// `(1 - prod(1 - 2 beta_s)) / 2`.
    pub fn composed_flip(&self, t: usize) -> Result<f64, PolicyError> {
        self.check(t)?;
        Ok(0.5 * (1.0 - self.betas[..t].iter().map(|b| 1.0 - 2.0 * b).product::<f64>()))
    }

    fn check(&self, t: usize) -> Result<(), PolicyError> {
        if t == 0 || t > self.betas.len() {
            return Err(PolicyError::StepOutOfRange { t, len: self.betas.len() });
        }
        Ok(())
    }
}

/// Labels points by the side of the blade mid-plane they fall on: 1 where
/// `n . (x - c) >= 0` with `n` the blade face normal (local `x`) and `c` the
/// blade center. Points on the plane count as cut.
pub fn action_to_mask(points: &[Vec3], knife_pose: &Pose) -> ActionMask {
    let n = knife_pose.rotation * Vec3::x();
    points.iter().map(|p| n.dot(&(p - knife_pose.position)) >= 0.0).collect()
}

/// Applies steps `1..=t` one after another, each flipping every bit with
/// probability `beta_s`.
pub fn forward_noise<R: Rng + ?Sized>(
    mask: &[bool],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<ActionMask, PolicyError> {
    schedule.check(t)?;
    let mut out = mask.to_vec();
    for &b in &schedule.betas[..t] {
        for bit in &mut out {
            if rng.random_bool(b) {
                *bit = !*bit;
            }
        }
    }
    Ok(out)
}

/// One flip per bit with the composed marginal of steps `1..=t`.
pub fn forward_noise_marginal<R: Rng + ?Sized>(
    mask: &[bool],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<ActionMask, PolicyError> {
    let p = schedule.composed_flip(t)?;
    Ok(mask.iter().map(|&bit| bit ^ rng.random_bool(p)).collect())
}

/// `(delta(noisy == clean) - (1 - beta)) / (beta (1 - beta))` per point:
/// `1 / (1 - beta)` where the bits agree, `-1 / beta` where they differ.
pub fn true_score(noisy: &[bool], clean: &[bool], beta: f64) -> Result<Vec<f64>, PolicyError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(PolicyError::InvalidBeta(beta));
    }
    if noisy.len() != clean.len() {
        return Err(PolicyError::Length(noisy.len(), clean.len()));
    }
    let denom = beta * (1.0 - beta);
    Ok(noisy.iter().zip(clean).map(|(a, b)| (f64::from(u8::from(a == b)) - (1.0 - beta)) / denom).collect())
}

/// Probability of flipping a bit under `softmax(log(1 - beta), log(beta)) + score`,
/// with `score = [keep, flip]`.
pub fn flip_probability(beta: f64, score: [f64; 2]) -> f64 {
    let keep = (1.0 - beta).ln() + score[0];
    let flip = beta.ln() + score[1];
    let m = keep.max(flip);
    let (ek, ef) = ((keep - m).exp(), (flip - m).exp());
    ef / (ek + ef)
}

/// One reverse step: every bit independently keeps or flips.
pub fn reverse_step<R: Rng + ?Sized>(
    noisy: &[bool],
    t: usize,
    score: &[[f64; 2]],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<ActionMask, PolicyError> {
    let beta = schedule.beta(t)?;
    if score.len() != noisy.len() {
        return Err(PolicyError::Length(score.len(), noisy.len()));
    }
    Ok(noisy.iter().zip(score).map(|(&bit, s)| bit ^ rng.random_bool(flip_probability(beta, *s))).collect())
}

/// Opaque per-state and goal embeddings handed through to the score model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub z_state: Vec<f32>,
    pub z_goal: Vec<f32>,
}

/// Two-class `[keep, flip]` score per point for a noisy mask at step `t`.
pub trait ScoreFunction: Sync {
    fn score(&self, noisy: &[bool], t: usize, beta: f64, cond: &Conditioning) -> Vec<[f64; 2]>;
}

/// Zero score everywhere: the reverse chain reduces to the prior flips.
pub struct ZeroScore;

impl ScoreFunction for ZeroScore {
    fn score(&self, noisy: &[bool], _t: usize, _beta: f64, _cond: &Conditioning) -> Vec<[f64; 2]> {
        vec![[0.0, 0.0]; noisy.len()]
    }
}

/// Score derived from a known clean mask: the true score of the current bit
/// for keep, and of the complemented bit for flip.
pub struct OracleScore {
    pub clean: ActionMask,
}

impl ScoreFunction for OracleScore {
    fn score(&self, noisy: &[bool], _t: usize, beta: f64, _cond: &Conditioning) -> Vec<[f64; 2]> {
        let (agree, differ) = (1.0 / (1.0 - beta), -1.0 / beta);
        noisy
            .iter()
            .zip(&self.clean)
            .map(|(a, b)| if a == b { [agree, differ] } else { [differ, agree] })
            .collect()
    }
}

/// Full reverse chain from a uniform mask, `t = T..1`.
pub fn sample_mask<R: Rng + ?Sized>(
    score_fn: &dyn ScoreFunction,
    n_points: usize,
    schedule: &NoiseSchedule,
    cond: &Conditioning,
    rng: &mut R,
) -> Result<ActionMask, PolicyError> {
    if schedule.is_empty() {
        return Err(PolicyError::InvalidSchedule("empty".into()));
    }
    let mut mask: ActionMask = (0..n_points).map(|_| rng.random_bool(0.5)).collect();
    for t in (1..=schedule.len()).rev() {
        let s = score_fn.score(&mask, t, schedule.betas[t - 1], cond);
        mask = reverse_step(&mask, t, &s, schedule, rng)?;
    }
    Ok(mask)
}

/// Mean squared difference between a predicted and the true score.
pub fn dse_loss(score_pred: &[f64], noisy: &[bool], clean: &[bool], beta: f64) -> Result<f64, PolicyError> {
    let truth = true_score(noisy, clean, beta)?;
    if score_pred.len() != truth.len() {
        return Err(PolicyError::Length(score_pred.len(), truth.len()));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok(score_pred.iter().zip(&truth).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / truth.len() as f64)
}

/// Plane `n . x + d = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub n: Vec3,
    pub d: f64,
}

impl Plane {
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.n.dot(x) + self.d
    }

    /// Flip so the largest-magnitude normal component is positive (first
    /// index on ties).
    pub fn canonical(self) -> Self {
        let mut k = 0;
        for i in 1..3 {
            if self.n[i].abs() > self.n[k].abs() {
                k = i;
            }
        }
        if self.n[k] < 0.0 {
            Self { n: -self.n, d: -self.d }
        } else {
            self
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Total least squares through the cut-labeled points.
    #[default]
    Tls,
    /// Maximum-margin plane between cut and uncut points.
    Separator,
}

pub fn fit_cut_plane(points: &[Vec3], mask: &[bool]) -> Result<Plane, PolicyError> {
    fit_cut_plane_with(points, mask, FitMode::Tls)
}

pub fn fit_cut_plane_with(points: &[Vec3], mask: &[bool], mode: FitMode) -> Result<Plane, PolicyError> {
    if points.len() != mask.len() {
        return Err(PolicyError::Length(points.len(), mask.len()));
    }
    let plane = match mode {
        FitMode::Tls => {
            let cut: Vec<Vec3> = points.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
            tls_plane(&cut)?
        }
        FitMode::Separator => max_margin_plane(points, mask)?,
    };
    Ok(plane.canonical())
}

fn tls_plane(points: &[Vec3]) -> Result<Plane, PolicyError> {
    if points.len() < 3 {
        return Err(PolicyError::DegenerateCutSet);
    }
    let c = centroid(points);
    let mut s = Mat3::zeros();
    for p in points {
        let q = p - c;
        s += q * q.transpose();
    }
    let eig = SymmetricEigen::new(s);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, top) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if top.is_nan() || top <= 0.0 || mid <= 1e-12 * top {
        return Err(PolicyError::DegenerateCutSet);
    }
    let n = eig.eigenvectors.column(order[0]).normalize();
    Ok(Plane { n, d: -n.dot(&c) })
}

/// Hard-margin separator by an active set: solve exactly on a small working
/// set, add the worst violator, repeat. In 3-D the optimum is fixed by at
/// most four support points, so each working-set solve enumerates subsets of
/// size two to four and keeps the feasible one of least norm.
fn max_margin_plane(points: &[Vec3], mask: &[bool]) -> Result<Plane, PolicyError> {
    let pos: Vec<usize> = (0..points.len()).filter(|&i| mask[i]).collect();
    let neg: Vec<usize> = (0..points.len()).filter(|&i| !mask[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(PolicyError::DegenerateCutSet);
    }
    // Center and scale for conditioning.
    let c = centroid(points);
    let scale = points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let x: Vec<Vec3> = points.iter().map(|p| (p - c) / scale).collect();
    let y = |i: usize| if mask[i] { 1.0 } else { -1.0 };

    let mut best = (f64::INFINITY, 0, 0);
    for &i in &pos {
        for &j in &neg {
            let d = (x[i] - x[j]).norm_squared();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    if best.0 == 0.0 {
        return Err(PolicyError::NotSeparable);
    }
    let mut work = vec![best.1, best.2];
    loop {
        let (w, b) = solve_working_set(&x, &work, &y).ok_or(PolicyError::NotSeparable)?;
        let (worst, margin) = (0..x.len())
            .map(|i| (i, y(i) * (w.dot(&x[i]) + b)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        if margin >= 1.0 - 1e-9 {
            let norm = w.norm();
            let n = w / norm;
            // Undo the normalization: n.(p - c)/scale + b/norm = 0.
            return Ok(Plane { n, d: b / norm * scale - n.dot(&c) });
        }
        if work.contains(&worst) || work.len() > 64 {
            return Err(PolicyError::NotSeparable);
        }
        work.push(worst);
    }
}

fn solve_working_set(x: &[Vec3], work: &[usize], y: &dyn Fn(usize) -> f64) -> Option<(Vec3, f64)> {
    let mut best: Option<(f64, Vec3, f64)> = None;
    let m = work.len();
    let mut subset = Vec::with_capacity(4);
    for size in 2..=m.min(4) {
        for_each_subset(m, size, &mut subset, &mut |s: &[usize]| {
            let ids: Vec<usize> = s.iter().map(|&k| work[k]).collect();
            if ids.iter().all(|&i| y(i) > 0.0) || ids.iter().all(|&i| y(i) < 0.0) {
                return;
            }
            let Some((w, b)) = equality_candidate(x, &ids, y) else { return };
            let norm2 = w.norm_squared();
            if best.as_ref().is_some_and(|(n, _, _)| *n <= norm2) {
                return;
            }
            if work.iter().all(|&i| y(i) * (w.dot(&x[i]) + b) >= 1.0 - 1e-9) {
                best = Some((norm2, w, b));
            }
        });
    }
    best.map(|(_, w, b)| (w, b))
}

/// Least-norm `w` with `w . x_i + b = y_i` on the subset: `w = sum mu_j x_j`,
/// `sum mu_j = 0`.
fn equality_candidate(x: &[Vec3], ids: &[usize], y: &dyn Fn(usize) -> f64) -> Option<(Vec3, f64)> {
    let m = ids.len();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (r, &i) in ids.iter().enumerate() {
        for (c, &j) in ids.iter().enumerate() {
            a[(r, c)] = x[i].dot(&x[j]);
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
        rhs[r] = y(i);
    }
    let sol = a.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let w = ids.iter().enumerate().fold(Vec3::zeros(), |acc, (r, &i)| acc + x[i] * sol[r]);
    // Reject solutions of a singular system that do not satisfy it.
    let ok = ids.iter().all(|&i| (w.dot(&x[i]) + sol[m] - y(i)).abs() < 1e-9);
    ok.then_some((w, sol[m]))
}

fn for_each_subset(n: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if buf.len() == k {
            f(buf);
            return;
        }
        for i in start..n {
            buf.push(i);
            rec(i + 1, n, k, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    rec(0, n, k, buf, f);
}

/// Knife pose whose blade mid-plane is `plane`: the blade normal is `n`, the
/// edge runs horizontally, and the blade sits `clearance` above the top of
/// `bounds`, centered over the bounds' center projected onto the plane.
pub fn plane_to_knife_pose(plane: &Plane, bounds: &Aabb, knife_half_extents: &Vec3, clearance: f64) -> Pose {
    let n = plane.n.normalize();
    let mut up = Vec3::y() - n * n.y;
    if up.norm() < 1e-9 {
        // Horizontal plane: the blade lies flat; pick world x as its spine.
        up = Vec3::x() - n * n.x;
    }
    let up = up.normalize();
    let c = bounds.center();
    let p0 = c - n * plane.signed_distance(&c) / plane.n.norm();
    let s = if up.y > 1e-9 { (bounds.max.y + clearance - p0.y) / up.y + knife_half_extents.y } else { 0.0 };
    Pose::new(p0 + up * s, frame_rotation(&n, &up))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_checks() {
        assert!(NoiseSchedule::new(vec![0.1, 0.6]).is_err());
        assert!(NoiseSchedule::new(vec![]).is_err());
        let s = NoiseSchedule::linear(4).unwrap();
        assert_eq!(s.betas(), &[0.125, 0.25, 0.375, 0.5]);
        assert_eq!(s.composed_flip(4).unwrap(), 0.5);
        assert!(s.beta(0).is_err() && s.beta(5).is_err());
    }

    #[test]
    fn score_values() {
        let s = true_score(&[true, false], &[true, true], 0.5).unwrap();
        assert_eq!(s, vec![2.0, -2.0]);
        let s = true_score(&[true, false], &[true, true], 0.25).unwrap();
        assert!((s[0] - 4.0 / 3.0).abs() < 1e-15 && (s[1] + 4.0).abs() < 1e-15);
        assert!(true_score(&[true], &[true], 0.0).is_err());
        assert!(true_score(&[true], &[true], 1.0).is_err());
    }

    #[test]
    fn zero_score_flips_with_prior() {
        assert!((flip_probability(0.3, [0.0, 0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn plane_on_axis() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(1.0, 0.0, 0.5),
            Vec3::new(0.0, 1.0, 0.5),
            Vec3::new(1.0, 1.0, 0.5),
        ];
        let p = fit_cut_plane(&pts, &[true; 4]).unwrap();
        assert!((p.n - Vec3::z()).norm() < 1e-12 && (p.d + 0.5).abs() < 1e-12);
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(fit_cut_plane(&line, &[true; 5]), Err(PolicyError::DegenerateCutSet));
    }
}
