//! Fixed-corotated elasticity and von Mises (Hencky) plasticity.

use nalgebra::Matrix3;

use super::{MaterialParams, SimError};
use crate::{Mat3, Vec3};

/// Rotation factor of the polar decomposition `F = R S` for `det F > 0`,
/// by scaled Newton iteration.
pub fn polar_rotation(f: &Mat3) -> Mat3 {
    let mut r = *f;
    for _ in 0..40 {
        let det = r.determinant();
        let Some(inv) = r.try_inverse() else { break };
        let g = det.abs().powf(-1.0 / 3.0);
        let next = (r * g + inv.transpose() / g) * 0.5;
        let diff = (next - r).abs().max();
        r = next;
        if diff < 1e-15 {
            break;
        }
    }
    r
}

/// Singular value decomposition with `U`, `V` proper rotations; the sign of a
/// reflection is carried by the last singular value.
pub fn svd_rv(f: &Mat3) -> (Mat3, Vec3, Mat3) {
    let svd = f.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut vt = svd.v_t.unwrap();
    let mut s = svd.singular_values;
    // Sort descending so the sign fix always lands on the smallest value.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u0 = u;
    let vt0 = vt;
    let s0 = s;
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u0.column(src));
        vt.set_row(dst, &vt0.row(src));
        s[dst] = s0[src];
    }
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        s[2] = -s[2];
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
        s[2] = -s[2];
    }
    (u, s, vt.transpose())
}

/// Kirchhoff stress `tau = P F^T` of the fixed-corotated model.
pub fn kirchhoff_fixed_corotated(f: &Mat3, mu: f64, lambda: f64) -> Mat3 {
    let j = f.determinant();
    let r = polar_rotation(f);
    (f - r) * f.transpose() * (2.0 * mu) + Mat3::identity() * (lambda * (j - 1.0) * j)
}

/// Kirchhoff stress of a damaged particle: pressure only.
pub fn kirchhoff_pressure(j: f64, lambda: f64) -> Mat3 {
    Mat3::identity() * (lambda * (j - 1.0) * j)
}

/// First Piola-Kirchhoff stress of the fixed-corotated model.
pub fn piola_fixed_corotated(f: &Mat3, mu: f64, lambda: f64) -> Mat3 {
    let j = f.determinant();
    let r = polar_rotation(f);
    let fit = f.try_inverse().unwrap_or_else(Mat3::zeros).transpose();
    (f - r) * (2.0 * mu) + fit * (lambda * (j - 1.0) * j)
}

/// Strain energy density of the fixed-corotated model.
pub fn energy_fixed_corotated(f: &Mat3, mu: f64, lambda: f64) -> f64 {
    let (_, s, _) = svd_rv(f);
    let j = s.x * s.y * s.z;
    mu * s.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() + 0.5 * lambda * (j - 1.0).powi(2)
}

/// Cauchy stress `sigma = P F^T / J` for an undamaged particle.
pub fn compute_stress(f: &Mat3, mat: &MaterialParams) -> Result<Mat3, SimError> {
    if !f.iter().all(|x| x.is_finite()) {
        return Err(SimError::NonFinite("deformation gradient".into()));
    }
    let j = f.determinant();
    if j <= 0.0 {
        return Err(SimError::NonFinite(format!("det(F) = {j}")));
    }
    Ok(kirchhoff_fixed_corotated(f, mat.mu, mat.lambda) / j)
}

/// Eigenvalues of a symmetric 3x3 matrix in closed form (trigonometric method).
pub fn sym_eigenvalues(a: &Mat3) -> Vec3 {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    if p1 == 0.0 {
        return Vec3::new(a[(0, 0)], a[(1, 1)], a[(2, 2)]);
    }
    let q = a.trace() / 3.0;
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (a - Mat3::identity() * q) / p;
    let r = (b.determinant() * 0.5).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    Vec3::new(e1, 3.0 * q - e1 - e3, e3)
}

fn dev_norm(eps: &Vec3) -> f64 {
    let m = eps.sum() / 3.0;
    eps.map(|e| e - m).norm()
}

/// Von Mises return map on the Hencky strain. Returns the projected `F` and
/// the plastic strain increment.
pub fn von_mises_return_map(f_trial: &Mat3, yield_stress: f64, mu: f64) -> (Mat3, f64) {
    let ys = yield_stress.max(0.0);
    // Cheap rejection from the eigenvalues of F^T F before paying for an SVD.
    let ev = sym_eigenvalues(&(f_trial.transpose() * f_trial));
    if ev.iter().all(|&e| e > 0.0) {
        let eps = ev.map(|e| 0.5 * e.ln());
        if dev_norm(&eps) - ys / (2.0 * mu) < -1e-9 {
            return (*f_trial, 0.0);
        }
    }
    let (u, s, v) = svd_rv(f_trial);
    let eps = s.map(|x| x.max(1e-12).ln());
    let mean = eps.sum() / 3.0;
    let dev = eps.map(|e| e - mean);
    let norm = dev.norm();
    let dg = norm - ys / (2.0 * mu);
    if dg <= 0.0 || norm == 0.0 {
        return (*f_trial, 0.0);
    }
    let eps_new = eps - dev * (dg / norm);
    let sig = Matrix3::from_diagonal(&eps_new.map(f64::exp));
    (u * sig * v.transpose(), dg)
}

/// Regularise a deformation gradient with `det F <= 0`: rotation-variant SVD
/// with singular values clamped to at least `1e-3`.
pub fn regularize_inverted(f: &Mat3) -> Mat3 {
    let (u, s, v) = svd_rv(f);
    let s = s.map(|x| x.abs().max(1e-3));
    u * Matrix3::from_diagonal(&s) * v.transpose()
}
