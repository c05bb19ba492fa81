use rayon::prelude::*;

use super::constitutive::{kirchhoff_fixed_corotated, kirchhoff_pressure, regularize_inverted, von_mises_return_map};
use super::material::damage_rule;
use super::{ContactMode, KnifeState, Particle, ParticleSet, SimConfig, SimError};
use crate::{Mat3, Vec3};

/// Below this many particles the parallel paths are not worth the fork.
const PAR_MIN: usize = 2048;

/// Background grid of `(res + 1)^3` nodes. After [`grid_update`] the momentum
/// array holds node velocities.
#[derive(Clone, Debug)]
pub struct Grid {
    pub res: usize,
    pub dx: f64,
    pub inv_dx: f64,
    pub origin: Vec3,
    pub node_mass: Vec<f64>,
    pub node_momentum: Vec<Vec3>,
    /// Inclusive node-index box touched by the last P2G.
    pub active: Option<([usize; 3], [usize; 3])>,
}

impl Grid {
    pub fn new(res: usize, origin: Vec3, size: f64) -> Self {
        let n = (res + 1).pow(3);
        Self {
            res,
            dx: size / res as f64,
            inv_dx: res as f64 / size,
            origin,
            node_mass: vec![0.0; n],
            node_momentum: vec![Vec3::zeros(); n],
            active: None,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.res + 1;
        (i * n + j) * n + k
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.dx
    }

    pub fn clear(&mut self) {
        if let Some((lo, hi)) = self.active.take() {
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    let row = self.index(i, j, 0);
                    self.node_mass[row + lo[2]..=row + hi[2]].fill(0.0);
                    self.node_momentum[row + lo[2]..=row + hi[2]].fill(Vec3::zeros());
                }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.fold_active(0.0, |acc, idx| acc + self.node_mass[idx])
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.fold_active(Vec3::zeros(), |acc, idx| acc + self.node_momentum[idx])
    }

    /// `sum_i m_i v_i` once momenta have been turned into velocities.
    pub fn velocity_momentum(&self) -> Vec3 {
        self.fold_active(Vec3::zeros(), |acc, idx| acc + self.node_momentum[idx] * self.node_mass[idx])
    }

    fn fold_active<T>(&self, init: T, mut f: impl FnMut(T, usize) -> T) -> T {
        let mut acc = init;
        if let Some((lo, hi)) = self.active {
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        acc = f(acc, self.index(i, j, k));
                    }
                }
            }
        }
        acc
    }
}

/// Quadratic B-spline weights for fractional offset `fx` in `[0.5, 1.5)`.
/// Returned as `w[node offset][axis]`.
#[inline]
pub fn bspline_weights(fx: &Vec3) -> [Vec3; 3] {
    [
        (Vec3::repeat(1.5) - fx).map(|t| 0.5 * t * t),
        (fx - Vec3::repeat(1.0)).map(|t| 0.75 - t * t),
        (fx - Vec3::repeat(0.5)).map(|t| 0.5 * t * t),
    ]
}

/// Per-particle scatter payload.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Contribution {
    base: [usize; 3],
    fx: Vec3,
    mass: f64,
    mv: Vec3,
    affine: Mat3,
}

fn locate(grid: &Grid, idx: usize, x: &Vec3) -> Result<([usize; 3], Vec3), SimError> {
    let xg = (x - grid.origin) * grid.inv_dx;
    let b = xg.map(|c| (c - 0.5).floor());
    if !b.iter().all(|&c| c >= 0.0 && c + 2.0 <= grid.res as f64) {
        return Err(SimError::OutsideGrid { index: idx, position: [x.x, x.y, x.z] });
    }
    Ok(([b.x as usize, b.y as usize, b.z as usize], xg - b))
}

fn contribution(grid: &Grid, idx: usize, p: &Particle, ps: &ParticleSet, dt: f64, eta: f64) -> Result<Contribution, SimError> {
    let (base, fx) = locate(grid, idx, &p.x)?;
    let mat = &ps.materials[p.material as usize];
    let tau = if p.damaged && mat.damaged_shear > 0.0 {
        kirchhoff_fixed_corotated(&p.f, mat.mu * mat.damaged_shear, mat.lambda)
    } else if p.damaged {
        kirchhoff_pressure(p.j(), mat.lambda)
    } else {
        kirchhoff_fixed_corotated(&p.f, mat.mu, mat.lambda)
    };
    let tau = if eta > 0.0 { tau + (p.c + p.c.transpose()) * (eta * p.j()) } else { tau };
    let affine = p.c * p.mass - tau * (dt * 4.0 * grid.inv_dx * grid.inv_dx * p.volume0);
    Ok(Contribution { base, fx, mass: p.mass, mv: p.v * p.mass, affine })
}

/// Conservation residuals of one transfer.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct P2gStats {
    pub mass_rel_err: f64,
    pub momentum_rel_err: f64,
}

pub(crate) fn prepare(grid: &Grid, ps: &ParticleSet, dt: f64, eta: f64, out: &mut Vec<Contribution>) -> Result<(), SimError> {
    out.clear();
    let parts = &ps.particles;
    let res: Result<Vec<_>, _> = if parts.len() >= PAR_MIN && rayon::current_num_threads() > 1 {
        parts.par_iter().enumerate().map(|(i, p)| contribution(grid, i, p, ps, dt, eta)).collect()
    } else {
        parts.iter().enumerate().map(|(i, p)| contribution(grid, i, p, ps, dt, eta)).collect()
    };
    *out = res?;
    Ok(())
}

/// Scatter in particle-index order, so every node accumulates its
/// contributions in the same sequence whatever the thread count.
pub(crate) fn scatter(grid: &mut Grid, contribs: &[Contribution]) {
    grid.clear();
    if contribs.is_empty() {
        return;
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for c in contribs {
        for d in 0..3 {
            lo[d] = lo[d].min(c.base[d]);
            hi[d] = hi[d].max(c.base[d] + 2);
        }
    }
    grid.active = Some((lo, hi));
    let dx = grid.dx;
    for c in contribs {
        let w = bspline_weights(&c.fx);
        for i in 0..3 {
            for j in 0..3 {
                let row = grid.index(c.base[0] + i, c.base[1] + j, c.base[2]);
                for k in 0..3 {
                    let wt = w[i].x * w[j].y * w[k].z;
                    let dpos = (Vec3::new(i as f64, j as f64, k as f64) - c.fx) * dx;
                    grid.node_mass[row + k] += wt * c.mass;
                    grid.node_momentum[row + k] += (c.mv + c.affine * dpos) * wt;
                }
            }
        }
    }
}

/// Particle to grid transfer with the fused stress term (plus Kelvin-Voigt
/// viscosity `eta`). Clears the grid first.
pub fn p2g(ps: &ParticleSet, grid: &mut Grid, dt: f64, eta: f64) -> Result<P2gStats, SimError> {
    let mut contribs = Vec::new();
    prepare(grid, ps, dt, eta, &mut contribs)?;
    scatter(grid, &contribs);
    Ok(p2g_stats(grid, &contribs))
}

pub(crate) fn p2g_stats(grid: &Grid, contribs: &[Contribution]) -> P2gStats {
    let mut m = 0.0;
    let mut mv = Vec3::zeros();
    let mut scale = 0.0;
    for c in contribs {
        m += c.mass;
        mv += c.mv;
        scale += c.mv.norm() + c.affine.norm() * grid.dx;
    }
    let gm = grid.total_mass();
    let gmv = grid.total_momentum();
    P2gStats {
        mass_rel_err: if m > 0.0 { (gm - m).abs() / m } else { 0.0 },
        momentum_rel_err: if scale > 0.0 { (gmv - mv).norm() / scale } else { (gmv - mv).norm() },
    }
}

/// Turn node momenta into velocities, apply gravity, knife contact and walls.
pub fn grid_update(grid: &mut Grid, dt: f64, gravity: &Vec3, knife: Option<&KnifeState>, config: &SimConfig) {
    let Some((lo, hi)) = grid.active else { return };
    let bound = config.boundary_cells;
    let res = grid.res;
    let knife_box = knife.map(|k| k.aabb().expanded(grid.dx));
    let n = res + 1;
    let (dx, origin) = (grid.dx, grid.origin);
    let decay = 1.0 / (1.0 + config.damping * dt);
    let mass = &grid.node_mass;
    let update = |i: usize, row: &mut [Vec3]| {
        for j in lo[1]..=hi[1] {
            for k in lo[2]..=hi[2] {
                let idx = (i * n + j) * n + k;
                let m = mass[idx];
                let slot = &mut row[j * n + k];
                if m <= 0.0 {
                    continue;
                }
                let mut v = (*slot / m + gravity * dt) * decay;
                if let (Some(kn), Some(bb)) = (knife, knife_box.as_ref()) {
                    let x = origin + Vec3::new(i as f64, j as f64, k as f64) * dx;
                    if bb.contains(&x) && kn.sdf(&x) < 0.0 {
                        v = knife_contact(kn, &x, v, config.knife_contact);
                    }
                }
                *slot = wall_contact(v, [i, j, k], bound, res, config.floor_friction);
            }
        }
    };
    let slab = n * n;
    let layers = &mut grid.node_momentum[lo[0] * slab..(hi[0] + 1) * slab];
    if rayon::current_num_threads() > 1 {
        layers.par_chunks_mut(slab).enumerate().for_each(|(off, row)| update(lo[0] + off, row));
    } else {
        layers.chunks_mut(slab).enumerate().for_each(|(off, row)| update(lo[0] + off, row));
    }
}

/// Velocity of a node inside the blade. In slip mode the blade faces are
/// two-sided: the blade is thinner than a few cells, so a node inside it
/// cannot tell which side its material came from. The edge, spine and ends
/// only push.
pub fn knife_contact(knife: &KnifeState, x: &Vec3, v: Vec3, mode: ContactMode) -> Vec3 {
    let vk = knife.velocity_at(x);
    match mode {
        ContactMode::Sticky => vk,
        ContactMode::Slip => {
            let (n, face) = knife.face_normal(x);
            let mut rel = v - vk;
            let vn = rel.dot(&n);
            if face || vn < 0.0 {
                rel -= n * vn;
            }
            vk + rel
        }
    }
}

/// Domain walls: the inward normal component is removed and the tangential
/// part loses `friction * |v_n|` (Coulomb).
pub fn wall_contact(mut v: Vec3, idx: [usize; 3], bound: usize, res: usize, friction: f64) -> Vec3 {
    for d in 0..3 {
        let normal = if idx[d] < bound && v[d] < 0.0 {
            1.0
        } else if idx[d] + bound > res && v[d] > 0.0 {
            -1.0
        } else {
            continue;
        };
        let vn = v[d] * normal;
        v[d] = 0.0;
        let vt = v.norm();
        if vt > 0.0 {
            v *= (1.0 - friction * vn.abs() / vt).max(0.0);
        }
    }
    v
}

fn gather(grid: &Grid, p: &mut Particle, dt: f64) {
    let xg = (p.x - grid.origin) * grid.inv_dx;
    let b = xg.map(|c| (c - 0.5).floor());
    let fx = xg - b;
    let base = [b.x as usize, b.y as usize, b.z as usize];
    let w = bspline_weights(&fx);
    let mut v = Vec3::zeros();
    let mut bm = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let row = grid.index(base[0] + i, base[1] + j, base[2]);
            for k in 0..3 {
                let wt = w[i].x * w[j].y * w[k].z;
                let dpos = (Vec3::new(i as f64, j as f64, k as f64) - fx) * grid.dx;
                let wv = grid.node_momentum[row + k] * wt;
                v += wv;
                bm += wv * dpos.transpose();
            }
        }
    }
    p.v = v;
    p.c = bm * (4.0 * grid.inv_dx * grid.inv_dx);
    let lo = grid.origin + Vec3::repeat(grid.dx);
    let hi = grid.origin + Vec3::repeat(grid.dx * (grid.res as f64 - 1.0));
    p.x = (p.x + v * dt).sup(&lo).inf(&hi);
}

/// Grid to particle transfer: velocity, affine matrix and advection.
/// Fails if a particle would cross more than one cell per substep.
pub fn g2p(grid: &Grid, ps: &mut ParticleSet, dt: f64) -> Result<(), SimError> {
    let parts = &mut ps.particles;
    if parts.len() >= PAR_MIN && rayon::current_num_threads() > 1 {
        parts.par_iter_mut().for_each(|p| gather(grid, p, dt));
    } else {
        parts.iter_mut().for_each(|p| gather(grid, p, dt));
    }
    let limit = grid.dx / dt;
    for (index, p) in parts.iter().enumerate() {
        let speed = p.v.norm();
        if !speed.is_finite() || speed >= limit {
            return Err(SimError::Cfl { index, speed, limit });
        }
    }
    Ok(())
}

fn deform(p: &mut Particle, ps_materials: &[super::MaterialParams], dt: f64) {
    let mat = &ps_materials[p.material as usize];
    let f = (Mat3::identity() + p.c * dt) * p.f;
    if p.damaged {
        p.f = if mat.damaged_shear > 0.0 {
            if f.determinant() > 0.0 { f } else { regularize_inverted(&f) }
        } else {
            // Without shear only the volume is kept.
            Mat3::identity() * f.determinant().max(1e-3).cbrt()
        };
        return;
    }
    let j = f.determinant();
    if j <= 0.0 {
        p.f = regularize_inverted(&f);
        p.damaged = true;
        return;
    }
    let (f, dep) = if mat.is_plastic() { von_mises_return_map(&f, p.yield_stress, mat.mu) } else { (f, 0.0) };
    p.f = f;
    p.plastic_strain += dep;
    let upd = damage_rule(mat, p.f.determinant(), p.yield_stress, dep, false);
    p.yield_stress = upd.yield_stress;
    p.damaged = upd.damaged;
}

/// `F <- (I + dt C) F`, then plastic projection and damage classification.
pub fn update_deformation(ps: &mut ParticleSet, dt: f64) {
    let mats = &ps.materials;
    let parts = &mut ps.particles;
    if parts.len() >= PAR_MIN && rayon::current_num_threads() > 1 {
        parts.par_iter_mut().for_each(|p| deform(p, mats, dt));
    } else {
        parts.iter_mut().for_each(|p| deform(p, mats, dt));
    }
}
