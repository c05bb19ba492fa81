//! Small geometric helpers shared across modules.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rigid transform, local-to-world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vec3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn new(position: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        Self { position, rotation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, rotation: UnitQuaternion::identity() }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p - self.position))
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// Integrate a world-frame twist over `dt`.
    pub fn integrate(&self, v: &Vec3, w: &Vec3, dt: f64) -> Pose {
        let dq = UnitQuaternion::from_scaled_axis(w * dt);
        Pose { position: self.position + v * dt, rotation: dq * self.rotation }
    }

    /// Same pose with every component rounded through `f32`.
    pub fn quantized(&self) -> Pose {
        let p = self.position.map(|c| c as f32 as f64);
        let q = self.rotation.into_inner();
        let q = nalgebra::Quaternion::new(q.w as f32 as f64, q.i as f32 as f64, q.j as f32 as f64, q.k as f32 as f64);
        Pose { position: p, rotation: UnitQuaternion::from_quaternion(q) }
    }
}

/// Rotation about world `y` (yaw).
pub fn yaw(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vec3::y_axis(), angle)
}

/// Rotation taking the local frame (x = `xa`, y = `ya`) to world; `ya` is
/// re-orthogonalised against `xa`.
pub fn frame_rotation(xa: &Vec3, ya: &Vec3) -> UnitQuaternion<f64> {
    let x = xa.normalize();
    let y = (ya - x * x.dot(ya)).normalize();
    let z = x.cross(&y);
    let m = Matrix3::from_columns(&[x, y, z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

pub fn axis_angle(axis: &Vec3, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in pts {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|k| self.min[k] > self.max[k])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn expanded(&self, r: f64) -> Self {
        Self { min: self.min.add_scalar(-r), max: self.max.add_scalar(r) }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= o.max[k] && o.min[k] <= self.max[k])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

pub fn centroid(pts: &[Vec3]) -> Vec3 {
    let mut c = Vec3::zeros();
    for p in pts {
        c += p;
    }
    c / pts.len().max(1) as f64
}

/// Signed distance to an origin-centred box.
pub fn box_sdf(p: &Vec3, half: &Vec3) -> f64 {
    let q = p.abs() - half;
    let outside = q.sup(&Vec3::zeros()).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

/// Outward unit gradient of [`box_sdf`].
pub fn box_sdf_normal(p: &Vec3, half: &Vec3) -> Vec3 {
    let q = p.abs() - half;
    let sgn = p.map(|c| if c < 0.0 { -1.0 } else { 1.0 });
    if q.max() > 0.0 {
        let o = q.sup(&Vec3::zeros());
        let n = o.component_mul(&sgn);
        let len = n.norm();
        if len > 0.0 {
            return n / len;
        }
    }
    let k = q.imax();
    let mut n = Vec3::zeros();
    n[k] = sgn[k];
    n
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_triangle(p, a, b, c)).norm()
}
