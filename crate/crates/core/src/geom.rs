//! 3D vectors, rotations and rigid transforms.
//!
//! Patient/image frame is LPS: +x patient left, +y posterior, +z superior.
//! The anatomical plane normals below are the only place that convention is
//! written down; every other module refers to them by name.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A point or direction in millimetres. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const EX: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const EY: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const EZ: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12 && n.is_finite()).then(|| self / n)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Angle between two non-zero vectors, in radians.
    pub fn angle_to(self, o: Vec3) -> f64 {
        // atan2 form stays accurate near 0 and pi
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Anatomical plane normals in the patient frame.
pub mod anatomy {
    use super::Vec3;

    pub const TRANSVERSE_NORMAL: Vec3 = Vec3::EZ;
    pub const SAGITTAL_NORMAL: Vec3 = Vec3::EX;
    pub const CORONAL_NORMAL: Vec3 = Vec3::EY;
}

/// Proper rotation stored as a row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = GeomError;
    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, GeomError> {
        Rotation::from_matrix(m)
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        r.m
    }
}

/// Tolerance used when accepting externally supplied rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Accepts a matrix that is orthonormal with determinant +1 (within
    /// [`ORTHONORMAL_TOL`]).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GeomError> {
        let r = Rotation { m };
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidArgument("rotation has non-finite entries".into()));
        }
        let err = r.orthonormality_error();
        if err > ORTHONORMAL_TOL {
            return Err(GeomError::InvalidArgument(format!(
                "rotation is not orthonormal (max |R·Rᵀ − I| = {err:e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeomError::InvalidArgument(format!(
                "rotation determinant is {} (expected +1)",
                r.determinant()
            )));
        }
        Ok(r)
    }

    /// Builds from a matrix the caller guarantees is a proper rotation.
    pub(crate) fn from_matrix_unchecked(m: [[f64; 3]; 3]) -> Self {
        Rotation { m }
    }

    /// Rotation from a unit quaternion `(w, x, y, z)`; the input is normalized.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 1e-12 && n.is_finite()) {
            return Err(GeomError::InvalidArgument("zero quaternion".into()));
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Ok(Rotation::from_matrix_unchecked([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]))
    }

    /// Rotation taking unit vector `from` onto unit vector `to` along the
    /// shortest arc. Antiparallel inputs rotate by 180° about an arbitrary
    /// perpendicular.
    pub fn between(from: Vec3, to: Vec3) -> Rotation {
        let c = from.dot(to);
        let axis = from.cross(to);
        match axis.try_normalize() {
            Some(a) => rotation_about_axis_rad(a, axis.norm().atan2(c)),
            None if c > 0.0 => Rotation::IDENTITY,
            None => rotation_about_axis_rad(any_perpendicular(from), std::f64::consts::PI),
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Rotation { m: out }
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `R·Rᵀ − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let rrt = self.compose(&self.transpose());
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let ideal = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((rrt.m[i][j] - ideal).abs());
            }
        }
        worst
    }

    /// Largest absolute entry difference to `other`.
    pub fn max_abs_diff(&self, other: &Rotation) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.m;
        let c = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

fn rotation_about_axis_rad(a: Vec3, theta: f64) -> Rotation {
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    let (x, y, z) = (a.x, a.y, a.z);
    Rotation::from_matrix_unchecked([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])
}

/// Rodrigues rotation by `theta_deg` degrees about the unit vector `axis`
/// (right-hand rule).
pub fn rotation_about_axis(axis: Vec3, theta_deg: f64) -> Result<Rotation, GeomError> {
    if !axis.is_finite() || (axis.norm() - 1.0).abs() > 1e-6 {
        return Err(GeomError::InvalidArgument(format!(
            "rotation axis must be a unit vector (|axis| = {})",
            axis.norm()
        )));
    }
    if !theta_deg.is_finite() {
        return Err(GeomError::InvalidArgument("rotation angle is not finite".into()));
    }
    Ok(rotation_about_axis_rad(axis, theta_deg.to_radians()))
}

/// Some unit vector perpendicular to `v` (deterministic).
pub fn any_perpendicular(v: Vec3) -> Vec3 {
    let helper = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vec3::EX
    } else if v.y.abs() <= v.z.abs() {
        Vec3::EY
    } else {
        Vec3::EZ
    };
    v.cross(helper).try_normalize().unwrap_or(Vec3::EX)
}

/// `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        RigidTransform::new(Rotation::IDENTITY, t)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// Rotates a direction; translation does not apply.
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.apply(self.translation),
        }
    }

    /// Row-major 3×4 `[R | t]`.
    pub fn to_rows(&self) -> [[f64; 4]; 3] {
        let m = self.rotation.matrix();
        let t = self.translation.to_array();
        std::array::from_fn(|i| [m[i][0], m[i][1], m[i][2], t[i]])
    }
}

pub fn apply(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.apply(p)
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}
