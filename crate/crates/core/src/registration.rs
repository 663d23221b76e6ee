//! Paired-point rigid registration (tracker space → image space).
//!
//! Closed-form least squares: centroid subtraction, cross-covariance, SVD,
//! and a determinant correction so the result is never a reflection.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{RigidTransform, Rotation, Vec3};

/// Minimum RMS extent (mm) of the fixed set along its second principal axis.
pub const MIN_PRINCIPAL_EXTENT_MM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
}

/// Corresponding fiducials. `fixed[i]` (image) pairs with `moving[i]` (tracker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPairs {
    pub fixed: Vec<Vec3>,
    pub moving: Vec<Vec3>,
}

impl PointPairs {
    pub fn new(fixed: Vec<Vec3>, moving: Vec<Vec3>) -> Result<Self, RegistrationError> {
        let pairs = PointPairs { fixed, moving };
        pairs.validate()?;
        Ok(pairs)
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.fixed.len() != self.moving.len() {
            return Err(RegistrationError::InvalidArgument(format!(
                "{} fixed points but {} moving points",
                self.fixed.len(),
                self.moving.len()
            )));
        }
        if self.fixed.len() < 3 {
            return Err(RegistrationError::InvalidArgument(format!(
                "at least 3 point pairs are required, got {}",
                self.fixed.len()
            )));
        }
        if let Some(p) = self.fixed.iter().chain(&self.moving).find(|p| !p.is_finite()) {
            return Err(RegistrationError::InvalidArgument(format!("non-finite point {p:?}")));
        }
        let extents = principal_extents(&self.fixed);
        if extents[1] <= MIN_PRINCIPAL_EXTENT_MM {
            return Err(RegistrationError::Degenerate(format!(
                "fixed points are collinear (principal extents {:.3e}, {:.3e}, {:.3e} mm)",
                extents[0], extents[1], extents[2]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps moving (tracker) coordinates onto fixed (image) coordinates.
    pub transform: RigidTransform,
    /// Root-mean-square fiducial residual in mm.
    pub fre_rms: f64,
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / points.len() as f64
}

/// RMS extents along the principal axes, largest first.
pub fn principal_extents(points: &[Vec3]) -> [f64; 3] {
    if points.is_empty() {
        return [0.0; 3];
    }
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for &p in points {
        let d = to_na(p - c);
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    [eig[0], eig[1], eig[2]]
}

/// Least-squares rigid transform minimizing Σ‖T(moving_i) − fixed_i‖².
pub fn register_paired_points(pairs: &PointPairs) -> Result<RegistrationResult, RegistrationError> {
    pairs.validate()?;
    let cf = centroid(&pairs.fixed);
    let cm = centroid(&pairs.moving);

    let mut h = Matrix3::zeros();
    for (&f, &m) in pairs.fixed.iter().zip(&pairs.moving) {
        h += to_na(m - cm) * to_na(f - cf).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(RegistrationError::Degenerate("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v * correction * u.transpose();

    let rotation = Rotation::from_matrix_unchecked(std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])));
    let translation = cf - rotation.apply(cm);
    let transform = RigidTransform::new(rotation, translation);
    Ok(RegistrationResult {
        transform,
        fre_rms: fre_rms(&transform, pairs),
    })
}

/// RMS of `‖T(moving_i) − fixed_i‖`.
pub fn fre_rms(t: &RigidTransform, pairs: &PointPairs) -> f64 {
    let sum: f64 = pairs
        .fixed
        .iter()
        .zip(&pairs.moving)
        .map(|(&f, &m)| (t.apply(m) - f).norm_squared())
        .sum();
    (sum / pairs.fixed.len() as f64).sqrt()
}

/// Parses a fiducial CSV: one `x,y,z` per line, `#` comments and blank lines
/// ignored.
pub fn parse_fiducials_csv(text: &str) -> Result<Vec<Vec3>, RegistrationError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| RegistrationError::InvalidArgument(format!("line {}: {e}", n + 1)))?;
        match vals.as_slice() {
            &[x, y, z] => out.push(Vec3::new(x, y, z)),
            _ => {
                return Err(RegistrationError::InvalidArgument(format!(
                    "line {}: expected 3 values, found {}",
                    n + 1,
                    vals.len()
                )))
            }
        }
    }
    Ok(out)
}
