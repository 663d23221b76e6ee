//! Simulated localizer: scripted needle trajectories and the
//! tracker → reference → image pose chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{any_perpendicular, rotation_about_axis, RigidTransform, Rotation, Vec3};
use crate::reslice::ToolPose;

pub const DEFAULT_SIGMA_POS_MM: f64 = 0.15;
pub const DEFAULT_SIGMA_AXIS_DEG: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("{0} body not visible to the localizer")]
    NotVisible(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub tip: Vec3,
    pub axis: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    #[serde(default = "default_sigma_pos")]
    pub sigma_pos_mm: f64,
    #[serde(default = "default_sigma_axis")]
    pub sigma_axis_deg: f64,
}

fn default_sigma_pos() -> f64 {
    DEFAULT_SIGMA_POS_MM
}

fn default_sigma_axis() -> f64 {
    DEFAULT_SIGMA_AXIS_DEG
}

impl Default for Noise {
    fn default() -> Self {
        Noise {
            sigma_pos_mm: DEFAULT_SIGMA_POS_MM,
            sigma_axis_deg: DEFAULT_SIGMA_AXIS_DEG,
        }
    }
}

impl Noise {
    pub const OFF: Noise = Noise {
        sigma_pos_mm: 0.0,
        sigma_axis_deg: 0.0,
    };

    fn is_off(&self) -> bool {
        self.sigma_pos_mm == 0.0 && self.sigma_axis_deg == 0.0
    }
}

/// Keyframed needle motion in image space with seeded measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
}

impl Trajectory {
    /// Validates keyframe ordering and normalizes keyframe axes.
    pub fn new(keyframes: Vec<Keyframe>, noise: Noise, seed: u64) -> Result<Self, TrackingError> {
        let mut traj = Trajectory { keyframes, noise, seed };
        traj.normalize()?;
        Ok(traj)
    }

    pub fn normalize(&mut self) -> Result<(), TrackingError> {
        if self.keyframes.is_empty() {
            return Err(TrackingError::InvalidTrajectory(
                "at least one keyframe is required".into(),
            ));
        }
        for (i, k) in self.keyframes.iter_mut().enumerate() {
            if !k.t.is_finite() || !k.tip.is_finite() {
                return Err(TrackingError::InvalidTrajectory(format!("keyframe {i} is not finite")));
            }
            k.axis = k
                .axis
                .try_normalize()
                .ok_or_else(|| TrackingError::InvalidTrajectory(format!("keyframe {i} has a zero axis")))?;
        }
        if let Some(i) = self.keyframes.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(TrackingError::InvalidTrajectory(format!(
                "keyframe times must strictly increase (keyframe {} at t={} follows t={})",
                i + 1,
                self.keyframes[i + 1].t,
                self.keyframes[i].t
            )));
        }
        let n = self.noise;
        if !(n.sigma_pos_mm >= 0.0 && n.sigma_axis_deg >= 0.0) {
            return Err(TrackingError::InvalidTrajectory(
                "noise sigmas must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Time of the last keyframe.
    pub fn end_time(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.t)
    }

    /// Noise-free pose on the interpolated path.
    pub fn ideal_pose_at(&self, t: f64) -> ToolPose {
        let kf = &self.keyframes;
        let first = kf[0];
        let last = kf[kf.len() - 1];
        if t <= first.t {
            return ToolPose {
                tip: first.tip,
                axis: first.axis,
            };
        }
        if t >= last.t {
            return ToolPose {
                tip: last.tip,
                axis: last.axis,
            };
        }
        let i = kf.partition_point(|k| k.t <= t) - 1;
        let (a, b) = (kf[i], kf[i + 1]);
        let s = (t - a.t) / (b.t - a.t);
        ToolPose {
            tip: a.tip + (b.tip - a.tip) * s,
            axis: slerp(a.axis, b.axis, s),
        }
    }
}

/// Shortest-arc spherical interpolation between unit vectors, renormalized.
pub fn slerp(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    let cos = a.dot(b).clamp(-1.0, 1.0);
    let omega = a.angle_to(b);
    let out = if omega < 1e-9 {
        a + (b - a) * s
    } else if std::f64::consts::PI - omega < 1e-9 {
        // antipodal: go through a fixed perpendicular
        let mid = any_perpendicular(a);
        let phi = s * std::f64::consts::PI;
        a * phi.cos() + mid * phi.sin()
    } else {
        let sin = (1.0 - cos * cos).sqrt();
        a * (((1.0 - s) * omega).sin() / sin) + b * ((s * omega).sin() / sin)
    };
    out.try_normalize().unwrap_or(a)
}

fn noise_rng(seed: u64, t: f64) -> ChaCha8Rng {
    // splitmix64 of the time bits, folded into the seed
    let mut z = t.to_bits().wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(seed ^ z)
}

/// Tool pose at time `t`: interpolated path plus seeded noise. Pure in
/// `(traj, t)`.
pub fn pose_at(traj: &Trajectory, t: f64) -> ToolPose {
    let ideal = traj.ideal_pose_at(t);
    if traj.noise.is_off() {
        return ideal;
    }
    let mut rng = noise_rng(traj.seed, t);
    let mut gauss = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("sigma is positive").sample(&mut rng)
        } else {
            0.0
        }
    };
    let jitter = Vec3::new(
        gauss(traj.noise.sigma_pos_mm),
        gauss(traj.noise.sigma_pos_mm),
        gauss(traj.noise.sigma_pos_mm),
    );
    let tilt_deg = gauss(traj.noise.sigma_axis_deg);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let e1 = any_perpendicular(ideal.axis);
    let e2 = ideal.axis.cross(e1);
    let about = e1 * phi.cos() + e2 * phi.sin();
    let axis = rotation_about_axis(about.try_normalize().unwrap_or(e1), tilt_deg)
        .map(|r| r.apply(ideal.axis))
        .unwrap_or(ideal.axis);
    ToolPose {
        tip: ideal.tip + jitter,
        axis: axis.try_normalize().unwrap_or(ideal.axis),
    }
}

/// Needle tip offset and axis expressed in the needle marker body frame.
/// The tip sits at `translation`; the axis is `rotation · ez`.
pub type ToolCalibration = RigidTransform;

/// One localizer measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub tool_in_tracker: RigidTransform,
    pub reference_in_tracker: RigidTransform,
    pub tool_visible: bool,
    pub reference_visible: bool,
}

/// Image-space tool pose from a tracker sample via dynamic referencing:
/// `image ← registration ← reference⁻¹ ← tool ← calibration`.
pub fn tool_pose_in_image(
    sample: &PoseSample,
    registration: &RigidTransform,
    tool_calibration: &ToolCalibration,
) -> Result<ToolPose, TrackingError> {
    if !sample.tool_visible {
        return Err(TrackingError::NotVisible("tool"));
    }
    if !sample.reference_visible {
        return Err(TrackingError::NotVisible("reference"));
    }
    let image_from_body = registration
        .compose(&sample.reference_in_tracker.inverse())
        .compose(&sample.tool_in_tracker);
    let tip = image_from_body.apply(tool_calibration.translation);
    let axis = image_from_body.apply_vector(tool_calibration.rotation.apply(Vec3::EZ));
    Ok(ToolPose {
        tip,
        axis: axis.try_normalize().unwrap_or(Vec3::EZ),
    })
}

/// Inverse of [`tool_pose_in_image`]: the tracker measurement that would
/// produce `pose`, given where the reference body sits.
pub fn synthesize_sample(
    t: f64,
    pose: &ToolPose,
    registration: &RigidTransform,
    tool_calibration: &ToolCalibration,
    reference_in_tracker: &RigidTransform,
) -> PoseSample {
    let body_axis = tool_calibration.rotation.apply(Vec3::EZ);
    let rot: Rotation = Rotation::between(body_axis, pose.axis);
    let image_from_body = RigidTransform::new(rot, pose.tip - rot.apply(tool_calibration.translation));
    let tool_in_tracker = reference_in_tracker
        .compose(&registration.inverse())
        .compose(&image_from_body);
    PoseSample {
        t,
        tool_in_tracker,
        reference_in_tracker: *reference_in_tracker,
        tool_visible: true,
        reference_visible: true,
    }
}
