//! Slice planes for each display representation and their rendering.
//!
//! Every plane is described by an origin (image center), an orthonormal
//! in-plane basis `u` (columns, left→right) and `v` (rows, top→bottom), and
//! `normal = u × v`. Pseudo planes always use `v = tool axis`, so the needle
//! is drawn vertically and advances down the image.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{anatomy, rotation_about_axis, Vec3};
use crate::volume::{window_to_gray, HuWindow, Volume};

pub const DEFAULT_FOV_MM: f64 = 200.0;
pub const DEFAULT_SPACING_MM: f64 = 1.0;

/// Projection of the reference normal onto the plane orthogonal to the axis
/// shorter than this is treated as degenerate (axis ∥ reference).
const DEGENERATE_PROJECTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResliceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Needle tip and insertion direction (entry → tip) in image space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolPose {
    pub tip: Vec3,
    pub axis: Vec3,
}

impl ToolPose {
    /// Validates that `axis` is unit length within 1e-6.
    pub fn new(tip: Vec3, axis: Vec3) -> Result<Self, ResliceError> {
        if !tip.is_finite() || !axis.is_finite() {
            return Err(ResliceError::InvalidArgument("tool pose is not finite".into()));
        }
        if (axis.norm() - 1.0).abs() > 1e-6 {
            return Err(ResliceError::InvalidArgument(format!(
                "tool axis must be unit length (|axis| = {})",
                axis.norm()
            )));
        }
        Ok(ToolPose { tip, axis })
    }

    /// Normalizes `axis` first.
    pub fn from_direction(tip: Vec3, direction: Vec3) -> Result<Self, ResliceError> {
        let axis = direction
            .try_normalize()
            .ok_or_else(|| ResliceError::InvalidArgument("tool axis has zero length".into()))?;
        ToolPose::new(tip, axis)
    }
}

/// A spherical target (the cyst).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec3,
    pub radius: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceKind {
    Transverse,
    Sagittal,
    Coronal,
    PseudoTransverse,
    PseudoSagittal,
    Adjustable,
}

impl SliceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKind::Transverse => "transverse",
            SliceKind::Sagittal => "sagittal",
            SliceKind::Coronal => "coronal",
            SliceKind::PseudoTransverse => "pseudo-transverse",
            SliceKind::PseudoSagittal => "pseudo-sagittal",
            SliceKind::Adjustable => "adjustable",
        }
    }
}

impl std::str::FromStr for SliceKind {
    type Err = ResliceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "transverse" => SliceKind::Transverse,
            "sagittal" => SliceKind::Sagittal,
            "coronal" => SliceKind::Coronal,
            "pseudo-transverse" => SliceKind::PseudoTransverse,
            "pseudo-sagittal" => SliceKind::PseudoSagittal,
            "adjustable" => SliceKind::Adjustable,
            other => return Err(ResliceError::InvalidArgument(format!("unknown plane `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePlane {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub normal: Vec3,
    pub width_mm: f64,
    pub height_mm: f64,
    pub spacing_mm: f64,
}

impl SlicePlane {
    fn from_basis(origin: Vec3, u: Vec3, v: Vec3, fov_mm: f64, spacing_mm: f64) -> SlicePlane {
        SlicePlane {
            origin,
            u,
            v,
            normal: u.cross(v),
            width_mm: fov_mm,
            height_mm: fov_mm,
            spacing_mm,
        }
    }

    pub fn width_px(&self) -> usize {
        (self.width_mm / self.spacing_mm).round().max(1.0) as usize
    }

    pub fn height_px(&self) -> usize {
        (self.height_mm / self.spacing_mm).round().max(1.0) as usize
    }

    /// World position sampled by pixel `(col, row)`; fractional pixels allowed.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> Vec3 {
        let cx = (self.width_px() as f64 - 1.0) / 2.0;
        let cy = (self.height_px() as f64 - 1.0) / 2.0;
        self.origin + self.u * ((col - cx) * self.spacing_mm) + self.v * ((row - cy) * self.spacing_mm)
    }

    /// Orthogonal projection of a world point into pixel coordinates `(col, row)`.
    pub fn world_to_pixel(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        let cx = (self.width_px() as f64 - 1.0) / 2.0;
        let cy = (self.height_px() as f64 - 1.0) / 2.0;
        (
            d.dot(self.u) / self.spacing_mm + cx,
            d.dot(self.v) / self.spacing_mm + cy,
        )
    }

    /// Signed distance of `p` from the plane along `normal`.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.normal)
    }
}

fn check_extent(fov_mm: f64, spacing_mm: f64) -> Result<(), ResliceError> {
    if !(fov_mm > 0.0 && fov_mm.is_finite() && spacing_mm > 0.0 && spacing_mm.is_finite()) {
        return Err(ResliceError::InvalidArgument(format!(
            "fov and spacing must be positive (fov {fov_mm}, spacing {spacing_mm})"
        )));
    }
    Ok(())
}

/// Transverse, sagittal and coronal planes through the tip.
pub fn ortho_planes(
    tip: Vec3,
    fov_mm: f64,
    spacing_mm: f64,
) -> Result<(SlicePlane, SlicePlane, SlicePlane), ResliceError> {
    check_extent(fov_mm, spacing_mm)?;
    let transverse = SlicePlane::from_basis(tip, Vec3::EX, Vec3::EY, fov_mm, spacing_mm);
    let sagittal = SlicePlane::from_basis(tip, -Vec3::EY, -Vec3::EZ, fov_mm, spacing_mm);
    let coronal = SlicePlane::from_basis(tip, Vec3::EX, -Vec3::EZ, fov_mm, spacing_mm);
    debug_assert_eq!(transverse.normal, anatomy::TRANSVERSE_NORMAL);
    debug_assert_eq!(sagittal.normal, anatomy::SAGITTAL_NORMAL);
    debug_assert_eq!(coronal.normal, anatomy::CORONAL_NORMAL);
    Ok((transverse, sagittal, coronal))
}

/// Normal of the plane containing `axis` that is closest to `reference`:
/// the component of `reference` orthogonal to the axis. Falls back to the
/// coronal normal when the axis is parallel to `reference`.
pub fn pseudo_normal(axis: Vec3, reference: Vec3) -> Vec3 {
    let project = |r: Vec3| r - axis * r.dot(axis);
    let n = project(reference);
    if n.norm() > DEGENERATE_PROJECTION {
        return n / n.norm();
    }
    project(anatomy::CORONAL_NORMAL)
        .try_normalize()
        .expect("axis cannot be parallel to two orthogonal references")
}

fn pseudo_plane(pose: &ToolPose, reference: Vec3, fov_mm: f64, spacing_mm: f64) -> Result<SlicePlane, ResliceError> {
    check_extent(fov_mm, spacing_mm)?;
    let n = pseudo_normal(pose.axis, reference);
    let v = pose.axis;
    let u = v.cross(n);
    Ok(SlicePlane {
        origin: pose.tip,
        u,
        v,
        normal: n,
        width_mm: fov_mm,
        height_mm: fov_mm,
        spacing_mm,
    })
}

/// Plane through the tool axis tilted least from the transverse plane.
pub fn pseudo_transverse_plane(pose: &ToolPose, fov_mm: f64, spacing_mm: f64) -> Result<SlicePlane, ResliceError> {
    pseudo_plane(pose, anatomy::TRANSVERSE_NORMAL, fov_mm, spacing_mm)
}

/// Plane through the tool axis tilted least from the sagittal plane.
pub fn pseudo_sagittal_plane(pose: &ToolPose, fov_mm: f64, spacing_mm: f64) -> Result<SlicePlane, ResliceError> {
    pseudo_plane(pose, anatomy::SAGITTAL_NORMAL, fov_mm, spacing_mm)
}

/// Pseudo-transverse plane rotated by `theta_deg` about the line through
/// `pivot` parallel to the tool axis. `theta_deg` is taken modulo 360 and a
/// zero angle returns the pseudo-transverse plane unchanged.
pub fn adjustable_pseudo_plane(
    pose: &ToolPose,
    pivot: Vec3,
    theta_deg: f64,
    fov_mm: f64,
    spacing_mm: f64,
) -> Result<SlicePlane, ResliceError> {
    if !theta_deg.is_finite() || !pivot.is_finite() {
        return Err(ResliceError::InvalidArgument("theta and pivot must be finite".into()));
    }
    let base = pseudo_transverse_plane(pose, fov_mm, spacing_mm)?;
    let theta = theta_deg.rem_euclid(360.0);
    if theta == 0.0 {
        return Ok(base);
    }
    let r = rotation_about_axis(pose.axis, theta).map_err(|e| ResliceError::InvalidArgument(e.to_string()))?;
    Ok(SlicePlane {
        origin: pivot + r.apply(base.origin - pivot),
        u: r.apply(base.u),
        v: base.v,
        normal: r.apply(base.normal),
        ..base
    })
}

/// Navigation data drawn over a slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Navigation<'a> {
    pub pose: Option<ToolPose>,
    pub target: Option<&'a Target>,
    pub marked: Option<Vec3>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_px: Option<[f64; 2]>,
    /// Needle shaft (entry side → tip), present only when the axis lies in the plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_segment_px: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_px: Option<[f64; 2]>,
    /// Radius of the target's cross-section in this plane (0 when missed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_radius_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marked_px: Option<[f64; 2]>,
    /// 3D tip-to-target-center distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_mm: Option<f64>,
}

/// Tolerance for deciding that the tool axis lies in a plane.
const IN_PLANE_TOL: f64 = 1e-6;

impl Overlay {
    pub fn compute(plane: &SlicePlane, nav: &Navigation<'_>) -> Overlay {
        let px = |p: Vec3| {
            let (c, r) = plane.world_to_pixel(p);
            [c, r]
        };
        let mut o = Overlay {
            marked_px: nav.marked.map(px),
            ..Overlay::default()
        };
        if let Some(pose) = nav.pose {
            o.tip_px = Some(px(pose.tip));
            let in_plane = pose.axis.dot(plane.normal).abs() < IN_PLANE_TOL
                && plane.signed_distance(pose.tip).abs() < IN_PLANE_TOL;
            if in_plane {
                let shaft = plane.width_mm.max(plane.height_mm) / 2.0;
                o.axis_segment_px = Some([px(pose.tip - pose.axis * shaft), px(pose.tip)]);
            }
        }
        if let Some(t) = nav.target {
            o.target_px = Some(px(t.center));
            let d = plane.signed_distance(t.center);
            let r = (t.radius * t.radius - d * d).max(0.0).sqrt();
            o.target_radius_px = Some(r / plane.spacing_mm);
            if let Some(pose) = nav.pose {
                o.distance_mm = Some(pose.tip.distance(t.center));
            }
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width_px: usize,
    pub height_px: usize,
    /// Row-major 8-bit grayscale.
    pub pixels: Vec<u8>,
    pub overlay: Overlay,
}

impl SliceImage {
    /// Binary PGM (P5, maxval 255).
    pub fn write_pgm(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width_px, self.height_px)?;
        w.write_all(&self.pixels)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 16);
        self.write_pgm(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

/// Interpolated HU values for every pixel of `plane`, row-major, before
/// windowing.
pub fn sample_plane(v: &Volume, plane: &SlicePlane) -> Vec<f64> {
    let (w, h) = (plane.width_px(), plane.height_px());
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            out.push(v.sample_trilinear(plane.pixel_to_world(col as f64, row as f64)));
        }
    }
    out
}

pub fn render_slice(v: &Volume, plane: &SlicePlane, window: HuWindow, nav: &Navigation<'_>) -> SliceImage {
    let pixels = sample_plane(v, plane)
        .into_iter()
        .map(|hu| window_to_gray(hu, window))
        .collect();
    SliceImage {
        width_px: plane.width_px(),
        height_px: plane.height_px(),
        pixels,
        overlay: Overlay::compute(plane, nav),
    }
}
