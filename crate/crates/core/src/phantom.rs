//! Synthetic CT of a puncture phantom: soft-tissue body, a bony column,
//! a kidney-like organ holding a cyst, and fiducial beads on the shell.

use crate::geom::{Rotation, Vec3};
use crate::reslice::Target;
use crate::volume::{Volume, VolumeError};

pub const AIR_HU: i16 = -1000;
pub const TISSUE_HU: i16 = 60;
pub const ORGAN_HU: i16 = 140;
pub const CYST_HU: i16 = 0;
pub const BONE_HU: i16 = 700;
pub const BEAD_HU: i16 = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    /// Semi-axes of the ellipsoidal body, mm.
    pub body: Vec3,
    pub organ_center: Vec3,
    pub organ_semi_axes: Vec3,
    pub cyst: Target,
    pub bead_radius_mm: f64,
}

impl Default for Phantom {
    fn default() -> Self {
        Phantom {
            dims: [96, 80, 64],
            spacing: Vec3::new(2.0, 2.0, 2.5),
            body: Vec3::new(85.0, 65.0, 72.0),
            organ_center: Vec3::new(30.0, 15.0, 0.0),
            organ_semi_axes: Vec3::new(22.0, 16.0, 32.0),
            cyst: Target {
                center: Vec3::new(32.0, 12.0, 6.0),
                radius: 11.0,
                label: "cyst".into(),
            },
            bead_radius_mm: 3.0,
        }
    }
}

fn inside_ellipsoid(p: Vec3, c: Vec3, semi: Vec3) -> bool {
    let d = p - c;
    (d.x / semi.x).powi(2) + (d.y / semi.y).powi(2) + (d.z / semi.z).powi(2) <= 1.0
}

impl Phantom {
    /// Volume origin so that the grid is centred on the world origin.
    pub fn origin(&self) -> Vec3 {
        let half = |n: usize, s: f64| -((n - 1) as f64) * s / 2.0;
        Vec3::new(
            half(self.dims[0], self.spacing.x),
            half(self.dims[1], self.spacing.y),
            half(self.dims[2], self.spacing.z),
        )
    }

    /// Eight beads on the body shell, four above and four below the
    /// mid-plane, rotated against each other so no three are collinear.
    pub fn fiducials(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(8);
        for (ring, elevation) in [(0.0f64, 0.45f64), (45.0, -0.45)] {
            for q in 0..4 {
                let az = (ring + 90.0 * q as f64 + 10.0).to_radians();
                let (s, c) = (elevation.sin(), elevation.cos());
                out.push(Vec3::new(
                    self.body.x * c * az.cos(),
                    self.body.y * c * az.sin(),
                    self.body.z * s,
                ));
            }
        }
        out
    }

    pub fn hu_at(&self, p: Vec3, beads: &[Vec3]) -> i16 {
        if beads.iter().any(|b| b.distance(p) <= self.bead_radius_mm) {
            return BEAD_HU;
        }
        if !inside_ellipsoid(p, Vec3::ZERO, self.body) {
            return AIR_HU;
        }
        if p.distance(self.cyst.center) <= self.cyst.radius {
            return CYST_HU;
        }
        if inside_ellipsoid(p, self.organ_center, self.organ_semi_axes) {
            return ORGAN_HU;
        }
        // bony column along z, posterior
        let spine = Vec3::new(0.0, 0.62 * self.body.y, p.z);
        if p.distance(spine) <= 12.0 {
            return BONE_HU;
        }
        // gentle texture so flat tissue still shows slice motion
        let ripple = 8.0 * ((p.x / 9.0).sin() * (p.y / 11.0).cos() + (p.z / 13.0).sin());
        TISSUE_HU + ripple.round() as i16
    }

    pub fn volume(&self) -> Result<Volume, VolumeError> {
        let beads = self.fiducials();
        let origin = self.origin();
        let sp = self.spacing;
        Volume::from_fn(self.dims, sp, origin, Rotation::IDENTITY, |i, j, k| {
            let p = origin + Vec3::new(i as f64 * sp.x, j as f64 * sp.y, k as f64 * sp.z);
            self.hu_at(p, &beads)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::principal_extents;

    #[test]
    fn structures_where_expected() {
        let ph = Phantom::default();
        let v = ph.volume().unwrap();
        assert_eq!(v.sample_trilinear(ph.cyst.center).round() as i16, CYST_HU);
        assert_eq!(v.sample_trilinear(Vec3::new(0.0, 0.0, 76.0)), f64::from(AIR_HU));
        for f in ph.fiducials() {
            assert!(v.sample_trilinear(f) > 1000.0, "bead at {f:?}");
        }
        // centred grid
        let c = v.voxel_center(0, 0, 0) + v.voxel_center(95, 79, 63);
        assert!(c.norm() < 1e-9);
    }

    #[test]
    fn fiducials_spread_in_3d() {
        let e = principal_extents(&Phantom::default().fiducials());
        assert!(e.iter().all(|&x| x > 10.0), "{e:?}");
    }
}
