//! CT volume model, the MVOL v1 file pair, and world-space sampling.
//!
//! MVOL v1 is a text header plus a raw little-endian `i16` data file:
//!
//! ```text
//! MVOL 1
//! dims <nx> <ny> <nz>
//! spacing <sx> <sy> <sz>
//! origin <ox> <oy> <oz>
//! direction <9 reals, row-major>
//! data <relative-filename>
//! ```
//!
//! `origin` is the world position of the *center* of voxel (0,0,0). Voxels
//! are stored x-fastest, then y, then z.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rotation, Vec3};

/// Value returned for samples whose interpolation cell leaves the grid (air).
pub const PADDING_HU: f64 = -1024.0;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("cannot read {path}: {source}")]
    Missing {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header line {line} (`{field}`): {reason}")]
    MalformedHeader {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("data size mismatch in {path}: header dims need {expected} voxels ({expected_bytes} bytes), file has {actual_bytes} bytes")]
    DataSizeMismatch {
        path: PathBuf,
        expected: usize,
        expected_bytes: usize,
        actual_bytes: usize,
    },
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    direction: Rotation,
    voxels: Vec<i16>,
}

impl Volume {
    pub fn new(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        direction: Rotation,
        voxels: Vec<i16>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!("dims must be positive, got {dims:?}")));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| VolumeError::Invalid("dims overflow".into()))?;
        if voxels.len() != count {
            return Err(VolumeError::Invalid(format!(
                "{} voxels supplied for dims {dims:?} ({count} expected)",
                voxels.len()
            )));
        }
        if !(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0) || !spacing.is_finite() {
            return Err(VolumeError::Invalid(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if !origin.is_finite() {
            return Err(VolumeError::Invalid("origin is not finite".into()));
        }
        Ok(Volume {
            dims,
            spacing,
            origin,
            direction,
            voxels,
        })
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        direction: Rotation,
        mut f: impl FnMut(usize, usize, usize) -> i16,
    ) -> Result<Self, VolumeError> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    voxels.push(f(i, j, k));
                }
            }
        }
        Volume::new(dims, spacing, origin, direction, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Rotation {
        self.direction
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> i16 {
        self.voxels[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// World position of the center of voxel `(i, j, k)`.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let local = Vec3::new(
            i as f64 * self.spacing.x,
            j as f64 * self.spacing.y,
            k as f64 * self.spacing.z,
        );
        self.origin + self.direction.apply(local)
    }

    /// Continuous voxel coordinates of a world point.
    pub fn world_to_index(&self, p: Vec3) -> Vec3 {
        let local = self.direction.transpose().apply(p - self.origin);
        Vec3::new(
            local.x / self.spacing.x,
            local.y / self.spacing.y,
            local.z / self.spacing.z,
        )
    }

    /// Trilinear interpolation at a world point; [`PADDING_HU`] when the
    /// surrounding cell is not fully inside the grid.
    pub fn sample_trilinear(&self, p: Vec3) -> f64 {
        let c = self.world_to_index(p);
        let (Some((i0, i1, fx)), Some((j0, j1, fy)), Some((k0, k1, fz))) = (
            cell(c.x, self.dims[0]),
            cell(c.y, self.dims[1]),
            cell(c.z, self.dims[2]),
        ) else {
            return PADDING_HU;
        };
        let v = |i, j, k| f64::from(self.voxel(i, j, k));
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(v(i0, j0, k0), v(i1, j0, k0), fx);
        let c10 = lerp(v(i0, j1, k0), v(i1, j1, k0), fx);
        let c01 = lerp(v(i0, j0, k1), v(i1, j0, k1), fx);
        let c11 = lerp(v(i0, j1, k1), v(i1, j1, k1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    pub fn save(&self, header_path: &Path) -> Result<(), VolumeError> {
        let data_name = header_path
            .with_extension("raw")
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| VolumeError::Invalid("header path has no file name".into()))?;
        let d = self.direction.matrix();
        let header =
            format!(
            "MVOL 1\ndims {} {} {}\nspacing {} {} {}\norigin {} {} {}\ndirection {} {} {} {} {} {} {} {} {}\ndata {}\n",
            self.dims[0], self.dims[1], self.dims[2],
            self.spacing.x, self.spacing.y, self.spacing.z,
            self.origin.x, self.origin.y, self.origin.z,
            d[0][0], d[0][1], d[0][2], d[1][0], d[1][1], d[1][2], d[2][0], d[2][1], d[2][2],
            data_name,
        );
        let data_path = header_path.with_file_name(&data_name);
        let bytes: Vec<u8> = self.voxels.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(header_path, header).map_err(|source| VolumeError::Write {
            path: header_path.to_owned(),
            source,
        })?;
        fs::write(&data_path, bytes).map_err(|source| VolumeError::Write {
            path: data_path,
            source,
        })
    }
}

/// Lower/upper index and fraction along one axis, or `None` outside the grid.
fn cell(c: f64, n: usize) -> Option<(usize, usize, f64)> {
    let last = (n - 1) as f64;
    if !(c >= 0.0 && c <= last) {
        return None;
    }
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (c.floor() as usize).min(n - 2);
    Some((i0, i0 + 1, c - i0 as f64))
}

pub fn sample_trilinear(v: &Volume, p_world: Vec3) -> f64 {
    v.sample_trilinear(p_world)
}

/// Reads an MVOL v1 header and its data file.
pub fn load_volume(header_path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|source| VolumeError::Missing {
        path: header_path.to_owned(),
        source,
    })?;
    let mut lines = text.split('\n');
    let mut line_no = 0;
    let mut next = |field: &'static str| -> Result<(usize, Vec<String>), VolumeError> {
        line_no += 1;
        let line = lines.next().ok_or(VolumeError::MalformedHeader {
            line: line_no,
            field,
            reason: "missing line".into(),
        })?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == field => Ok((line_no, parts.map(str::to_owned).collect())),
            other => Err(VolumeError::MalformedHeader {
                line: line_no,
                field,
                reason: format!("expected `{field}`, found `{}`", other.unwrap_or("")),
            }),
        }
    };

    let (line, magic) = next("MVOL")?;
    if magic != ["1"] {
        return Err(VolumeError::MalformedHeader {
            line,
            field: "MVOL",
            reason: format!("unsupported version {magic:?}"),
        });
    }
    let (line, v) = next("dims")?;
    let dims: [usize; 3] = parse_n(&v, line, "dims")?;
    if dims.contains(&0) {
        return Err(VolumeError::MalformedHeader {
            line,
            field: "dims",
            reason: "dimensions must be positive".into(),
        });
    }
    let (line, v) = next("spacing")?;
    let spacing: [f64; 3] = parse_n(&v, line, "spacing")?;
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::MalformedHeader {
            line,
            field: "spacing",
            reason: "spacing must be positive and finite".into(),
        });
    }
    let (line, v) = next("origin")?;
    let origin: [f64; 3] = parse_n(&v, line, "origin")?;
    let (line, v) = next("direction")?;
    let d: [f64; 9] = parse_n(&v, line, "direction")?;
    let direction =
        Rotation::from_matrix([[d[0], d[1], d[2]], [d[3], d[4], d[5]], [d[6], d[7], d[8]]]).map_err(|e| {
            VolumeError::MalformedHeader {
                line,
                field: "direction",
                reason: e.to_string(),
            }
        })?;
    let (line, v) = next("data")?;
    let [data_name]: [String; 1] = v.try_into().map_err(|_| VolumeError::MalformedHeader {
        line,
        field: "data",
        reason: "expected exactly one file name".into(),
    })?;

    let data_path = header_path.parent().unwrap_or_else(|| Path::new(".")).join(&data_name);
    let bytes = fs::read(&data_path).map_err(|source| VolumeError::Missing {
        path: data_path.clone(),
        source,
    })?;
    let expected = dims[0] * dims[1] * dims[2];
    if bytes.len() != expected * 2 {
        return Err(VolumeError::DataSizeMismatch {
            path: data_path,
            expected,
            expected_bytes: expected * 2,
            actual_bytes: bytes.len(),
        });
    }
    let voxels = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    Volume::new(dims, Vec3::from(spacing), Vec3::from(origin), direction, voxels)
}

fn parse_n<T: std::str::FromStr, const N: usize>(
    parts: &[String],
    line: usize,
    field: &'static str,
) -> Result<[T; N], VolumeError>
where
    T::Err: std::fmt::Display,
{
    if parts.len() != N {
        return Err(VolumeError::MalformedHeader {
            line,
            field,
            reason: format!("expected {N} values, found {}", parts.len()),
        });
    }
    let parsed: Vec<T> = parts
        .iter()
        .map(|p| {
            p.parse::<T>().map_err(|e| VolumeError::MalformedHeader {
                line,
                field,
                reason: format!("`{p}`: {e}"),
            })
        })
        .collect::<Result<_, _>>()?;
    parsed.try_into().map_err(|_| unreachable!())
}

/// Display window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuWindow {
    pub level: f64,
    pub width: f64,
}

impl Default for HuWindow {
    /// Soft-tissue window.
    fn default() -> Self {
        HuWindow {
            level: 40.0,
            width: 400.0,
        }
    }
}

impl HuWindow {
    pub fn new(level: f64, width: f64) -> Result<Self, VolumeError> {
        if !width.is_finite() || width <= 0.0 || !level.is_finite() {
            return Err(VolumeError::Invalid(format!(
                "window needs a finite level and positive width (got {level}, {width})"
            )));
        }
        Ok(HuWindow { level, width })
    }
}

/// Linear map of `[level − width/2, level + width/2]` onto `0..=255`,
/// clamped, rounding half up.
pub fn window_to_gray(value: f64, w: HuWindow) -> u8 {
    let g = (value - (w.level - w.width / 2.0)) / w.width * 255.0;
    (g + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> i16) -> Volume {
        Volume::from_fn(dims, Vec3::new(1.0, 1.0, 1.0), Vec3::ZERO, Rotation::IDENTITY, f).unwrap()
    }

    #[test]
    fn center_of_voxel_returns_voxel() {
        let v = ramp([4, 5, 6], |i, j, k| (i + 10 * j + 100 * k) as i16);
        for (i, j, k) in [(0, 0, 0), (3, 4, 5), (2, 1, 3), (3, 0, 5)] {
            assert_eq!(v.sample_trilinear(v.voxel_center(i, j, k)), f64::from(v.voxel(i, j, k)));
        }
    }

    #[test]
    fn cell_center_of_ramp() {
        let v = ramp([3, 3, 3], |i, j, k| (i + 10 * j + 100 * k) as i16);
        assert_eq!(v.sample_trilinear(Vec3::new(0.5, 0.5, 0.5)), 55.5);
    }

    #[test]
    fn outside_is_padding() {
        let v = ramp([3, 3, 3], |_, _, _| 7);
        assert_eq!(v.sample_trilinear(Vec3::new(1e4, 0.0, 0.0)), PADDING_HU);
        assert_eq!(v.sample_trilinear(Vec3::new(-0.01, 1.0, 1.0)), PADDING_HU);
        assert_eq!(v.sample_trilinear(Vec3::new(1.0, 2.01, 1.0)), PADDING_HU);
    }

    #[test]
    fn single_slice_volume() {
        let v = ramp([2, 2, 1], |i, j, _| (i + 2 * j) as i16);
        assert_eq!(v.sample_trilinear(Vec3::new(0.5, 0.5, 0.0)), 1.5);
        assert_eq!(v.sample_trilinear(Vec3::new(0.5, 0.5, 0.1)), PADDING_HU);
    }

    #[test]
    fn window_examples() {
        let w = HuWindow::default();
        assert_eq!(window_to_gray(40.0, w), 128);
        assert_eq!(window_to_gray(-160.0, w), 0);
        assert_eq!(window_to_gray(-5000.0, w), 0);
        assert_eq!(window_to_gray(240.0, w), 255);
        assert_eq!(window_to_gray(3000.0, w), 255);
        // (140 + 160) / 400 * 255 = 191.25
        assert_eq!(window_to_gray(140.0, w), 191);
        assert_eq!(window_to_gray(PADDING_HU, w), 0);
    }

    #[test]
    fn bad_window_rejected() {
        assert!(HuWindow::new(0.0, 0.0).is_err());
        assert!(HuWindow::new(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn header_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("v.mvol");
        fs::write(&h, "MVOL 1\ndims 2 2\n").unwrap();
        match load_volume(&h) {
            Err(VolumeError::MalformedHeader {
                line: 2, field: "dims", ..
            }) => {}
            other => panic!("{other:?}"),
        }
        fs::write(&h, "MVOL 1\ndims 2 2 2\nspacing 1 1 0\n").unwrap();
        assert!(matches!(
            load_volume(&h),
            Err(VolumeError::MalformedHeader { field: "spacing", .. })
        ));
        assert!(matches!(
            load_volume(dir.path().join("nope.mvol")),
            Err(VolumeError::Missing { .. })
        ));
    }

    #[test]
    fn short_data_file_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("v.mvol");
        fs::write(
            &h,
            "MVOL 1\ndims 2 2 2\nspacing 1 1 1\norigin 0 0 0\ndirection 1 0 0 0 1 0 0 0 1\ndata v.raw\n",
        )
        .unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 14]).unwrap();
        match load_volume(&h) {
            Err(VolumeError::DataSizeMismatch {
                expected: 8,
                actual_bytes: 14,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
        fs::write(dir.path().join("v.raw"), [0u8; 16]).unwrap();
        let v = load_volume(&h).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert!(v.voxels().iter().all(|&x| x == 0));
    }

    proptest! {
        #[test]
        fn interpolation_stays_within_neighbours(
            vals in proptest::collection::vec(-2000i16..3000, 8),
            fx in 0.0f64..=1.0, fy in 0.0f64..=1.0, fz in 0.0f64..=1.0,
        ) {
            let v = ramp([2, 2, 2], |i, j, k| vals[i + 2 * j + 4 * k]);
            let s = v.sample_trilinear(Vec3::new(fx, fy, fz));
            let lo = f64::from(*vals.iter().min().unwrap());
            let hi = f64::from(*vals.iter().max().unwrap());
            prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
        }

        #[test]
        fn save_load_round_trip(
            nx in 1usize..5, ny in 1usize..5, nz in 1usize..5,
            sx in 0.1f64..3.0, ox in -200.0f64..200.0, seed in any::<u64>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let h = dir.path().join("rt.mvol");
            let mut state = seed;
            let v = Volume::from_fn(
                [nx, ny, nz],
                Vec3::new(sx, sx * 1.5, 0.7),
                Vec3::new(ox, -ox / 3.0, 12.25),
                Rotation::from_quaternion(0.9, 0.1, -0.3, 0.2).unwrap(),
                |_, _, _| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (state >> 48) as i16
                },
            ).unwrap();
            v.save(&h).unwrap();
            prop_assert_eq!(load_volume(&h).unwrap(), v);
        }
    }
}
