//! Browser demo over the navigation core. Three operations: reslice the
//! built-in phantom along a needle pose, run noisy fiducial registrations,
//! and compare samples with the Friedman and Mann-Whitney tests.
//!
//! The plain functions are usable natively; the `#[wasm_bindgen]` wrappers
//! turn errors into JS exceptions and results into JSON strings.

use navsim_core::geom::{rotation_about_axis, RigidTransform, Vec3};
use navsim_core::phantom::Phantom;
use navsim_core::registration::{register_paired_points, PointPairs};
use navsim_core::reslice::{
    adjustable_pseudo_plane, ortho_planes, pseudo_sagittal_plane, pseudo_transverse_plane, render_slice, Navigation,
    SliceImage, SliceKind, ToolPose,
};
use navsim_core::session::stats::{friedman_test, mann_whitney_u, FriedmanResult, MannWhitneyResult};
use navsim_core::volume::{HuWindow, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Volume(#[from] navsim_core::volume::VolumeError),
    #[error(transparent)]
    Reslice(#[from] navsim_core::reslice::ResliceError),
    #[error(transparent)]
    Registration(#[from] navsim_core::registration::RegistrationError),
    #[error(transparent)]
    Stats(#[from] navsim_core::session::stats::StatsError),
}

/// Unit direction from azimuth (about the cranio-caudal axis, from +x) and
/// elevation (towards +z), both in degrees.
pub fn direction(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

pub struct Scene {
    pub phantom: Phantom,
    pub volume: Volume,
}

impl Scene {
    pub fn new() -> Result<Scene, DemoError> {
        let phantom = Phantom::default();
        let volume = phantom.volume()?;
        Ok(Scene { phantom, volume })
    }

    /// Needle pose whose tip sits `depth_mm` short of the cyst centre along
    /// the given direction.
    pub fn pose(&self, azimuth_deg: f64, elevation_deg: f64, depth_mm: f64) -> Result<ToolPose, DemoError> {
        let dir = direction(azimuth_deg, elevation_deg);
        Ok(ToolPose::from_direction(
            self.phantom.cyst.center - dir * depth_mm,
            dir,
        )?)
    }

    pub fn render(
        &self,
        kind: SliceKind,
        pose: &ToolPose,
        theta_deg: f64,
        fov_mm: f64,
    ) -> Result<SliceImage, DemoError> {
        let sp = 1.0;
        let plane = match kind {
            SliceKind::Transverse => ortho_planes(pose.tip, fov_mm, sp)?.0,
            SliceKind::Sagittal => ortho_planes(pose.tip, fov_mm, sp)?.1,
            SliceKind::Coronal => ortho_planes(pose.tip, fov_mm, sp)?.2,
            SliceKind::PseudoTransverse => pseudo_transverse_plane(pose, fov_mm, sp)?,
            SliceKind::PseudoSagittal => pseudo_sagittal_plane(pose, fov_mm, sp)?,
            SliceKind::Adjustable => adjustable_pseudo_plane(pose, pose.tip, theta_deg, fov_mm, sp)?,
        };
        let nav = Navigation {
            pose: Some(*pose),
            target: Some(&self.phantom.cyst),
            marked: None,
        };
        Ok(render_slice(&self.volume, &plane, HuWindow::default(), &nav))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegistrationTrial {
    pub fre_rms: f64,
    /// Error at the cyst centre after mapping through the estimate.
    pub tre_mm: f64,
    pub rotation_error_deg: f64,
    pub translation_error_mm: f64,
}

/// Registers the first `count` phantom beads against a jittered copy in a
/// rotated tracker frame.
pub fn registration_trial(count: usize, sigma_mm: f64, seed: u64) -> Result<RegistrationTrial, DemoError> {
    let phantom = Phantom::default();
    let beads = phantom.fiducials();
    if !(3..=beads.len()).contains(&count) {
        return Err(DemoError::Invalid(format!("use 3 to {} fiducials", beads.len())));
    }
    let noise = Normal::new(0.0, sigma_mm).map_err(|e| DemoError::Invalid(format!("sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = direction(rng.random_range(0.0..360.0), rng.random_range(-80.0..80.0));
    let truth = RigidTransform::new(
        rotation_about_axis(axis, rng.random_range(-180.0..180.0)).expect("unit axis"),
        Vec3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), -900.0),
    );
    let fixed: Vec<Vec3> = beads[..count].to_vec();
    let tracker_from_image = truth.inverse();
    let moving = fixed
        .iter()
        .map(|&p| {
            let jitter = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            tracker_from_image.apply(p) + jitter
        })
        .collect();
    let r = register_paired_points(&PointPairs::new(fixed, moving)?)?;
    let error = r.transform.compose(&tracker_from_image);
    let c = phantom.cyst.center;
    Ok(RegistrationTrial {
        fre_rms: r.fre_rms,
        tre_mm: error.apply(c).distance(c),
        rotation_error_deg: error.rotation.angle().to_degrees(),
        translation_error_mm: (r.transform.translation - truth.translation).norm(),
    })
}

/// Numbers separated by commas, spaces or semicolons.
pub fn parse_sample(text: &str) -> Result<Vec<f64>, DemoError> {
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| DemoError::Invalid(format!("`{t}` is not a number")))
        })
        .collect()
}

/// One subject per line, one column per condition.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, DemoError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_sample)
        .collect()
}

pub fn friedman(text: &str) -> Result<FriedmanResult, DemoError> {
    Ok(friedman_test(&parse_matrix(text)?)?)
}

pub fn mann_whitney(a: &str, b: &str) -> Result<MannWhitneyResult, DemoError> {
    Ok(mann_whitney_u(&parse_sample(a)?, &parse_sample(b)?)?)
}

fn js(e: DemoError) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo results serialize")
}

/// Holds the phantom so each slider move only reslices.
#[wasm_bindgen]
pub struct Viewer {
    scene: Scene,
    last_overlay: String,
}

#[wasm_bindgen]
impl Viewer {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Viewer, JsError> {
        Ok(Viewer {
            scene: Scene::new().map_err(js)?,
            last_overlay: String::from("{}"),
        })
    }

    /// RGBA pixels of a `fov_mm` × `fov_mm` slice at 1 mm spacing.
    pub fn render(
        &mut self,
        kind: &str,
        azimuth_deg: f64,
        elevation_deg: f64,
        depth_mm: f64,
        theta_deg: f64,
        fov_mm: f64,
    ) -> Result<Vec<u8>, JsError> {
        let kind = kind.parse::<SliceKind>().map_err(|e| js(e.into()))?;
        let pose = self.scene.pose(azimuth_deg, elevation_deg, depth_mm).map_err(js)?;
        let img = self.scene.render(kind, &pose, theta_deg, fov_mm).map_err(js)?;
        self.last_overlay = to_json(&img.overlay);
        Ok(img.pixels.iter().flat_map(|&g| [g, g, g, 255]).collect())
    }

    /// Overlay of the last render as JSON (pixel coordinates).
    pub fn overlay(&self) -> String {
        self.last_overlay.clone()
    }
}

#[wasm_bindgen(js_name = registrationTrials)]
pub fn registration_trials(count: usize, sigma_mm: f64, trials: u32, seed: u64) -> Result<String, JsError> {
    let runs = (0..u64::from(trials))
        .map(|i| registration_trial(count, sigma_mm, seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(js)?;
    Ok(to_json(&runs))
}

#[wasm_bindgen(js_name = friedmanTest)]
pub fn friedman_json(text: &str) -> Result<String, JsError> {
    friedman(text).map(|r| to_json(&r)).map_err(js)
}

#[wasm_bindgen(js_name = mannWhitneyTest)]
pub fn mann_whitney_json(a: &str, b: &str) -> Result<String, JsError> {
    mann_whitney(a, b).map(|r| to_json(&r)).map_err(js)
}
