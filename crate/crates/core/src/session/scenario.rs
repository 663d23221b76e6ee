//! Scenario files: everything needed to run one simulated puncture.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DisplayMode, SessionConfig, Target, ViewSettings, DEFAULT_TICK_HZ, DEFAULT_TIMEOUT_S};
use crate::geom::{RigidTransform, Vec3};
use crate::registration::{register_paired_points, PointPairs};
use crate::tracking::Trajectory;
use crate::volume::HuWindow;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field,
        reason: reason.into(),
    }
}

/// Either paired fiducials (registered at load) or an explicit transform.
/// The transform maps tracker/reference coordinates into image space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegistrationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moving: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<RigidTransform>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body {
    #[default]
    Tool,
    Reference,
}

/// `body` is invisible for `start <= t < end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub body: Body,
}

impl Occlusion {
    pub fn hides(&self, body: Body, t: f64) -> bool {
        self.body == body && self.start <= t && t < self.end
    }
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

fn default_tick_hz() -> f64 {
    DEFAULT_TICK_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// MVOL header path, relative to the scenario file.
    pub volume: PathBuf,
    #[serde(default)]
    pub registration: RegistrationSpec,
    #[serde(default)]
    pub tool_calibration: RigidTransform,
    /// Pose of the phantom reference body in tracker space.
    #[serde(default)]
    pub reference_in_tracker: RigidTransform,
    pub trajectory: Trajectory,
    /// Intervals during which a marker body is hidden from the localizer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub occlusions: Vec<Occlusion>,
    pub target: Target,
    /// Defaults to the mode implied by `condition_label`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DisplayMode>,
    #[serde(default)]
    pub condition_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_tick_hz")]
    pub tick_hz: f64,
    #[serde(default)]
    pub view: ViewSettings,
    #[serde(default)]
    pub window: HuWindow,
}

/// A validated scenario with paths resolved and registration computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub volume_path: PathBuf,
    pub mode: DisplayMode,
    pub registration: RigidTransform,
    /// Fiducial residual when registration came from point pairs.
    pub fre_rms: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ResolvedScenario, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::from_json(&text)?.resolve(base)
    }

    /// Validates every field and resolves the volume path against `base_dir`.
    pub fn resolve(mut self, base_dir: &Path) -> Result<ResolvedScenario, ScenarioError> {
        if !(self.target.radius > 0.0 && self.target.radius.is_finite()) {
            return Err(field(
                "target.radius",
                format!("must be positive, got {}", self.target.radius),
            ));
        }
        if !self.target.center.is_finite() {
            return Err(field("target.center", "must be finite"));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(field("timeout_s", format!("must be positive, got {}", self.timeout_s)));
        }
        if !(self.tick_hz > 0.0 && self.tick_hz.is_finite()) {
            return Err(field("tick_hz", format!("must be positive, got {}", self.tick_hz)));
        }
        let v = self.view;
        if !(v.fov_mm > 0.0 && v.fov_mm.is_finite()) {
            return Err(field("view.fov_mm", "must be positive"));
        }
        if !(v.spacing_mm > 0.0 && v.spacing_mm.is_finite()) {
            return Err(field("view.spacing_mm", "must be positive"));
        }
        if self.window.width.is_nan() || self.window.width <= 0.0 {
            return Err(field("window.width", "must be positive"));
        }
        if self
            .occlusions
            .iter()
            .any(|o| !(o.start.is_finite() && o.end.is_finite() && o.start <= o.end))
        {
            return Err(field("occlusions", "each interval needs finite start <= end"));
        }
        self.trajectory
            .normalize()
            .map_err(|e| field("trajectory", e.to_string()))?;

        let mode = match self.mode {
            Some(m) => m,
            None => DisplayMode::for_condition(&self.condition_label).ok_or_else(|| {
                field(
                    "mode",
                    format!(
                        "missing, and condition_label `{}` is not one of {:?}",
                        self.condition_label,
                        DisplayMode::CONDITION_LABELS
                    ),
                )
            })?,
        };

        let reg = &self.registration;
        let (registration, fre_rms) = match (&reg.transform, &reg.fixed, &reg.moving) {
            (Some(t), None, None) => (*t, None),
            (None, Some(fixed), Some(moving)) => {
                let pairs =
                    PointPairs::new(fixed.clone(), moving.clone()).map_err(|e| field("registration", e.to_string()))?;
                let r = register_paired_points(&pairs).map_err(|e| field("registration", e.to_string()))?;
                (r.transform, Some(r.fre_rms))
            }
            (None, None, None) => (RigidTransform::IDENTITY, None),
            _ => {
                return Err(field(
                    "registration",
                    "give either `transform` or both `fixed` and `moving`",
                ))
            }
        };

        let volume_path = base_dir.join(&self.volume);
        Ok(ResolvedScenario {
            scenario: self,
            volume_path,
            mode,
            registration,
            fre_rms,
        })
    }
}

impl ResolvedScenario {
    pub fn session_config(&self) -> SessionConfig {
        let s = &self.scenario;
        SessionConfig {
            mode: self.mode,
            target: s.target.clone(),
            condition_label: s.condition_label.clone(),
            subject: s.subject.clone(),
            group: s.group.clone(),
            timeout_s: s.timeout_s,
            view: s.view,
        }
    }
}
