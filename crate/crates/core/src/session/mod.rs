//! Navigation session state machine.
//!
//! A session owns the display mode, the target, the clock and the event
//! log. Inputs are applied one at a time in a single total order; every
//! applied input and every tick is appended to the log, so the same scenario
//! and input sequence always yields the same log bytes.

pub mod analysis;
pub mod log;
pub mod scenario;
pub mod stats;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::geom::Vec3;
pub use crate::reslice::Target;
use crate::reslice::{
    adjustable_pseudo_plane, ortho_planes, pseudo_sagittal_plane, pseudo_transverse_plane, ResliceError, SliceKind,
    SlicePlane, ToolPose,
};

pub use self::log::LogEntry;
pub use self::scenario::Scenario;

pub const DEFAULT_TIMEOUT_S: f64 = 600.0;
pub const DEFAULT_TICK_HZ: f64 = 20.0;
pub const MIN_ZOOM: f64 = 0.25;
pub const MAX_ZOOM: f64 = 4.0;

/// Clock values this close below the timeout count as having reached it.
const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<ResliceError> for SessionError {
    fn from(e: ResliceError) -> Self {
        SessionError::InvalidArgument(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    TripleOrtho,
    DoublePseudo,
    SinglePseudo,
    AdjustablePseudo,
}

/// Representation shown on the master screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasterRepresentation {
    TripleOrtho,
    DoublePseudo,
}

impl From<MasterRepresentation> for Representation {
    fn from(m: MasterRepresentation) -> Self {
        match m {
            MasterRepresentation::TripleOrtho => Representation::TripleOrtho,
            MasterRepresentation::DoublePseudo => Representation::DoublePseudo,
        }
    }
}

/// Which screens show what.
///
/// - `Standard`: master only.
/// - `Double`: master plus a single-pseudo slice on the mini-screen, also
///   mirrored onto the master.
/// - `Remote`: adjustable slice on the mini-screen only.
/// - `Distributed`: master plus an adjustable slice on the mini-screen that
///   pivots about the recorded position once one is marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisplayMode {
    Standard { master: MasterRepresentation },
    Double { master: MasterRepresentation },
    Remote,
    Distributed { master: MasterRepresentation },
}

impl DisplayMode {
    /// Mode used for one of the six experimental condition labels.
    pub fn for_condition(label: &str) -> Option<DisplayMode> {
        use MasterRepresentation::*;
        Some(match label {
            "TO" => DisplayMode::Standard { master: TripleOrtho },
            "TO+iP" => DisplayMode::Double { master: TripleOrtho },
            "TO+iPA" => DisplayMode::Distributed { master: TripleOrtho },
            "DP" => DisplayMode::Standard { master: DoublePseudo },
            "iPA" => DisplayMode::Remote,
            "DP+iPA" => DisplayMode::Distributed { master: DoublePseudo },
            _ => return None,
        })
    }

    pub const CONDITION_LABELS: [&'static str; 6] = ["TO", "TO+iP", "TO+iPA", "DP", "iPA", "DP+iPA"];

    pub fn master(&self) -> Option<MasterRepresentation> {
        match *self {
            DisplayMode::Standard { master } | DisplayMode::Double { master } | DisplayMode::Distributed { master } => {
                Some(master)
            }
            DisplayMode::Remote => None,
        }
    }

    pub fn mini(&self) -> Option<Representation> {
        match self {
            DisplayMode::Standard { .. } => None,
            DisplayMode::Double { .. } => Some(Representation::SinglePseudo),
            DisplayMode::Remote | DisplayMode::Distributed { .. } => Some(Representation::AdjustablePseudo),
        }
    }

    pub fn displays(&self) -> Vec<Display> {
        let mut out = Vec::new();
        if self.master().is_some() {
            out.push(Display::Master);
        }
        if self.mini().is_some() {
            out.push(Display::Mini);
        }
        out
    }

    pub fn name(&self) -> &'static str {
        match self {
            DisplayMode::Standard { .. } => "standard",
            DisplayMode::Double { .. } => "double",
            DisplayMode::Remote => "remote",
            DisplayMode::Distributed { .. } => "distributed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Display {
    Master,
    Mini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ready,
    Navigating,
    Success,
    Failure,
    Aborted,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Success | Status::Failure | Status::Aborted)
    }
}

/// One slice the engine must render and send to a display.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplayRequest {
    pub display: Display,
    pub representation: Representation,
    pub kind: SliceKind,
    pub plane: SlicePlane,
    /// The mini-screen slice duplicated onto the master (Double mode).
    pub mirror: bool,
    pub theta_deg: f64,
    pub pose: ToolPose,
    pub marked: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub duration_s: f64,
    pub success: bool,
    /// Distance at the last declaration, if any.
    pub tip_to_target_mm: Option<f64>,
    pub condition_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    pub status: Status,
}

/// Slice geometry defaults before zoom is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSettings {
    pub fov_mm: f64,
    pub spacing_mm: f64,
}

impl Default for ViewSettings {
    fn default() -> Self {
        ViewSettings {
            fov_mm: crate::reslice::DEFAULT_FOV_MM,
            spacing_mm: crate::reslice::DEFAULT_SPACING_MM,
        }
    }
}

/// Static session configuration, usually taken from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub mode: DisplayMode,
    pub target: Target,
    pub condition_label: String,
    pub subject: Option<String>,
    pub group: Option<String>,
    pub timeout_s: f64,
    pub view: ViewSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    config: SessionConfig,
    status: Status,
    clock_s: f64,
    marked: Option<Vec3>,
    marked_pose: Option<ToolPose>,
    theta_deg: f64,
    zoom: f64,
    current_pose: Option<ToolPose>,
    last_distance: Option<f64>,
    attempts: u32,
    metrics: Option<SessionMetrics>,
    event_log: Vec<LogEntry>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Session, SessionError> {
        if !config.target.radius.is_finite() || config.target.radius <= 0.0 {
            return Err(SessionError::InvalidArgument("target.radius must be positive".into()));
        }
        if !config.timeout_s.is_finite() || config.timeout_s <= 0.0 {
            return Err(SessionError::InvalidArgument("timeout_s must be positive".into()));
        }
        let mut s = Session {
            status: Status::Ready,
            clock_s: 0.0,
            marked: None,
            marked_pose: None,
            theta_deg: 0.0,
            zoom: 1.0,
            current_pose: None,
            last_distance: None,
            attempts: 0,
            metrics: None,
            event_log: Vec::new(),
            config,
        };
        let payload = json!({
            "mode": s.config.mode,
            "condition_label": s.config.condition_label,
            "subject": s.config.subject,
            "group": s.config.group,
            "target": s.config.target,
            "timeout_s": s.config.timeout_s,
            "view": s.config.view,
        });
        s.log("start", payload);
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mode(&self) -> DisplayMode {
        self.config.mode
    }

    pub fn target(&self) -> &Target {
        &self.config.target
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn marked(&self) -> Option<Vec3> {
        self.marked
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn zoom(&self) -> f64 {
        self.zoom
    }

    pub fn current_pose(&self) -> Option<ToolPose> {
        self.current_pose
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.event_log
    }

    /// Metrics, once the session has reached a terminal status.
    pub fn metrics(&self) -> Option<&SessionMetrics> {
        self.metrics.as_ref()
    }

    pub fn displays(&self) -> Vec<Display> {
        self.config.mode.displays()
    }

    /// Current field of view and pixel spacing after zoom.
    pub fn view(&self) -> ViewSettings {
        ViewSettings {
            fov_mm: self.config.view.fov_mm / self.zoom,
            spacing_mm: self.config.view.spacing_mm / self.zoom,
        }
    }

    fn log(&mut self, kind: &str, payload: serde_json::Value) {
        self.event_log.push(LogEntry {
            t: self.clock_s,
            kind: kind.to_owned(),
            payload,
        });
    }

    fn set_status(&mut self, to: Status) {
        let from = self.status;
        self.status = to;
        self.log("status", json!({ "from": from, "to": to }));
        if to.is_terminal() {
            let m = SessionMetrics {
                duration_s: self.clock_s,
                success: to == Status::Success,
                tip_to_target_mm: self.last_distance,
                condition_label: self.config.condition_label.clone(),
                subject: self.config.subject.clone(),
                group: self.config.group.clone(),
                attempts: self.attempts,
                status: to,
            };
            self.log("metrics", serde_json::to_value(&m).expect("metrics serialize"));
            self.metrics = Some(m);
        }
    }

    fn require_active(&self, what: &str) -> Result<(), SessionError> {
        if self.status.is_terminal() {
            return Err(SessionError::InvalidState(format!(
                "{what} after the session ended ({:?})",
                self.status
            )));
        }
        Ok(())
    }

    fn require_pose(&self, what: &str) -> Result<ToolPose, SessionError> {
        if self.status != Status::Navigating {
            return Err(SessionError::InvalidState(format!(
                "{what} requires a navigating session"
            )));
        }
        self.current_pose
            .ok_or_else(|| SessionError::InvalidState(format!("{what} before any tool pose")))
    }

    /// Advances the clock by `dt_s` with the latest tool pose (`None` while
    /// the localizer cannot see the tool) and returns the slices to display.
    pub fn tick(&mut self, pose: Option<ToolPose>, dt_s: f64) -> Result<Vec<DisplayRequest>, SessionError> {
        self.require_active("tick")?;
        if !dt_s.is_finite() || dt_s <= 0.0 {
            return Err(SessionError::InvalidArgument(format!(
                "dt must be positive, got {dt_s}"
            )));
        }
        self.clock_s += dt_s;
        let timed_out = self.clock_s >= self.config.timeout_s - CLOCK_EPS;
        if timed_out {
            self.clock_s = self.config.timeout_s;
        }
        if self.status == Status::Ready {
            self.set_status(Status::Navigating);
        }
        match pose {
            Some(p) => {
                self.current_pose = Some(p);
                self.log("tick", json!({ "tip": p.tip, "axis": p.axis }));
            }
            None => self.log("occluded", serde_json::Value::Null),
        }
        if timed_out {
            self.set_status(Status::Failure);
            return Ok(Vec::new());
        }
        self.display_requests()
    }

    /// Slices for the current state without advancing time.
    pub fn display_requests(&self) -> Result<Vec<DisplayRequest>, SessionError> {
        let Some(pose) = self.current_pose else {
            return Ok(Vec::new());
        };
        let view = self.view();
        let (fov, sp) = (view.fov_mm, view.spacing_mm);
        let req = |display, representation, kind, plane, mirror| DisplayRequest {
            display,
            representation,
            kind,
            plane,
            mirror,
            theta_deg: if representation == Representation::AdjustablePseudo {
                self.theta_deg
            } else {
                0.0
            },
            pose,
            marked: self.marked,
        };
        let mut out = Vec::new();
        let mode = self.config.mode;

        if let Some(master) = mode.master() {
            match master {
                MasterRepresentation::TripleOrtho => {
                    let (t, s, c) = ortho_planes(pose.tip, fov, sp)?;
                    let rep = Representation::TripleOrtho;
                    out.push(req(Display::Master, rep, SliceKind::Transverse, t, false));
                    out.push(req(Display::Master, rep, SliceKind::Sagittal, s, false));
                    out.push(req(Display::Master, rep, SliceKind::Coronal, c, false));
                }
                MasterRepresentation::DoublePseudo => {
                    let rep = Representation::DoublePseudo;
                    let t = pseudo_transverse_plane(&pose, fov, sp)?;
                    let s = pseudo_sagittal_plane(&pose, fov, sp)?;
                    out.push(req(Display::Master, rep, SliceKind::PseudoTransverse, t, false));
                    out.push(req(Display::Master, rep, SliceKind::PseudoSagittal, s, false));
                }
            }
        }
        match mode.mini() {
            Some(Representation::SinglePseudo) => {
                let rep = Representation::SinglePseudo;
                let plane = pseudo_transverse_plane(&pose, fov, sp)?;
                out.push(req(Display::Mini, rep, SliceKind::PseudoTransverse, plane, false));
                out.push(req(Display::Master, rep, SliceKind::PseudoTransverse, plane, true));
            }
            Some(Representation::AdjustablePseudo) => {
                // once marked, explore around the recorded tool position
                let (basis, pivot) = match (self.marked_pose, self.marked) {
                    (Some(mp), Some(m)) => (mp, m),
                    _ => (pose, pose.tip),
                };
                let plane = adjustable_pseudo_plane(&basis, pivot, self.theta_deg, fov, sp)?;
                out.push(req(
                    Display::Mini,
                    Representation::AdjustablePseudo,
                    SliceKind::Adjustable,
                    plane,
                    false,
                ));
            }
            _ => {}
        }
        Ok(out)
    }

    /// Records the current tool position as the pivot for adjustable slices.
    pub fn mark_position(&mut self) -> Result<(), SessionError> {
        self.require_active("mark")?;
        let pose = self.require_pose("mark")?;
        self.marked = Some(pose.tip);
        self.marked_pose = Some(pose);
        self.theta_deg = 0.0;
        self.log("mark", json!({ "position": pose.tip, "axis": pose.axis }));
        Ok(())
    }

    pub fn set_theta(&mut self, theta_deg: f64) -> Result<(), SessionError> {
        self.require_active("rotate")?;
        if !theta_deg.is_finite() {
            return Err(SessionError::InvalidArgument("theta must be finite".into()));
        }
        self.theta_deg = theta_deg.rem_euclid(360.0);
        self.log("rotate", json!({ "theta_deg": self.theta_deg }));
        Ok(())
    }

    pub fn set_zoom(&mut self, factor: f64) -> Result<(), SessionError> {
        self.require_active("zoom")?;
        if !factor.is_finite() {
            return Err(SessionError::InvalidArgument("zoom must be finite".into()));
        }
        self.zoom = factor.clamp(MIN_ZOOM, MAX_ZOOM);
        self.log("zoom", json!({ "factor": self.zoom }));
        Ok(())
    }

    /// The operator believes the target is reached. Success ends the
    /// session; a miss is logged and navigation continues.
    pub fn declare_reached(&mut self) -> Result<Option<SessionMetrics>, SessionError> {
        self.require_active("declare")?;
        let pose = self.require_pose("declare")?;
        let distance = pose.tip.distance(self.config.target.center);
        let success = distance <= self.config.target.radius;
        self.attempts += 1;
        self.last_distance = Some(distance);
        self.log(
            "attempt",
            json!({ "tip": pose.tip, "distance_mm": distance, "success": success, "attempt": self.attempts }),
        );
        if success {
            self.set_status(Status::Success);
            return Ok(self.metrics.clone());
        }
        Ok(None)
    }

    /// Records an operator input the session refused; navigation goes on.
    pub fn log_rejected(&mut self, input: &str, reason: &str) {
        self.log("rejected", json!({ "input": input, "reason": reason }));
    }

    /// Ends a navigating session early (e.g. the server shut down).
    pub fn abort(&mut self) -> Result<(), SessionError> {
        if self.status != Status::Navigating {
            return Err(SessionError::InvalidState(format!(
                "cannot abort from {:?}",
                self.status
            )));
        }
        self.set_status(Status::Aborted);
        Ok(())
    }
}
