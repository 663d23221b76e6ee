//! Runs a scenario: polls the simulated localizer at the tick rate, feeds
//! the session and renders the requested slices.

use std::path::Path;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use crate::reslice::{render_slice, Navigation, ToolPose};
use crate::session::scenario::{Body, ResolvedScenario, ScenarioError};
use crate::session::{DisplayRequest, Scenario, Session, SessionError, Status};
use crate::tracking::{pose_at, synthesize_sample, tool_pose_in_image};
use crate::volume::{load_volume, Volume, VolumeError};
use crate::wire::{self, Frame, Message, SessionState};

/// Inputs stamped within this much of a tick are applied at that tick.
const INPUT_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("inputs line {line}: {reason}")]
    Input { line: usize, reason: String },
}

/// Operator inputs accepted by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Input {
    Rotate(f64),
    Zoom(f64),
    Mark,
    Declare,
    Pose(ToolPose),
}

impl Input {
    pub fn from_message(m: &Message) -> Option<Input> {
        Some(match m {
            Message::Rotate { theta_deg } => Input::Rotate(*theta_deg),
            Message::Zoom { factor } => Input::Zoom(*factor),
            Message::Mark => Input::Mark,
            Message::Declare => Input::Declare,
            Message::Pose { tip, axis } => Input::Pose(ToolPose { tip: *tip, axis: *axis }),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Input::Rotate(_) => "rotate",
            Input::Zoom(_) => "zoom",
            Input::Mark => "mark",
            Input::Declare => "declare",
            Input::Pose(_) => "pose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedInput {
    pub t: f64,
    pub input: Input,
}

/// Parses a scripted-inputs file: one wire message per line with an extra
/// numeric `t` (seconds of session clock). Blank lines are skipped.
pub fn parse_inputs(text: &str) -> Result<Vec<TimedInput>, EngineError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| EngineError::Input { line: line_no, reason };
        let value: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let t = value
            .get("t")
            .and_then(Value::as_f64)
            .filter(|t| t.is_finite())
            .ok_or_else(|| err("missing numeric field `t`".into()))?;
        let msg = wire::decode(line.as_bytes()).map_err(|e| err(e.to_string()))?;
        let input = Input::from_message(&msg).ok_or_else(|| err("not an operator input".into()))?;
        out.push(TimedInput { t, input });
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseSource {
    Scripted,
    /// Poses arrive as `pose` inputs from the master display.
    Manual,
}

pub struct Engine {
    scenario: ResolvedScenario,
    volume: Arc<Volume>,
    session: Session,
    source: PoseSource,
    manual_pose: Option<ToolPose>,
    ticks: u64,
}

impl Engine {
    pub fn new(scenario: ResolvedScenario, volume: Arc<Volume>, source: PoseSource) -> Result<Engine, EngineError> {
        let session = Session::new(scenario.session_config())?;
        Ok(Engine {
            scenario,
            volume,
            session,
            source,
            manual_pose: None,
            ticks: 0,
        })
    }

    /// Loads the scenario file and its volume.
    pub fn load(path: impl AsRef<Path>, source: PoseSource) -> Result<Engine, EngineError> {
        let scenario = Scenario::load(path)?;
        let volume = load_volume(&scenario.volume_path)?;
        Engine::new(scenario, Arc::new(volume), source)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn scenario(&self) -> &ResolvedScenario {
        &self.scenario
    }

    pub fn volume(&self) -> &Arc<Volume> {
        &self.volume
    }

    pub fn tick_hz(&self) -> f64 {
        self.scenario.scenario.tick_hz
    }

    pub fn is_finished(&self) -> bool {
        self.session.status().is_terminal()
    }

    /// Image-space pose the localizer reports at `t`, `None` when occluded.
    pub fn tracked_pose(&self, t: f64) -> Option<ToolPose> {
        if self.source == PoseSource::Manual {
            return self.manual_pose;
        }
        let s = &self.scenario.scenario;
        let ideal = pose_at(&s.trajectory, t);
        let mut sample = synthesize_sample(
            t,
            &ideal,
            &self.scenario.registration,
            &s.tool_calibration,
            &s.reference_in_tracker,
        );
        sample.tool_visible = !s.occlusions.iter().any(|o| o.hides(Body::Tool, t));
        sample.reference_visible = !s.occlusions.iter().any(|o| o.hides(Body::Reference, t));
        tool_pose_in_image(&sample, &self.scenario.registration, &s.tool_calibration).ok()
    }

    /// Advances one tick. Returns no requests once the session has ended.
    pub fn step(&mut self) -> Result<Vec<DisplayRequest>, EngineError> {
        if self.is_finished() {
            return Ok(Vec::new());
        }
        self.ticks += 1;
        let next = self.ticks as f64 / self.tick_hz();
        let pose = self.tracked_pose(next);
        let dt = next - self.session.clock_s();
        Ok(self.session.tick(pose, dt)?)
    }

    /// Applies an operator input. Refused inputs are logged and returned
    /// as errors; the session continues either way.
    pub fn apply(&mut self, input: Input) -> Result<(), SessionError> {
        let result = match input {
            Input::Rotate(theta) => self.session.set_theta(theta),
            Input::Zoom(f) => self.session.set_zoom(f),
            Input::Mark => self.session.mark_position(),
            Input::Declare => self.session.declare_reached().map(|_| ()),
            Input::Pose(p) => match (self.source, ToolPose::from_direction(p.tip, p.axis)) {
                (PoseSource::Manual, Ok(p)) => {
                    self.manual_pose = Some(p);
                    Ok(())
                }
                (PoseSource::Manual, Err(e)) => Err(SessionError::from(e)),
                (PoseSource::Scripted, _) => Err(SessionError::InvalidState(
                    "pose input requires manual pose mode".into(),
                )),
            },
        };
        if let Err(e) = &result {
            if !self.is_finished() {
                self.session.log_rejected(input.name(), &e.to_string());
            }
        }
        result
    }

    pub fn abort(&mut self) {
        if self.session.status() == Status::Navigating {
            let _ = self.session.abort();
        }
    }

    pub fn render(&self, req: &DisplayRequest) -> Frame {
        let nav = Navigation {
            pose: Some(req.pose),
            target: Some(self.session.target()),
            marked: req.marked,
        };
        let img = render_slice(&self.volume, &req.plane, self.scenario.scenario.window, &nav);
        Frame {
            display: req.display,
            representation: req.representation,
            kind: req.kind,
            mirror: req.mirror,
            theta_deg: req.theta_deg,
            width_px: img.width_px,
            height_px: img.height_px,
            spacing_mm: req.plane.spacing_mm,
            pixels_b64: Frame::encode_pixels(&img.pixels),
            overlay: img.overlay,
        }
    }

    pub fn state(&self) -> SessionState {
        let s = &self.session;
        SessionState {
            status: s.status(),
            clock_s: s.clock_s(),
            mode: s.mode().name().to_owned(),
            marked: s.marked().is_some(),
            theta_deg: s.theta_deg(),
            zoom: s.zoom(),
            distance_mm: s.current_pose().map(|p| p.tip.distance(s.target().center)),
        }
    }

    /// Runs to a terminal status, applying each input right after the
    /// first tick whose clock reaches its timestamp.
    pub fn run_scripted(&mut self, inputs: &[TimedInput]) -> Result<(), EngineError> {
        let mut pending = inputs.iter().peekable();
        while !self.is_finished() {
            self.step()?;
            let clock = self.session.clock_s();
            while let Some(ti) = pending.next_if(|ti| ti.t <= clock + INPUT_EPS) {
                if self.is_finished() {
                    break;
                }
                let _ = self.apply(ti.input);
            }
        }
        Ok(())
    }
}

/// Headless run of a scenario; returns the finished session.
pub fn simulate(
    scenario: ResolvedScenario,
    volume: Arc<Volume>,
    inputs: &[TimedInput],
) -> Result<Session, EngineError> {
    let mut engine = Engine::new(scenario, volume, PoseSource::Scripted)?;
    engine.run_scripted(inputs)?;
    Ok(engine.session)
}
