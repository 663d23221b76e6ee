use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use navsim_core::engine::{parse_inputs, simulate, Engine, EngineError, PoseSource};
use navsim_core::registration::{parse_fiducials_csv, register_paired_points, PointPairs};
use navsim_core::reslice::{
    adjustable_pseudo_plane, ortho_planes, pseudo_sagittal_plane, pseudo_transverse_plane, render_slice, Navigation,
    SliceKind, SlicePlane, ToolPose,
};
use navsim_core::session::analysis::{analyze, AnalysisOptions};
use navsim_core::session::log::{metrics_of, parse_log, write_log};
use navsim_core::session::scenario::ScenarioError;
use navsim_core::session::Scenario;
use navsim_core::volume::load_volume;
use navsim_server::{ServerConfig, TickMode};
use serde_json::json;
use thiserror::Error;

use crate::args::{AnalyzeArgs, Cli, Command, RegisterArgs, RenderArgs, ServeArgs, SimulateArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_json(v: &serde_json::Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(runtime)?;
    writeln!(out).map_err(runtime)
}

fn scenario_error(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::Io { .. } => CliError::Runtime(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Scenario(s) => scenario_error(s),
        EngineError::Input { .. } => CliError::Usage(e.to_string()),
        EngineError::Volume(_) | EngineError::Session(_) => CliError::Runtime(e.to_string()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Render(a) => render(a),
        Command::Register(a) => register(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Serve(a) => serve(a),
    }
}

fn render(a: RenderArgs) -> Result<(), CliError> {
    let pose = ToolPose::from_direction(a.tip, a.axis).map_err(|e| CliError::Usage(format!("--axis: {e}")))?;
    if a.plane != SliceKind::Adjustable && (a.theta != 0.0 || a.pivot.is_some()) {
        return Err(CliError::Usage("--theta and --pivot need --plane adjustable".into()));
    }
    let volume = load_volume(&a.volume).map_err(runtime)?;
    let (fov, sp) = (a.fov, a.spacing);
    let plane: SlicePlane = match a.plane {
        SliceKind::Transverse => ortho_planes(a.tip, fov, sp).map(|p| p.0),
        SliceKind::Sagittal => ortho_planes(a.tip, fov, sp).map(|p| p.1),
        SliceKind::Coronal => ortho_planes(a.tip, fov, sp).map(|p| p.2),
        SliceKind::PseudoTransverse => pseudo_transverse_plane(&pose, fov, sp),
        SliceKind::PseudoSagittal => pseudo_sagittal_plane(&pose, fov, sp),
        SliceKind::Adjustable => adjustable_pseudo_plane(&pose, a.pivot.unwrap_or(a.tip), a.theta, fov, sp),
    }
    .map_err(|e| CliError::Usage(format!("--fov/--spacing: {e}")))?;

    let window = a.window.unwrap_or_default();
    let nav = Navigation {
        pose: Some(pose),
        target: None,
        marked: a.pivot,
    };
    let image = render_slice(&volume, &plane, window, &nav);
    write_file(&a.out, &image.to_pgm())?;
    let sidecar = json!({
        "plane": a.plane,
        "width_px": image.width_px,
        "height_px": image.height_px,
        "spacing_mm": plane.spacing_mm,
        "theta_deg": if a.plane == SliceKind::Adjustable { a.theta.rem_euclid(360.0) } else { 0.0 },
        "origin": plane.origin,
        "u": plane.u,
        "v": plane.v,
        "normal": plane.normal,
        "window": window,
        "overlay": image.overlay,
    });
    let mut text = serde_json::to_vec_pretty(&sidecar).map_err(runtime)?;
    text.push(b'\n');
    write_file(&a.out.with_extension("json"), &text)
}

fn register(a: RegisterArgs) -> Result<(), CliError> {
    let parse =
        |p: &Path| parse_fiducials_csv(&read(p)?).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())));
    let pairs = PointPairs::new(parse(&a.fixed)?, parse(&a.moving)?).map_err(runtime)?;
    let r = register_paired_points(&pairs).map_err(runtime)?;
    print_json(&json!({
        "transform": r.transform.to_rows(),
        "fre_rms": r.fre_rms,
    }))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let scenario = Scenario::load(&a.scenario).map_err(scenario_error)?;
    let inputs = match &a.inputs {
        Some(p) => parse_inputs(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let volume = load_volume(&scenario.volume_path).map_err(runtime)?;
    let session = simulate(scenario, Arc::new(volume), &inputs).map_err(engine_error)?;
    let mut log = Vec::new();
    write_log(session.event_log(), &mut log).map_err(runtime)?;
    write_file(&a.out, &log)?;
    let metrics = session.metrics().ok_or_else(|| runtime("session did not finish"))?;
    print_json(&serde_json::to_value(metrics).map_err(runtime)?)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    if a.logs.is_empty() {
        return Err(CliError::Usage("analyze needs at least one LOG".into()));
    }
    for (_, p) in a.subjects.iter().chain(&a.group_of) {
        if !a.logs.contains(p) {
            return Err(CliError::Usage(format!(
                "{} is not one of the LOG arguments",
                p.display()
            )));
        }
    }
    let mut metrics = Vec::with_capacity(a.logs.len());
    for path in &a.logs {
        let entries = parse_log(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut m = metrics_of(&entries).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        if let Some((id, _)) = a.subjects.iter().rev().find(|(_, p)| p == path) {
            m.subject = Some(id.clone());
        }
        if let Some((g, _)) = a.group_of.iter().rev().find(|(_, p)| p == path) {
            m.group = Some(g.clone());
        }
        metrics.push(m);
    }
    let opts = AnalysisOptions {
        measure: a.measure,
        friedman: a.friedman,
        groups: a.groups,
    };
    let report = analyze(&metrics, &opts).map_err(runtime)?;
    print_json(&serde_json::to_value(report).map_err(runtime)?)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let source = if a.manual_pose {
        PoseSource::Manual
    } else {
        PoseSource::Scripted
    };
    let engine = Engine::load(&a.scenario, source).map_err(engine_error)?;
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let config = ServerConfig {
            bind: SocketAddr::new(a.host, a.port),
            ui_dir: a.ui_dir,
            log_path: Some(a.log.clone()),
            tick: TickMode::Timer,
        };
        let handle = navsim_server::start(engine, config).await.map_err(runtime)?;
        eprintln!(
            "navsim: serving session {} on {} (log: {})",
            handle.session_id(),
            handle.local_addr(),
            a.log.display()
        );
        tokio::select! {
            _ = handle.finished() => {
                // let the final state reach the displays
                tokio::time::sleep(Duration::from_millis(200)).await;
            }
            r = tokio::signal::ctrl_c() => {
                r.map_err(runtime)?;
                eprintln!("navsim: interrupted, aborting session");
            }
        }
        let outcome = handle.shutdown().await;
        match &outcome.metrics {
            Some(m) => print_json(&serde_json::to_value(m).map_err(runtime)?),
            None => Ok(()),
        }
    })
}
