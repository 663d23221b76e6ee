use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use navsim_core::geom::Vec3;
use navsim_core::reslice::{SliceKind, DEFAULT_FOV_MM, DEFAULT_SPACING_MM};
use navsim_core::session::analysis::Measure;
use navsim_core::volume::HuWindow;

#[derive(Debug, Parser)]
#[command(name = "navsim", version, about = "Needle navigation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reslice a volume along one plane and write a PGM plus overlay JSON.
    Render(RenderArgs),
    /// Rigid registration of paired fiducials.
    Register(RegisterArgs),
    /// Run a scenario headlessly and write its session log.
    Simulate(SimulateArgs),
    /// Summarise session logs and compare conditions and groups.
    Analyze(AnalyzeArgs),
    /// Serve a live session over TCP, WebSocket and HTTP.
    Serve(ServeArgs),
}

fn parse_triplet(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got `{s}`"));
    }
    let mut xs = [0.0; 3];
    for (x, p) in xs.iter_mut().zip(&parts) {
        *x = p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"))?;
        if !x.is_finite() {
            return Err(format!("`{p}` is not finite"));
        }
    }
    Ok(Vec3::new(xs[0], xs[1], xs[2]))
}

fn parse_window(s: &str) -> Result<HuWindow, String> {
    let (l, w) = s
        .split_once(',')
        .ok_or_else(|| format!("expected level,width but got `{s}`"))?;
    let level = l.trim().parse::<f64>().map_err(|e| format!("level `{l}`: {e}"))?;
    let width = w.trim().parse::<f64>().map_err(|e| format!("width `{w}`: {e}"))?;
    HuWindow::new(level, width).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("must be positive, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(x) => Err(format!("must be finite, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_kind(s: &str) -> Result<SliceKind, String> {
    s.parse::<SliceKind>().map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_owned(), PathBuf::from(v))),
        _ => Err(format!("expected NAME=LOG but got `{s}`")),
    }
}

fn parse_groups(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b => Ok((a.to_owned(), b.to_owned())),
        _ => Err(format!("expected two distinct group names A,B but got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// MVOL header file.
    #[arg(long, value_name = "FILE")]
    pub volume: PathBuf,
    /// Needle tip in image space, mm.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_triplet, allow_hyphen_values = true)]
    pub tip: Vec3,
    /// Needle direction; normalized.
    #[arg(long, value_name = "DX,DY,DZ", value_parser = parse_triplet, allow_hyphen_values = true)]
    pub axis: Vec3,
    #[arg(long, value_name = "KIND", value_parser = parse_kind)]
    pub plane: SliceKind,
    /// Rotation of the adjustable plane about the needle axis, degrees.
    #[arg(long, value_name = "DEG", default_value_t = 0.0, value_parser = parse_finite, allow_hyphen_values = true)]
    pub theta: f64,
    /// Rotation centre of the adjustable plane; defaults to the tip.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_triplet, allow_hyphen_values = true)]
    pub pivot: Option<Vec3>,
    #[arg(long, value_name = "MM", default_value_t = DEFAULT_FOV_MM, value_parser = parse_positive, allow_hyphen_values = true)]
    pub fov: f64,
    #[arg(long, value_name = "MM", default_value_t = DEFAULT_SPACING_MM, value_parser = parse_positive, allow_hyphen_values = true)]
    pub spacing: f64,
    /// HU window as level,width.
    #[arg(long, value_name = "L,W", value_parser = parse_window, allow_hyphen_values = true)]
    pub window: Option<HuWindow>,
    /// Output PGM; the overlay is written next to it with a .json extension.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Image-space fiducials, one x,y,z per line.
    #[arg(long, value_name = "CSV")]
    pub fixed: PathBuf,
    /// Tracker-space fiducials in the same order.
    #[arg(long, value_name = "CSV")]
    pub moving: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Session log (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Scripted operator inputs: wire messages with a `t` field.
    #[arg(long, value_name = "FILE")]
    pub inputs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Session logs.
    #[arg(value_name = "LOG")]
    pub logs: Vec<PathBuf>,
    /// Friedman test across conditions, subjects as blocks.
    #[arg(long)]
    pub friedman: bool,
    /// Mann-Whitney test between two groups, given as A,B.
    #[arg(long, value_name = "A,B", value_parser = parse_groups)]
    pub groups: Option<(String, String)>,
    #[arg(long, value_name = "MEASURE", default_value = "duration", value_parser = |s: &str| s.parse::<Measure>())]
    pub measure: Measure,
    /// Subject id for a log (overrides the one recorded in it).
    #[arg(long = "subject", value_name = "ID=LOG", value_parser = parse_pair)]
    pub subjects: Vec<(String, PathBuf)>,
    /// Group name for a log (overrides the one recorded in it).
    #[arg(long = "group", value_name = "NAME=LOG", value_parser = parse_pair)]
    pub group_of: Vec<(String, PathBuf)>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = navsim_server::DEFAULT_PORT)]
    pub port: u16,
    /// Address to listen on; use 0.0.0.0 to reach a phone on the LAN.
    #[arg(long, value_name = "ADDR", default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory of UI assets served over HTTP.
    #[arg(long, value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
    /// Take tool poses from the master display instead of the trajectory.
    #[arg(long)]
    pub manual_pose: bool,
    /// Session log written when the session ends.
    #[arg(long, value_name = "FILE", default_value = "session.jsonl")]
    pub log: PathBuf,
}
