//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without a UI build.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use navsim_core::engine::{Engine, PoseSource};
use navsim_core::geom::{anatomy, any_perpendicular, rotation_about_axis, RigidTransform, Rotation, Vec3};
use navsim_core::registration::{principal_extents, register_paired_points, PointPairs};
use navsim_core::reslice::{
    adjustable_pseudo_plane, pseudo_sagittal_plane, pseudo_transverse_plane, SliceKind, ToolPose,
};
use navsim_core::session::log::{metrics_of, parse_log};
use navsim_core::session::stats::{friedman_test, mann_whitney_u};
use navsim_core::session::{Display, DisplayMode, Representation, Scenario, Status};
use navsim_core::volume::Volume;
use navsim_core::wire::{self, Frame, Message, Role, SessionState};
use navsim_server::{start, ServerConfig, TickMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<(), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn navsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_navsim"))
        .args(args)
        .output()
        .expect("spawn navsim")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if (0.1..=1.0).contains(&v.norm()) {
            return v.try_normalize().unwrap();
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    rotation_about_axis(random_unit(rng), rng.random_range(-180.0..180.0)).unwrap()
}

fn trilinear_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut elapsed = Duration::ZERO;
    for n in 0..3 {
        let dims = [16 + n, 18 + 2 * n, 16 + 3 * n];
        let c: [i64; 4] = [
            rng.random_range(-200..200),
            rng.random_range(-9..10),
            rng.random_range(-9..10),
            rng.random_range(-9..10),
        ];
        let spacing = Vec3::new(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..3.0),
        );
        let origin = Vec3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        );
        let v = Volume::from_fn(dims, spacing, origin, random_rotation(&mut rng), |i, j, k| {
            (c[0] + c[1] * i as i64 + c[2] * j as i64 + c[3] * k as i64) as i16
        })
        .map_err(|e| e.to_string())?;
        // world position from the voxel centres alone
        let c000 = v.voxel_center(0, 0, 0);
        let (di, dj, dk) = (
            v.voxel_center(1, 0, 0) - c000,
            v.voxel_center(0, 1, 0) - c000,
            v.voxel_center(0, 0, 1) - c000,
        );
        let samples: Vec<([f64; 3], Vec3)> = (0..1000)
            .map(|_| {
                let x = [0, 1, 2].map(|a| rng.random_range(0.0..=(dims[a] - 1) as f64));
                (x, c000 + di * x[0] + dj * x[1] + dk * x[2])
            })
            .collect();
        let t0 = Instant::now();
        let got: Vec<f64> = samples.iter().map(|(_, p)| v.sample_trilinear(*p)).collect();
        elapsed += t0.elapsed();
        for ((x, _), g) in samples.iter().zip(got) {
            let want = c[0] as f64 + c[1] as f64 * x[0] + c[2] as f64 * x[1] + c[3] as f64 * x[2];
            ensure!(
                (g - want).abs() <= 1e-9,
                "volume {n}: index {x:?} gave {g}, analytic {want}"
            );
        }
    }
    ensure!(elapsed < Duration::from_secs(1), "3000 samples took {elapsed:?}");
    Ok(())
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    loop {
        let pts: Vec<Vec3> = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                )
            })
            .collect();
        if principal_extents(&pts).iter().all(|&e| e > 5.0) {
            return pts;
        }
    }
}

fn registration_recovery() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..100 {
        let n = rng.random_range(4..=10);
        let fixed = random_cloud(&mut rng, n);
        // the result maps moving onto fixed
        let truth = RigidTransform::new(
            random_rotation(&mut rng),
            Vec3::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            ),
        );
        let moving = fixed.iter().map(|&p| truth.inverse().apply(p)).collect();
        let r = register_paired_points(&PointPairs::new(fixed, moving).map_err(|e| e.to_string())?)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        let dr = r.transform.rotation.max_abs_diff(&truth.rotation);
        let dt = r.transform.translation.distance(truth.translation);
        ensure!(
            dr <= 1e-6 && dt <= 1e-6,
            "noiseless trial {trial} (n={n}): rotation off {dr:e}, translation off {dt:e}"
        );
    }

    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut in_range = 0;
    for _ in 0..100 {
        let fixed = random_cloud(&mut rng, 10);
        let truth = RigidTransform::new(random_rotation(&mut rng), Vec3::new(40.0, -10.0, 900.0));
        let moving = fixed
            .iter()
            .map(|&p| {
                truth.inverse().apply(p)
                    + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            })
            .collect();
        let r = register_paired_points(&PointPairs::new(fixed, moving).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if (0.2..=1.0).contains(&r.fre_rms) {
            in_range += 1;
        }
    }
    ensure!(in_range >= 95, "noisy FRE in [0.2, 1.0] on only {in_range}/100 trials");
    ensure!(t0.elapsed() < Duration::from_secs(5), "took {:?}", t0.elapsed());
    Ok(())
}

/// Angle between two planes given by their normals.
fn plane_angle(n: Vec3, m: Vec3) -> f64 {
    let a = n.angle_to(m);
    a.min(std::f64::consts::PI - a)
}

fn pseudo_plane_minimality() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..200 {
        let axis = random_unit(&mut rng);
        let tip = Vec3::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        );
        let pose = ToolPose::new(tip, axis).map_err(|e| e.to_string())?;
        let p = any_perpendicular(axis).try_normalize().unwrap();
        let q = axis.cross(p);
        for (name, plane, reference) in [
            (
                "transverse",
                pseudo_transverse_plane(&pose, 100.0, 1.0),
                anatomy::TRANSVERSE_NORMAL,
            ),
            (
                "sagittal",
                pseudo_sagittal_plane(&pose, 100.0, 1.0),
                anatomy::SAGITTAL_NORMAL,
            ),
        ] {
            let plane = plane.map_err(|e| e.to_string())?;
            ensure!(
                plane.normal.dot(axis).abs() <= 1e-9,
                "trial {trial} {name}: normal not perpendicular to axis"
            );
            for along in [-80.0, 0.0, 80.0] {
                let d = plane.signed_distance(tip + axis * along);
                ensure!(
                    d.abs() <= 1e-9,
                    "trial {trial} {name}: axis point {along} mm off plane by {d:e}"
                );
            }
            let best = plane_angle(plane.normal, reference);
            for step in 0..3600 {
                let phi = (step as f64 * 0.1).to_radians();
                let candidate = p * phi.cos() + q * phi.sin();
                let a = plane_angle(candidate, reference);
                ensure!(
                    best <= a + 1e-6,
                    "trial {trial} {name}: pencil normal at {:.1}° beats it ({a} < {best})",
                    step as f64 * 0.1
                );
            }
        }
    }
    ensure!(t0.elapsed() < Duration::from_secs(10), "took {:?}", t0.elapsed());
    Ok(())
}

fn ramp_volume() -> Volume {
    Volume::from_fn(
        [20, 20, 20],
        Vec3::new(1.5, 1.5, 1.5),
        Vec3::new(-14.25, -14.25, -14.25),
        Rotation::IDENTITY,
        |i, j, k| (7 * i + 31 * j + 101 * k) as i16 - 900,
    )
    .unwrap()
}

fn adjustable_identity(dir: &Path) -> Check {
    let pose =
        ToolPose::from_direction(Vec3::new(2.0, -3.0, 1.0), Vec3::new(0.4, -0.3, 1.0)).map_err(|e| e.to_string())?;
    let base = pseudo_transverse_plane(&pose, 40.0, 0.5).map_err(|e| e.to_string())?;
    for theta in [0.0, 360.0] {
        let adj = adjustable_pseudo_plane(&pose, pose.tip, theta, 40.0, 0.5).map_err(|e| e.to_string())?;
        ensure!(adj == base, "θ={theta} plane differs: {adj:?} vs {base:?}");
    }

    let vol = dir.join("ramp.mvol");
    ramp_volume().save(&vol).map_err(|e| e.to_string())?;
    let render = |extra: &[&str], name: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(name);
        let mut args = vec![
            "render",
            "--volume",
            s(&vol),
            "--tip",
            "2,-3,1",
            "--axis",
            "0.4,-0.3,1",
            "--fov",
            "40",
            "--spacing",
            "0.5",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        let o = navsim(&args);
        ensure!(
            o.status.success(),
            "render {extra:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        fs::read(&out).map_err(|e| e.to_string())
    };
    let reference = render(&["--plane", "pseudo-transverse"], "pt.pgm")?;
    for theta in ["0", "360"] {
        let got = render(&["--plane", "adjustable", "--theta", theta], &format!("adj{theta}.pgm"))?;
        ensure!(got == reference, "θ={theta} PGM differs from pseudo-transverse");
    }
    Ok(())
}

fn write_scenario(dir: &Path, name: &str, label: &str, keyframes: &str) -> PathBuf {
    Volume::from_fn(
        [10, 10, 10],
        Vec3::new(4.0, 4.0, 4.0),
        Vec3::new(-18.0, -18.0, -18.0),
        Rotation::IDENTITY,
        |i, j, k| (i * 30 + j * 3 + k) as i16,
    )
    .unwrap()
    .save(&dir.join("v.mvol"))
    .unwrap();
    let text = format!(
        r#"{{
  "volume": "v.mvol",
  "trajectory": {{"keyframes": {keyframes}, "noise": {{"sigma_pos_mm": 0.2, "sigma_axis_deg": 0.2}}, "seed": 5}},
  "target": {{"center": [0, 0, 10], "radius": 4, "label": "cyst"}},
  "condition_label": "{label}",
  "view": {{"fov_mm": 32, "spacing_mm": 1}}
}}"#
    );
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn session_timeout(dir: &Path) -> Check {
    let sc = write_scenario(
        dir,
        "idle.json",
        "TO",
        r#"[{"t": 0, "tip": [0, 0, -30], "axis": [0, 0, 1]}]"#,
    );
    let log = dir.join("idle.jsonl");
    let o = navsim(&["simulate", "--scenario", s(&sc), "--out", s(&log)]);
    ensure!(
        o.status.success(),
        "simulate failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let entries = parse_log(&fs::read_to_string(&log).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let failure = entries
        .iter()
        .find(|e| e.kind == "status" && e.payload["to"] == "failure")
        .ok_or("no transition to failure logged")?;
    ensure!(failure.t == 600.0, "failure logged at {}", failure.t);
    ensure!(
        !entries.iter().any(|e| e.kind == "status"
            && e.payload["to"] != "failure"
            && e.t > 0.0
            && e.payload["to"] != "navigating"),
        "unexpected status change"
    );
    let m = metrics_of(&entries).map_err(|e| e.to_string())?;
    ensure!(m.status == Status::Failure && !m.success, "metrics {m:?}");
    ensure!(m.duration_s == 600.0, "logged duration {}", m.duration_s);
    Ok(())
}

fn engine_for(label: &str) -> Engine {
    let text = format!(
        r#"{{
            "volume": "unused.mvol",
            "trajectory": {{"keyframes": [{{"t": 0, "tip": [0, 0, -10], "axis": [0.1, 0.2, 1]}}]}},
            "target": {{"center": [0, 0, 20], "radius": 5}},
            "condition_label": "{label}",
            "view": {{"fov_mm": 24, "spacing_mm": 1}}
        }}"#
    );
    let scenario = Scenario::from_json(&text).unwrap().resolve(Path::new(".")).unwrap();
    Engine::new(scenario, Arc::new(ramp_volume()), PoseSource::Scripted).unwrap()
}

fn mode_matrix() -> Check {
    use Display::{Master, Mini};
    use Representation::*;
    use SliceKind::*;
    let ortho = [
        (Master, TripleOrtho, Transverse, false),
        (Master, TripleOrtho, Sagittal, false),
        (Master, TripleOrtho, Coronal, false),
    ];
    let double = [
        (Master, DoublePseudo, PseudoTransverse, false),
        (Master, DoublePseudo, PseudoSagittal, false),
    ];
    let single = [
        (Mini, SinglePseudo, PseudoTransverse, false),
        (Master, SinglePseudo, PseudoTransverse, true),
    ];
    let adjustable = [(Mini, AdjustablePseudo, Adjustable, false)];
    let table: [(&str, &str, Vec<_>); 6] = [
        ("TO", "standard", ortho.to_vec()),
        ("TO+iP", "double", [&ortho[..], &single[..]].concat()),
        ("TO+iPA", "distributed", [&ortho[..], &adjustable[..]].concat()),
        ("DP", "standard", double.to_vec()),
        ("iPA", "remote", adjustable.to_vec()),
        ("DP+iPA", "distributed", [&double[..], &adjustable[..]].concat()),
    ];
    for (label, mode, mut want) in table {
        ensure!(
            DisplayMode::for_condition(label).map(|m| m.name()) == Some(mode),
            "{label} is not {mode}"
        );
        let mut engine = engine_for(label);
        let reqs = engine.step().map_err(|e| e.to_string())?;
        let mut got: Vec<_> = reqs
            .iter()
            .map(|r| (r.display, r.representation, r.kind, r.mirror))
            .collect();
        let key = |x: &(Display, Representation, SliceKind, bool)| format!("{x:?}");
        got.sort_by_key(key);
        want.sort_by_key(key);
        ensure!(got == want, "{label}: got {got:?}, expected {want:?}");
        // the mirrored tile is the mini slice itself
        if let (Some(a), Some(b)) = (reqs.iter().find(|r| r.mirror), reqs.iter().find(|r| r.display == Mini)) {
            ensure!(a.plane == b.plane, "{label}: mirror shows a different plane");
        }
        for r in &reqs {
            let f = engine.render(r);
            ensure!(
                f.pixels().map_err(|e| e.to_string())?.len() == f.width_px * f.height_px,
                "{label}: bad frame"
            );
        }
    }
    Ok(())
}

/// Exact two-sided p by listing every split of the pooled sample.
fn mwu_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let u_of = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .flat_map(|p| {
                y.iter().map(move |q| {
                    if p > q {
                        1.0
                    } else if p == q {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .sum()
    };
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let observed = u_of(a, b);
    let (mut hit, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, &v) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                x.push(v)
            } else {
                y.push(v)
            }
        }
        total += 1;
        if (u_of(&x, &y) - mean).abs() >= (observed - mean).abs() - 1e-9 {
            hit += 1;
        }
    }
    (observed, f64::from(hit) / f64::from(total))
}

fn statistics() -> Check {
    let rows = vec![vec![12.0, 15.0, 19.0], vec![3.0, 4.0, 8.0], vec![30.0, 31.0, 32.0]];
    let r = friedman_test(&rows).map_err(|e| e.to_string())?;
    // rank sums 3, 6, 9: 12/(n k (k+1)) ΣR² − 3n(k+1) with n = k = 3
    let hand: f64 = 12.0 / 36.0 * (9.0 + 36.0 + 81.0) - 36.0;
    ensure!(
        (r.chi2 - 6.0).abs() < 1e-12 && (hand - 6.0).abs() < 1e-12,
        "chi2 {} (hand {hand})",
        r.chi2
    );
    ensure!(r.df == 2, "df {}", r.df);

    let sizes: Vec<(usize, usize)> = (1..8).flat_map(|a| (1..=8 - a).map(move |b| (a, b))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..50 {
        let (na, nb) = sizes[i % sizes.len()];
        // small integer values so ties show up
        let mut draw = |n: usize| (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect::<Vec<_>>();
        let (a, b) = (draw(na), draw(nb));
        let got = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
        let (u, p) = mwu_oracle(&a, &b);
        ensure!(
            got.u == u && (got.p - p).abs() < 1e-12,
            "a={a:?} b={b:?}: got U={} p={}, enumeration U={u} p={p}",
            got.u,
            got.p
        );
    }
    ensure!(sizes.len() == 28, "size pairs not covered");
    Ok(())
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let f = |rng: &mut ChaCha8Rng| rng.random_range(-1e6..1e6);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(0..12);
        (0..len)
            .map(|_| ['a', 'Z', '9', ' ', '"', '\\', 'é', '\n', '{'][rng.random_range(0..9)])
            .collect()
    };
    match rng.random_range(0..11) {
        0 => Message::Hello {
            role: if rng.random() { Role::Master } else { Role::Mini },
            proto: rng.random_range(0..4),
        },
        1 => Message::Welcome { session_id: word(rng) },
        2 => {
            let (w, h) = (rng.random_range(0..6), rng.random_range(0..6));
            let px: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
            Message::Frame(Frame {
                display: if rng.random() { Display::Master } else { Display::Mini },
                representation: [
                    Representation::TripleOrtho,
                    Representation::DoublePseudo,
                    Representation::SinglePseudo,
                    Representation::AdjustablePseudo,
                ][rng.random_range(0..4)],
                kind: [SliceKind::Transverse, SliceKind::PseudoSagittal, SliceKind::Adjustable][rng.random_range(0..3)],
                mirror: rng.random(),
                theta_deg: rng.random_range(0.0..360.0),
                width_px: w,
                height_px: h,
                spacing_mm: rng.random_range(0.1..4.0),
                pixels_b64: Frame::encode_pixels(&px),
                overlay: Default::default(),
            })
        }
        3 => Message::State(SessionState {
            status: [
                Status::Ready,
                Status::Navigating,
                Status::Success,
                Status::Failure,
                Status::Aborted,
            ][rng.random_range(0..5)],
            clock_s: rng.random_range(0.0..600.0),
            mode: word(rng),
            marked: rng.random(),
            theta_deg: rng.random_range(0.0..360.0),
            zoom: rng.random_range(0.25..4.0),
            distance_mm: rng.random::<bool>().then(|| rng.random_range(0.0..300.0)),
        }),
        4 => Message::Rotate { theta_deg: f(rng) },
        5 => Message::Zoom { factor: f(rng) },
        6 => Message::Mark,
        7 => Message::Declare,
        8 => Message::Pose {
            tip: [f(rng), f(rng), f(rng)].into(),
            axis: [f(rng), f(rng), f(rng)].into(),
        },
        9 => Message::Error {
            code: word(rng),
            detail: word(rng),
        },
        _ => Message::Ping,
    }
}

fn read_bundle(reader: &mut BufReader<TcpStream>) -> Result<(Vec<Frame>, SessionState), String> {
    let mut frames = Vec::new();
    loop {
        let mut line = Vec::new();
        ensure!(
            reader.read_until(b'\n', &mut line).map_err(|e| e.to_string())? > 0,
            "connection closed"
        );
        match wire::decode(&line).map_err(|e| e.to_string())? {
            Message::Frame(f) => frames.push(f),
            Message::State(st) => return Ok((frames, st)),
            other => return Err(format!("unexpected {other:?}")),
        }
    }
}

fn connect(addr: SocketAddr, role: Role) -> Result<(BufReader<TcpStream>, TcpStream), String> {
    let mut w = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    w.set_read_timeout(Some(Duration::from_secs(10)))
        .map_err(|e| e.to_string())?;
    let mut r = BufReader::new(w.try_clone().map_err(|e| e.to_string())?);
    w.write_all(&wire::encode(&Message::Hello { role, proto: 1 }))
        .map_err(|e| e.to_string())?;
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(|e| e.to_string())?;
    ensure!(
        matches!(wire::decode(&line), Ok(Message::Welcome { .. })),
        "no welcome: {}",
        String::from_utf8_lossy(&line)
    );
    Ok((r, w))
}

fn protocol() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for i in 0..1000 {
        let m = random_message(&mut rng);
        let bytes = wire::encode(&m);
        ensure!(
            bytes.last() == Some(&b'\n') && bytes.iter().filter(|&&b| b == b'\n').count() == 1,
            "message {i} not one line"
        );
        let back = wire::decode(&bytes).map_err(|e| format!("message {i}: {e}"))?;
        ensure!(back == m, "message {i} changed: {m:?} -> {back:?}");
    }

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let mut config = ServerConfig::new(SocketAddr::from(([127, 0, 0, 1], 0)));
    config.tick = TickMode::Manual;

    // burst of rotates collapses into one rendered mini frame
    let srv = rt
        .block_on(start(engine_for("iPA"), config.clone()))
        .map_err(|e| e.to_string())?;
    let (mut r, mut w) = connect(srv.local_addr(), Role::Mini)?;
    rt.block_on(srv.tick()).map_err(|e| e.to_string())?;
    read_bundle(&mut r)?;
    let before = srv.stats(Role::Mini).frames_rendered;
    for i in 1..=50 {
        w.write_all(&wire::encode(&Message::Rotate {
            theta_deg: f64::from(i),
        }))
        .map_err(|e| e.to_string())?;
    }
    rt.block_on(srv.wait_inputs(50));
    rt.block_on(srv.tick()).map_err(|e| e.to_string())?;
    let (frames, _) = read_bundle(&mut r)?;
    let rendered = srv.stats(Role::Mini).frames_rendered - before;
    ensure!(
        rendered == 1 && frames.len() == 1,
        "50 rotates rendered {rendered} frames"
    );
    ensure!(frames[0].theta_deg == 50.0, "frame shows θ={}", frames[0].theta_deg);
    rt.block_on(srv.shutdown());

    // a client that never reads holds at most one pending bundle
    let srv = rt
        .block_on(start(engine_for("TO+iPA"), config))
        .map_err(|e| e.to_string())?;
    let (_master_r, _master_w) = connect(srv.local_addr(), Role::Master)?;
    let (_mini_r, _mini_w) = connect(srv.local_addr(), Role::Mini)?;
    for _ in 0..200 {
        rt.block_on(srv.tick()).map_err(|e| e.to_string())?;
    }
    for role in [Role::Master, Role::Mini] {
        let st = srv.stats(role);
        ensure!(st.max_backlog <= 1, "{role:?} backlog {st:?}");
        ensure!(st.bundles_coalesced > 0, "{role:?} never fell behind: {st:?}");
    }
    rt.block_on(srv.shutdown());
    Ok(())
}

fn determinism(dir: &Path) -> Check {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let scenario = data.join("scenarios/cyst_to_ipa.json");
    let inputs = data.join("inputs/explore.jsonl");
    let mut logs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("run{run}.jsonl"));
        let o = navsim(&[
            "simulate",
            "--scenario",
            s(&scenario),
            "--inputs",
            s(&inputs),
            "--out",
            s(&out),
        ]);
        ensure!(
            o.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        logs.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(logs[0].len() > 1000, "log suspiciously short");
    ensure!(logs[0] == logs[1], "logs differ between runs");
    Ok(())
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let criteria: [Criterion; 9] = [
        ("trilinear exactness", Box::new(trilinear_exactness)),
        ("registration recovery", Box::new(registration_recovery)),
        ("pseudo-plane minimality", Box::new(pseudo_plane_minimality)),
        ("adjustable-slice identity", Box::new(|| adjustable_identity(d))),
        ("session timeout", Box::new(|| session_timeout(d))),
        ("mode conformance matrix", Box::new(mode_matrix)),
        ("statistics", Box::new(statistics)),
        ("protocol", Box::new(protocol)),
        ("determinism", Box::new(|| determinism(d))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(()) => println!("PASS  {name} ({:.2?})", t0.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
