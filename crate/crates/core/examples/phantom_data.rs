//! Writes the sample phantom volume, fiducial files, scenarios and input
//! scripts used by the README walkthrough.
//!
//!     cargo run -p navsim-core --example phantom_data -- data

use std::fs;
use std::path::Path;

use navsim_core::geom::{rotation_about_axis, RigidTransform, Vec3};
use navsim_core::phantom::Phantom;
use navsim_core::session::DisplayMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

fn csv(points: &[Vec3]) -> String {
    let mut s = String::from("# x,y,z (mm)\n");
    for p in points {
        s.push_str(&format!("{:.4},{:.4},{:.4}\n", p.x, p.y, p.z));
    }
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let out = Path::new(&out);
    fs::create_dir_all(out.join("scenarios"))?;
    fs::create_dir_all(out.join("inputs"))?;

    let phantom = Phantom::default();
    phantom.volume()?.save(&out.join("phantom.mvol"))?;

    // reference body ← image: the fiducials as digitized relative to the
    // phantom reference body
    let reference_from_image = RigidTransform::new(
        rotation_about_axis(Vec3::new(0.2, 1.0, 0.1).try_normalize().unwrap(), 24.0)?,
        Vec3::new(120.0, -40.0, -950.0),
    );
    let fixed = phantom.fiducials();
    let mut rng = ChaCha8Rng::seed_from_u64(2011);
    let jitter = Normal::new(0.0, 0.25)?;
    let moving: Vec<Vec3> = fixed
        .iter()
        .map(|&p| {
            let n = Vec3::new(
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
            );
            reference_from_image.apply(p) + n
        })
        .collect();
    fs::write(out.join("fiducials_image.csv"), csv(&fixed))?;
    fs::write(out.join("fiducials_reference.csv"), csv(&moving))?;

    // anterior approach to the cyst, stopping 2 mm short of its centre
    let c = phantom.cyst.center;
    let entry = Vec3::new(c.x + 8.0, -70.0, c.z + 10.0);
    let dir = (c - entry).try_normalize().expect("entry differs from target");
    let end = c - dir * 2.0;
    let hover = entry - dir * 25.0;
    let tilted = rotation_about_axis(Vec3::EZ, 6.0)?.apply(dir);

    for label in DisplayMode::CONDITION_LABELS {
        let scenario = json!({
            "volume": "../phantom.mvol",
            "registration": {"fixed": fixed, "moving": moving},
            "tool_calibration": {"rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "translation": [0, 0, -160]},
            "reference_in_tracker": {
                "rotation": [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
                "translation": [150, 20, -900]
            },
            "trajectory": {
                "keyframes": [
                    {"t": 0, "tip": hover, "axis": tilted},
                    {"t": 6, "tip": entry, "axis": dir},
                    {"t": 30, "tip": end, "axis": dir}
                ],
                "noise": {"sigma_pos_mm": 0.15, "sigma_axis_deg": 0.1},
                "seed": 7
            },
            "target": phantom.cyst,
            "condition_label": label,
            "subject": "s01",
            "view": {"fov_mm": 160, "spacing_mm": 1}
        });
        let name = label.to_lowercase().replace('+', "_");
        fs::write(
            out.join("scenarios").join(format!("cyst_{name}.json")),
            serde_json::to_string_pretty(&scenario)? + "\n",
        )?;
    }

    fs::write(out.join("inputs/declare.jsonl"), "{\"t\": 32, \"type\": \"declare\"}\n")?;
    fs::write(
        out.join("inputs/explore.jsonl"),
        concat!(
            "{\"t\": 12, \"type\": \"mark\"}\n",
            "{\"t\": 12.5, \"type\": \"rotate\", \"theta_deg\": 30}\n",
            "{\"t\": 13, \"type\": \"rotate\", \"theta_deg\": 75}\n",
            "{\"t\": 14, \"type\": \"zoom\", \"factor\": 2}\n",
            "{\"t\": 20, \"type\": \"declare\"}\n",
            "{\"t\": 31, \"type\": \"declare\"}\n"
        ),
    )?;
    println!("wrote sample data to {}", out.display());
    Ok(())
}
