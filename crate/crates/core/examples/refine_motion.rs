//! Refines a noisy synthetic standing clip with and without the physics
//! stage, prints both evaluations and exports the physics result.
//!
//! Usage: cargo run --release --example refine_motion -- [output.json|output.csv]

use physmotion::body::build_default_humanoid;
use physmotion::metrics::{metric_subset, MetricsReport, METRIC_FEET};
use physmotion::pipeline::config::Config;
use physmotion::pipeline::refine::refine;
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    let sc = generate_synthetic(Scene::StandingSway, 10.0, 0, &SynthConfig::default())?;
    let truth: Vec<_> = sc.truth.positions.iter().map(|f| metric_subset(f)).collect();

    let mut kinematic = Config::default();
    kinematic.pipeline.enable_physics = false;
    let mut reports = Vec::new();
    for (name, cfg) in [("kinematic only", kinematic), ("with physics", Config::default())] {
        let start = std::time::Instant::now();
        let out = refine(&sc.noisy, &skel, &cfg)?;
        let pred: Vec<_> = out.motion.joint_positions().iter().map(|f| metric_subset(f)).collect();
        let report = MetricsReport::evaluate(&pred, &truth, &METRIC_FEET, sc.noisy.fps)?;
        println!("{name} ({:.1} s)\n{report}", start.elapsed().as_secs_f64());
        reports.push((report, out));
    }
    let ratio = reports[1].0.e_foot_z / reports[0].0.e_foot_z;
    println!("foot height error ratio physics / kinematic: {ratio:.2}");
    if let Some(path) = std::env::args().nth(1) {
        reports[1].1.motion.export(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
