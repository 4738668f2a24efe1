//! Generates the synthetic scenes and writes one observation file.
//!
//! Usage: cargo run --example synthetic_scene -- [output.json]

use physmotion::body::humanoid;
use physmotion::metrics::mpjpe;
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

fn main() -> physmotion::Result<()> {
    let cfg = SynthConfig::default();
    for scene in Scene::ALL {
        let sc = generate_synthetic(scene, 6.0, 0, &cfg)?;
        let truth = &sc.truth;
        let contact = truth.in_contact.iter().filter(|c| **c).count();
        let peak = truth.forces.iter().map(|f| f.iter().map(|v| v.z).sum::<f64>()).fold(0.0, f64::max);
        let lowest = truth.positions.iter().map(|p| p[humanoid::LEFT_ANKLE].z).fold(f64::INFINITY, f64::min);
        let noisy: Vec<_> = (0..sc.noisy.num_frames()).map(|f| sc.noisy.world_keypoints(f)).collect();
        println!(
            "{scene}: {} frames, {contact} in contact, peak support {peak:.2} body weights, lowest ankle {lowest:.3} m, observation MPJPE {:.1} mm",
            truth.num_frames(),
            mpjpe(&noisy, &truth.positions)?
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        generate_synthetic(Scene::StandingSway, 10.0, 0, &cfg)?.noisy.save(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
