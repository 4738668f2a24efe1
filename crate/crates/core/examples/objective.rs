//! Loss breakdown of the initialization and of the ground truth on the same
//! noisy observations.

use physmotion::body::build_default_humanoid;
use physmotion::objective::Objective;
use physmotion::pipeline::config::Config;
use physmotion::pipeline::init::initialize;
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    let sc = generate_synthetic(Scene::Squat, 4.0, 0, &SynthConfig::default())?;
    let cfg = Config::default();
    let obj = Objective::new(skel.clone(), &sc.noisy, cfg.weights.clone(), None)?;
    let init = initialize(&sc.noisy, &skel, &cfg)?;
    for (name, params) in [("initialization", &init), ("ground truth", &sc.truth.params)] {
        let b = obj.total_loss(params)?;
        println!("{name}:");
        for (term, v) in physmotion::objective::TERM_NAMES.iter().zip(b.terms()) {
            println!("  {term:<12} {v:.3e}");
        }
        println!("  {:<12} {:.3e}", "total", b.total);
    }
    Ok(())
}
