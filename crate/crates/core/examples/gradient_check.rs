//! Compares the analytic gradient of the full objective with central
//! differences on a short clip.

use physmotion::body::build_default_humanoid;
use physmotion::gradient::{finite_difference_gradient, value_and_gradient};
use physmotion::objective::Objective;
use physmotion::pipeline::config::Config;
use physmotion::pipeline::init::initialize;
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    let mut sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default())?;
    sc.noisy.frames.truncate(32);
    let cfg = Config::default();
    let params = initialize(&sc.noisy, &skel, &cfg)?;
    let obj = Objective::new(skel, &sc.noisy, cfg.weights, None)?;
    let start = std::time::Instant::now();
    let (loss, g) = value_and_gradient(&obj, &params)?;
    let analytic = start.elapsed();
    let fd = finite_difference_gradient(&obj, &params, 1e-5)?;
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    println!("loss {:.4e}, {} variables", loss.total, g.len());
    println!("analytic gradient in {analytic:?}; max relative deviation from central differences {err:.2e}");
    Ok(())
}
