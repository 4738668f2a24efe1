use physmotion::body::build_default_humanoid;
use physmotion::lbfgs::{two_stage_refine, OptimizerConfig, Termination};
use physmotion::metrics::mpjpe;
use physmotion::objective::{LossWeights, Objective, TermMask};
use physmotion::pipeline::config::Config;
use physmotion::pipeline::refine::refine;
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

#[test]
fn optimal_input_stops_both_stages_at_once() {
    let skel = build_default_humanoid();
    let sc = generate_synthetic(Scene::StandingSway, 2.0, 3, &SynthConfig::default()).unwrap();
    let weights = LossWeights {
        w_p_acc: 0.0,
        w_theta_acc: 0.0,
        w_gmm: 0.0,
        w_beta: 0.0,
        ..LossWeights::default()
    };
    let obj = Objective::new(skel, &sc.clean, weights, None).unwrap();
    let out = two_stage_refine(&obj, &sc.truth.params, &OptimizerConfig::default(), true).unwrap();
    assert_eq!(out.stages.len(), 2);
    for s in &out.stages {
        assert!(s.iterations <= 2, "stage {} ran {} iterations", s.stage, s.iterations);
        assert_ne!(s.termination, Termination::MaxIterations);
    }
    let moved = out
        .params
        .values
        .iter()
        .flatten()
        .zip(sc.truth.params.values.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(moved < 1e-6, "{moved}");
}

#[test]
fn physics_stage_halves_the_physics_loss() {
    let skel = build_default_humanoid();
    let sc = generate_synthetic(Scene::StandingSway, 4.0, 1, &SynthConfig::default()).unwrap();
    let report = refine(&sc.noisy, &skel, &Config::default()).unwrap();
    let chunk = &report.chunks[0];
    let obj = Objective::new(skel.clone(), &sc.noisy, Config::default().weights, None)
        .unwrap()
        .with_terms(TermMask::all());
    let before = obj.total_loss(chunk.outcome.kinematic_params.as_ref().unwrap()).unwrap().physics();
    let after = obj.total_loss(&chunk.outcome.params).unwrap().physics();
    assert!(after < 0.5 * before, "{after} vs {before}");

    let trace = &chunk.outcome.trace;
    for w in trace.windows(2).filter(|w| w[0].stage == w[1].stage) {
        assert!(w[1].loss.total <= w[0].loss.total);
    }
    let boundary = trace.iter().position(|r| r.stage == 2).unwrap();
    assert!(trace[boundary - 1].history_len > 0);
    assert_eq!(trace[boundary].history_len, 0);
    assert!(trace[boundary + 5].history_len > 0);

    let e = mpjpe(&report.motion.joint_positions(), &sc.truth.positions).unwrap();
    assert!(e < 40.0, "{e} mm");
}
