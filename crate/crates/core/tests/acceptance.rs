//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use physmotion::body::{build_default_humanoid, humanoid, ScaledBody, ShapeParams, Skeleton};
use physmotion::dynamics::{bias_oracle, mass_matrix_oracle, rnea, GRAVITY};
use physmotion::gradient::{finite_difference_gradient, value_and_gradient, Layout};
use physmotion::kinematics::{forward_kinematics, GeneralizedCoord, Pose};
use physmotion::lbfgs::{minimize, two_stage_refine, LbfgsConfig, TraceRow};
use physmotion::math::Vec3;
use physmotion::metrics::{self, metric_subset, MetricsReport, METRIC_FEET};
use physmotion::objective::{contact_variable, l_friction_site, LossWeights, Objective};
use physmotion::pipeline::config::Config;
use physmotion::pipeline::init::initialize;
use physmotion::pipeline::refine::{refine, RefineReport};
use physmotion::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};
use physmotion::spline::force_channel;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Traces of every pipeline run, for the optimizer conformance check.
#[derive(Default)]
struct Runs {
    traces: Vec<(String, Vec<TraceRow>)>,
}

impl Runs {
    fn record(&mut self, name: &str, report: &RefineReport) {
        for (i, c) in report.chunks.iter().enumerate() {
            self.traces.push((format!("{name}/chunk{i}"), c.outcome.trace.clone()));
        }
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let skel = build_default_humanoid();
    let mut sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
    sc.noisy.frames.truncate(50);
    let mut params = initialize(&sc.noisy, &skel, &Config::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for ch in params.values.iter_mut() {
        ch.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    }
    for ch in params.tangents.iter_mut() {
        ch.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    params.shape.iter_mut().for_each(|f| *f = rng.random_range(0.9..1.1));
    params.scale = 1.03;
    let obj = Objective::new(skel.clone(), &sc.noisy, LossWeights::default(), None).unwrap();
    let (_, g) = value_and_gradient(&obj, &params).unwrap();
    let fd = finite_difference_gradient(&obj, &params, 1e-5).unwrap();

    let l = Layout::of(&params);
    let fc = force_channel(params.num_joints, 0);
    let mut classes: Vec<(&str, Vec<usize>)> = vec![
        ("values", Vec::new()),
        ("tangents", Vec::new()),
        ("forces", Vec::new()),
        ("shape", (l.shape()..l.scale()).collect()),
        ("scale", vec![l.scale()]),
        ("heading", vec![l.yaw0()]),
    ];
    for c in 0..l.num_channels {
        for k in 0..l.num_knots {
            if c >= fc {
                classes[2].1.extend([l.value(c, k), l.tangent(c, k)]);
            } else {
                classes[0].1.push(l.value(c, k));
                classes[1].1.push(l.tangent(c, k));
            }
        }
    }
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, idx) in &classes {
        let scale = idx.iter().fold(0.0f64, |m, &i| m.max(fd[i].abs())).max(1e-12);
        let err = idx.iter().fold(0.0f64, |m, &i| m.max((g[i] - fd[i]).abs())) / scale;
        worst = worst.max(err);
        parts.push(format!("{name} {err:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("{} variables; max rel error {worst:.2e} ({}); {secs:.1} s", g.len(), parts.join(", ")),
    )
}

fn random_coord(rng: &mut ChaCha8Rng, n: usize) -> Pose<f64> {
    let mut c = GeneralizedCoord::rest(n, Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0));
    c.yaw = rng.random_range(-3.0..3.0);
    c.tilt = [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)];
    for j in 1..n {
        c.joints[j] = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    c.to_pose()
}

fn inverse_dynamics_oracle() -> Outcome {
    let skel = build_default_humanoid();
    let body = ScaledBody::from_shape(&skel, &ShapeParams::nominal(&skel));
    let n = body.num_joints();
    let dof = 3 + 3 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let fk = forward_kinematics(&body, &random_coord(&mut rng, n)).unwrap();
        let vel: Vec<f64> = (0..dof).map(|_| rng.random_range(-2.0..2.0)).collect();
        let acc: Vec<f64> = (0..dof).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = mass_matrix_oracle(&body, &fk);
        let bias = bias_oracle(&body, &fk, &vel, GRAVITY);
        let got = rnea(&body, &fk, &vel, &acc, GRAVITY).0;
        let mut num = 0.0;
        let mut den = 0.0;
        for r in 0..dof {
            let expect = m[r].iter().zip(&acc).map(|(a, x)| a * x).sum::<f64>() + bias[r];
            num += (got[r] - expect).powi(2);
            den += expect * expect;
        }
        worst = worst.max((num / den).sqrt());
    }

    let zero = vec![0.0; dof];
    let fk = forward_kinematics(&body, &Pose::rest(n, Vec3::new(0.0, 0.0, humanoid::PELVIS_HEIGHT))).unwrap();
    let f = rnea(&body, &fk, &zero, &zero, GRAVITY);
    let mg = body.total_mass * 9.81;
    let com = (0..n).fold(Vec3::ZERO, |a, i| a + (fk.positions[i] + fk.world_mats[i].mul_vec(body.links[i].com)).scale(body.links[i].mass))
        .scale(1.0 / body.total_mass);
    let torque = (com - fk.positions[0]).cross(Vec3::new(0.0, 0.0, mg));
    let static_err = (f.root_force() - Vec3::new(0.0, 0.0, mg)).norm().max((f.root_torque() - fk.world_mats[0].tr_mul_vec(torque)).norm()) / mg;

    let fk = forward_kinematics(&body, &random_coord(&mut rng, n)).unwrap();
    let mut acc = zero.clone();
    acc[..3].copy_from_slice(&GRAVITY.to_array());
    let fall = rnea(&body, &fk, &zero, &acc, GRAVITY).0.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    outcome(
        worst < 1e-8 && static_err < 1e-8 && fall < 1e-8,
        format!("rnea vs M/bias max rel {worst:.1e}; static standing rel {static_err:.1e}; free-fall residual {fall:.1e}"),
    )
}

fn contact_model() -> Outcome {
    let w = LossWeights::default();
    let grid: Vec<f64> = (0..1000).map(|i| contact_variable(i as f64 * 2.0 / 999.0, w.k1, w.k2)).collect();
    let monotone = grid.windows(2).all(|p| p[1] >= p[0]);
    let c0 = contact_variable(0.0, w.k1, w.k2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut inside_ok, mut outside_ok) = (true, true);
    for _ in 0..1000 {
        let fz: f64 = rng.random_range(0.01..1.0);
        let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let inside = fz * w.mu * rng.random_range(0.0..0.99);
        let outside = fz * w.mu * rng.random_range(1.01..5.0);
        inside_ok &= l_friction_site(Vec3::new(inside * dir.cos(), inside * dir.sin(), fz), &w) == 0.0;
        outside_ok &= l_friction_site(Vec3::new(outside * dir.cos(), outside * dir.sin(), fz), &w) > 0.0;
    }
    outcome(
        monotone && c0 < 1e-4 && inside_ok && outside_ok,
        format!("monotone on 1000 points: {monotone}; c(0) = {c0:.2e}; friction zero inside cone: {inside_ok}, positive outside: {outside_ok}"),
    )
}

fn evaluate(report: &RefineReport, truth: &[Vec<Vec3<f64>>], fps: f64) -> MetricsReport {
    let subset = |s: &[Vec<Vec3<f64>>]| -> Vec<Vec<Vec3<f64>>> { s.iter().map(|f| metric_subset(f)).collect() };
    MetricsReport::evaluate(&subset(&report.motion.joint_positions()), &subset(truth), &METRIC_FEET, fps).unwrap()
}

fn ablation(skel: &Skeleton, runs: &mut Runs) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scene in [Scene::StandingSway, Scene::Squat] {
        let start = Instant::now();
        let sc = generate_synthetic(scene, 10.0, 0, &SynthConfig::default()).unwrap();
        let mut kin_cfg = Config::default();
        kin_cfg.pipeline.enable_physics = false;
        let kin = refine(&sc.noisy, skel, &kin_cfg).unwrap();
        let phys = refine(&sc.noisy, skel, &Config::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        runs.record(&format!("{scene}/kinematic"), &kin);
        runs.record(&format!("{scene}/physics"), &phys);
        let a = evaluate(&kin, &sc.truth.positions, sc.noisy.fps);
        let b = evaluate(&phys, &sc.truth.positions, sc.noisy.fps);
        let dz = 1.0 - b.e_foot_z / a.e_foot_z;
        let dv = 1.0 - b.e_foot_vxy / a.e_foot_vxy;
        let dm = b.mpjpe / a.mpjpe - 1.0;
        let ok = dz >= 0.6 && dv >= 0.3 && dm <= 0.1 && secs < 300.0;
        pass &= ok;
        parts.push(format!(
            "{scene}: e_foot_z {:.1}->{:.1} mm ({:+.0}%), e_foot_vxy {:.3}->{:.3} mm/frame ({:+.0}%), MPJPE {:.1}->{:.1} mm ({:+.0}%), {secs:.0} s{}",
            a.e_foot_z,
            b.e_foot_z,
            -100.0 * dz,
            a.e_foot_vxy,
            b.e_foot_vxy,
            -100.0 * dv,
            a.mpjpe,
            b.mpjpe,
            100.0 * dm,
            if ok { "" } else { " [short]" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn fixed_point(skel: &Skeleton, runs: &mut Runs) -> Outcome {
    let sc = generate_synthetic(Scene::StandingSway, 4.0, 0, &SynthConfig::default()).unwrap();
    let cfg = Config::default();
    let obj = Objective::new(skel.clone(), &sc.clean, cfg.weights.clone(), None).unwrap();
    let physics = obj.total_loss(&sc.truth.params).unwrap().physics();
    let out = two_stage_refine(&obj, &sc.truth.params, &cfg.optimizer, true).unwrap();
    runs.traces.push(("fixed_point".into(), out.trace.clone()));
    let body = ScaledBody::from_shape(skel, &ShapeParams(out.params.shape.clone()));
    let refined: Vec<Vec<Vec3<f64>>> =
        out.params.sample_motion().coords.iter().map(|c| forward_kinematics(&body, &c.to_pose()).unwrap().positions).collect();
    let change = metrics::mpjpe(&refined, &sc.truth.positions).unwrap();
    outcome(physics < 1e-6 && change < 2.0, format!("physics loss at truth {physics:.1e}; MPJPE change after refinement {change:.2} mm"))
}

fn optimizer_conformance(runs: &Runs) -> Outcome {
    let cfg = LbfgsConfig::default();
    let a = [1.0, -2.0, 3.0, 0.5];
    let q = minimize(
        |x: &[f64]| {
            let g: Vec<f64> = x.iter().zip(&a).map(|(x, a)| x - a).collect();
            Ok((0.5 * g.iter().map(|v| v * v).sum::<f64>(), g))
        },
        vec![0.0; 4],
        &cfg,
    )
    .unwrap();
    let q_err = q.x.iter().zip(&a).fold(0.0f64, |m, (x, a)| m.max((x - a).abs()));
    let r = minimize(
        |x: &[f64]| {
            let (u, v) = (x[0], x[1]);
            Ok((
                (1.0 - u).powi(2) + 100.0 * (v - u * u).powi(2),
                vec![-2.0 * (1.0 - u) - 400.0 * u * (v - u * u), 200.0 * (v - u * u)],
            ))
        },
        vec![-1.2, 1.0],
        &cfg,
    )
    .unwrap();
    let r_err = (r.x[0] - 1.0).abs().max((r.x[1] - 1.0).abs());
    let mut monotone = true;
    let mut cleared = true;
    let mut two_stage = 0;
    for (_, t) in &runs.traces {
        monotone &= t.windows(2).filter(|w| w[0].stage == w[1].stage).all(|w| w[1].loss.total <= w[0].loss.total);
        if let Some(b) = t.iter().position(|r| r.stage == 2).filter(|&b| b > 0) {
            two_stage += 1;
            cleared &= t[b - 1].history_len > 0 && t[b].history_len == 0 && t.get(b + 1).is_none_or(|r| r.history_len > 0);
        }
    }
    outcome(
        q_err < 1e-10 && q.iterations() <= 3 && r_err < 1e-6 && r.iterations() < 100 && monotone && cleared && two_stage > 0,
        format!(
            "quadratic {:.0e} in {} iterations; Rosenbrock {:.0e} in {} iterations; {} traces monotone: {monotone}; history cleared at {two_stage} stage boundaries: {cleared}",
            q_err,
            q.iterations(),
            r_err,
            r.iterations(),
            runs.traces.len()
        ),
    )
}

fn throughput(skel: &Skeleton, runs: &mut Runs) -> Outcome {
    let sc = generate_synthetic(Scene::StandingSway, 40.0, 0, &SynthConfig::default()).unwrap();
    let start = Instant::now();
    let report = refine(&sc.noisy, skel, &Config::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    runs.record("throughput", &report);
    let full = report.chunks.iter().all(|c| c.outcome.stages.len() == 2);
    outcome(
        secs < 600.0 && full,
        format!("{} frames, {} chunk(s), both stages run: {full}; {secs:.0} s", sc.noisy.num_frames(), report.chunks.len()),
    )
}

fn metric_examples() -> Outcome {
    let zero = || vec![vec![Vec3::ZERO; 15]; 10];
    let feet = &METRIC_FEET;
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    let r = zero();
    checks.push(("mpjpe identical", metrics::mpjpe(&r, &r).unwrap(), 0.0));
    let shifted: Vec<Vec<Vec3<f64>>> = r.iter().map(|f| f.iter().map(|p| *p + Vec3::new(0.3, -0.2, 0.1)).collect()).collect();
    checks.push(("mpjpe translated", metrics::mpjpe(&shifted, &r).unwrap(), 0.0));
    let mut one = zero();
    one.iter_mut().for_each(|f| f[3] = Vec3::new(0.015, 0.0, 0.0));
    checks.push(("mpjpe one joint 15 mm", metrics::mpjpe(&one, &r).unwrap(), 1.0));
    let mut root = zero();
    root.iter_mut().for_each(|f| f.iter_mut().for_each(|p| *p = Vec3::new(0.0851, 0.0, 0.0)));
    checks.push(("root 85.1 mm", metrics::global_root_error(&root, &r).unwrap(), 85.1));
    let mut half = zero();
    half.iter_mut().take(5).for_each(|f| f[0] = Vec3::new(0.0, 0.01, 0.0));
    checks.push(("root half frames", metrics::global_root_error(&half, &r).unwrap(), 5.0));
    let mut jitter = zero();
    jitter.iter_mut().enumerate().for_each(|(t, f)| f[4] = Vec3::new(if t % 2 == 0 { 0.001 } else { -0.001 }, 0.0, 0.0));
    checks.push(("e_smooth jitter", metrics::smoothness_error(&jitter, &r).unwrap().0, 2.0 / 15.0));
    checks.push(("e_smooth translated", metrics::smoothness_error(&shifted, &r).unwrap().0, 0.0));
    let mut hover = zero();
    hover.iter_mut().for_each(|f| feet.iter().for_each(|&j| f[j].z = 0.0189));
    checks.push(("e_foot_z 18.9", metrics::foot_z_error(&hover, &r, feet).unwrap(), 18.9));
    let mut slide = zero();
    slide.iter_mut().enumerate().for_each(|(t, f)| feet.iter().for_each(|&j| f[j].x = 0.00271 * t as f64));
    checks.push(("e_foot_vxy 2.71", metrics::foot_vxy_error(&slide, &r, feet).unwrap(), 2.71));
    checks.push(("foot metrics identical", metrics::foot_z_error(&r, &r, feet).unwrap() + metrics::foot_vxy_error(&r, &r, feet).unwrap(), 0.0));
    let failed: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-9 * want.abs().max(1.0))
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    outcome(failed.is_empty(), if failed.is_empty() { format!("{} examples exact to 1e-9", checks.len()) } else { failed.join("; ") })
}

fn determinism(skel: &Skeleton) -> Outcome {
    let run = || {
        let sc = generate_synthetic(Scene::Squat, 3.0, 9, &SynthConfig::default()).unwrap();
        let report = refine(&sc.noisy, skel, &Config::default()).unwrap();
        let mut trace = Vec::new();
        report.write_trace(&mut trace).unwrap();
        let mut csv = Vec::new();
        report.motion.write_csv(&mut csv).unwrap();
        (report.motion.to_json().unwrap(), csv, trace)
    };
    let (a, b) = (run(), run());
    let same = a == b;
    outcome(same, format!("JSON export {} bytes, CSV {} bytes, trace {} bytes; identical: {same}", a.0.len(), a.1.len(), a.2.len()))
}

fn main() -> ExitCode {
    let skel = build_default_humanoid();
    let mut runs = Runs::default();
    let mut results = Vec::new();
    let mut check = |id: usize, name: &str, f: &mut dyn FnMut(&mut Runs) -> Outcome| {
        let start = Instant::now();
        let o = f(&mut runs);
        println!(
            "[{}] {id}. {name}: {} ({:.0} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push(o.pass);
    };
    check(1, "gradient fidelity", &mut |_| gradient_fidelity());
    check(2, "inverse dynamics oracle", &mut |_| inverse_dynamics_oracle());
    check(3, "contact model", &mut |_| contact_model());
    check(4, "two-stage ablation", &mut |r| ablation(&skel, r));
    check(5, "physics-consistent fixed point", &mut |r| fixed_point(&skel, r));
    check(7, "throughput", &mut |r| throughput(&skel, r));
    check(6, "optimizer conformance", &mut |r| optimizer_conformance(r));
    check(8, "metric examples", &mut |_| metric_examples());
    check(9, "determinism", &mut |_| determinism(&skel));
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
