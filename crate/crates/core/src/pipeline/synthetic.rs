//! Synthetic scenes with known motion and contact forces.
//!
//! Feet are planted by analytic leg IK, the pelvis is placed so that the
//! whole-body center of mass stays over the feet, and contact forces are the
//! weighted minimum-norm solution of the root equations of motion evaluated
//! with the same finite differences the objective uses. The truth is therefore
//! consistent with the dynamics term up to rounding. In the hop's flight phase
//! the body is rigid and ballistic and every contact force is exactly zero;
//! the frames around takeoff and landing keep a residual.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::body::humanoid::{self, ANKLE_HEIGHT, PELVIS_HEIGHT};
use crate::body::{apply_shape, ScaledBody, Skeleton};
use crate::dynamics::{contact_root_wrench, rnea_root, GRAVITY};
use crate::error::{Error, Result};
use crate::kinematics::{finite_difference, forward_kinematics, root_rotation, FkResult, GeneralizedCoord, Pose};
use crate::math::{solve_linear, Quat, Vec3};
use crate::pipeline::observation::{Camera, ObservationFrame, ObservationSequence};
use crate::pipeline::refine::{coord_to_vec, RefinedFrame, RefinedMotion};
use crate::spline::{force_channel, joint_channel, num_channels, MotionParams, ROOT_POS, TILT, YAW_RATE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    StandingSway,
    Squat,
    BallisticHop,
}

impl Scene {
    pub const ALL: [Scene; 3] = [Scene::StandingSway, Scene::Squat, Scene::BallisticHop];

    pub fn name(self) -> &'static str {
        match self {
            Scene::StandingSway => "standing_sway",
            Scene::Squat => "squat",
            Scene::BallisticHop => "ballistic_hop",
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scene {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scene> {
        Scene::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::validation("scene", format!("unknown scene `{s}` (standing_sway, squat, ballistic_hop)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub fps: f64,
    /// Gaussian noise on 3D keypoints [m].
    pub noise_3d: f64,
    /// Gaussian noise on 2D keypoints [px].
    pub noise_2d_px: f64,
    /// Offset of the observed root along the optical axis [m].
    pub depth_bias: f64,
    /// Scale of the observed skeleton about its root.
    pub scale_bias: f64,
    /// Uniform shape factor of the true body.
    pub subject_scale: f64,
    /// Horizontal distance of the camera from the subject [m].
    pub camera_distance: f64,
    pub camera_height: f64,
    /// Height of the point the camera looks at, above the subject's feet [m].
    pub camera_target_height: f64,
    pub focal_px: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fps: 50.0,
            noise_3d: 0.02,
            noise_2d_px: 2.0,
            depth_bias: 0.2,
            scale_bias: 1.0,
            subject_scale: 1.0,
            camera_distance: 4.0,
            camera_height: 2.0,
            camera_target_height: 0.9,
            focal_px: 1000.0,
        }
    }
}

impl SynthConfig {
    /// Same scene geometry without any observation noise or bias.
    pub fn noiseless(&self) -> SynthConfig {
        SynthConfig {
            noise_3d: 0.0,
            noise_2d_px: 0.0,
            depth_bias: 0.0,
            scale_bias: 1.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fps", self.fps),
            ("scale_bias", self.scale_bias),
            ("subject_scale", self.subject_scale),
            ("camera_distance", self.camera_distance),
            ("focal_px", self.focal_px),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if !(self.noise_3d >= 0.0 && self.noise_2d_px >= 0.0) {
            return Err(Error::validation("noise_3d", "noise levels must be non-negative"));
        }
        Ok(())
    }

    /// Camera in front of the subject (on +x) with no roll, aimed at the
    /// point `camera_target_height` above the origin.
    pub fn camera(&self) -> Camera {
        let c = Vec3::new(self.camera_distance, 0.0, self.camera_height);
        let forward = (Vec3::new(0.0, 0.0, self.camera_target_height) - c).normalized();
        let right = forward.cross(Vec3::new(0.0, 0.0, 1.0)).normalized();
        let down = forward.cross(right);
        let rotation = [right.to_array(), down.to_array(), forward.to_array()];
        let translation = std::array::from_fn(|i| -(0..3).map(|k| rotation[i][k] * c.to_array()[k]).sum::<f64>());
        Camera {
            fx: self.focal_px,
            fy: self.focal_px,
            cx: 640.0,
            cy: 360.0,
            rotation,
            translation,
        }
    }
}

/// Ground-truth motion of a synthetic scene.
#[derive(Clone, Debug)]
pub struct TruthMotion {
    pub fps: f64,
    pub coords: Vec<GeneralizedCoord<f64>>,
    /// Joint positions per frame [m].
    pub positions: Vec<Vec<Vec3<f64>>>,
    /// Contact forces per frame and site [body weights].
    pub forces: Vec<Vec<Vec3<f64>>>,
    /// Frames with the feet on the ground.
    pub in_contact: Vec<bool>,
    pub shape: Vec<f64>,
    /// The truth as spline parameters with one knot per frame.
    pub params: MotionParams,
    pub body_weight: f64,
}

impl TruthMotion {
    pub fn num_frames(&self) -> usize {
        self.coords.len()
    }

    /// The truth in the refinement export format, forces in newtons.
    pub fn to_motion(&self, skel: &Skeleton) -> RefinedMotion {
        RefinedMotion {
            fps: self.fps,
            joint_names: skel.joints.iter().map(|j| j.name.clone()).collect(),
            site_joints: skel.contact_sites.iter().map(|s| s.joint).collect(),
            frames: (0..self.num_frames())
                .map(|f| RefinedFrame {
                    q: coord_to_vec(&self.coords[f]),
                    positions: self.positions[f].iter().map(|p| p.to_array()).collect(),
                    forces: self.forces[f].iter().map(|v| v.scale(self.body_weight).to_array()).collect(),
                })
                .collect(),
            shape: self.shape.clone(),
            scale: 1.0,
            body_weight: self.body_weight,
            chunks: 1,
            optimizer_failed: false,
            pose_guard_triggered: false,
            trace: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub truth: TruthMotion,
    pub clean: ObservationSequence,
    pub noisy: ObservationSequence,
}

/// Scene-specific targets at one instant; the legs and the pelvis position
/// are solved from them.
struct Drive {
    pelvis_z: f64,
    /// Desired center-of-mass offset from the support center [m].
    com_shift: [f64; 2],
    yaw: f64,
    tilt: [f64; 2],
    /// Rotation vectors of the upper-body joints.
    upper: Vec<(usize, Vec3<f64>)>,
    /// Rise of the rigid body above the takeoff pose, during flight.
    flight: Option<f64>,
}

const STAND_DROP: f64 = 0.03;
const FOOT_HALF_SPACING: f64 = 0.10;
const HOP_PERIOD: f64 = 2.0;
const HOP_CROUCH: f64 = 0.12;
const HOP_SPEED: f64 = 1.0;
const HOP_PHASES: [f64; 4] = [0.4, 0.4, 0.25, 0.25];

fn sin_t(amp: f64, freq: f64, phase: f64, t: f64) -> f64 {
    amp * (std::f64::consts::TAU * freq * t + phase).sin()
}

/// Cosine ease from 0 to 1 over `u` in [0, 1].
fn ease(u: f64) -> f64 {
    0.5 * (1.0 - (std::f64::consts::PI * u.clamp(0.0, 1.0)).cos())
}

fn hermite(p0: f64, m0: f64, p1: f64, m1: f64, u: f64) -> f64 {
    let (u2, u3) = (u * u, u * u * u);
    (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * m1
}

fn rv(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn relaxed_arms(swing: f64, raise: f64) -> Vec<(usize, Vec3<f64>)> {
    use humanoid::*;
    vec![
        (LEFT_SHOULDER, rv(-0.12, -raise - swing, 0.0)),
        (RIGHT_SHOULDER, rv(0.12, -raise + swing, 0.0)),
        (LEFT_ELBOW, rv(0.0, -0.25 - 0.5 * raise, 0.0)),
        (RIGHT_ELBOW, rv(0.0, -0.25 - 0.5 * raise, 0.0)),
    ]
}

fn hop_flight_time() -> f64 {
    2.0 * HOP_SPEED / -GRAVITY.z
}

fn drive(scene: Scene, t: f64, stand_z: f64) -> Drive {
    use humanoid::*;
    match scene {
        Scene::StandingSway => {
            let mut upper = vec![
                (SPINE, rv(sin_t(0.03, 0.23, 0.3, t), sin_t(0.04, 0.17, 0.0, t), sin_t(0.05, 0.13, 1.0, t))),
                (NECK, rv(0.0, sin_t(0.05, 0.29, 0.7, t), sin_t(0.08, 0.11, 0.2, t))),
                (HEAD, rv(sin_t(0.02, 0.31, 0.0, t), sin_t(0.04, 0.37, 1.1, t), 0.0)),
            ];
            upper.extend(relaxed_arms(sin_t(0.15, 0.4, 0.0, t), 0.05));
            Drive {
                pelvis_z: stand_z + sin_t(0.012, 0.25, -1.2, t),
                com_shift: [sin_t(0.015, 0.2, 0.4, t), sin_t(0.02, 0.3, 0.5, t)],
                yaw: sin_t(0.05, 0.15, 0.0, t),
                tilt: [sin_t(0.01, 0.21, 0.3, t), sin_t(0.015, 0.18, 0.9, t)],
                upper,
                flight: None,
            }
        }
        Scene::Squat => {
            let depth = 0.5 * (1.0 - (std::f64::consts::TAU * t / 4.0).cos());
            let mut upper = vec![
                (SPINE, rv(0.0, 0.45 * depth, 0.0)),
                (NECK, rv(0.0, -0.2 * depth, 0.0)),
                (HEAD, rv(0.0, -0.1 * depth, 0.0)),
            ];
            upper.extend(relaxed_arms(0.0, 1.2 * depth));
            Drive {
                pelvis_z: stand_z - 0.22 * depth,
                com_shift: [0.0; 2],
                yaw: 0.0,
                tilt: [0.0, 0.1 * depth],
                upper,
                flight: None,
            }
        }
        Scene::BallisticHop => {
            let mut upper = vec![(SPINE, rv(0.0, 0.08, 0.0))];
            upper.extend(relaxed_arms(0.0, 0.1));
            let crouch_z = stand_z - HOP_CROUCH;
            let [stand, crouch, push, land] = HOP_PHASES;
            let flight_t = hop_flight_time();
            let mut u = t % HOP_PERIOD;
            let mut flight = None;
            let pelvis_z = if u < stand {
                stand_z
            } else if {
                u -= stand;
                u < crouch
            } {
                stand_z - HOP_CROUCH * ease(u / crouch)
            } else if {
                u -= crouch;
                u < push
            } {
                hermite(crouch_z, 0.0, stand_z, HOP_SPEED * push, u / push)
            } else if {
                u -= push;
                u < flight_t
            } {
                let rise = HOP_SPEED * u + 0.5 * GRAVITY.z * u * u;
                flight = Some(rise);
                stand_z + rise
            } else if {
                u -= flight_t;
                u < land
            } {
                hermite(stand_z, -HOP_SPEED * land, crouch_z, 0.0, u / land)
            } else {
                u -= land;
                crouch_z + HOP_CROUCH * ease(u / 0.4)
            };
            Drive {
                pelvis_z,
                com_shift: [0.0; 2],
                yaw: 0.0,
                tilt: [0.0; 2],
                upper,
                flight,
            }
        }
    }
}

/// Minimum hop cycle length covered by the phase table.
fn hop_cycle_length() -> f64 {
    HOP_PHASES.iter().sum::<f64>() + hop_flight_time() + 0.4
}

/// Sets hip, knee and ankle rotations so the ankle reaches `target` with the
/// foot flat and heading along `foot`; the knee bends toward the toes.
fn plant_leg(
    body: &ScaledBody<f64>,
    root: Quat<f64>,
    pelvis: Vec3<f64>,
    (hip, knee, ankle): (usize, usize, usize),
    target: Vec3<f64>,
    foot: Quat<f64>,
    rots: &mut [Quat<f64>],
) -> Result<()> {
    let h = pelvis + root.rotate(body.offsets[hip]);
    let (l1, l2) = (body.offsets[knee].norm(), body.offsets[ankle].norm());
    let d_vec = target - h;
    let d = d_vec.norm();
    if d >= l1 + l2 || d <= (l1 - l2).abs() {
        return Err(Error::validation("scene", "leg cannot reach its foot target"));
    }
    let u = d_vec.scale(1.0 / d);
    let fwd = foot.rotate(rv(1.0, 0.0, 0.0));
    let n = (fwd - u.scale(fwd.dot(u))).normalized();
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let k = h + u.scale(a) + n.scale((l1 * l1 - a * a).sqrt());
    let q_hip = Quat::between(body.offsets[knee], root.conj().rotate(k - h));
    let w_hip = root.mul(&q_hip);
    let q_knee = Quat::between(body.offsets[ankle], w_hip.conj().rotate(target - k));
    let w_knee = w_hip.mul(&q_knee);
    rots[hip] = q_hip;
    rots[knee] = q_knee;
    rots[ankle] = w_knee.conj().mul(&foot);
    Ok(())
}

fn center_of_mass(body: &ScaledBody<f64>, fk: &FkResult<f64>) -> Vec3<f64> {
    let mut acc = Vec3::ZERO;
    for (j, link) in body.links.iter().enumerate() {
        acc = acc + (fk.positions[j] + fk.world_mats[j].mul_vec(link.com)).scale(link.mass);
    }
    acc.scale(1.0 / body.total_mass)
}

struct Stance {
    ankles: [Vec3<f64>; 2],
    foot: Quat<f64>,
    support_center: Vec3<f64>,
}

impl Stance {
    fn new(scale: f64) -> Stance {
        let z = ANKLE_HEIGHT * scale;
        let ankles = [rv(0.0, FOOT_HALF_SPACING * scale, z), rv(0.0, -FOOT_HALF_SPACING * scale, z)];
        Stance {
            ankles,
            foot: Quat::IDENTITY,
            support_center: rv(humanoid::FOOT_CENTER[0] * scale, 0.0, 0.0),
        }
    }
}

/// Grounded pose for `d`: legs planted, pelvis moved horizontally until the
/// center of mass sits at the requested offset over the support.
fn grounded_pose(body: &ScaledBody<f64>, stance: &Stance, d: &Drive) -> Result<Pose<f64>> {
    use humanoid::*;
    let n = body.num_joints();
    let root = root_rotation(d.yaw, d.tilt);
    let mut pose = Pose::rest(n, Vec3::ZERO);
    pose.rots[0] = root;
    for (j, v) in &d.upper {
        pose.rots[*j] = Quat::exp(*v);
    }
    let target = [stance.support_center.x + d.com_shift[0], stance.support_center.y + d.com_shift[1]];
    let mut xy = target;
    for _ in 0..100 {
        pose.root_pos = rv(xy[0], xy[1], d.pelvis_z);
        for (leg, ankle) in [(LEFT_HIP, LEFT_KNEE, LEFT_ANKLE), (RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE)].into_iter().zip(stance.ankles) {
            plant_leg(body, root, pose.root_pos, leg, ankle, stance.foot, &mut pose.rots)?;
        }
        let com = center_of_mass(body, &forward_kinematics(body, &pose)?);
        let err = [target[0] - com.x, target[1] - com.y];
        if err[0].abs().max(err[1].abs()) < 1e-13 {
            break;
        }
        xy = [xy[0] + err[0], xy[1] + err[1]];
    }
    Ok(pose)
}

fn pose_to_coord(pose: &Pose<f64>, yaw: f64, tilt: [f64; 2]) -> GeneralizedCoord<f64> {
    let mut joints: Vec<Vec3<f64>> = pose.rots.iter().map(|q| q.log()).collect();
    joints[0] = Vec3::ZERO;
    GeneralizedCoord {
        root_pos: pose.root_pos,
        yaw,
        tilt,
        joints,
    }
}

/// Per-channel samples of a coordinate sequence; forces are left at zero.
fn channel_samples(coords: &[GeneralizedCoord<f64>], num_sites: usize, dt: f64) -> Vec<Vec<f64>> {
    let n = coords.len();
    let nj = coords[0].joints.len();
    let mut out = vec![vec![0.0; n]; num_channels(nj, num_sites)];
    for (f, c) in coords.iter().enumerate() {
        for a in 0..3 {
            out[ROOT_POS + a][f] = c.root_pos.to_array()[a];
        }
        let next = coords[(f + 1).min(n - 1)].yaw;
        out[YAW_RATE][f] = if f + 1 < n { (next - c.yaw) / dt } else { out[YAW_RATE][f - 1] };
        out[TILT][f] = c.tilt[0];
        out[TILT + 1][f] = c.tilt[1];
        for j in 1..nj {
            let ch = joint_channel(j);
            for a in 0..3 {
                out[ch + a][f] = c.joints[j].to_array()[a];
            }
        }
    }
    out
}

/// Weighted minimum-norm forces on `active` sites producing `wrench`;
/// tangential components cost more than normal ones.
fn distribute_forces(fk: &FkResult<f64>, active: &[usize], num_sites: usize, wrench: &[f64; 6]) -> Result<Vec<Vec3<f64>>> {
    const TANGENTIAL_COST: f64 = 25.0;
    let m = 3 * active.len();
    let mut cols = Vec::with_capacity(m);
    let mut unit = vec![Vec3::ZERO; num_sites];
    for &s in active {
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            unit[s] = Vec3::from_array(e);
            cols.push(contact_root_wrench(fk, &unit));
        }
        unit[s] = Vec3::ZERO;
    }
    let inv_cost: Vec<f64> = (0..m).map(|i| if i % 3 == 2 { 1.0 } else { 1.0 / TANGENTIAL_COST }).collect();
    let gram: Vec<Vec<f64>> = (0..6)
        .map(|r| (0..6).map(|c| (0..m).map(|i| cols[i][r] * inv_cost[i] * cols[i][c]).sum()).collect())
        .collect();
    let y = solve_linear(gram, wrench.to_vec()).ok_or_else(|| Error::validation("scene", "degenerate contact support"))?;
    let mut forces = vec![Vec3::ZERO; num_sites];
    for (k, &s) in active.iter().enumerate() {
        let comp: [f64; 3] = std::array::from_fn(|a| {
            let i = 3 * k + a;
            inv_cost[i] * (0..6).map(|r| cols[i][r] * y[r]).sum::<f64>()
        });
        forces[s] = Vec3::from_array(comp);
    }
    Ok(forces)
}

/// Drops pulling sites until every normal force pushes. When the remaining
/// support degenerates, which happens on frames whose derivative window
/// straddles takeoff or landing, the last solution is returned with its
/// pulling sites zeroed and the wrench is only approximately matched.
fn pushing_forces(fk: &FkResult<f64>, num_sites: usize, wrench: &[f64; 6]) -> Vec<Vec3<f64>> {
    let mut active: Vec<usize> = (0..num_sites).collect();
    let mut last = vec![Vec3::ZERO; num_sites];
    while !active.is_empty() {
        let Ok(forces) = distribute_forces(fk, &active, num_sites, wrench) else {
            break;
        };
        let before = active.len();
        active.retain(|&s| forces[s].z >= 0.0);
        last = forces;
        if active.len() == before {
            return last;
        }
    }
    last.into_iter().map(|f| if f.z > 0.0 { f } else { Vec3::ZERO }).collect()
}

fn truth_motion(skel: &Skeleton, scene: Scene, num_frames: usize, cfg: &SynthConfig) -> Result<TruthMotion> {
    let nj = skel.num_joints();
    let ns = skel.contact_sites.len();
    let dt = 1.0 / cfg.fps;
    let shape = vec![cfg.subject_scale; nj];
    let body = apply_shape(skel, &shape);
    let stance = Stance::new(cfg.subject_scale);
    let stand_z = cfg.subject_scale * PELVIS_HEIGHT - STAND_DROP;

    let takeoff = if scene == Scene::BallisticHop {
        let [stand, crouch, push, _] = HOP_PHASES;
        let mut d = drive(scene, stand + crouch + push - 1e-12, stand_z);
        d.pelvis_z = stand_z;
        Some(grounded_pose(&body, &stance, &d)?)
    } else {
        None
    };

    let mut coords = Vec::with_capacity(num_frames);
    let mut in_contact = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        let d = drive(scene, f as f64 * dt, stand_z);
        let pose = match (d.flight, &takeoff) {
            (Some(rise), Some(p)) => {
                let mut p = p.clone();
                p.root_pos.z += rise;
                p
            }
            _ => grounded_pose(&body, &stance, &d)?,
        };
        in_contact.push(d.flight.is_none());
        coords.push(pose_to_coord(&pose, d.yaw, d.tilt));
    }

    let mut params = MotionParams::from_samples(&channel_samples(&coords, ns, dt), cfg.fps, 1, nj, ns)?;
    params.yaw0 = coords[0].yaw;
    params.shape = shape.clone();

    // Re-sample so forces match the coordinates the objective will see.
    let sampled = params.sample_motion();
    let poses: Vec<Pose<f64>> = sampled.coords.iter().map(|c| c.to_pose()).collect();
    let fks = poses.iter().map(|p| forward_kinematics(&body, p)).collect::<Result<Vec<_>>>()?;
    let (vel, acc) = finite_difference(&poses, dt)?;
    let bw = body.total_mass * -GRAVITY.z;
    let mut forces = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        if !in_contact[f] {
            forces.push(vec![Vec3::ZERO; ns]);
            continue;
        }
        let w = rnea_root(&body, &fks[f], &vel[f], &acc[f], GRAVITY).map(|v| v / bw);
        forces.push(pushing_forces(&fks[f], ns, &w));
    }
    for (s, _) in skel.contact_sites.iter().enumerate() {
        let ch = force_channel(nj, s);
        for a in 0..3 {
            let samples: Vec<f64> = forces.iter().map(|fr| fr[s].to_array()[a]).collect();
            params.values[ch + a] = samples.clone();
            params.tangents[ch + a] = crate::spline::catmull_rom_tangents(&params.knot_times, &samples);
        }
    }
    Ok(TruthMotion {
        fps: cfg.fps,
        coords: sampled.coords,
        positions: fks.into_iter().map(|fk| fk.positions).collect(),
        forces,
        in_contact,
        shape,
        params,
        body_weight: bw,
    })
}

fn observe(skel: &Skeleton, truth: &TruthMotion, cfg: &SynthConfig, rng: Option<&mut ChaCha8Rng>) -> ObservationSequence {
    let camera = cfg.camera();
    let mut rng = rng;
    let mut normal = |sigma: f64| -> f64 {
        match rng.as_deref_mut() {
            Some(r) if sigma > 0.0 => sigma * r.sample::<f64, _>(StandardNormal),
            _ => 0.0,
        }
    };
    let frames = truth
        .positions
        .iter()
        .map(|pos| {
            let root_cam = camera.to_camera(pos[0]);
            let mut keypoints_3d = Vec::with_capacity(pos.len());
            let mut keypoints_2d = Vec::with_capacity(pos.len());
            let mut confidence = Vec::with_capacity(pos.len());
            for p in pos {
                let rel = camera.to_camera(*p) - root_cam;
                let obs = root_cam + rv(0.0, 0.0, cfg.depth_bias) + rel.scale(cfg.scale_bias);
                keypoints_3d.push(Some([
                    obs.x + normal(cfg.noise_3d),
                    obs.y + normal(cfg.noise_3d),
                    obs.z + normal(cfg.noise_3d),
                ]));
                match camera.project(*p) {
                    Some([u, v]) => {
                        keypoints_2d.push(Some([u + normal(cfg.noise_2d_px), v + normal(cfg.noise_2d_px)]));
                        confidence.push(1.0);
                    }
                    None => {
                        keypoints_2d.push(None);
                        confidence.push(0.0);
                    }
                }
            }
            ObservationFrame {
                keypoints_3d,
                keypoints_2d,
                confidence,
            }
        })
        .collect();
    ObservationSequence {
        fps: cfg.fps,
        joint_names: skel.joints.iter().map(|j| j.name.clone()).collect(),
        camera,
        ground_height: 0.0,
        frames,
        warnings: Vec::new(),
    }
}

/// Builds a scene of `duration` seconds on the default humanoid.
pub fn generate_synthetic(scene: Scene, duration: f64, seed: u64, cfg: &SynthConfig) -> Result<SyntheticScene> {
    generate_synthetic_with(&humanoid::build_default_humanoid(), scene, duration, seed, cfg)
}

/// Builds a scene on `skel`, which must have the default humanoid's joint layout.
pub fn generate_synthetic_with(skel: &Skeleton, scene: Scene, duration: f64, seed: u64, cfg: &SynthConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    if !(duration >= 2.0) {
        return Err(Error::validation("duration", "synthetic scenes last at least 2 s"));
    }
    if scene == Scene::BallisticHop && hop_cycle_length() > HOP_PERIOD {
        return Err(Error::validation("scene", "hop phases exceed the cycle"));
    }
    let num_frames = (duration * cfg.fps).round() as usize;
    let truth = truth_motion(skel, scene, num_frames, cfg)?;
    let clean = observe(skel, &truth, &cfg.noiseless(), None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = observe(skel, &truth, cfg, Some(&mut rng));
    Ok(SyntheticScene {
        scene,
        truth,
        clean,
        noisy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::build_default_humanoid;
    use crate::objective::{LossWeights, Objective};
    use crate::spline::sample_weights;

    fn objective(scene: &SyntheticScene) -> Objective {
        Objective::new(build_default_humanoid(), &scene.clean, LossWeights::default(), None).unwrap()
    }

    #[test]
    fn scene_names_round_trip() {
        for s in Scene::ALL {
            assert_eq!(s.to_string().parse::<Scene>().unwrap(), s);
        }
        assert!("walk".parse::<Scene>().is_err());
    }

    #[test]
    fn camera_sits_in_front_of_the_subject() {
        let cfg = SynthConfig::default();
        let cam = cfg.camera();
        let target = cam.to_camera(rv(0.0, 0.0, cfg.camera_target_height));
        assert!(target.x.abs() < 1e-12 && target.y.abs() < 1e-12 && target.z > 4.0);
        let origin = cam.to_camera(rv(cfg.camera_distance, 0.0, cfg.camera_height));
        assert!(origin.norm() < 1e-12, "{origin:?}");
        let [u, v] = cam.project(rv(0.0, 0.0, 2.0)).unwrap();
        assert!((u - 640.0).abs() < 1e-9 && v < 360.0);
    }

    #[test]
    fn standing_truth_is_physically_consistent() {
        let sc = generate_synthetic(Scene::StandingSway, 3.0, 1, &SynthConfig::default()).unwrap();
        let loss = objective(&sc).total_loss(&sc.truth.params).unwrap();
        assert!(loss.physics() < 1e-6, "{loss:?}");
        assert!(loss.pose3d < 1e-12 && loss.pose2d < 1e-12, "{loss:?}");
    }

    #[test]
    fn squat_truth_is_physically_consistent() {
        let sc = generate_synthetic(Scene::Squat, 4.0, 1, &SynthConfig::default()).unwrap();
        let loss = objective(&sc).total_loss(&sc.truth.params).unwrap();
        assert!(loss.physics() < 1e-6, "{loss:?}");
    }

    #[test]
    fn stance_forces_are_pushing_and_inside_the_cone() {
        let w = LossWeights::default();
        for scene in Scene::ALL {
            let sc = generate_synthetic(scene, 4.0, 0, &SynthConfig::default()).unwrap();
            for (f, frame) in sc.truth.forces.iter().enumerate() {
                for force in frame {
                    assert!(force.z >= 0.0, "{scene} frame {f}: {force:?}");
                    assert!(force.x.hypot(force.y) <= w.mu * force.z + 1e-15, "{scene} frame {f}: {force:?}");
                    assert!(force.norm() < w.force_cap, "{scene} frame {f}");
                }
            }
        }
    }

    #[test]
    fn hop_flight_has_exactly_zero_force() {
        let sc = generate_synthetic(Scene::BallisticHop, 2.0, 0, &SynthConfig::default()).unwrap();
        let flight: Vec<usize> = (0..sc.truth.num_frames()).filter(|&f| !sc.truth.in_contact[f]).collect();
        assert!(flight.len() >= 8, "{}", flight.len());
        let p = &sc.truth.params;
        for &f in &flight {
            assert!(sc.truth.forces[f].iter().all(|v| *v == Vec3::ZERO));
            let (rows, _) = p.sample_channels();
            let fc = force_channel(p.num_joints, 0);
            assert!(rows[f][fc..].iter().all(|v| *v == 0.0));
        }
        let (pelvis_first, pelvis_mid) = (sc.truth.positions[flight[0]][0].z, sc.truth.positions[flight[flight.len() / 2]][0].z);
        assert!(pelvis_mid > pelvis_first + 0.03);
    }

    #[test]
    fn no_site_is_below_ground() {
        let skel = build_default_humanoid();
        for scene in Scene::ALL {
            let sc = generate_synthetic(scene, 4.0, 0, &SynthConfig::default()).unwrap();
            let body = apply_shape(&skel, &sc.truth.shape);
            for c in &sc.truth.coords {
                let fk = forward_kinematics(&body, &c.to_pose()).unwrap();
                assert!(fk.sites.iter().all(|s| s.z > -1e-12), "{scene}");
            }
        }
    }

    #[test]
    fn planted_feet_stay_put() {
        let sc = generate_synthetic(Scene::Squat, 4.0, 0, &SynthConfig::default()).unwrap();
        let a0 = sc.truth.positions[0][humanoid::LEFT_ANKLE];
        for p in &sc.truth.positions {
            assert!((p[humanoid::LEFT_ANKLE] - a0).norm() < 1e-12);
        }
        let lowest = sc.truth.positions.iter().map(|p| p[0].z).fold(f64::INFINITY, f64::min);
        assert!(PELVIS_HEIGHT - STAND_DROP - lowest > 0.2);
    }

    #[test]
    fn truth_params_hit_every_frame() {
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
        let p = &sc.truth.params;
        assert_eq!(p.num_knots(), p.num_frames);
        let w = sample_weights(&p.knot_times, 7.0 / p.fps);
        assert_eq!(w.segment, 7);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let cfg = SynthConfig::default();
        let a = generate_synthetic(Scene::Squat, 2.0, 42, &cfg).unwrap();
        let b = generate_synthetic(Scene::Squat, 2.0, 42, &cfg).unwrap();
        let c = generate_synthetic(Scene::Squat, 2.0, 43, &cfg).unwrap();
        assert_eq!(a.noisy.to_json().unwrap(), b.noisy.to_json().unwrap());
        assert_ne!(a.noisy.to_json().unwrap(), c.noisy.to_json().unwrap());
        assert_eq!(a.clean.to_json().unwrap(), c.clean.to_json().unwrap());
    }

    #[test]
    fn noise_has_the_requested_level() {
        let cfg = SynthConfig {
            depth_bias: 0.0,
            scale_bias: 1.0,
            ..SynthConfig::default()
        };
        let sc = generate_synthetic(Scene::StandingSway, 4.0, 3, &cfg).unwrap();
        let mut sq = 0.0;
        let mut count = 0;
        for (a, b) in sc.noisy.frames.iter().zip(&sc.clean.frames) {
            for (p, q) in a.keypoints_3d.iter().zip(&b.keypoints_3d) {
                let (p, q) = (p.unwrap(), q.unwrap());
                sq += (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>();
                count += 3;
            }
        }
        let sigma = (sq / count as f64).sqrt();
        assert!((sigma - cfg.noise_3d).abs() < 0.1 * cfg.noise_3d, "{sigma}");
    }

    #[test]
    fn short_duration_is_rejected() {
        assert!(generate_synthetic(Scene::Squat, 1.5, 0, &SynthConfig::default()).is_err());
    }
}
