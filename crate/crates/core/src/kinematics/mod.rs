//! Generalized coordinates, forward kinematics and finite-difference time
//! derivatives.
//!
//! Root orientation is stored as an accumulated heading (yaw about +z) times
//! a tilt quaternion `normalize(1, x, y, 0)`, which keeps the heading free of
//! the 2π wrap of an exponential map. Joint rotations are exponential maps.
//!
//! Generalized velocities use the layout `[root linear (world), root angular
//! (body), joint 1 angular (body), ...]`, i.e. `3 + 3 * num_joints` entries.
//! Angular rates come from the quaternion logarithm of the relative rotation
//! between consecutive frames.

pub mod filter;
pub mod ik;

use crate::ad::Real;
use crate::body::ScaledBody;
use crate::error::{Error, Result};
use crate::math::{Mat3, Quat, Vec3};

pub use filter::{butterworth_lowpass, ButterworthLowpass};
pub use ik::{swing_twist_ik, IkFrame};

/// Tilt quaternion from its two free components.
pub fn tilt_quat<T: Real>(tilt: [T; 2]) -> Quat<T> {
    Quat::new(T::one(), tilt[0], tilt[1], T::zero()).normalized()
}

/// Heading times tilt.
pub fn root_rotation<T: Real>(yaw: T, tilt: [T; 2]) -> Quat<T> {
    Quat::from_yaw(yaw).mul(&tilt_quat(tilt))
}

/// Inverse of [`root_rotation`]: returns `(yaw, tilt)` with yaw in (-π, π].
/// Singular only for a rotation that turns +z fully upside down.
pub fn decompose_root_rotation(q: &Quat<f64>) -> (f64, [f64; 2]) {
    let yaw = 2.0 * q.z.atan2(q.w);
    let (s, c) = (0.5 * yaw).sin_cos();
    // q = yaw * tilt with tilt = (w', x', y', 0)
    let w = (q.w * q.w + q.z * q.z).sqrt();
    let x = c * q.x + s * q.y;
    let y = c * q.y - s * q.x;
    let yaw = if yaw > std::f64::consts::PI {
        yaw - 2.0 * std::f64::consts::PI
    } else if yaw <= -std::f64::consts::PI {
        yaw + 2.0 * std::f64::consts::PI
    } else {
        yaw
    };
    (yaw, [x / w, y / w])
}

/// Heading at every frame from the initial heading and per-frame
/// increments: `yaw[t] = yaw0 + Σ_{τ<t} increments[τ]`.
pub fn cumulative_yaw(yaw0: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len());
    let mut acc = yaw0;
    for inc in increments {
        out.push(acc);
        acc += inc;
    }
    out
}

/// Per-frame root orientation from heading increments and tilts.
pub fn compose_root_rotation(yaw0: f64, increments: &[f64], tilts: &[[f64; 2]]) -> Result<Vec<Quat<f64>>> {
    if increments.len() != tilts.len() {
        return Err(Error::Layout(format!(
            "{} yaw increments vs {} tilts",
            increments.len(),
            tilts.len()
        )));
    }
    Ok(cumulative_yaw(yaw0, increments)
        .into_iter()
        .zip(tilts)
        .map(|(yaw, tilt)| root_rotation(yaw, *tilt))
        .collect())
}

/// Configuration of one frame in optimization variables.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedCoord<T> {
    pub root_pos: Vec3<T>,
    /// Accumulated heading [rad].
    pub yaw: T,
    pub tilt: [T; 2],
    /// Exponential-map rotations of joints 1..n (index 0 unused, zero).
    pub joints: Vec<Vec3<T>>,
}

impl<T: Real> GeneralizedCoord<T> {
    pub fn rest(num_joints: usize, root_pos: Vec3<T>) -> Self {
        GeneralizedCoord {
            root_pos,
            yaw: T::zero(),
            tilt: [T::zero(); 2],
            joints: vec![Vec3::zero(); num_joints],
        }
    }

    pub fn to_pose(&self) -> Pose<T> {
        let mut rots = Vec::with_capacity(self.joints.len());
        rots.push(root_rotation(self.yaw, self.tilt));
        rots.extend(self.joints.iter().skip(1).map(|v| Quat::exp(*v)));
        Pose {
            root_pos: self.root_pos,
            rots,
        }
    }
}

/// Configuration as root position plus rotations: `rots[0]` is the root
/// orientation in the world, `rots[j]` the local rotation of joint `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose<T> {
    pub root_pos: Vec3<T>,
    pub rots: Vec<Quat<T>>,
}

impl Pose<f64> {
    pub fn rest(num_joints: usize, root_pos: Vec3<f64>) -> Self {
        Pose {
            root_pos,
            rots: vec![Quat::IDENTITY; num_joints],
        }
    }

    pub fn lift<T: Real>(&self) -> Pose<T> {
        Pose {
            root_pos: Vec3::from_f64(self.root_pos),
            rots: self.rots.iter().map(|q| Quat::from_f64(*q)).collect(),
        }
    }
}

/// World-frame kinematics of one pose.
#[derive(Clone, Debug)]
pub struct FkResult<T> {
    pub world_rots: Vec<Quat<T>>,
    pub world_mats: Vec<Mat3<T>>,
    /// Joint origins [m].
    pub positions: Vec<Vec3<T>>,
    /// Contact-site positions [m].
    pub sites: Vec<Vec3<T>>,
}

/// Forward kinematics. `pose` must have one rotation per joint.
pub fn forward_kinematics<T: Real>(body: &ScaledBody<T>, pose: &Pose<T>) -> Result<FkResult<T>> {
    if pose.rots.len() != body.num_joints() {
        return Err(Error::Layout(format!(
            "pose has {} rotations, body has {} joints",
            pose.rots.len(),
            body.num_joints()
        )));
    }
    Ok(fk_unchecked(body, pose))
}

pub(crate) fn fk_unchecked<T: Real>(body: &ScaledBody<T>, pose: &Pose<T>) -> FkResult<T> {
    let n = body.num_joints();
    let mut world_rots: Vec<Quat<T>> = Vec::with_capacity(n);
    let mut world_mats: Vec<Mat3<T>> = Vec::with_capacity(n);
    let mut positions: Vec<Vec3<T>> = Vec::with_capacity(n);
    for j in 0..n {
        match body.parents[j] {
            None => {
                world_rots.push(pose.rots[j]);
                positions.push(pose.root_pos);
            }
            Some(p) => {
                world_rots.push(world_rots[p].mul(&pose.rots[j]));
                positions.push(positions[p] + world_mats[p].mul_vec(body.offsets[j]));
            }
        }
        world_mats.push(world_rots[j].to_mat());
    }
    let sites = body
        .site_joints
        .iter()
        .zip(&body.site_offsets)
        .map(|(&j, off)| positions[j] + world_mats[j].mul_vec(*off))
        .collect();
    FkResult {
        world_rots,
        world_mats,
        positions,
        sites,
    }
}

/// `(b ⊖ a) / dt` in generalized-velocity layout.
pub fn pose_difference<T: Real>(a: &Pose<T>, b: &Pose<T>, dt: f64) -> Vec<T> {
    let inv = 1.0 / dt;
    let mut out = Vec::with_capacity(3 + 3 * a.rots.len());
    out.extend((b.root_pos - a.root_pos).scale_f(inv).to_array());
    for (qa, qb) in a.rots.iter().zip(&b.rots) {
        out.extend(qa.conj().mul(qb).log().scale_f(inv).to_array());
    }
    out
}

/// Velocity and acceleration at position `k` (0, 1 or 2) of a three-frame
/// window, using forward differences and replicating the last interior
/// derivative at the window end.
pub fn window_derivatives<T: Real>(window: [&Pose<T>; 3], k: usize, dt: f64) -> (Vec<T>, Vec<T>) {
    let v0 = pose_difference(window[0], window[1], dt);
    let v1 = pose_difference(window[1], window[2], dt);
    let acc = v0.iter().zip(&v1).map(|(a, b)| (*b - *a) / dt).collect();
    let vel = if k == 0 { v0 } else { v1 };
    (vel, acc)
}

/// Start frame of the derivative window serving frame `t` of `n`.
pub fn window_start(t: usize, n: usize) -> usize {
    t.min(n - 3)
}

/// Finite-difference velocities and accelerations of a pose sequence:
/// `v[t] = (q[t+1] ⊖ q[t]) / dt`, `a[t] = (v[t+1] - v[t]) / dt`; the last
/// frames replicate the nearest interior value.
pub fn finite_difference(poses: &[Pose<f64>], dt: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = poses.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    if !(dt > 0.0) {
        return Err(Error::validation("dt", "time step must be positive"));
    }
    let mut vel: Vec<Vec<f64>> = (0..n - 1)
        .map(|t| pose_difference(&poses[t], &poses[t + 1], dt))
        .collect();
    vel.push(vel[n - 2].clone());
    let mut acc: Vec<Vec<f64>> = (0..n - 2)
        .map(|t| vel[t].iter().zip(&vel[t + 1]).map(|(a, b)| (b - a) / dt).collect())
        .collect();
    acc.push(acc[n - 3].clone());
    acc.push(acc[n - 3].clone());
    Ok((vel, acc))
}
