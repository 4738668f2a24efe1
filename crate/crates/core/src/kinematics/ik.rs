//! Analytic inverse kinematics from 3D keypoints.
//!
//! Each joint with a single child receives the minimal rotation (pure swing)
//! that aligns its rest-pose bone with the observed bone, so the twist about
//! the bone axis is zero. Branching joints (pelvis, neck) take the full
//! orientation spanned by their child bones. Leaf joints that carry contact sites
//! (the ankles) are leveled to the root heading; other leaves keep identity.

use crate::body::Skeleton;
use crate::error::{Error, Result};
use crate::math::{Mat3, Quat, Vec3};

use super::decompose_root_rotation;

const MIN_BONE: f64 = 1e-9;

/// IK solution for one frame.
#[derive(Clone, Debug)]
pub struct IkFrame {
    pub root_pos: Vec3<f64>,
    /// `rots[0]` is the world root orientation, `rots[j]` the local rotation of joint `j`.
    pub rots: Vec<Quat<f64>>,
    /// Joints whose observed bone had zero length and fell back to identity.
    pub flagged: Vec<usize>,
}

/// Rotation taking the orthonormal frame built from `(a1, a2)` onto the one
/// built from `(b1, b2)`: `a1` maps exactly onto `b1`.
fn triad(a1: Vec3<f64>, a2: Vec3<f64>, b1: Vec3<f64>, b2: Vec3<f64>) -> Option<Quat<f64>> {
    let frame = |v1: Vec3<f64>, v2: Vec3<f64>| -> Option<Mat3<f64>> {
        let e1 = v1.normalized();
        let e2 = e1.cross(v2);
        if e2.norm() < MIN_BONE || !e1.x.is_finite() {
            return None;
        }
        let e2 = e2.normalized();
        let e3 = e1.cross(e2);
        // columns e1, e2, e3
        Some(Mat3 {
            m: [[e1.x, e2.x, e3.x], [e1.y, e2.y, e3.y], [e1.z, e2.z, e3.z]],
        })
    };
    let a = frame(a1, a2)?;
    let b = frame(b1, b2)?;
    Some(mat_to_quat(&b.mul_mat(&a.transpose())))
}

/// Unit quaternion of a rotation matrix.
pub fn mat_to_quat(r: &Mat3<f64>) -> Quat<f64> {
    let m = &r.m;
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = 2.0 * (tr + 1.0).sqrt();
        Quat::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
        Quat::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
    } else if m[1][1] > m[2][2] {
        let s = 2.0 * (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt();
        Quat::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
    } else {
        let s = 2.0 * (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt();
        Quat::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
    };
    q.normalized()
}

/// World orientation of joint `j` from the observed positions of its
/// children. With one child only the swing is determined; with two or more the
/// rotation about the first child bone is fixed by the others.
fn branch_orientation(skel: &Skeleton, j: usize, kp: &[Vec3<f64>]) -> Option<Quat<f64>> {
    let children = skel.children(j);
    let off = |c: usize| skel.joints[c].offset;
    let obs = |c: usize| kp[c] - kp[j];
    match children.as_slice() {
        [] => None,
        [c] => {
            let o = obs(*c);
            (o.norm() > MIN_BONE && off(*c).norm() > MIN_BONE).then(|| Quat::between(off(*c), o))
        }
        [c0, c1] => triad(off(*c0), off(*c1), obs(*c0), obs(*c1)),
        [c0, c1, c2, ..] => {
            // up: first child relative to the midpoint of the next two; lateral: their difference
            let mid_rest = (off(*c1) + off(*c2)).scale(0.5);
            let mid_obs = (kp[*c1] + kp[*c2]).scale(0.5);
            triad(
                off(*c0) - mid_rest,
                off(*c1) - off(*c2),
                kp[*c0] - mid_obs,
                kp[*c1] - kp[*c2],
            )
        }
    }
}

/// Solves one frame. `keypoints` holds one world position per skeleton joint.
pub fn solve_frame(skel: &Skeleton, keypoints: &[Vec3<f64>]) -> Result<IkFrame> {
    let n = skel.num_joints();
    if keypoints.len() != n {
        return Err(Error::Layout(format!(
            "{} keypoints for a {n}-joint skeleton",
            keypoints.len()
        )));
    }
    let mut flagged = Vec::new();
    let root = branch_orientation(skel, 0, keypoints).unwrap_or_else(|| {
        flagged.push(0);
        Quat::IDENTITY
    });
    let (heading, _) = decompose_root_rotation(&root);
    let heading = Quat::from_yaw(heading);
    let has_sites: Vec<bool> = (0..n)
        .map(|j| skel.contact_sites.iter().any(|s| s.joint == j))
        .collect();

    let mut global = vec![Quat::IDENTITY; n];
    let mut rots = vec![Quat::IDENTITY; n];
    global[0] = root;
    rots[0] = root;
    for j in 1..n {
        let parent = skel.joints[j].parent.expect("non-root joint has a parent");
        let gp = global[parent];
        let local = if skel.children(j).len() == 1 {
            // pure swing in the parent frame
            let c = skel.children(j)[0];
            let rest = skel.joints[c].offset;
            let observed = keypoints[c] - keypoints[j];
            if observed.norm() < MIN_BONE || rest.norm() < MIN_BONE {
                flagged.push(j);
                Quat::IDENTITY
            } else {
                Quat::between(rest, gp.conj().rotate(observed))
            }
        } else if let Some(world) = branch_orientation(skel, j, keypoints) {
            gp.conj().mul(&world)
        } else if !skel.children(j).is_empty() {
            flagged.push(j);
            Quat::IDENTITY
        } else if has_sites[j] {
            gp.conj().mul(&heading)
        } else {
            Quat::IDENTITY
        };
        rots[j] = local;
        global[j] = gp.mul(&local);
    }
    Ok(IkFrame {
        root_pos: keypoints[0],
        rots,
        flagged,
    })
}

/// Per-frame swing-only IK over a keypoint sequence.
pub fn swing_twist_ik(keypoints: &[Vec<Vec3<f64>>], skel: &Skeleton) -> Result<Vec<IkFrame>> {
    keypoints.iter().map(|kp| solve_frame(skel, kp)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_default_humanoid, humanoid, ScaledBody, ShapeParams};
    use crate::kinematics::{fk_unchecked, Pose};

    fn fk(skel: &Skeleton, rots: &[Quat<f64>], root: Vec3<f64>) -> Vec<Vec3<f64>> {
        let body = ScaledBody::from_shape(skel, &ShapeParams::nominal(skel));
        fk_unchecked(
            &body,
            &Pose {
                root_pos: root,
                rots: rots.to_vec(),
            },
        )
        .positions
    }

    #[test]
    fn rest_pose_gives_identity() {
        let skel = build_default_humanoid();
        let sol = solve_frame(&skel, &skel.rest_positions()).unwrap();
        assert!(sol.flagged.is_empty());
        for q in &sol.rots {
            assert!(q.angle() < 1e-9, "{q:?}");
        }
    }

    #[test]
    fn perpendicular_quarter_turn_is_pure_swing() {
        let skel = build_default_humanoid();
        let mut rots = vec![Quat::IDENTITY; skel.num_joints()];
        // knee bends 90° about +y, perpendicular to the shin (-z)
        let axis = Vec3::new(0.0, 1.0, 0.0);
        rots[humanoid::LEFT_KNEE] = Quat::from_axis_angle(axis, std::f64::consts::FRAC_PI_2);
        let kp = fk(&skel, &rots, skel.joints[0].offset);
        let sol = solve_frame(&skel, &kp).unwrap();
        let q = sol.rots[humanoid::LEFT_KNEE];
        assert!((q.angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        let v = q.vec().normalized();
        assert!((v - axis).max_abs() < 1e-9);
        let bone = skel.joints[humanoid::LEFT_ANKLE].offset.normalized();
        let (_, twist) = q.swing_twist(bone);
        assert!(twist.angle() < 1e-8);
    }

    #[test]
    fn round_trip_reproduces_bone_directions() {
        let skel = build_default_humanoid();
        let n = skel.num_joints();
        let mut rots = vec![Quat::IDENTITY; n];
        rots[0] = crate::kinematics::root_rotation(0.7, [0.1, -0.05]);
        for (j, r) in rots.iter_mut().enumerate().skip(1) {
            *r = Quat::exp(Vec3::new(0.3 * (j as f64).sin(), 0.2 * (j as f64).cos(), 0.15));
        }
        let root = Vec3::new(0.5, -1.0, 0.9);
        let kp = fk(&skel, &rots, root);
        let sol = solve_frame(&skel, &kp).unwrap();
        let back = fk(&skel, &sol.rots, sol.root_pos);
        for j in 1..n {
            let p = skel.joints[j].parent.unwrap();
            let d_in = (kp[j] - kp[p]).normalized();
            let d_out = (back[j] - back[p]).normalized();
            assert!((d_in - d_out).max_abs() < 1e-9, "joint {j}");
        }
        for j in 1..n {
            let children = skel.children(j);
            if children.len() != 1 {
                continue;
            }
            let (_, twist) = sol.rots[j].swing_twist(skel.joints[children[0]].offset);
            assert!(twist.angle() < 1e-8);
        }
    }

    #[test]
    fn collapsed_bone_is_flagged() {
        let skel = build_default_humanoid();
        let mut kp = skel.rest_positions();
        kp[humanoid::LEFT_ELBOW] = kp[humanoid::LEFT_SHOULDER];
        let sol = solve_frame(&skel, &kp).unwrap();
        assert!(sol.flagged.contains(&humanoid::LEFT_SHOULDER));
        assert_eq!(sol.rots[humanoid::LEFT_SHOULDER], Quat::IDENTITY);
    }

    #[test]
    fn matrix_quaternion_round_trip() {
        for q in [
            Quat::exp(Vec3::new(0.3, -0.2, 0.9)),
            Quat::exp(Vec3::new(3.0, 0.1, 0.0)),
            Quat::exp(Vec3::new(0.0, -3.1, 0.05)),
            Quat::exp(Vec3::new(0.02, 0.0, 3.05)),
        ] {
            let back = mat_to_quat(&q.to_mat());
            let d = if back.w * q.w + back.x * q.x + back.y * q.y + back.z * q.z < 0.0 { back.neg() } else { back };
            assert!((d.w - q.w).abs() < 1e-12 && (d.x - q.x).abs() < 1e-12);
            assert!((d.y - q.y).abs() < 1e-12 && (d.z - q.z).abs() < 1e-12);
        }
    }
}
