//! Kinematic initialization: filtered keypoints, IK, heading decomposition
//! and Catmull-Rom spline channels.

use crate::body::{Skeleton, ScaledBody, ShapeParams};
use crate::error::{Error, Result};
use crate::kinematics::filter::butterworth_lowpass;
use crate::kinematics::ik::swing_twist_ik;
use crate::kinematics::{decompose_root_rotation, forward_kinematics, Pose};
use crate::math::Vec3;
use crate::pipeline::config::Config;
use crate::pipeline::observation::ObservationSequence;
use crate::spline::{force_channel, joint_channel, num_channels, MotionParams, ROOT_POS, TILT, YAW_RATE};

/// World keypoints per frame with unobserved entries filled by linear
/// interpolation in time (held constant past the ends).
pub fn fill_missing(obs: &ObservationSequence) -> Result<Vec<Vec<Vec3<f64>>>> {
    let n = obs.num_frames();
    let mut kp: Vec<Vec<Vec3<f64>>> = (0..n).map(|f| obs.world_keypoints(f)).collect();
    for j in 0..obs.joint_names.len() {
        let seen: Vec<usize> = (0..n).filter(|&f| obs.frames[f].confidence[j] > 0.0).collect();
        let (Some(&first), Some(&last)) = (seen.first(), seen.last()) else {
            return Err(Error::validation(format!("joint_names[{j}]"), format!("joint `{}` is never observed", obs.joint_names[j])));
        };
        let mut prev = first;
        for f in 0..n {
            if obs.frames[f].confidence[j] > 0.0 {
                prev = f;
                continue;
            }
            kp[f][j] = if f < first {
                kp[first][j]
            } else if f > last {
                kp[last][j]
            } else {
                let next = (f..=last).find(|&g| obs.frames[g].confidence[j] > 0.0).unwrap_or(last);
                let u = (f - prev) as f64 / (next - prev) as f64;
                kp[prev][j].scale(1.0 - u) + kp[next][j].scale(u)
            };
        }
    }
    Ok(kp)
}

fn lowpass(kp: &[Vec<Vec3<f64>>], cfg: &Config, fps: f64) -> Result<Vec<Vec<Vec3<f64>>>> {
    let n = kp.len();
    let nj = kp[0].len();
    let channels: Vec<Vec<f64>> = (0..3 * nj).map(|c| kp.iter().map(|fr| fr[c / 3].to_array()[c % 3]).collect()).collect();
    let p = &cfg.pipeline;
    let filtered = butterworth_lowpass(&channels, p.filter_cutoff_hz, p.filter_order, fps)?;
    Ok((0..n)
        .map(|f| (0..nj).map(|j| Vec3::new(filtered[3 * j][f], filtered[3 * j + 1][f], filtered[3 * j + 2][f])).collect())
        .collect())
}

/// Unwraps a heading sequence so consecutive values differ by less than π.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out: Vec<f64> = Vec::with_capacity(angles.len());
    let mut offset = 0.0f64;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let d = a + offset - out[i - 1];
            if d > PI {
                offset -= TAU * ((d - PI) / TAU).ceil();
            } else if d < -PI {
                offset += TAU * ((-d - PI) / TAU).ceil();
            }
        }
        out.push(a + offset);
    }
    out
}

/// Initial motion parameters from observations: low-pass filtered keypoints,
/// swing-only IK, heading-rate root decomposition and spline fitting. Sites
/// within `contact_init_height` of the ground share one body weight of
/// vertical force; the others start at zero.
pub fn initialize(obs: &ObservationSequence, skel: &Skeleton, cfg: &Config) -> Result<MotionParams> {
    cfg.validate()?;
    let obs = obs.aligned_to(skel)?;
    let n = obs.num_frames();
    let sub = cfg.pipeline.subsample;
    if n < (2 * sub).max(3) {
        return Err(Error::TooShort {
            needed: (2 * sub).max(3),
            got: n,
        });
    }
    let kp = lowpass(&fill_missing(&obs)?, cfg, obs.fps)?;
    let ik = swing_twist_ik(&kp, skel)?;
    for (f, fr) in ik.iter().enumerate() {
        if !fr.flagged.is_empty() {
            log::warn!("frame {f}: degenerate bones at joints {:?}", fr.flagged);
        }
    }

    let nj = skel.num_joints();
    let ns = skel.contact_sites.len();
    let dt = 1.0 / obs.fps;
    let mut samples = vec![vec![0.0; n]; num_channels(nj, ns)];
    let decomposed: Vec<(f64, [f64; 2])> = ik.iter().map(|fr| decompose_root_rotation(&fr.rots[0])).collect();
    let yaws = unwrap_angles(&decomposed.iter().map(|d| d.0).collect::<Vec<_>>());
    let body = ScaledBody::from_shape(skel, &ShapeParams::nominal(skel));
    for (f, fr) in ik.iter().enumerate() {
        for (a, v) in fr.root_pos.to_array().into_iter().enumerate() {
            samples[ROOT_POS + a][f] = v;
        }
        samples[YAW_RATE][f] = if f + 1 < n { (yaws[f + 1] - yaws[f]) / dt } else { samples[YAW_RATE][f - 1] };
        samples[TILT][f] = decomposed[f].1[0];
        samples[TILT + 1][f] = decomposed[f].1[1];
        for j in 1..nj {
            let c = joint_channel(j);
            for (a, v) in fr.rots[j].log().to_array().into_iter().enumerate() {
                samples[c + a][f] = v;
            }
        }
        let pose = Pose {
            root_pos: fr.root_pos,
            rots: fr.rots.clone(),
        };
        let fk = forward_kinematics(&body, &pose)?;
        let near: Vec<usize> = (0..ns)
            .filter(|&s| fk.sites[s].z - obs.ground_height < cfg.pipeline.contact_init_height)
            .collect();
        for &s in &near {
            samples[force_channel(nj, s) + 2][f] = 1.0 / near.len() as f64;
        }
    }
    let mut params = MotionParams::from_samples(&samples, obs.fps, sub, nj, ns)?;
    params.yaw0 = yaws[0];
    params.optimize_knot_times = cfg.pipeline.optimize_knot_times;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::build_default_humanoid;
    use crate::metrics::mpjpe;
    use crate::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};
    use crate::spline::force_channel;

    fn init_positions(params: &MotionParams, skel: &Skeleton) -> Vec<Vec<Vec3<f64>>> {
        let body = ScaledBody::from_shape(skel, &ShapeParams(params.shape.clone()));
        params
            .sample_motion()
            .coords
            .iter()
            .map(|c| forward_kinematics(&body, &c.to_pose()).unwrap().positions)
            .collect()
    }

    #[test]
    fn zero_noise_initialization_reproduces_the_truth() {
        let skel = build_default_humanoid();
        let cfg = SynthConfig::default().noiseless();
        for scene in [Scene::StandingSway, Scene::Squat] {
            let sc = generate_synthetic(scene, 4.0, 0, &cfg).unwrap();
            let params = initialize(&sc.clean, &skel, &Config::default()).unwrap();
            let e = mpjpe(&init_positions(&params, &skel), &sc.truth.positions).unwrap();
            assert!(e < 5.0, "{scene}: {e} mm");
        }
    }

    #[test]
    fn standing_has_near_zero_heading_rate() {
        let skel = build_default_humanoid();
        let mut sc = generate_synthetic(Scene::Squat, 4.0, 0, &SynthConfig::default().noiseless()).unwrap();
        sc.clean.frames.truncate(100);
        let params = initialize(&sc.clean, &skel, &Config::default()).unwrap();
        assert!(params.values[YAW_RATE].iter().all(|r| r.abs() < 1e-3), "{:?}", params.values[YAW_RATE]);
        assert!(params.yaw0.abs() < 1e-6);
    }

    #[test]
    fn initialization_is_deterministic() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 5, &SynthConfig::default()).unwrap();
        let a = initialize(&sc.noisy, &skel, &Config::default()).unwrap();
        let b = initialize(&sc.noisy, &skel, &Config::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn grounded_sites_share_body_weight() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default().noiseless()).unwrap();
        let params = initialize(&sc.clean, &skel, &Config::default()).unwrap();
        let total: f64 = (0..params.num_sites).map(|s| params.values[force_channel(params.num_joints, s) + 2][0]).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn missing_keypoints_are_interpolated() {
        let skel = build_default_humanoid();
        let mut sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default().noiseless()).unwrap();
        let reference = fill_missing(&sc.clean).unwrap();
        for f in 10..13 {
            sc.clean.frames[f].confidence[4] = 0.0;
            sc.clean.frames[f].keypoints_3d[4] = None;
        }
        let filled = fill_missing(&sc.clean).unwrap();
        for f in 10..13 {
            assert!((filled[f][4] - reference[f][4]).norm() < 1e-3);
        }
        assert!(initialize(&sc.clean, &skel, &Config::default()).is_ok());
    }

    #[test]
    fn too_short_sequences_are_rejected() {
        let skel = build_default_humanoid();
        let mut sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
        sc.noisy.frames.truncate(15);
        assert!(matches!(initialize(&sc.noisy, &skel, &Config::default()), Err(Error::TooShort { needed: 16, .. })));
    }

    #[test]
    fn unwrapping_removes_jumps() {
        let a = [3.0, -3.1, 3.1, -3.0];
        let u = unwrap_angles(&a);
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() < 0.5), "{u:?}");
    }
}
