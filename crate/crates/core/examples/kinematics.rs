//! Forward kinematics of a posed humanoid, heading/tilt decomposition of the
//! root, and swing-only IK recovering the pose from joint positions.

use physmotion::body::{build_default_humanoid, humanoid, ScaledBody, ShapeParams};
use physmotion::kinematics::ik::swing_twist_ik;
use physmotion::kinematics::{decompose_root_rotation, forward_kinematics, GeneralizedCoord};
use physmotion::math::Vec3;

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    let body = ScaledBody::from_shape(&skel, &ShapeParams::nominal(&skel));
    let mut coord = GeneralizedCoord::rest(skel.num_joints(), Vec3::new(0.2, -0.1, humanoid::PELVIS_HEIGHT));
    coord.yaw = 0.7;
    coord.tilt = [0.05, -0.1];
    coord.joints[humanoid::LEFT_KNEE] = Vec3::new(0.0, 0.6, 0.0);
    let pose = coord.to_pose();
    let fk = forward_kinematics(&body, &pose)?;
    for (j, p) in fk.positions.iter().enumerate() {
        println!("{:<16} {:7.3} {:7.3} {:7.3}", skel.joints[j].name, p.x, p.y, p.z);
    }

    let (yaw, tilt) = decompose_root_rotation(&pose.rots[0]);
    println!("heading {yaw:.3} rad, tilt [{:.3}, {:.3}]", tilt[0], tilt[1]);

    let ik = swing_twist_ik(&[fk.positions.clone()], &skel)?;
    let back = forward_kinematics(&body, &physmotion::kinematics::Pose { root_pos: ik[0].root_pos, rots: ik[0].rots.clone() })?;
    let err = back.positions.iter().zip(&fk.positions).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
    println!("IK round trip: max joint error {:.2e} m", err);
    Ok(())
}
