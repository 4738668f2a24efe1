//! Inverse dynamics of a standing humanoid: the generalized force holding it
//! still and the contact forces that remove the root residual.

use physmotion::body::{build_default_humanoid, humanoid, ScaledBody, ShapeParams};
use physmotion::dynamics::{contact_root_wrench, rnea, rnea_root, GRAVITY};
use physmotion::kinematics::{forward_kinematics, Pose};
use physmotion::math::Vec3;

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    let body = ScaledBody::from_shape(&skel, &ShapeParams::nominal(&skel));
    let n = body.num_joints();
    let fk = forward_kinematics(&body, &Pose::rest(n, Vec3::new(0.0, 0.0, humanoid::PELVIS_HEIGHT)))?;
    let zero = vec![0.0; 3 + 3 * n];
    let tau = rnea(&body, &fk, &zero, &zero, GRAVITY);
    let weight = body.total_mass * 9.81;
    println!("body weight {weight:.1} N");
    println!("root force {:?}", tau.root_force());
    println!("left knee torque {:?}", tau.joint_torque(humanoid::LEFT_KNEE));

    let root = rnea_root(&body, &fk, &zero, &zero, GRAVITY);
    let share = Vec3::new(0.0, 0.0, weight / fk.sites.len() as f64);
    let wrench = contact_root_wrench(&fk, &vec![share; fk.sites.len()]);
    let residual: Vec<f64> = root.iter().zip(&wrench).map(|(a, b)| a - b).collect();
    println!("root residual with evenly shared support {residual:.3?}");
    Ok(())
}
