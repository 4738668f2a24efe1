//! Builds the default humanoid and shows how shape factors change its mass.

use physmotion::body::{build_default_humanoid, ScaledBody, ShapeParams};

fn main() -> physmotion::Result<()> {
    let skel = build_default_humanoid();
    skel.validate()?;
    println!("{} joints, {} contact sites", skel.num_joints(), skel.contact_sites.len());
    for (j, joint) in skel.joints.iter().enumerate() {
        let parent = joint.parent.map_or("-".to_string(), |p| skel.joints[p].name.clone());
        println!("  {j:2} {:<16} parent {:<16} primitives {}", joint.name, parent, joint.primitives.len());
    }
    for factor in [0.9, 1.0, 1.1] {
        let body = ScaledBody::from_shape(&skel, &ShapeParams::uniform(&skel, factor));
        println!("uniform shape {factor:.1}: total mass {:.2} kg", body.total_mass);
    }
    Ok(())
}
