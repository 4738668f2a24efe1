//! Rigid-body humanoid: kinematic tree, geometric primitives with
//! density-derived inertia, per-link shape scaling and foot contact sites.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};
use crate::math::{Mat3, Quat, Vec3};

/// Body density [kg/m³].
pub const DENSITY: f64 = 1000.0;

/// Number of foot contact sites (four box corners per foot).
pub const NUM_CONTACT_SITES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveShape {
    /// Full edge lengths along the local x, y, z axes [m].
    Box { size: [f64; 3] },
    /// Solid cylinder with its axis along local z [m].
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidPrimitive {
    #[serde(flatten)]
    pub shape: PrimitiveShape,
    /// Center of the primitive in the owning link frame [m].
    pub offset: Vec3<f64>,
    #[serde(default = "identity_quat")]
    pub rotation: Quat<f64>,
}

fn identity_quat() -> Quat<f64> {
    Quat::IDENTITY
}

/// Mass, center of mass (link frame) and inertia about the center of mass
/// (link frame axes).
#[derive(Clone, Copy, Debug)]
pub struct MassProperties<T> {
    pub mass: T,
    pub com: Vec3<T>,
    pub inertia: Mat3<T>,
}

impl RigidPrimitive {
    pub fn new(shape: PrimitiveShape, offset: Vec3<f64>) -> Self {
        RigidPrimitive {
            shape,
            offset,
            rotation: Quat::IDENTITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match self.shape {
            PrimitiveShape::Box { size } => size.to_vec(),
            PrimitiveShape::Cylinder { radius, length } => vec![radius, length],
            PrimitiveShape::Sphere { radius } => vec![radius],
        };
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidPrimitive(format!(
                "dimensions must be positive and finite, got {dims:?}"
            )));
        }
        Ok(())
    }

    /// Mass properties after scaling by `factor`: boxes and spheres scale
    /// uniformly, cylinders only along their axis.
    pub fn scaled_mass_properties<T: Real>(&self, factor: T) -> MassProperties<T> {
        let (mass, local_diag) = match self.shape {
            PrimitiveShape::Box { size } => {
                let s = [factor * size[0], factor * size[1], factor * size[2]];
                let m = s[0] * s[1] * s[2] * DENSITY;
                let (a2, b2, c2) = (s[0] * s[0], s[1] * s[1], s[2] * s[2]);
                (
                    m,
                    Vec3::new(m * (b2 + c2), m * (a2 + c2), m * (a2 + b2)).scale_f(1.0 / 12.0),
                )
            }
            PrimitiveShape::Cylinder { radius, length } => {
                let l = factor * length;
                let r2 = radius * radius;
                let m = l * (PI * r2 * DENSITY);
                let side = m * (l * l + 3.0 * r2) / 12.0;
                (m, Vec3::new(side, side, m * (0.5 * r2)))
            }
            PrimitiveShape::Sphere { radius } => {
                let r = factor * radius;
                let m = r * r * r * (4.0 / 3.0 * PI * DENSITY);
                let i = m * r * r * 0.4;
                (m, Vec3::new(i, i, i))
            }
        };
        let rot = Mat3::from_f64(&self.rotation.to_mat());
        MassProperties {
            mass,
            com: Vec3::from_f64(self.offset).scale(factor),
            inertia: Mat3::diag(local_diag).congruence(&rot),
        }
    }
}

/// Closed-form mass, center of mass and inertia of a primitive at its
/// nominal size.
pub fn primitive_mass_properties(prim: &RigidPrimitive) -> Result<MassProperties<f64>> {
    prim.validate()?;
    Ok(prim.scaled_mass_properties(1.0))
}

/// Combines primitive mass properties into one rigid link.
pub fn combine_mass_properties<T: Real>(parts: &[MassProperties<T>]) -> MassProperties<T> {
    let mut mass = T::zero();
    let mut moment = Vec3::zero();
    for p in parts {
        mass += p.mass;
        moment = moment + p.com.scale(p.mass);
    }
    if parts.is_empty() {
        return MassProperties {
            mass,
            com: Vec3::zero(),
            inertia: Mat3::zero(),
        };
    }
    let com = moment.scale(T::one() / mass);
    let mut inertia = Mat3::zero();
    for p in parts {
        let d = p.com - com;
        let dd = d.norm_sq();
        let mut shift = Mat3::zero();
        let dv = d.to_array();
        for i in 0..3 {
            for j in 0..3 {
                let diag = if i == j { dd } else { T::zero() };
                shift.m[i][j] = (diag - dv[i] * dv[j]) * p.mass;
            }
        }
        inertia = inertia.add(&p.inertia).add(&shift);
    }
    MassProperties { mass, com, inertia }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Position of this joint in its parent's frame at rest [m].
    pub offset: Vec3<f64>,
    /// Geometry rigidly attached to the link that starts at this joint.
    #[serde(default)]
    pub primitives: Vec<RigidPrimitive>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSite {
    pub joint: usize,
    /// Site position in the joint's frame [m].
    pub offset: Vec3<f64>,
}

/// Kinematic tree in topological order. Joint 0 is the floating root
/// (3 translational + 3 rotational DOF); every other joint is spherical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub contact_sites: Vec<ContactSite>,
}

impl Skeleton {
    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Total generalized velocity dimension.
    pub fn dof(&self) -> usize {
        3 * self.joints.len() + 3
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn children(&self, joint: usize) -> Vec<usize> {
        (0..self.joints.len())
            .filter(|&c| self.joints[c].parent == Some(joint))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() || self.joints[0].parent.is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (i, j) in self.joints.iter().enumerate().skip(1) {
            match j.parent {
                None => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint `{}` has no parent; only one root is allowed",
                        j.name
                    )))
                }
                Some(p) if p >= i => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint `{}` has parent {p} which does not precede it",
                        j.name
                    )))
                }
                _ => {}
            }
        }
        for j in &self.joints {
            if !j.offset.to_array().iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidSkeleton(format!(
                    "joint `{}` has a non-finite offset",
                    j.name
                )));
            }
            for p in &j.primitives {
                p.validate()?;
            }
        }
        if self.contact_sites.len() != NUM_CONTACT_SITES {
            return Err(Error::InvalidSkeleton(format!(
                "expected {NUM_CONTACT_SITES} contact sites, got {}",
                self.contact_sites.len()
            )));
        }
        if self.contact_sites.iter().any(|s| s.joint >= self.joints.len()) {
            return Err(Error::InvalidSkeleton("contact site on unknown joint".into()));
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Skeleton> {
        let text = std::fs::read_to_string(path)?;
        let skel: Skeleton = serde_json::from_str(&text)?;
        skel.validate()?;
        Ok(skel)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rest-pose world positions of all joints (root at the origin of its
    /// offset, no rotation).
    pub fn rest_positions(&self) -> Vec<Vec3<f64>> {
        let mut pos: Vec<Vec3<f64>> = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let p = match j.parent {
                None => j.offset,
                Some(p) => pos[p] + j.offset,
            };
            pos.push(p);
        }
        pos
    }
}

/// Per-link length scale factors (nominal 1). Factor `i` scales the offsets
/// of link `i`'s children, its primitives and its contact sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams(pub Vec<f64>);

impl ShapeParams {
    pub fn nominal(skel: &Skeleton) -> Self {
        ShapeParams(vec![1.0; skel.num_joints()])
    }

    pub fn uniform(skel: &Skeleton, factor: f64) -> Self {
        ShapeParams(vec![factor; skel.num_joints()])
    }
}

/// Skeleton with shape factors applied and mass properties cached.
#[derive(Clone, Debug)]
pub struct ScaledBody<T> {
    pub parents: Vec<Option<usize>>,
    /// Joint offsets in the parent frame; entry 0 is the root's rest position.
    pub offsets: Vec<Vec3<T>>,
    pub links: Vec<MassProperties<T>>,
    pub site_joints: Vec<usize>,
    pub site_offsets: Vec<Vec3<T>>,
    pub total_mass: T,
}

impl<T: Real> ScaledBody<T> {
    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_sites(&self) -> usize {
        self.site_joints.len()
    }
}

/// Applies per-link shape factors; the map is smooth in the factors.
pub fn apply_shape<T: Real>(skel: &Skeleton, factors: &[T]) -> ScaledBody<T> {
    assert_eq!(factors.len(), skel.num_joints(), "one shape factor per link");
    let n = skel.num_joints();
    let mut offsets = Vec::with_capacity(n);
    let mut links = Vec::with_capacity(n);
    let mut total_mass = T::zero();
    for (i, j) in skel.joints.iter().enumerate() {
        let off = Vec3::from_f64(j.offset);
        offsets.push(match j.parent {
            Some(p) => off.scale(factors[p]),
            None => off,
        });
        let parts: Vec<_> = j
            .primitives
            .iter()
            .map(|p| p.scaled_mass_properties(factors[i]))
            .collect();
        let mp = combine_mass_properties(&parts);
        total_mass += mp.mass;
        links.push(mp);
    }
    ScaledBody {
        parents: skel.joints.iter().map(|j| j.parent).collect(),
        offsets,
        links,
        site_joints: skel.contact_sites.iter().map(|s| s.joint).collect(),
        site_offsets: skel
            .contact_sites
            .iter()
            .map(|s| Vec3::from_f64(s.offset).scale(factors[s.joint]))
            .collect(),
        total_mass,
    }
}

impl ScaledBody<f64> {
    pub fn from_shape(skel: &Skeleton, shape: &ShapeParams) -> Self {
        apply_shape(skel, &shape.0)
    }
}

/// Default humanoid geometry. Sizes are hand-picked for an adult of about
/// 1.75 m and 66 kg; x points forward, y left, z up.
pub mod humanoid {
    use super::*;

    pub const PELVIS: usize = 0;
    pub const SPINE: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const LEFT_HIP: usize = 4;
    pub const LEFT_KNEE: usize = 5;
    pub const LEFT_ANKLE: usize = 6;
    pub const RIGHT_HIP: usize = 7;
    pub const RIGHT_KNEE: usize = 8;
    pub const RIGHT_ANKLE: usize = 9;
    pub const LEFT_SHOULDER: usize = 10;
    pub const LEFT_ELBOW: usize = 11;
    pub const LEFT_WRIST: usize = 12;
    pub const RIGHT_SHOULDER: usize = 13;
    pub const RIGHT_ELBOW: usize = 14;
    pub const RIGHT_WRIST: usize = 15;

    pub const NUM_JOINTS: usize = 16;

    /// Joints reported by the evaluation metrics (all but the spine).
    pub const METRIC_JOINTS: [usize; 15] = [
        PELVIS,
        NECK,
        HEAD,
        LEFT_HIP,
        LEFT_KNEE,
        LEFT_ANKLE,
        RIGHT_HIP,
        RIGHT_KNEE,
        RIGHT_ANKLE,
        LEFT_SHOULDER,
        LEFT_ELBOW,
        LEFT_WRIST,
        RIGHT_SHOULDER,
        RIGHT_ELBOW,
        RIGHT_WRIST,
    ];

    pub const THIGH_LENGTH: f64 = 0.42;
    pub const SHIN_LENGTH: f64 = 0.42;
    pub const HIP_DROP: f64 = 0.06;
    pub const HIP_HALF_WIDTH: f64 = 0.09;
    /// Ankle height above the foot sole.
    pub const ANKLE_HEIGHT: f64 = 0.08;
    pub const FOOT_SIZE: [f64; 3] = [0.24, 0.09, 0.06];
    /// Foot box center relative to the ankle.
    pub const FOOT_CENTER: [f64; 3] = [0.05, 0.0, -0.05];
    pub const SPINE_OFFSET: f64 = 0.10;
    pub const TORSO_LENGTH: f64 = 0.40;
    pub const NECK_LENGTH: f64 = 0.12;
    pub const SHOULDER_OFFSET: [f64; 3] = [0.0, 0.18, -0.05];
    pub const UPPER_ARM_LENGTH: f64 = 0.28;
    pub const FOREARM_LENGTH: f64 = 0.25;

    /// Pelvis height when standing in the rest pose with soles on z = 0.
    pub const PELVIS_HEIGHT: f64 = ANKLE_HEIGHT + SHIN_LENGTH + THIGH_LENGTH + HIP_DROP;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn cyl(radius: f64, length: f64) -> RigidPrimitive {
        RigidPrimitive::new(PrimitiveShape::Cylinder { radius, length }, v(0.0, 0.0, -length / 2.0))
    }

    fn joint(name: &str, parent: Option<usize>, offset: Vec3<f64>, prims: Vec<RigidPrimitive>) -> Joint {
        Joint {
            name: name.to_string(),
            parent,
            offset,
            primitives: prims,
        }
    }

    /// Foot-box bottom corners relative to the ankle.
    pub fn foot_corners() -> [Vec3<f64>; 4] {
        let [sx, sy, _] = FOOT_SIZE;
        let [cx, cy, _] = FOOT_CENTER;
        let z = -ANKLE_HEIGHT;
        [
            v(cx + sx / 2.0, cy + sy / 2.0, z),
            v(cx + sx / 2.0, cy - sy / 2.0, z),
            v(cx - sx / 2.0, cy + sy / 2.0, z),
            v(cx - sx / 2.0, cy - sy / 2.0, z),
        ]
    }

    pub fn build_default_humanoid() -> Skeleton {
        let foot = RigidPrimitive::new(
            PrimitiveShape::Box { size: FOOT_SIZE },
            v(FOOT_CENTER[0], FOOT_CENTER[1], FOOT_CENTER[2]),
        );
        let hand = RigidPrimitive::new(PrimitiveShape::Sphere { radius: 0.045 }, v(0.0, 0.0, -0.06));
        let [sx, sy, sz] = SHOULDER_OFFSET;
        let joints = vec![
            joint(
                "pelvis",
                None,
                v(0.0, 0.0, PELVIS_HEIGHT),
                vec![RigidPrimitive::new(
                    PrimitiveShape::Box {
                        size: [0.16, 0.30, 0.14],
                    },
                    v(0.0, 0.0, -0.01),
                )],
            ),
            joint(
                "spine",
                Some(PELVIS),
                v(0.0, 0.0, SPINE_OFFSET),
                vec![RigidPrimitive::new(
                    PrimitiveShape::Box {
                        size: [0.20, 0.32, TORSO_LENGTH],
                    },
                    v(0.0, 0.0, TORSO_LENGTH / 2.0),
                )],
            ),
            joint(
                "neck",
                Some(SPINE),
                v(0.0, 0.0, TORSO_LENGTH),
                vec![RigidPrimitive::new(
                    PrimitiveShape::Cylinder {
                        radius: 0.05,
                        length: NECK_LENGTH,
                    },
                    v(0.0, 0.0, NECK_LENGTH / 2.0),
                )],
            ),
            joint(
                "head",
                Some(NECK),
                v(0.0, 0.0, NECK_LENGTH),
                vec![RigidPrimitive::new(PrimitiveShape::Sphere { radius: 0.10 }, v(0.0, 0.0, 0.10))],
            ),
            joint("left_hip", Some(PELVIS), v(0.0, HIP_HALF_WIDTH, -HIP_DROP), vec![cyl(0.07, THIGH_LENGTH)]),
            joint("left_knee", Some(LEFT_HIP), v(0.0, 0.0, -THIGH_LENGTH), vec![cyl(0.05, SHIN_LENGTH)]),
            joint("left_ankle", Some(LEFT_KNEE), v(0.0, 0.0, -SHIN_LENGTH), vec![foot]),
            joint("right_hip", Some(PELVIS), v(0.0, -HIP_HALF_WIDTH, -HIP_DROP), vec![cyl(0.07, THIGH_LENGTH)]),
            joint("right_knee", Some(RIGHT_HIP), v(0.0, 0.0, -THIGH_LENGTH), vec![cyl(0.05, SHIN_LENGTH)]),
            joint("right_ankle", Some(RIGHT_KNEE), v(0.0, 0.0, -SHIN_LENGTH), vec![foot]),
            joint("left_shoulder", Some(NECK), v(sx, sy, sz), vec![cyl(0.045, UPPER_ARM_LENGTH)]),
            joint("left_elbow", Some(LEFT_SHOULDER), v(0.0, 0.0, -UPPER_ARM_LENGTH), vec![cyl(0.04, FOREARM_LENGTH)]),
            joint("left_wrist", Some(LEFT_ELBOW), v(0.0, 0.0, -FOREARM_LENGTH), vec![hand]),
            joint("right_shoulder", Some(NECK), v(sx, -sy, sz), vec![cyl(0.045, UPPER_ARM_LENGTH)]),
            joint("right_elbow", Some(RIGHT_SHOULDER), v(0.0, 0.0, -UPPER_ARM_LENGTH), vec![cyl(0.04, FOREARM_LENGTH)]),
            joint("right_wrist", Some(RIGHT_ELBOW), v(0.0, 0.0, -FOREARM_LENGTH), vec![hand]),
        ];
        let mut contact_sites = Vec::with_capacity(NUM_CONTACT_SITES);
        for ankle in [LEFT_ANKLE, RIGHT_ANKLE] {
            for offset in foot_corners() {
                contact_sites.push(ContactSite { joint: ankle, offset });
            }
        }
        Skeleton { joints, contact_sites }
    }
}

pub use humanoid::build_default_humanoid;
