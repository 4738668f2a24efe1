//! Recursive Newton-Euler inverse dynamics of the free-floating body.
//!
//! Generalized velocities follow [`crate::kinematics`]: root linear velocity
//! in the world frame, root angular velocity in the root frame, and joint
//! angular velocities relative to the parent, in the joint frame. The dual
//! generalized force has the root force in the world frame, the root torque
//! (about the root origin) in the root frame, and joint torques in the joint
//! frames.

use crate::ad::Real;
use crate::body::ScaledBody;
use crate::kinematics::FkResult;
use crate::math::Vec3;

pub const GRAVITY: Vec3<f64> = Vec3 {
    x: 0.0,
    y: 0.0,
    z: -9.81,
};

/// Generalized force in the layout `[root force, root torque, joint 1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedForce<T>(pub Vec<T>);

impl<T: Real> GeneralizedForce<T> {
    pub fn zeros(num_joints: usize) -> Self {
        GeneralizedForce(vec![T::zero(); 3 + 3 * num_joints])
    }

    fn block(&self, i: usize) -> Vec3<T> {
        Vec3::new(self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2])
    }

    fn set_block(&mut self, i: usize, v: Vec3<T>) {
        self.0[3 * i..3 * i + 3].copy_from_slice(&v.to_array());
    }

    pub fn root_force(&self) -> Vec3<T> {
        self.block(0)
    }

    pub fn root_torque(&self) -> Vec3<T> {
        self.block(1)
    }

    /// Torque at joint `j >= 1`.
    pub fn joint_torque(&self, j: usize) -> Vec3<T> {
        self.block(j + 1)
    }
}

fn vblock<T: Real>(v: &[T], i: usize) -> Vec3<T> {
    Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])
}

/// Inverse dynamics: the generalized force producing acceleration `acc` at
/// velocity `vel` in configuration `fk`, under `gravity`.
pub fn rnea<T: Real>(body: &ScaledBody<T>, fk: &FkResult<T>, vel: &[T], acc: &[T], gravity: Vec3<f64>) -> GeneralizedForce<T> {
    let (force, torque) = rnea_world(body, fk, vel, acc, gravity);
    let n = body.num_joints();
    let mut out = GeneralizedForce::zeros(n);
    out.set_block(0, force);
    for j in 0..n {
        out.set_block(j + 1, fk.world_mats[j].tr_mul_vec(torque[j]));
    }
    out
}

/// Root block of [`rnea`]: `[force (world), torque (root frame)]`.
pub fn rnea_root<T: Real>(body: &ScaledBody<T>, fk: &FkResult<T>, vel: &[T], acc: &[T], gravity: Vec3<f64>) -> [T; 6] {
    let (force, torque) = rnea_world(body, fk, vel, acc, gravity);
    let n0 = fk.world_mats[0].tr_mul_vec(torque[0]);
    [force.x, force.y, force.z, n0.x, n0.y, n0.z]
}

/// Root force and world-frame joint torques about each joint origin.
fn rnea_world<T: Real>(body: &ScaledBody<T>, fk: &FkResult<T>, vel: &[T], acc: &[T], gravity: Vec3<f64>) -> (Vec3<T>, Vec<Vec3<T>>) {
    let n = body.num_joints();
    debug_assert_eq!(vel.len(), 3 + 3 * n);
    debug_assert_eq!(acc.len(), 3 + 3 * n);
    let mut omega: Vec<Vec3<T>> = Vec::with_capacity(n);
    let mut alpha: Vec<Vec3<T>> = Vec::with_capacity(n);
    let mut lin: Vec<Vec3<T>> = Vec::with_capacity(n);
    let mut force: Vec<Vec3<T>> = Vec::with_capacity(n);
    let mut torque: Vec<Vec3<T>> = Vec::with_capacity(n);

    for j in 0..n {
        let r = &fk.world_mats[j];
        let (w, a, l) = match body.parents[j] {
            None => {
                let w = r.mul_vec(vblock(vel, 1));
                let a = r.mul_vec(vblock(acc, 1));
                let l = vblock(acc, 0) - Vec3::from_f64(gravity);
                (w, a, l)
            }
            Some(p) => {
                let w_rel = r.mul_vec(vblock(vel, j + 1));
                let w = omega[p] + w_rel;
                let a = alpha[p] + r.mul_vec(vblock(acc, j + 1)) + omega[p].cross(w_rel);
                let d = fk.positions[j] - fk.positions[p];
                let l = lin[p] + alpha[p].cross(d) + omega[p].cross(omega[p].cross(d));
                (w, a, l)
            }
        };
        let link = &body.links[j];
        let c = r.mul_vec(link.com);
        let ac = l + a.cross(c) + w.cross(w.cross(c));
        let inertia = link.inertia.congruence(r);
        let f = ac.scale(link.mass);
        // about the joint origin
        torque.push(inertia.mul_vec(a) + w.cross(inertia.mul_vec(w)) + c.cross(f));
        force.push(f);
        omega.push(w);
        alpha.push(a);
        lin.push(l);
    }

    // backward pass: f[j], n[j] become the wrench the parent exerts on the
    // subtree of j, torque about the joint origin
    for j in (0..n).rev() {
        if let Some(p) = body.parents[j] {
            let d = fk.positions[j] - fk.positions[p];
            let (fj, nj) = (force[j], torque[j]);
            torque[p] = torque[p] + nj + d.cross(fj);
            force[p] = force[p] + fj;
        }
    }

    (force[0], torque)
}

/// `Jᵀ f` for point forces `forces[i]` [N] applied at the contact sites.
pub fn contact_force_to_generalized<T: Real>(body: &ScaledBody<T>, fk: &FkResult<T>, forces: &[Vec3<T>]) -> GeneralizedForce<T> {
    let n = body.num_joints();
    // world-frame torque about each joint origin, accumulated up the tree
    let mut moment = vec![Vec3::<T>::zero(); n];
    let mut total = Vec3::<T>::zero();
    let mut out = GeneralizedForce::zeros(n);
    for (i, f) in forces.iter().enumerate() {
        let e = fk.sites[i];
        total = total + *f;
        let mut j = Some(body.site_joints[i]);
        while let Some(k) = j {
            moment[k] = moment[k] + (e - fk.positions[k]).cross(*f);
            j = body.parents[k];
        }
    }
    out.set_block(0, total);
    out.set_block(1, fk.world_mats[0].tr_mul_vec(moment[0]));
    for j in 1..n {
        out.set_block(j + 1, fk.world_mats[j].tr_mul_vec(moment[j]));
    }
    out
}

/// Root block of [`contact_force_to_generalized`].
pub fn contact_root_wrench<T: Real>(fk: &FkResult<T>, forces: &[Vec3<T>]) -> [T; 6] {
    let mut total = Vec3::<T>::zero();
    let mut moment = Vec3::<T>::zero();
    for (i, f) in forces.iter().enumerate() {
        total = total + *f;
        moment = moment + (fk.sites[i] - fk.positions[0]).cross(*f);
    }
    let n0 = fk.world_mats[0].tr_mul_vec(moment);
    [total.x, total.y, total.z, n0.x, n0.y, n0.z]
}

/// Root block of `f_r - f_c`: the wrench no actuator can supply.
pub fn root_residual<T: Real>(f_r: &GeneralizedForce<T>, f_c: &GeneralizedForce<T>) -> [T; 6] {
    std::array::from_fn(|i| f_r.0[i] - f_c.0[i])
}

/// Joint-space mass matrix, one column per unit acceleration.
pub fn mass_matrix_oracle(body: &ScaledBody<f64>, fk: &FkResult<f64>) -> Vec<Vec<f64>> {
    let dof = 3 + 3 * body.num_joints();
    let zero = vec![0.0; dof];
    let mut cols = Vec::with_capacity(dof);
    for k in 0..dof {
        let mut e = zero.clone();
        e[k] = 1.0;
        cols.push(rnea(body, fk, &zero, &e, Vec3::ZERO).0);
    }
    // transpose columns into rows
    (0..dof).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}

/// Velocity-product and gravity terms `C q̇ + g`.
pub fn bias_oracle(body: &ScaledBody<f64>, fk: &FkResult<f64>, vel: &[f64], gravity: Vec3<f64>) -> Vec<f64> {
    rnea(body, fk, vel, &vec![0.0; vel.len()], gravity).0
}
