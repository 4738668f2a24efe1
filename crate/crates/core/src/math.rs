//! Small fixed-size linear algebra generic over [`Real`].

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::ad::Real;

/// Below this squared angle the exponential/logarithm maps switch to series.
const SMALL_ANGLE_SQ: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(v: Vec3<f64>) -> Self {
        Vec3::new(T::cst(v.x), T::cst(v.y), T::cst(v.z))
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn value(&self) -> Vec3<f64> {
        Vec3::new(self.x.val(), self.y.val(), self.z.val())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    #[inline]
    pub fn scale_f(self, s: f64) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Vec3<f64> {
    pub const ZERO: Vec3<f64> = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn normalized(self) -> Self {
        let n = self.norm();
        self.scale(1.0 / n)
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3 {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn zero() -> Self {
        let z = T::zero();
        Mat3 { m: [[z; 3]; 3] }
    }

    pub fn diag(d: Vec3<T>) -> Self {
        let z = T::zero();
        Mat3 {
            m: [[d.x, z, z], [z, d.y, z], [z, z, d.z]],
        }
    }

    pub fn from_f64(a: &Mat3<f64>) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.m[i][j] = T::cst(a.m[i][j]);
            }
        }
        m
    }

    pub fn value(&self) -> Mat3<f64> {
        let mut m = Mat3::<f64>::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.m[i][j] = self.m[i][j].val();
            }
        }
        m
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ v`
    #[inline]
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3<T>) -> Mat3<T> {
        let mut r = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        r
    }

    pub fn transpose(&self) -> Mat3<T> {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[j][i];
            }
        }
        r
    }

    pub fn add(&self, o: &Mat3<T>) -> Mat3<T> {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: T) -> Mat3<T> {
        let mut r = *self;
        for row in r.m.iter_mut() {
            for e in row.iter_mut() {
                *e = *e * s;
            }
        }
        r
    }

    /// `R I Rᵀ`, rotating an inertia tensor into another frame.
    pub fn congruence(&self, rot: &Mat3<T>) -> Mat3<T> {
        rot.mul_mat(self).mul_mat(&rot.transpose())
    }
}

impl Mat3<f64> {
    /// Eigenvalues of a symmetric matrix (trigonometric closed form).
    pub fn symmetric_eigenvalues(&self) -> [f64; 3] {
        let a = &self.m;
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if p1 == 0.0 {
            let mut e = [a[0][0], a[1][1], a[2][2]];
            e.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return e;
        }
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = *self;
        for i in 0..3 {
            b.m[i][i] -= q;
        }
        let b = b.scale(1.0 / p);
        let det = b.m[0][0] * (b.m[1][1] * b.m[2][2] - b.m[1][2] * b.m[2][1])
            - b.m[0][1] * (b.m[1][0] * b.m[2][2] - b.m[1][2] * b.m[2][0])
            + b.m[0][2] * (b.m[1][0] * b.m[2][1] - b.m[1][1] * b.m[2][0]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut e = [e1, e2, e3];
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e
    }
}

/// Quaternion `w + xi + yj + zk`; rotations use unit quaternions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(q: Quat<f64>) -> Self {
        Quat::new(T::cst(q.w), T::cst(q.x), T::cst(q.y), T::cst(q.z))
    }

    pub fn value(&self) -> Quat<f64> {
        Quat::new(self.w.val(), self.x.val(), self.y.val(), self.z.val())
    }

    pub fn vec(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sq(&self) -> T {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn normalized(&self) -> Self {
        let inv = T::one() / self.norm_sq().sqrt();
        Quat::new(self.w * inv, self.x * inv, self.y * inv, self.z * inv)
    }

    pub fn neg(&self) -> Self {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn mul(&self, o: &Quat<T>) -> Quat<T> {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation about the vertical (z) axis.
    pub fn from_yaw(yaw: T) -> Self {
        let h = yaw * 0.5;
        Quat::new(h.cos(), T::zero(), T::zero(), h.sin())
    }

    /// Exponential map: rotation vector (axis * angle) to unit quaternion.
    pub fn exp(v: Vec3<T>) -> Self {
        let a2 = v.norm_sq();
        let (c, s) = if a2.val() < SMALL_ANGLE_SQ {
            // cos(a/2), sin(a/2)/a as series in a²
            (T::one() - a2 / 8.0 + a2 * a2 / 384.0, T::cst(0.5) - a2 / 48.0)
        } else {
            let a = a2.sqrt();
            let h = a * 0.5;
            (h.cos(), h.sin() / a)
        };
        Quat::new(c, v.x * s, v.y * s, v.z * s)
    }

    /// Logarithm map of a unit quaternion to the shortest rotation vector.
    pub fn log(&self) -> Vec3<T> {
        let q = if self.w.val() < 0.0 { self.neg() } else { *self };
        let v = q.vec();
        let s2 = v.norm_sq();
        let f = if s2.val() < SMALL_ANGLE_SQ {
            // 2 atan(s/w)/s = (2/w)(1 - s²/(3w²))
            let w2 = q.w * q.w;
            (T::one() - s2 / (w2 * 3.0)) * 2.0 / q.w
        } else {
            let s = s2.sqrt();
            s.atan2(q.w) * 2.0 / s
        };
        v.scale(f)
    }

    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        // v + 2w (u × v) + 2 u × (u × v)
        let u = self.vec();
        let t = u.cross(v).scale_f(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    pub fn to_mat(&self) -> Mat3<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        let one = T::one();
        Mat3 {
            m: [
                [one - (yy + zz) * 2.0, (xy - wz) * 2.0, (xz + wy) * 2.0],
                [(xy + wz) * 2.0, one - (xx + zz) * 2.0, (yz - wx) * 2.0],
                [(xz - wy) * 2.0, (yz + wx) * 2.0, one - (xx + yy) * 2.0],
            ],
        }
    }
}

impl Quat<f64> {
    pub const IDENTITY: Quat<f64> = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn from_axis_angle(axis: Vec3<f64>, angle: f64) -> Self {
        Quat::exp(axis.normalized().scale(angle))
    }

    /// Minimal rotation taking the direction of `from` onto the direction of `to`.
    pub fn between(from: Vec3<f64>, to: Vec3<f64>) -> Self {
        let (from, to) = (from.normalized(), to.normalized());
        let d = from.dot(to);
        if d < -1.0 + 1e-12 {
            // antiparallel: any perpendicular axis
            let mut axis = from.cross(Vec3::new(1.0, 0.0, 0.0));
            if axis.norm_sq() < 1e-12 {
                axis = from.cross(Vec3::new(0.0, 1.0, 0.0));
            }
            return Quat::from_axis_angle(axis, std::f64::consts::PI);
        }
        let c = from.cross(to);
        Quat::new(1.0 + d, c.x, c.y, c.z).normalized()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }

    /// Returns `(swing, twist)` with `self = swing * twist`, `twist` a
    /// rotation about `axis` and `swing` about an axis perpendicular to it.
    pub fn swing_twist(&self, axis: Vec3<f64>) -> (Quat<f64>, Quat<f64>) {
        let a = axis.normalized();
        let p = a.scale(self.vec().dot(a));
        let mut twist = Quat::new(self.w, p.x, p.y, p.z);
        if twist.norm_sq() < 1e-24 {
            twist = Quat::IDENTITY;
        } else {
            twist = twist.normalized();
        }
        let swing = self.mul(&twist.conj());
        (swing, twist)
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.mul_vec(v)
    }
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` if `a` is singular to working precision.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let tiny = 1e-12 * a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > tiny) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solve_recovers_solution() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, -1.0, 0.5], vec![3.0, 0.0, 4.0]];
        let x = [1.5, -2.0, 0.25];
        let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        let got = solve_linear(a, b).unwrap();
        assert!(got.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-12));
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn exp_log_round_trip() {
        for v in [
            Vec3::new(0.3, -0.2, 0.9),
            Vec3::new(1e-7, 0.0, 2e-7),
            Vec3::new(0.0, 3.0, 0.0),
        ] {
            let q = Quat::exp(v);
            assert!((q.norm_sq() - 1.0).abs() < 1e-14);
            let back = q.log();
            assert!((back - v).max_abs() < 1e-12, "{back:?} vs {v:?}");
        }
    }

    #[test]
    fn rotate_matches_matrix() {
        let q = Quat::exp(Vec3::new(0.4, -1.1, 0.25));
        let v = Vec3::new(0.1, 2.0, -0.7);
        let a = q.rotate(v);
        let b = q.to_mat().mul_vec(v);
        assert!((a - b).max_abs() < 1e-14);
    }

    #[test]
    fn between_aligns() {
        let a = Vec3::new(0.0, 0.0, -1.0);
        let b = Vec3::new(1.0, 1.0, 0.3).normalized();
        let q = Quat::between(a, b);
        assert!((q.rotate(a) - b).max_abs() < 1e-14);
        let back = Quat::between(a, a.scale(-1.0));
        assert!((back.rotate(a) + a).max_abs() < 1e-12);
    }

    #[test]
    fn symmetric_eigenvalues_of_rotated_diagonal() {
        let d = Mat3::diag(Vec3::new(1.0, 2.0, 5.0));
        let r = Quat::exp(Vec3::new(0.3, 0.2, -0.4)).to_mat();
        let e = d.congruence(&r).symmetric_eigenvalues();
        for (got, want) in e.iter().zip([1.0, 2.0, 5.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn swing_twist_recomposes() {
        let q = Quat::exp(Vec3::new(0.3, 0.5, -0.8));
        let axis = Vec3::new(0.0, 0.0, 1.0);
        let (swing, twist) = q.swing_twist(axis);
        let back = swing.mul(&twist);
        assert!((back.w - q.w).abs() < 1e-14 && (back.vec() - q.vec()).max_abs() < 1e-14);
        assert!(swing.vec().dot(axis).abs() < 1e-14);
    }
}
