//! The refinement objective: pose, physics and smoothness terms evaluated on
//! the densely sampled motion.
//!
//! Every per-frame term is averaged over frames. Contact forces are in body
//! weights, and the dynamics residual is divided by body weight before it is
//! squared, so the torque part is measured in meters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::body::{apply_shape, ScaledBody, Skeleton};
use crate::dynamics::{contact_root_wrench, rnea_root, GRAVITY};
use crate::error::{Error, Result};
use crate::kinematics::{fk_unchecked, pose_difference, window_start, FkResult, GeneralizedCoord, Pose};
use crate::math::{Mat3, Vec3};
use crate::pipeline::observation::{ObservationSequence, MIN_DEPTH};
use crate::spline::MotionParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_dynamics: f64,
    pub w_e: f64,
    pub w_e_dot: f64,
    pub k1: f64,
    pub k2: f64,
    pub w_mu: f64,
    pub mu: f64,
    pub w_pen: f64,
    /// Clearance below which penetration is penalized [m].
    pub k_margin: f64,
    pub w_force_cap: f64,
    /// Per-site force limit [body weights].
    pub force_cap: f64,
    pub w_2d: f64,
    /// Geman-McClure scale [px].
    pub sigma_2d: f64,
    pub w_3d: f64,
    pub w_scale: f64,
    pub w_beta: f64,
    pub w_gmm: f64,
    pub w_p_acc: f64,
    pub w_theta_acc: f64,
    /// Smoothing of force norms near zero [body weights].
    pub force_eps: f64,
    /// Added to the squared normal force in the friction ratio.
    pub friction_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_dynamics: 50.0,
            w_e: 200.0,
            w_e_dot: 50.0,
            k1: 10.0,
            k2: 5.0,
            w_mu: 1.0,
            mu: 1.0,
            w_pen: 100.0,
            k_margin: 0.0,
            w_force_cap: 1.0,
            force_cap: 1.0,
            w_2d: 1e-3,
            sigma_2d: 100.0,
            w_3d: 0.5,
            w_scale: 1e-3,
            w_beta: 5e-3,
            w_gmm: 2.5e-3,
            w_p_acc: 0.15,
            w_theta_acc: 1e-4,
            force_eps: 1e-4,
            friction_eps: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("w_dynamics", self.w_dynamics),
            ("w_e", self.w_e),
            ("w_e_dot", self.w_e_dot),
            ("w_mu", self.w_mu),
            ("w_pen", self.w_pen),
            ("w_force_cap", self.w_force_cap),
            ("w_2d", self.w_2d),
            ("w_3d", self.w_3d),
            ("w_scale", self.w_scale),
            ("w_beta", self.w_beta),
            ("w_gmm", self.w_gmm),
            ("w_p_acc", self.w_p_acc),
            ("w_theta_acc", self.w_theta_acc),
            ("force_eps", self.force_eps),
            ("friction_eps", self.friction_eps),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("weights.{name}"), "must be finite and non-negative"));
            }
        }
        for (name, v) in [("mu", self.mu), ("k1", self.k1), ("sigma_2d", self.sigma_2d), ("force_cap", self.force_cap)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("weights.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Loss terms that can be switched on and off independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMask {
    pub dynamics: bool,
    pub contact: bool,
    pub penetration: bool,
    pub friction: bool,
    pub force_cap: bool,
    pub pose2d: bool,
    pub pose3d: bool,
    pub prior: bool,
    pub smooth: bool,
}

impl TermMask {
    pub fn all() -> Self {
        TermMask {
            dynamics: true,
            contact: true,
            penetration: true,
            friction: true,
            force_cap: true,
            pose2d: true,
            pose3d: true,
            prior: true,
            smooth: true,
        }
    }

    pub fn none() -> Self {
        TermMask {
            dynamics: false,
            contact: false,
            penetration: false,
            friction: false,
            force_cap: false,
            pose2d: false,
            pose3d: false,
            prior: false,
            smooth: false,
        }
    }

    /// All terms, or only the non-physics ones.
    pub fn with_physics(enable_physics: bool) -> Self {
        if enable_physics {
            Self::all()
        } else {
            TermMask {
                dynamics: false,
                contact: false,
                penetration: false,
                friction: false,
                force_cap: false,
                ..Self::all()
            }
        }
    }

    /// A single term by its breakdown name.
    pub fn only(term: &str) -> Option<Self> {
        let mut m = Self::none();
        match term {
            "dynamics" => m.dynamics = true,
            "contact" => m.contact = true,
            "penetration" => m.penetration = true,
            "friction" => m.friction = true,
            "force_cap" => m.force_cap = true,
            "pose2d" => m.pose2d = true,
            "pose3d" => m.pose3d = true,
            "prior" => m.prior = true,
            "smooth" => m.smooth = true,
            _ => return None,
        }
        Some(m)
    }

    pub fn physics(&self) -> bool {
        self.dynamics || self.contact || self.penetration || self.friction || self.force_cap
    }
}

pub const TERM_NAMES: [&str; 9] = [
    "dynamics",
    "contact",
    "penetration",
    "friction",
    "force_cap",
    "pose2d",
    "pose3d",
    "prior",
    "smooth",
];

/// Per-term values; disabled terms are exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dynamics: f64,
    pub contact: f64,
    pub penetration: f64,
    pub friction: f64,
    pub force_cap: f64,
    pub pose2d: f64,
    pub pose3d: f64,
    pub prior: f64,
    pub smooth: f64,
    pub total: f64,
    /// Joint observations skipped because they projected behind the camera.
    #[serde(default)]
    pub behind_camera: usize,
}

impl LossBreakdown {
    pub fn terms(&self) -> [f64; 9] {
        [
            self.dynamics,
            self.contact,
            self.penetration,
            self.friction,
            self.force_cap,
            self.pose2d,
            self.pose3d,
            self.prior,
            self.smooth,
        ]
    }

    pub fn physics(&self) -> f64 {
        self.dynamics + self.contact + self.penetration + self.friction + self.force_cap
    }

    pub fn pose(&self) -> f64 {
        self.pose2d + self.pose3d + self.prior
    }

    fn from_terms(t: [f64; 9], behind_camera: usize) -> Self {
        LossBreakdown {
            dynamics: t[0],
            contact: t[1],
            penetration: t[2],
            friction: t[3],
            force_cap: t[4],
            pose2d: t[5],
            pose3d: t[6],
            prior: t[7],
            smooth: t[8],
            total: t.iter().sum(),
            behind_camera,
        }
    }

    /// Errors with the first non-finite term.
    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in TERM_NAMES.iter().zip(self.terms()) {
            if !v.is_finite() {
                return Err(Error::NonFinite { term: name });
            }
        }
        Ok(())
    }
}

/// Soft contact activation `½(tanh(k1‖f‖ − k2) + 1)`.
pub fn contact_variable<T: Real>(f_norm: T, k1: f64, k2: f64) -> T {
    ((f_norm * k1 - k2).tanh() + 1.0) * 0.5
}

/// `sqrt(‖v‖² + eps²)`: a norm that is differentiable at zero.
pub fn smooth_norm<T: Real>(v: Vec3<T>, eps: f64) -> T {
    (v.norm_sq() + eps * eps).sqrt()
}

/// Signorini violation of one site: `c (w_e d² + w_ė ‖ė‖²)`.
pub fn l_contact_site<T: Real>(c: T, height: T, velocity: Vec3<T>, w: &LossWeights) -> T {
    c * (height.powi2() * w.w_e + velocity.norm_sq() * w.w_e_dot)
}

/// `w_pen max(k_margin − d, 0)²` with `d` positive above the ground.
pub fn l_penetration_site<T: Real>(height: T, w: &LossWeights) -> T {
    (-height + w.k_margin).relu().powi2() * w.w_pen
}

/// `w_μ max(‖f∥‖² / ‖f⊥‖² − μ, 0)` for a horizontal ground.
pub fn l_friction_site<T: Real>(f: Vec3<T>, w: &LossWeights) -> T {
    let tangential = f.x.powi2() + f.y.powi2();
    let normal = f.z.powi2() + w.friction_eps;
    (tangential / normal - w.mu).relu() * w.w_mu
}

/// `max(‖f‖ − cap, 0)²` in body weights.
pub fn l_force_cap_site<T: Real>(f: Vec3<T>, w: &LossWeights) -> T {
    (smooth_norm(f, w.force_eps) - w.force_cap).relu().powi2() * w.w_force_cap
}

/// `w_dynamics ‖r‖²` for a body-weight-normalized root residual.
pub fn l_dynamics_frame<T: Real>(residual: &[T; 6], w: &LossWeights) -> T {
    residual.iter().fold(T::zero(), |a, r| a + r.powi2()) * w.w_dynamics
}

/// Geman-McClure `σ² r² / (r² + σ²)` of a squared residual.
pub fn geman_mcclure<T: Real>(r2: T, sigma: f64) -> T {
    let s2 = sigma * sigma;
    r2 * s2 / (r2 + s2)
}

/// `(w_θ̈ ‖θ̈‖² + w_p̈ Σ_j ‖p̈_j‖²) / n_joints`.
pub fn l_smooth_frame<T: Real>(theta_acc: &[T], p_acc: &[Vec3<T>], w: &LossWeights) -> T {
    let th = theta_acc.iter().fold(T::zero(), |a, v| a + v.powi2());
    let p = p_acc.iter().fold(T::zero(), |a, v| a + v.norm_sq());
    (th * w.w_theta_acc + p * w.w_p_acc) / p_acc.len() as f64
}

/// `w_β Σ (f − 1)²` over shape factors.
pub fn l_shape<T: Real>(shape: &[T], w: &LossWeights) -> T {
    shape.iter().fold(T::zero(), |a, f| a + (*f - 1.0).powi2()) * w.w_beta
}

/// Gaussian mixture over stacked joint rotation vectors.
#[derive(Clone, Debug)]
pub struct Gmm {
    dim: usize,
    means: Vec<Vec<f64>>,
    /// Lower Cholesky factors of the covariances.
    chol: Vec<Vec<Vec<f64>>>,
    /// `log w_k − ½ d log 2π − ½ log det Σ_k`.
    log_norm: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GmmFile {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

impl Gmm {
    pub fn new(file: GmmFile) -> Result<Gmm> {
        let k = file.weights.len();
        if k == 0 || file.means.len() != k || file.covariances.len() != k {
            return Err(Error::Prior("weights, means and covariances must have the same non-zero length".into()));
        }
        let dim = file.means[0].len();
        let total: f64 = file.weights.iter().sum();
        if file.weights.iter().any(|w| !(*w > 0.0)) || !(total > 0.0) {
            return Err(Error::Prior("mixture weights must be positive".into()));
        }
        let mut chol = Vec::with_capacity(k);
        let mut log_norm = Vec::with_capacity(k);
        for c in 0..k {
            if file.means[c].len() != dim || file.covariances[c].len() != dim || file.covariances[c].iter().any(|r| r.len() != dim) {
                return Err(Error::Prior(format!("component {c} has inconsistent dimensions")));
            }
            let cov = &file.covariances[c];
            if (0..dim).any(|i| (0..dim).any(|j| (cov[i][j] - cov[j][i]).abs() > 1e-9 * (cov[i][i].abs() + cov[j][j].abs()))) {
                return Err(Error::Prior(format!("covariance {c} is not symmetric")));
            }
            let l = cholesky(cov).ok_or_else(|| Error::Prior(format!("covariance {c} is not positive definite")))?;
            let log_det: f64 = 2.0 * (0..dim).map(|i| l[i][i].ln()).sum::<f64>();
            log_norm.push((file.weights[c] / total).ln() - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det);
            chol.push(l);
        }
        // −log of an upper bound of the density
        let max = log_norm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let offset = -(max + log_norm.iter().map(|v| (v - max).exp()).sum::<f64>().ln());
        Ok(Gmm {
            dim,
            means: file.means,
            chol,
            log_norm,
            offset,
        })
    }

    pub fn load_json(path: &Path) -> Result<Gmm> {
        let text = std::fs::read_to_string(path)?;
        let file: GmmFile = serde_json::from_str(&text).map_err(|e| Error::Prior(e.to_string()))?;
        Gmm::new(file)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower bound of [`Gmm::nll`].
    pub fn nll_lower_bound(&self) -> f64 {
        self.offset
    }

    /// Negative log-likelihood of `x`.
    pub fn nll<T: Real>(&self, x: &[T]) -> T {
        let mut exps: Vec<T> = Vec::with_capacity(self.means.len());
        for (c, l) in self.chol.iter().enumerate() {
            // z = L⁻¹ (x − μ)
            let mut z: Vec<T> = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                let mut s = x[i] - self.means[c][i];
                for (k, zk) in z.iter().enumerate() {
                    s -= *zk * l[i][k];
                }
                z.push(s / l[i][i]);
            }
            let q = z.iter().fold(T::zero(), |a, v| a + v.powi2());
            exps.push(q * -0.5 + self.log_norm[c]);
        }
        let m = exps.iter().map(|e| e.val()).fold(f64::NEG_INFINITY, f64::max);
        let s = exps.iter().fold(T::zero(), |a, e| a + (*e - m).exp());
        -(s.ln() + m)
    }
}

/// Per-frame pose prior: offset mixture NLL, or `½‖θ‖²` without a mixture.
pub fn pose_prior<T: Real>(theta: &[T], gmm: Option<&Gmm>) -> T {
    match gmm {
        Some(g) => g.nll(theta) - g.nll_lower_bound(),
        None => theta.iter().fold(T::zero(), |a, v| a + v.powi2()) * 0.5,
    }
}

/// Observation data preprocessed for loss evaluation, in skeleton joint order.
#[derive(Clone, Debug)]
pub struct Targets {
    /// Root-relative 3D keypoints in camera coordinates.
    pub rel3d: Vec<Vec<Vec3<f64>>>,
    /// Per-joint weight of the 3D term (joint times root confidence).
    pub conf3d: Vec<Vec<f64>>,
    pub kp2d: Vec<Vec<[f64; 2]>>,
    pub conf2d: Vec<Vec<f64>>,
    pub cam_rot: Mat3<f64>,
    pub cam_trans: Vec3<f64>,
    pub intrinsics: [f64; 4],
    pub ground: f64,
}

impl Targets {
    pub fn new(obs: &ObservationSequence) -> Targets {
        let n = obs.joint_names.len();
        let mut rel3d = Vec::with_capacity(obs.num_frames());
        let mut conf3d = Vec::with_capacity(obs.num_frames());
        for (f, frame) in obs.frames.iter().enumerate() {
            let root = obs.keypoint_3d(f, 0);
            rel3d.push((0..n).map(|j| obs.keypoint_3d(f, j) - root).collect());
            conf3d.push(frame.confidence.iter().map(|c| c * frame.confidence[0]).collect());
        }
        let c = &obs.camera;
        Targets {
            rel3d,
            conf3d,
            kp2d: obs.frames.iter().map(|fr| fr.keypoints_2d.iter().map(|p| p.unwrap_or([0.0; 2])).collect()).collect(),
            conf2d: obs.frames.iter().map(|fr| fr.confidence.clone()).collect(),
            cam_rot: c.rotation_matrix(),
            cam_trans: Vec3::from_array(c.translation),
            intrinsics: [c.fx, c.fy, c.cx, c.cy],
            ground: obs.ground_height,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.rel3d.len()
    }
}

/// Weighted 3D keypoint term of one frame, divided by the joint count.
pub fn l_pose3d_frame<T: Real>(positions: &[Vec3<T>], targets: &Targets, frame: usize, s: T, w: &LossWeights) -> T {
    let n = positions.len();
    let mut acc = T::zero();
    for j in 1..n {
        let c = targets.conf3d[frame][j];
        if c == 0.0 {
            continue;
        }
        let p = Mat3::<T>::from_f64(&targets.cam_rot).mul_vec(positions[j] - positions[0]);
        let r = p - Vec3::from_f64(targets.rel3d[frame][j]).scale(s);
        acc += r.norm_sq() * c;
    }
    acc * (w.w_3d / n as f64)
}

/// Robust reprojection term of one frame and the number of joints behind the camera.
pub fn l_pose2d_frame<T: Real>(positions: &[Vec3<T>], targets: &Targets, frame: usize, w: &LossWeights) -> (T, usize) {
    let n = positions.len();
    let [fx, fy, cx, cy] = targets.intrinsics;
    let rot = Mat3::<T>::from_f64(&targets.cam_rot);
    let mut acc = T::zero();
    let mut behind = 0;
    for (j, p) in positions.iter().enumerate() {
        let c = targets.conf2d[frame][j];
        if c == 0.0 {
            continue;
        }
        let pc = rot.mul_vec(*p) + Vec3::from_f64(targets.cam_trans);
        if pc.z.val() <= MIN_DEPTH {
            behind += 1;
            continue;
        }
        let inv_z = T::one() / pc.z;
        let du = pc.x * inv_z * fx + cx - targets.kp2d[frame][j][0];
        let dv = pc.y * inv_z * fy + cy - targets.kp2d[frame][j][1];
        acc += geman_mcclure(du.powi2() + dv.powi2(), w.sigma_2d) * c;
    }
    (acc * (w.w_2d / n as f64), behind)
}

/// Term sums over the frames of one block.
#[derive(Clone, Copy, Debug)]
pub struct TermSums<T> {
    pub terms: [T; 9],
    pub behind_camera: usize,
}

/// Everything needed to evaluate the objective on a motion.
#[derive(Clone, Debug)]
pub struct Objective {
    pub skeleton: Skeleton,
    pub targets: Targets,
    pub weights: LossWeights,
    pub prior: Option<Gmm>,
    pub terms: TermMask,
    /// Frames per evaluation block.
    pub block_size: usize,
}

impl Objective {
    pub fn new(skeleton: Skeleton, obs: &ObservationSequence, weights: LossWeights, prior: Option<Gmm>) -> Result<Objective> {
        weights.validate()?;
        let aligned = obs.aligned_to(&skeleton)?;
        if let Some(g) = &prior {
            if g.dim() != 3 * (skeleton.num_joints() - 1) {
                return Err(Error::Prior(format!(
                    "mixture dimension {} does not match {} joint rotation components",
                    g.dim(),
                    3 * (skeleton.num_joints() - 1)
                )));
            }
        }
        Ok(Objective {
            targets: Targets::new(&aligned),
            skeleton,
            weights,
            prior,
            terms: TermMask::all(),
            block_size: 32,
        })
    }

    pub fn with_terms(mut self, terms: TermMask) -> Self {
        self.terms = terms;
        self
    }

    /// Per-term sums over frames `b0..b1`. `coords` holds frames `lo..`, enough
    /// to cover every derivative window, and `forces` frames `b0..b1` (empty
    /// when no physics term is enabled).
    #[allow(clippy::too_many_arguments)]
    pub fn block_terms<T: Real>(
        &self,
        num_frames: usize,
        dt: f64,
        lo: usize,
        b0: usize,
        b1: usize,
        coords: &[GeneralizedCoord<T>],
        forces: &[Vec<Vec3<T>>],
        shape: &[T],
        s: T,
    ) -> TermSums<T> {
        let w = &self.weights;
        let m = &self.terms;
        let body: ScaledBody<T> = apply_shape(&self.skeleton, shape);
        let poses: Vec<Pose<T>> = coords.iter().map(|c| c.to_pose()).collect();
        let fks: Vec<FkResult<T>> = poses.iter().map(|p| fk_unchecked(&body, p)).collect();
        let need_vel = m.smooth || m.physics();
        let diffs: Vec<Vec<T>> = if need_vel {
            (0..poses.len() - 1).map(|i| pose_difference(&poses[i], &poses[i + 1], dt)).collect()
        } else {
            Vec::new()
        };
        let bw = body.total_mass * -GRAVITY.z;
        let inv_bw = T::one() / bw;
        let mut terms = [T::zero(); 9];
        let mut behind = 0;
        for t in b0..b1 {
            let i = t - lo;
            let fk = &fks[i];
            if m.pose3d {
                terms[6] += l_pose3d_frame(&fk.positions, &self.targets, t, s, w);
            }
            if m.pose2d {
                let (v, b) = l_pose2d_frame(&fk.positions, &self.targets, t, w);
                terms[5] += v;
                behind += b;
            }
            if m.prior {
                let theta: Vec<T> = coords[i].joints[1..].iter().flat_map(|v| v.to_array()).collect();
                terms[7] += pose_prior(&theta, self.prior.as_ref()) * w.w_gmm;
            }
            if !need_vel {
                continue;
            }
            let t0 = window_start(t, num_frames) - lo;
            let k = t - lo - t0;
            let (va, vb) = (&diffs[t0], &diffs[t0 + 1]);
            let acc: Vec<T> = va.iter().zip(vb).map(|(a, b)| (*b - *a) / dt).collect();
            if m.smooth {
                let inv2 = 1.0 / (dt * dt);
                let p_acc: Vec<Vec3<T>> = (0..body.num_joints())
                    .map(|j| {
                        let (p0, p1, p2) = (fks[t0].positions[j], fks[t0 + 1].positions[j], fks[t0 + 2].positions[j]);
                        (p2 - p1.scale_f(2.0) + p0).scale_f(inv2)
                    })
                    .collect();
                terms[8] += l_smooth_frame(&acc[3..], &p_acc, w);
            }
            if !m.physics() {
                continue;
            }
            let f = &forces[t - b0];
            let (ea, eb) = if k == 0 { (t0, t0 + 1) } else { (t0 + 1, t0 + 2) };
            for (site, force) in f.iter().enumerate() {
                let height = fk.sites[site].z - self.targets.ground;
                if m.contact {
                    let vel = (fks[eb].sites[site] - fks[ea].sites[site]).scale_f(1.0 / dt);
                    let c = contact_variable(smooth_norm(*force, w.force_eps), w.k1, w.k2);
                    terms[1] += l_contact_site(c, height, vel, w);
                }
                if m.penetration {
                    terms[2] += l_penetration_site(height, w);
                }
                if m.friction {
                    terms[3] += l_friction_site(*force, w);
                }
                if m.force_cap {
                    terms[4] += l_force_cap_site(*force, w);
                }
            }
            if m.dynamics {
                let vel = if k == 0 { va } else { vb };
                let f_r = rnea_root(&body, fk, vel, &acc, GRAVITY);
                let f_c = contact_root_wrench(fk, f);
                let res: [T; 6] = std::array::from_fn(|r| f_r[r] * inv_bw - f_c[r]);
                terms[0] += l_dynamics_frame(&res, w);
            }
        }
        TermSums {
            terms,
            behind_camera: behind,
        }
    }

    /// Frame range `lo..hi` of coordinates needed by block `b0..b1`.
    pub fn block_support(&self, num_frames: usize, b0: usize, b1: usize) -> (usize, usize) {
        let need_window = self.terms.smooth || self.terms.physics();
        if need_window {
            (window_start(b0, num_frames), (b1 + 2).min(num_frames).max(window_start(b1 - 1, num_frames) + 3))
        } else {
            (b0, b1)
        }
    }

    /// Loss of a motion, evaluated without derivatives.
    pub fn total_loss(&self, params: &MotionParams) -> Result<LossBreakdown> {
        self.check_params(params)?;
        let sampled = params.sample_motion();
        let n = params.num_frames;
        let dt = params.dt();
        let mut sums = [0.0; 9];
        let mut behind = 0;
        let mut b0 = 0;
        while b0 < n {
            let b1 = (b0 + self.block_size).min(n);
            let (lo, hi) = self.block_support(n, b0, b1);
            let forces: &[Vec<Vec3<f64>>] = if self.terms.physics() { &sampled.forces[b0..b1] } else { &[] };
            let r = self.block_terms(n, dt, lo, b0, b1, &sampled.coords[lo..hi], forces, &params.shape, params.scale);
            for (a, v) in sums.iter_mut().zip(r.terms) {
                *a += v;
            }
            behind += r.behind_camera;
            b0 = b1;
        }
        let b = self.breakdown(sums, n, behind, params);
        b.check_finite()?;
        Ok(b)
    }

    /// Shape and scale regularizers, charged once per clip.
    pub fn global_terms(&self, params: &MotionParams) -> (f64, f64) {
        let shape = if self.terms.prior { l_shape(&params.shape, &self.weights) } else { 0.0 };
        let scale = if self.terms.pose3d { self.weights.w_scale * (params.scale - 1.0).powi(2) } else { 0.0 };
        (shape, scale)
    }

    pub fn check_params(&self, params: &MotionParams) -> Result<()> {
        params.validate()?;
        if params.num_joints != self.skeleton.num_joints() || params.num_sites != self.skeleton.contact_sites.len() {
            return Err(Error::Layout("motion parameters do not match the skeleton".into()));
        }
        if params.num_frames != self.targets.num_frames() {
            return Err(Error::Layout(format!(
                "motion has {} frames, observations {}",
                params.num_frames,
                self.targets.num_frames()
            )));
        }
        Ok(())
    }

    pub(crate) fn breakdown(&self, sums: [f64; 9], num_frames: usize, behind: usize, params: &MotionParams) -> LossBreakdown {
        let mut terms = sums.map(|v| v / num_frames as f64);
        let (shape_term, scale_term) = self.global_terms(params);
        terms[7] += shape_term;
        terms[6] += scale_term;
        LossBreakdown::from_terms(terms, behind)
    }
}
