//! Cubic Hermite spline parameterization of the motion.
//!
//! Every time-varying variable is one channel on a shared knot grid. The
//! channel layout for a skeleton with `n` joints and `c` contact sites is
//!
//! | channels            | meaning                                   |
//! |---------------------|-------------------------------------------|
//! | `0..3`              | root position [m]                         |
//! | `3`                 | heading rate [rad/s]                      |
//! | `4..6`              | root tilt (x, y quaternion components)    |
//! | `6..6+3(n-1)`       | joint exponential maps [rad]              |
//! | then `3c`           | contact forces [body weights]             |
//!
//! The heading at frame `t` is `yaw0 + dt * Σ_{τ<t} rate(τ)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};
use crate::kinematics::GeneralizedCoord;
use crate::math::Vec3;

pub const ROOT_POS: usize = 0;
pub const YAW_RATE: usize = 3;
pub const TILT: usize = 4;
pub const JOINTS: usize = 6;

/// Hermite basis weights `[p0, m0, p1, m1]` of one sample, and their
/// derivatives with respect to the segment's start and end knot times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleWeights {
    pub segment: usize,
    pub w: [f64; 4],
    pub dw_dt0: [f64; 4],
    pub dw_dt1: [f64; 4],
    pub clamped: bool,
}

fn basis(u: f64) -> [f64; 4] {
    let (u2, u3) = (u * u, u * u * u);
    [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2]
}

fn basis_deriv(u: f64) -> [f64; 4] {
    let u2 = u * u;
    [6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u]
}

/// Index of the segment containing `t`; knot times map to the segment they start.
fn locate(times: &[f64], t: f64) -> (usize, f64, bool) {
    let last = times.len() - 1;
    if t < times[0] {
        return (0, times[0], true);
    }
    if t > times[last] {
        return (last - 1, times[last], true);
    }
    let seg = times.partition_point(|&k| k <= t).saturating_sub(1).min(last - 1);
    (seg, t, false)
}

/// Basis weights for sampling at `t` on the grid `times`.
pub fn sample_weights(times: &[f64], t: f64) -> SampleWeights {
    let (seg, t, clamped) = locate(times, t);
    let (t0, t1) = (times[seg], times[seg + 1]);
    let h = t1 - t0;
    let u = (t - t0) / h;
    let b = basis(u);
    let db = basis_deriv(u);
    let w = [b[0], h * b[1], b[2], h * b[3]];
    if clamped {
        return SampleWeights {
            segment: seg,
            w,
            dw_dt0: [0.0; 4],
            dw_dt1: [0.0; 4],
            clamped,
        };
    }
    // du/dt0 = (u - 1)/h, du/dt1 = -u/h, dh/dt0 = -1, dh/dt1 = 1
    let (a0, a1) = ((u - 1.0) / h, -u / h);
    SampleWeights {
        segment: seg,
        w,
        dw_dt0: [db[0] * a0, -b[1] + h * db[1] * a0, db[2] * a0, -b[3] + h * db[3] * a0],
        dw_dt1: [db[0] * a1, b[1] + h * db[1] * a1, db[2] * a1, b[3] + h * db[3] * a1],
        clamped,
    }
}

/// A single cubic Hermite curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteChannel {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub tangents: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub derivative: f64,
    /// The query time was outside the knot range and has been clamped.
    pub clamped: bool,
}

impl HermiteChannel {
    pub fn new(times: Vec<f64>, values: Vec<f64>, tangents: Vec<f64>) -> Result<Self> {
        validate_grid(&times)?;
        if values.len() != times.len() || tangents.len() != times.len() {
            return Err(Error::Layout(format!(
                "{} knot times, {} values, {} tangents",
                times.len(),
                values.len(),
                tangents.len()
            )));
        }
        Ok(HermiteChannel { times, values, tangents })
    }

    pub fn eval(&self, t: f64) -> Evaluation {
        let (seg, tc, clamped) = locate(&self.times, t);
        let h = self.times[seg + 1] - self.times[seg];
        let u = (tc - self.times[seg]) / h;
        let (p0, p1) = (self.values[seg], self.values[seg + 1]);
        let (m0, m1) = (self.tangents[seg] * h, self.tangents[seg + 1] * h);
        let b = basis(u);
        let d = basis_deriv(u);
        Evaluation {
            value: b[0] * p0 + b[1] * m0 + b[2] * p1 + b[3] * m1,
            derivative: (d[0] * p0 + d[1] * m0 + d[2] * p1 + d[3] * m1) / h,
            clamped,
        }
    }
}

fn validate_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Layout("a spline needs at least two knots".into()));
    }
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
        return Err(Error::validation(
            format!("knot_times[{}]", i + 1),
            "knot times must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Frames that carry knots: every `subsample`-th frame plus the final one.
pub fn knot_frames(num_frames: usize, subsample: usize) -> Vec<usize> {
    let mut k: Vec<usize> = (0..num_frames).step_by(subsample.max(1)).collect();
    if *k.last().unwrap() != num_frames - 1 {
        k.push(num_frames - 1);
    }
    k
}

/// Catmull-Rom tangents: central differences inside, one-sided at the ends.
pub fn catmull_rom_tangents(times: &[f64], values: &[f64]) -> Vec<f64> {
    let k = times.len();
    (0..k)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(k - 1));
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// Fits a channel to per-frame samples with knots every `subsample` frames.
pub fn init_channel(samples: &[f64], rate: f64, subsample: usize) -> Result<HermiteChannel> {
    let needed = 2 * subsample.max(1);
    if samples.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: samples.len(),
        });
    }
    let frames = knot_frames(samples.len(), subsample);
    let times: Vec<f64> = frames.iter().map(|&f| f as f64 / rate).collect();
    let values: Vec<f64> = frames.iter().map(|&f| samples[f]).collect();
    let tangents = catmull_rom_tangents(&times, &values);
    HermiteChannel::new(times, values, tangents)
}

/// All optimization variables of one motion clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub fps: f64,
    pub num_frames: usize,
    pub num_joints: usize,
    pub num_sites: usize,
    pub knot_times: Vec<f64>,
    /// `values[channel][knot]`.
    pub values: Vec<Vec<f64>>,
    pub tangents: Vec<Vec<f64>>,
    /// Per-link shape factors.
    pub shape: Vec<f64>,
    /// Scale between observed and modeled 3D keypoints.
    pub scale: f64,
    /// Heading at frame 0 [rad].
    pub yaw0: f64,
    /// Treat knot intervals as optimization variables.
    #[serde(default)]
    pub optimize_knot_times: bool,
}

pub fn num_channels(num_joints: usize, num_sites: usize) -> usize {
    JOINTS + 3 * (num_joints - 1) + 3 * num_sites
}

pub fn force_channel(num_joints: usize, site: usize) -> usize {
    JOINTS + 3 * (num_joints - 1) + 3 * site
}

pub fn joint_channel(joint: usize) -> usize {
    JOINTS + 3 * (joint - 1)
}

/// Dense per-frame samples of a [`MotionParams`].
#[derive(Clone, Debug)]
pub struct SampledMotion {
    pub coords: Vec<GeneralizedCoord<f64>>,
    /// Contact forces per frame and site [body weights].
    pub forces: Vec<Vec<Vec3<f64>>>,
    /// Frames whose time fell outside the knot range.
    pub clamped_frames: Vec<usize>,
}

impl MotionParams {
    pub fn num_channels(&self) -> usize {
        num_channels(self.num_joints, self.num_sites)
    }

    pub fn num_knots(&self) -> usize {
        self.knot_times.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.num_frames).map(|f| f as f64 / self.fps).collect()
    }

    /// Builds parameters from per-frame channel samples (`samples[channel][frame]`).
    pub fn from_samples(
        samples: &[Vec<f64>],
        fps: f64,
        subsample: usize,
        num_joints: usize,
        num_sites: usize,
    ) -> Result<MotionParams> {
        let nc = num_channels(num_joints, num_sites);
        if samples.len() != nc {
            return Err(Error::Layout(format!("{} channels, expected {nc}", samples.len())));
        }
        let num_frames = samples[0].len();
        if samples.iter().any(|c| c.len() != num_frames) {
            return Err(Error::Layout("channels differ in length".into()));
        }
        let channels = samples
            .iter()
            .map(|s| init_channel(s, fps, subsample))
            .collect::<Result<Vec<_>>>()?;
        Ok(MotionParams {
            fps,
            num_frames,
            num_joints,
            num_sites,
            knot_times: channels[0].times.clone(),
            values: channels.iter().map(|c| c.values.clone()).collect(),
            tangents: channels.into_iter().map(|c| c.tangents).collect(),
            shape: vec![1.0; num_joints],
            scale: 1.0,
            yaw0: 0.0,
            optimize_knot_times: false,
        })
    }

    pub fn channel(&self, c: usize) -> HermiteChannel {
        HermiteChannel {
            times: self.knot_times.clone(),
            values: self.values[c].clone(),
            tangents: self.tangents[c].clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.knot_times)?;
        let nc = self.num_channels();
        let k = self.num_knots();
        if self.values.len() != nc || self.tangents.len() != nc {
            return Err(Error::Layout(format!("expected {nc} channels")));
        }
        if self.values.iter().chain(&self.tangents).any(|c| c.len() != k) {
            return Err(Error::Layout(format!("every channel needs {k} knots")));
        }
        if self.shape.len() != self.num_joints {
            return Err(Error::Layout(format!("expected {} shape factors", self.num_joints)));
        }
        if let Some(i) = self.shape.iter().position(|f| !(*f > 0.0)) {
            return Err(Error::validation(format!("shape[{i}]"), "shape factors must be positive"));
        }
        if !(self.fps > 0.0) || self.num_frames < 3 {
            return Err(Error::validation("fps", "need fps > 0 and at least 3 frames"));
        }
        Ok(())
    }

    /// Per-frame values of every channel, `out[frame][channel]`.
    pub fn sample_channels(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let nc = self.num_channels();
        let mut clamped = Vec::new();
        let rows = self
            .frame_times()
            .into_iter()
            .enumerate()
            .map(|(f, t)| {
                let sw = sample_weights(&self.knot_times, t);
                if sw.clamped {
                    clamped.push(f);
                }
                let s = sw.segment;
                (0..nc)
                    .map(|c| {
                        let (v, m) = (&self.values[c], &self.tangents[c]);
                        sw.w[0] * v[s] + sw.w[1] * m[s] + sw.w[2] * v[s + 1] + sw.w[3] * m[s + 1]
                    })
                    .collect()
            })
            .collect();
        (rows, clamped)
    }

    /// Heading per frame from the sampled heading-rate channel.
    pub fn headings(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let dt = self.dt();
        let mut acc = self.yaw0;
        rows.iter()
            .map(|r| {
                let y = acc;
                acc += dt * r[YAW_RATE];
                y
            })
            .collect()
    }

    pub fn sample_motion(&self) -> SampledMotion {
        let (rows, clamped_frames) = self.sample_channels();
        let yaws = self.headings(&rows);
        let coords = rows
            .iter()
            .zip(&yaws)
            .map(|(r, y)| coord_from_row(r, *y, self.num_joints))
            .collect();
        let fc = force_channel(self.num_joints, 0);
        let forces = rows
            .iter()
            .map(|r| {
                (0..self.num_sites)
                    .map(|i| Vec3::new(r[fc + 3 * i], r[fc + 3 * i + 1], r[fc + 3 * i + 2]))
                    .collect()
            })
            .collect();
        SampledMotion {
            coords,
            forces,
            clamped_frames,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<MotionParams> {
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let p: MotionParams = serde_path_to_error::deserialize(de).map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Generalized coordinate from one row of channel samples.
pub fn coord_from_row<T: Real>(row: &[T], yaw: T, num_joints: usize) -> GeneralizedCoord<T> {
    let mut joints = Vec::with_capacity(num_joints);
    joints.push(Vec3::zero());
    for j in 1..num_joints {
        let c = joint_channel(j);
        joints.push(Vec3::new(row[c], row[c + 1], row[c + 2]));
    }
    GeneralizedCoord {
        root_pos: Vec3::new(row[ROOT_POS], row[ROOT_POS + 1], row[ROOT_POS + 2]),
        yaw,
        tilt: [row[TILT], row[TILT + 1]],
        joints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_basis_at_midpoint() {
        let c = HermiteChannel::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(basis(0.5), [0.5, 0.125, 0.5, -0.125]);
        assert!((c.eval(0.5).value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn knots_are_interpolated_exactly() {
        let c = HermiteChannel::new(vec![0.0, 0.16, 0.32, 0.4], vec![1.0, -2.0, 0.5, 3.0], vec![0.3, 7.0, -1.0, 2.0]).unwrap();
        for i in 0..4 {
            let e = c.eval(c.times[i]);
            assert_eq!(e.value, c.values[i]);
            assert!((e.derivative - c.tangents[i]).abs() < 1e-12);
            assert!(!e.clamped);
        }
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        let c = HermiteChannel::new(vec![0.0, 1.0], vec![2.0, 3.0], vec![0.0, 0.0]).unwrap();
        let e = c.eval(1.5);
        assert!(e.clamped);
        assert_eq!(e.value, 3.0);
        assert!(c.eval(-0.1).clamped);
    }

    #[test]
    fn constant_samples_give_flat_channel() {
        let c = init_channel(&[4.0; 30], 50.0, 8).unwrap();
        assert!(c.values.iter().all(|&v| v == 4.0));
        assert!(c.tangents.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn catmull_rom_interior_tangent() {
        let m = catmull_rom_tangents(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        assert_eq!(m[1], 0.0);
        assert_eq!((m[0], m[2]), (1.0, -1.0));
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        let samples: Vec<f64> = (0..37).map(|f| 0.3 + 0.05 * f as f64).collect();
        let c = init_channel(&samples, 50.0, 8).unwrap();
        assert_eq!(*c.times.last().unwrap(), 36.0 / 50.0);
        for f in 0..37 {
            let t = f as f64 / 50.0;
            assert!((c.eval(t).value - samples[f]).abs() < 1e-12);
            assert!((c.eval(t).derivative - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_frames_is_an_error() {
        assert!(matches!(init_channel(&[0.0; 10], 50.0, 8), Err(Error::TooShort { .. })));
    }

    #[test]
    fn derivative_matches_central_difference_and_is_c1() {
        let c = HermiteChannel::new(vec![0.0, 0.3, 0.5, 1.1], vec![0.0, 2.0, -1.0, 0.4], vec![1.0, -3.0, 2.0, 0.0]).unwrap();
        let h = 1e-6;
        for i in 1..100 {
            let t = 1.1 * i as f64 / 100.0;
            let fd = (c.eval(t + h).value - c.eval(t - h).value) / (2.0 * h);
            let d = c.eval(t).derivative;
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "t={t}: {fd} vs {d}");
        }
        for &k in &c.times[1..3] {
            let left = c.eval(k - 1e-12).derivative;
            let right = c.eval(k).derivative;
            assert!((left - right).abs() < 1e-9);
        }
    }

    #[test]
    fn knot_time_weight_derivatives_match_finite_differences() {
        let times = vec![0.0, 0.2, 0.5];
        let t = 0.31;
        let sw = sample_weights(&times, t);
        let e = 1e-7;
        let mut up = times.clone();
        up[1] += e;
        let mut dn = times.clone();
        dn[1] -= e;
        let (a, b) = (sample_weights(&up, t), sample_weights(&dn, t));
        for i in 0..4 {
            let fd = (a.w[i] - b.w[i]) / (2.0 * e);
            assert!((fd - sw.dw_dt0[i]).abs() < 1e-6, "{i}: {fd} vs {}", sw.dw_dt0[i]);
        }
        let mut up = times.clone();
        up[2] += e;
        let mut dn = times.clone();
        dn[2] -= e;
        let (a, b) = (sample_weights(&up, t), sample_weights(&dn, t));
        for i in 0..4 {
            let fd = (a.w[i] - b.w[i]) / (2.0 * e);
            assert!((fd - sw.dw_dt1[i]).abs() < 1e-6);
        }
    }

    fn walk(n: usize, fps: f64) -> Vec<f64> {
        (0..n).map(|f| (2.0 * std::f64::consts::PI * 0.9 * f as f64 / fps).sin() * 0.3).collect()
    }

    #[test]
    fn reconstruction_error_shrinks_with_denser_knots() {
        let fps = 50.0;
        let s = walk(200, fps);
        let err = |sub| {
            let c = init_channel(&s, fps, sub).unwrap();
            (0..200).map(|f| (c.eval(f as f64 / fps).value - s[f]).abs()).fold(0.0, f64::max)
        };
        let (e8, e4, e1) = (err(8), err(4), err(1));
        assert!(e8 < 1e-2, "{e8}");
        assert!(e4 < e8 && e1 < e4 && e1 < 1e-12);
    }

    fn params() -> MotionParams {
        let (nj, ns) = (3, 2);
        let nc = num_channels(nj, ns);
        let samples: Vec<Vec<f64>> = (0..nc)
            .map(|c| (0..33).map(|f| (0.1 * c as f64 + 0.03 * f as f64).sin()).collect())
            .collect();
        MotionParams::from_samples(&samples, 50.0, 8, nj, ns).unwrap()
    }

    #[test]
    fn sampling_at_knot_frames_returns_knot_values() {
        let p = params();
        let (rows, clamped) = p.sample_channels();
        assert!(clamped.is_empty());
        for (k, f) in knot_frames(33, 8).into_iter().enumerate() {
            for c in 0..p.num_channels() {
                assert_eq!(rows[f][c], p.values[c][k]);
            }
        }
    }

    #[test]
    fn doubling_rate_interleaves_samples() {
        let p = params();
        let c = p.channel(5);
        let coarse: Vec<f64> = (0..33).map(|f| c.eval(f as f64 / 50.0).value).collect();
        let fine: Vec<f64> = (0..65).map(|f| c.eval(f as f64 / 100.0).value).collect();
        for f in 0..33 {
            assert_eq!(coarse[f], fine[2 * f]);
        }
    }

    #[test]
    fn headings_accumulate_rate() {
        let mut p = params();
        p.yaw0 = 0.5;
        for k in 0..p.num_knots() {
            p.values[YAW_RATE][k] = 2.0;
            p.tangents[YAW_RATE][k] = 0.0;
        }
        let m = p.sample_motion();
        for (f, c) in m.coords.iter().enumerate() {
            assert!((c.yaw - (0.5 + 2.0 * f as f64 / 50.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        p.save_json(&path).unwrap();
        assert_eq!(MotionParams::load_json(&path).unwrap(), p);
    }
}
