//! Pose accuracy and physical plausibility metrics.
//!
//! Inputs are per-frame joint positions in meters (`seq[frame][joint]`),
//! joint 0 being the root. Results are in millimeters, velocities in
//! millimeters per frame at the sequence's frame rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::body::humanoid;
use crate::error::{Error, Result};
use crate::math::Vec3;

pub type JointSequence = [Vec<Vec3<f64>>];

/// Positions of the 15 evaluation joints in a 16-joint default-humanoid frame.
pub fn metric_subset(positions: &[Vec3<f64>]) -> Vec<Vec3<f64>> {
    humanoid::METRIC_JOINTS.iter().map(|&j| positions[j]).collect()
}

/// Indices of the ankles within [`metric_subset`].
pub const METRIC_FEET: [usize; 2] = [5, 8];

fn check(pred: &JointSequence, reference: &JointSequence, min_frames: usize) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::Layout(format!("{} predicted frames, {} reference frames", pred.len(), reference.len())));
    }
    if pred.len() < min_frames {
        return Err(Error::TooShort {
            needed: min_frames,
            got: pred.len(),
        });
    }
    if let Some(f) = pred.iter().zip(reference).position(|(a, b)| a.len() != b.len() || a.is_empty()) {
        return Err(Error::Layout(format!("frame {f}: joint counts differ")));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Root-aligned mean per-joint position error, without rotation alignment.
pub fn mpjpe(pred: &JointSequence, reference: &JointSequence) -> Result<f64> {
    check(pred, reference, 1)?;
    Ok(1e3
        * mean(pred.iter().zip(reference).flat_map(|(p, r)| {
            let (p0, r0) = (p[0], r[0]);
            p.iter().zip(r).map(move |(a, b)| ((*a - p0) - (*b - r0)).norm())
        })))
}

/// Mean distance between root positions.
pub fn global_root_error(pred: &JointSequence, reference: &JointSequence) -> Result<f64> {
    check(pred, reference, 1)?;
    Ok(1e3 * mean(pred.iter().zip(reference).map(|(p, r)| (p[0] - r[0]).norm())))
}

/// Mean and standard deviation over frames of the per-frame mean
/// `|‖Δp̂‖ − ‖Δp‖|` across joints.
pub fn smoothness_error(pred: &JointSequence, reference: &JointSequence) -> Result<(f64, f64)> {
    check(pred, reference, 2)?;
    let per_frame: Vec<f64> = (1..pred.len())
        .map(|t| {
            mean((0..pred[t].len()).map(|j| {
                let sp = (pred[t][j] - pred[t - 1][j]).norm();
                let sr = (reference[t][j] - reference[t - 1][j]).norm();
                (sp - sr).abs()
            }))
        })
        .collect();
    let m = mean(per_frame.iter().copied());
    let var = mean(per_frame.iter().map(|v| (v - m).powi(2)));
    Ok((1e3 * m, 1e3 * var.sqrt()))
}

/// Mean absolute height error of the foot joints.
pub fn foot_z_error(pred: &JointSequence, reference: &JointSequence, feet: &[usize]) -> Result<f64> {
    check(pred, reference, 1)?;
    Ok(1e3 * mean(pred.iter().zip(reference).flat_map(|(p, r)| feet.iter().map(move |&f| (p[f].z - r[f].z).abs()))))
}

/// Mean horizontal foot velocity error.
pub fn foot_vxy_error(pred: &JointSequence, reference: &JointSequence, feet: &[usize]) -> Result<f64> {
    check(pred, reference, 2)?;
    Ok(1e3
        * mean((1..pred.len()).flat_map(|t| {
            feet.iter().map(move |&f| {
                let dp = pred[t][f] - pred[t - 1][f];
                let dr = reference[t][f] - reference[t - 1][f];
                (dp.x - dr.x).hypot(dp.y - dr.y)
            })
        })))
}

/// Every `factor`-th frame.
pub fn downsample(seq: &JointSequence, factor: usize) -> Vec<Vec<Vec3<f64>>> {
    seq.iter().step_by(factor.max(1)).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mpjpe: f64,
    pub global_root_error: f64,
    pub e_smooth: f64,
    pub sigma_smooth: f64,
    pub e_foot_z: f64,
    pub e_foot_vxy: f64,
    /// Frame rate the velocity metrics refer to.
    pub fps: f64,
    pub frames: usize,
}

impl MetricsReport {
    pub fn evaluate(pred: &JointSequence, reference: &JointSequence, feet: &[usize], fps: f64) -> Result<MetricsReport> {
        let (e_smooth, sigma_smooth) = smoothness_error(pred, reference)?;
        Ok(MetricsReport {
            mpjpe: mpjpe(pred, reference)?,
            global_root_error: global_root_error(pred, reference)?,
            e_smooth,
            sigma_smooth,
            e_foot_z: foot_z_error(pred, reference, feet)?,
            e_foot_vxy: foot_vxy_error(pred, reference, feet)?,
            fps,
            frames: pred.len(),
        })
    }

    /// Evaluates after keeping every `factor`-th frame of both sequences.
    pub fn evaluate_downsampled(
        pred: &JointSequence,
        reference: &JointSequence,
        feet: &[usize],
        fps: f64,
        factor: usize,
    ) -> Result<MetricsReport> {
        let factor = factor.max(1);
        Self::evaluate(&downsample(pred, factor), &downsample(reference, factor), feet, fps / factor as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn rows(&self) -> [(&'static str, f64, &'static str); 6] {
        [
            ("MPJPE", self.mpjpe, "mm"),
            ("global root error", self.global_root_error, "mm"),
            ("e_smooth", self.e_smooth, "mm/frame"),
            ("sigma_smooth", self.sigma_smooth, "mm/frame"),
            ("e_foot_z", self.e_foot_z, "mm"),
            ("e_foot_vxy", self.e_foot_vxy, "mm/frame"),
        ]
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>10}  unit", "metric", "value")?;
        for (name, v, unit) in self.rows() {
            writeln!(f, "{name:<18} {v:>10.3}  {unit}")?;
        }
        write!(f, "{:<18} {:>10}  ({} frames)", "fps", self.fps, self.frames)
    }
}
