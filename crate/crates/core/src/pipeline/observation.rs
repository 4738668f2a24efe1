//! Observation files: per-frame 3D and 2D keypoints with confidences and the
//! camera that produced them.
//!
//! ```json
//! {
//!   "fps": 50.0,
//!   "joint_names": ["pelvis", "spine", ...],
//!   "camera": {"fx": 1000, "fy": 1000, "cx": 640, "cy": 360,
//!              "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,4]},
//!   "ground_height": 0.0,
//!   "frames": [{"keypoints_3d": [[x,y,z], null, ...],
//!               "keypoints_2d": [[u,v], ...],
//!               "confidence": [1.0, ...]}]
//! }
//! ```
//!
//! 3D keypoints are in camera coordinates [m]; 2D keypoints in pixels.
//! A world point `x` maps to camera coordinates `rotation · x + translation`
//! (z forward, y down) and projects to `(fx·x/z + cx, fy·y/z + cy)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::Skeleton;
use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Camera {
    pub fn rotation_matrix(&self) -> Mat3<f64> {
        Mat3 { m: self.rotation }
    }

    pub fn to_camera(&self, p: Vec3<f64>) -> Vec3<f64> {
        self.rotation_matrix().mul_vec(p) + Vec3::from_array(self.translation)
    }

    /// Pixel coordinates, or `None` behind the camera.
    pub fn project(&self, p: Vec3<f64>) -> Option<[f64; 2]> {
        let c = self.to_camera(p);
        (c.z > MIN_DEPTH).then(|| [self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy])
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("fx", self.fx), ("fy", self.fy)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("camera.{name}"), "focal length must be positive"));
            }
        }
        if !self.cx.is_finite() || !self.cy.is_finite() || self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("camera", "non-finite camera parameter"));
        }
        let r = self.rotation_matrix();
        let rrt = r.mul_mat(&r.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                if !((rrt.m[i][j] - target).abs() < 1e-6) {
                    return Err(Error::validation("camera.rotation", "rotation must be orthonormal"));
                }
            }
        }
        Ok(())
    }
}

/// Points closer to the image plane than this are treated as behind the camera [m].
pub const MIN_DEPTH: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFrame {
    pub keypoints_3d: Vec<Option<[f64; 3]>>,
    pub keypoints_2d: Vec<Option<[f64; 2]>>,
    pub confidence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSequence {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub camera: Camera,
    #[serde(default)]
    pub ground_height: f64,
    pub frames: Vec<ObservationFrame>,
    /// Sanitization notes produced while loading.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl ObservationSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn from_json_str(text: &str) -> Result<ObservationSequence> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut seq: ObservationSequence =
            serde_path_to_error::deserialize(de).map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))?;
        seq.validate()?;
        seq.sanitize();
        Ok(seq)
    }

    pub fn load(path: &Path) -> Result<ObservationSequence> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::validation("fps", "must be positive"));
        }
        if self.frames.is_empty() {
            return Err(Error::validation("frames", "at least one frame is required"));
        }
        if !self.ground_height.is_finite() {
            return Err(Error::validation("ground_height", "must be finite"));
        }
        self.camera.validate()?;
        let j = self.joint_names.len();
        for (f, frame) in self.frames.iter().enumerate() {
            for (field, len) in [
                ("keypoints_3d", frame.keypoints_3d.len()),
                ("keypoints_2d", frame.keypoints_2d.len()),
                ("confidence", frame.confidence.len()),
            ] {
                if len != j {
                    return Err(Error::validation(
                        format!("frames[{f}].{field}"),
                        format!("expected {j} entries, found {len}"),
                    ));
                }
            }
            for (k, c) in frame.confidence.iter().enumerate() {
                if !(0.0..=1.0).contains(c) {
                    return Err(Error::validation(
                        format!("frames[{f}].confidence[{k}]"),
                        format!("confidence {c} outside [0, 1]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Replaces missing or non-finite keypoints by zeros with confidence 0.
    fn sanitize(&mut self) {
        for (f, frame) in self.frames.iter_mut().enumerate() {
            for k in 0..frame.confidence.len() {
                let bad3 = frame.keypoints_3d[k].is_none_or(|p| p.iter().any(|v| !v.is_finite()));
                let bad2 = frame.keypoints_2d[k].is_none_or(|p| p.iter().any(|v| !v.is_finite()));
                if bad3 || bad2 {
                    if bad3 {
                        frame.keypoints_3d[k] = Some([0.0; 3]);
                    }
                    if bad2 {
                        frame.keypoints_2d[k] = Some([0.0; 2]);
                    }
                    frame.confidence[k] = 0.0;
                    self.warnings.push(format!(
                        "frames[{f}]: missing keypoint for joint `{}`, confidence set to 0",
                        self.joint_names[k]
                    ));
                }
            }
        }
    }

    /// Reorders joints to the skeleton's order; every skeleton joint must be present.
    pub fn aligned_to(&self, skel: &Skeleton) -> Result<ObservationSequence> {
        let map = skel
            .joints
            .iter()
            .map(|j| {
                self.joint_names
                    .iter()
                    .position(|n| *n == j.name)
                    .ok_or_else(|| Error::validation("joint_names", format!("missing skeleton joint `{}`", j.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let pick = |f: &ObservationFrame| ObservationFrame {
            keypoints_3d: map.iter().map(|&i| f.keypoints_3d[i]).collect(),
            keypoints_2d: map.iter().map(|&i| f.keypoints_2d[i]).collect(),
            confidence: map.iter().map(|&i| f.confidence[i]).collect(),
        };
        Ok(ObservationSequence {
            fps: self.fps,
            joint_names: skel.joints.iter().map(|j| j.name.clone()).collect(),
            camera: self.camera.clone(),
            ground_height: self.ground_height,
            frames: self.frames.iter().map(pick).collect(),
            warnings: self.warnings.clone(),
        })
    }

    pub fn keypoint_3d(&self, frame: usize, joint: usize) -> Vec3<f64> {
        Vec3::from_array(self.frames[frame].keypoints_3d[joint].unwrap_or([0.0; 3]))
    }

    /// 3D keypoints mapped back to world coordinates.
    pub fn world_keypoints(&self, frame: usize) -> Vec<Vec3<f64>> {
        let r = self.camera.rotation_matrix();
        let t = Vec3::from_array(self.camera.translation);
        (0..self.joint_names.len())
            .map(|j| r.tr_mul_vec(self.keypoint_3d(frame, j) - t))
            .collect()
    }
}
