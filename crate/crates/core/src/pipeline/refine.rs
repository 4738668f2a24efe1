//! End-to-end refinement of an observation sequence and export of the result.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::{apply_shape, Skeleton};
use crate::dynamics::GRAVITY;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, GeneralizedCoord};
use crate::lbfgs::{two_stage_refine, write_trace_csv, RefineOutcome};
use crate::math::Vec3;
use crate::objective::{Gmm, LossBreakdown, Objective};
use crate::pipeline::config::Config;
use crate::pipeline::init::initialize;
use crate::pipeline::observation::ObservationSequence;
use crate::spline::MotionParams;

/// One frame of a refined motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinedFrame {
    /// Root position, heading, tilt and joint rotation vectors.
    pub q: Vec<f64>,
    /// Joint positions [m].
    pub positions: Vec<[f64; 3]>,
    /// Contact-site forces [N].
    pub forces: Vec<[f64; 3]>,
}

/// Densely sampled refinement result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinedMotion {
    pub fps: f64,
    pub joint_names: Vec<String>,
    /// Joint carrying each contact site.
    pub site_joints: Vec<usize>,
    pub frames: Vec<RefinedFrame>,
    /// Shape factors, averaged over chunks.
    pub shape: Vec<f64>,
    pub scale: f64,
    /// Body weight used to convert forces to newtons [N].
    pub body_weight: f64,
    pub chunks: usize,
    /// Some stage ended with a failed line search; the result is the best point found.
    pub optimizer_failed: bool,
    /// The physics stage was discarded because it degraded the pose fit.
    pub pose_guard_triggered: bool,
    /// Where the optimizer trace was written, if anywhere.
    pub trace: Option<String>,
}

/// Coordinate vector layout of [`RefinedFrame::q`].
pub fn coord_to_vec(c: &GeneralizedCoord<f64>) -> Vec<f64> {
    let mut q = Vec::with_capacity(3 + 3 * c.joints.len());
    q.extend(c.root_pos.to_array());
    q.push(c.yaw);
    q.extend(c.tilt);
    for j in &c.joints[1..] {
        q.extend(j.to_array());
    }
    q
}

pub fn vec_to_coord(q: &[f64]) -> GeneralizedCoord<f64> {
    let nj = (q.len() - 6) / 3 + 1;
    let mut joints = vec![Vec3::ZERO];
    joints.extend((1..nj).map(|j| Vec3::new(q[3 + 3 * j], q[4 + 3 * j], q[5 + 3 * j])));
    GeneralizedCoord {
        root_pos: Vec3::new(q[0], q[1], q[2]),
        yaw: q[3],
        tilt: [q[4], q[5]],
        joints,
    }
}

pub const CSV_HEADER: &str = "frame,time_s,joint,pos_x_m,pos_y_m,pos_z_m,force_x_N,force_y_N,force_z_N";

impl RefinedMotion {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Joint positions as vectors, `out[frame][joint]`.
    pub fn joint_positions(&self) -> Vec<Vec<Vec3<f64>>> {
        self.frames.iter().map(|f| f.positions.iter().map(|p| Vec3::from_array(*p)).collect()).collect()
    }

    pub fn coords(&self) -> Vec<GeneralizedCoord<f64>> {
        self.frames.iter().map(|f| vec_to_coord(&f.q)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<RefinedMotion> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))
    }

    pub fn load(path: &Path) -> Result<RefinedMotion> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// One row per frame and joint; a joint's force is the sum over its sites.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for (f, frame) in self.frames.iter().enumerate() {
            let t = f as f64 / self.fps;
            for (j, name) in self.joint_names.iter().enumerate() {
                let mut force = [0.0; 3];
                for (s, _) in self.site_joints.iter().enumerate().filter(|(_, &sj)| sj == j) {
                    for (a, v) in force.iter_mut().enumerate() {
                        *v += frame.forces[s][a];
                    }
                }
                let [px, py, pz] = frame.positions[j];
                let [fx, fy, fz] = force;
                writeln!(out, "{f},{t},{name},{px},{py},{pz},{fx},{fy},{fz}")?;
            }
        }
        Ok(())
    }

    /// Writes JSON or CSV, chosen by the file extension.
    pub fn export(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let mut buf = Vec::new();
                self.write_csv(&mut buf)?;
                std::fs::write(path, buf)?;
            }
            Some("json") => std::fs::write(path, self.to_json()?)?,
            _ => return Err(Error::validation("output", "export format must be .json or .csv")),
        }
        Ok(())
    }
}

/// Refinement of one contiguous frame range.
#[derive(Clone, Debug)]
pub struct ChunkResult {
    pub start: usize,
    pub end: usize,
    pub initial: MotionParams,
    pub outcome: RefineOutcome,
    /// Loss of the kinematic stage's result, before physics.
    pub kinematic_loss: Option<LossBreakdown>,
    pub pose_guard_triggered: bool,
}

#[derive(Clone, Debug)]
pub struct RefineReport {
    pub motion: RefinedMotion,
    pub chunks: Vec<ChunkResult>,
}

impl RefineReport {
    /// Optimizer trace of every chunk, with a leading chunk column.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        let mut first = true;
        for (i, c) in self.chunks.iter().enumerate() {
            let mut buf = Vec::new();
            write_trace_csv(&c.outcome.trace, &mut buf)?;
            let text = String::from_utf8(buf).expect("trace is ASCII");
            for (k, line) in text.lines().enumerate() {
                if k == 0 {
                    if first {
                        writeln!(out, "chunk,{line}")?;
                        first = false;
                    }
                } else {
                    writeln!(out, "{i},{line}")?;
                }
            }
        }
        Ok(())
    }
}

/// Frame ranges of the chunks covering `n` frames: equal lengths of at most
/// `max_len`, consecutive chunks sharing `overlap` frames.
pub fn chunk_ranges(n: usize, max_len: usize, overlap: usize) -> Vec<(usize, usize)> {
    if n <= max_len {
        return vec![(0, n)];
    }
    let overlap = overlap.min(max_len / 2);
    let k = (n - overlap).div_ceil(max_len - overlap);
    let len = (n + (k - 1) * overlap).div_ceil(k);
    (0..k)
        .map(|i| {
            let s = i * (len - overlap);
            (s, (s + len).min(n))
        })
        .collect()
}

fn slice_observations(obs: &ObservationSequence, start: usize, end: usize) -> ObservationSequence {
    ObservationSequence {
        frames: obs.frames[start..end].to_vec(),
        warnings: Vec::new(),
        ..obs.clone()
    }
}

fn refine_chunk(obs: &ObservationSequence, skel: &Skeleton, cfg: &Config, prior: Option<&Gmm>, range: (usize, usize)) -> Result<ChunkResult> {
    let chunk = slice_observations(obs, range.0, range.1);
    let initial = initialize(&chunk, skel, cfg)?;
    let mut objective = Objective::new(skel.clone(), &chunk, cfg.weights.clone(), prior.cloned())?;
    objective.block_size = cfg.pipeline.block_size;
    let mut outcome = two_stage_refine(&objective, &initial, &cfg.optimizer, cfg.pipeline.enable_physics)?;
    let kinematic_loss = (outcome.stages.len() > 1).then(|| outcome.stages[0].end);
    let mut guard = false;
    if let (Some(kin), Some(kin_params)) = (&kinematic_loss, &outcome.kinematic_params) {
        let end = outcome.final_loss().expect("stage ran").pose();
        if end > cfg.pipeline.pose_growth_limit * kin.pose() {
            log::warn!(
                "frames {}..{}: physics stage raised the pose loss from {:.4e} to {end:.4e}; keeping the kinematic result",
                range.0,
                range.1,
                kin.pose()
            );
            outcome.params = kin_params.clone();
            guard = true;
        }
    }
    Ok(ChunkResult {
        start: range.0,
        end: range.1,
        initial,
        outcome,
        kinematic_loss,
        pose_guard_triggered: guard,
    })
}

struct Dense {
    q: Vec<Vec<f64>>,
    positions: Vec<Vec<Vec3<f64>>>,
    forces: Vec<Vec<Vec3<f64>>>,
}

fn densify(skel: &Skeleton, params: &MotionParams) -> Result<(Dense, f64)> {
    let body = apply_shape(skel, &params.shape);
    let bw = body.total_mass * -GRAVITY.z;
    let sampled = params.sample_motion();
    let positions = sampled
        .coords
        .iter()
        .map(|c| Ok(forward_kinematics(&body, &c.to_pose())?.positions))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Dense {
            q: sampled.coords.iter().map(coord_to_vec).collect(),
            positions,
            forces: sampled.forces.iter().map(|fr| fr.iter().map(|f| f.scale(bw)).collect()).collect(),
        },
        bw,
    ))
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// Runs initialization and the two-stage optimization, chunking long
/// sequences and cross-fading the overlaps linearly.
pub fn refine(obs: &ObservationSequence, skel: &Skeleton, cfg: &Config) -> Result<RefineReport> {
    cfg.validate()?;
    obs.validate()?;
    let obs = obs.aligned_to(skel)?;
    let prior = cfg.pipeline.prior.as_deref().map(Gmm::load_json).transpose()?;
    let n = obs.num_frames();
    let overlap = (cfg.pipeline.chunk_overlap_s * obs.fps).round() as usize;
    let ranges = chunk_ranges(n, cfg.pipeline.max_chunk_frames, overlap);
    let chunks: Vec<ChunkResult> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|&r| {
                let (obs, prior) = (&obs, prior.as_ref());
                s.spawn(move || refine_chunk(obs, skel, cfg, prior, r))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chunk worker panicked")).collect::<Result<Vec<_>>>()
    })?;

    let nj = skel.num_joints();
    let mut q = vec![Vec::new(); n];
    let mut positions = vec![Vec::new(); n];
    let mut forces = vec![Vec::new(); n];
    let mut shape = vec![0.0; nj];
    let (mut scale, mut bw_sum) = (0.0, 0.0);
    let mut prev_end = 0;
    for c in &chunks {
        let (dense, bw) = densify(skel, &c.outcome.params)?;
        bw_sum += bw;
        scale += c.outcome.params.scale;
        for (a, b) in shape.iter_mut().zip(&c.outcome.params.shape) {
            *a += b;
        }
        for (i, f) in (c.start..c.end).enumerate() {
            if f < prev_end {
                let w = (f + 1 - c.start) as f64 / (prev_end - c.start + 1) as f64;
                for (a, b) in q[f].iter_mut().zip(&dense.q[i]) {
                    *a = lerp(*a, *b, w);
                }
                for (a, b) in positions[f].iter_mut().zip(&dense.positions[i]) {
                    *a = *a + (*b - *a).scale(w);
                }
                for (a, b) in forces[f].iter_mut().zip(&dense.forces[i]) {
                    *a = *a + (*b - *a).scale(w);
                }
            } else {
                q[f] = dense.q[i].clone();
                positions[f] = dense.positions[i].clone();
                forces[f] = dense.forces[i].clone();
            }
        }
        prev_end = c.end;
    }
    let k = chunks.len() as f64;
    let motion = RefinedMotion {
        fps: obs.fps,
        joint_names: obs.joint_names.clone(),
        site_joints: skel.contact_sites.iter().map(|s| s.joint).collect(),
        frames: (0..n)
            .map(|f| RefinedFrame {
                q: q[f].clone(),
                positions: positions[f].iter().map(|p| p.to_array()).collect(),
                forces: forces[f].iter().map(|p| p.to_array()).collect(),
            })
            .collect(),
        shape: shape.iter().map(|s| s / k).collect(),
        scale: scale / k,
        body_weight: bw_sum / k,
        chunks: chunks.len(),
        optimizer_failed: chunks.iter().any(|c| c.outcome.line_search_failed()),
        pose_guard_triggered: chunks.iter().any(|c| c.pose_guard_triggered),
        trace: None,
    };
    Ok(RefineReport { motion, chunks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::build_default_humanoid;
    use crate::lbfgs::OptimizerConfig;
    use crate::pipeline::synthetic::{generate_synthetic, Scene, SynthConfig};

    fn quick_config() -> Config {
        let mut cfg = Config::default();
        cfg.optimizer = OptimizerConfig {
            kinematic_iterations: 15,
            physics_iterations: 15,
            ..OptimizerConfig::default()
        };
        cfg
    }

    #[test]
    fn chunk_ranges_cover_with_overlap() {
        assert_eq!(chunk_ranges(500, 2000, 50), vec![(0, 500)]);
        let r = chunk_ranges(2500, 2000, 50);
        assert_eq!(r, vec![(0, 1275), (1225, 2500)]);
        let r = chunk_ranges(10_001, 2000, 50);
        assert!(r.iter().all(|(s, e)| e - s <= 2000));
        assert_eq!(r.last().unwrap().1, 10_001);
        for w in r.windows(2) {
            assert_eq!(w[0].1 - w[1].0, 50);
        }
    }

    #[test]
    fn coordinate_vector_round_trip() {
        let sc = generate_synthetic(Scene::Squat, 2.0, 0, &SynthConfig::default()).unwrap();
        let c = &sc.truth.coords[20];
        assert_eq!(&vec_to_coord(&coord_to_vec(c)), c);
        assert_eq!(coord_to_vec(c).len(), 6 + 3 * 15);
    }

    #[test]
    fn export_round_trips_and_csv_has_one_row_per_joint() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
        let report = refine(&sc.noisy, &skel, &quick_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        report.motion.export(&a).unwrap();
        let b = dir.path().join("b.json");
        RefinedMotion::load(&a).unwrap().export(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let c = dir.path().join("m.csv");
        report.motion.export(&c).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.contains("force_z_N"));
        assert_eq!(lines.count(), report.motion.num_frames() * skel.num_joints());
        assert!(report.motion.export(&dir.path().join("m.txt")).is_err());
    }

    #[test]
    fn csv_forces_sum_over_sites() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
        let motion = refine(&sc.noisy, &skel, &quick_config()).unwrap().motion;
        let mut buf = Vec::new();
        motion.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1 + crate::body::humanoid::LEFT_ANKLE).unwrap().split(',').collect();
        let fz: f64 = row[8].parse().unwrap();
        let expected: f64 = (0..4).map(|s| motion.frames[0].forces[s][2]).sum();
        assert_eq!(fz, expected);
    }

    #[test]
    fn refinement_is_deterministic() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 2.0, 0, &SynthConfig::default()).unwrap();
        let a = refine(&sc.noisy, &skel, &quick_config()).unwrap();
        let b = refine(&sc.noisy, &skel, &quick_config()).unwrap();
        assert_eq!(a.motion.to_json().unwrap(), b.motion.to_json().unwrap());
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        a.write_trace(&mut ta).unwrap();
        b.write_trace(&mut tb).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn long_input_is_chunked_with_a_continuous_seam() {
        let skel = build_default_humanoid();
        let sc = generate_synthetic(Scene::StandingSway, 10.0, 0, &SynthConfig::default()).unwrap();
        let mut cfg = quick_config();
        cfg.pipeline.max_chunk_frames = 300;
        let report = refine(&sc.noisy, &skel, &cfg).unwrap();
        assert_eq!(report.motion.chunks, 2);
        assert_eq!(report.motion.num_frames(), 500);
        let q = report.motion.frames.iter().map(|f| f.q.clone()).collect::<Vec<_>>();
        let step = |f: usize| q[f].iter().zip(&q[f + 1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let typical = (1..499).map(step).sum::<f64>() / 498.0;
        let (s1, e0) = (report.chunks[1].start, report.chunks[0].end);
        for f in s1 - 1..e0 {
            assert!(step(f) < 5.0 * typical + 1e-3, "frame {f}: {} vs {typical}", step(f));
        }
    }
}
