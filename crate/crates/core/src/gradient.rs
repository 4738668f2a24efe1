//! Exact gradients of the objective with respect to the flat parameter vector.
//!
//! Frames are processed in blocks. Each block records the sampled channel
//! values of the frames it touches on a fresh tape, evaluates its loss terms,
//! and backpropagates once. The map from knots to samples is linear (for
//! fixed knot times) and is applied by hand, as is the prefix sum turning the
//! heading-rate channel into headings.
//!
//! Flat layout: for each channel and knot `[value, tangent]`, then the `K − 1`
//! knot intervals if knot times are optimized, then the shape factors, the
//! keypoint scale and the initial heading.

use crate::ad::{Real, Tape, Var};
use crate::error::{Error, Result};
use crate::objective::{LossBreakdown, Objective};
use crate::spline::{coord_from_row, force_channel, sample_weights, MotionParams, SampleWeights, YAW_RATE};

/// Index bookkeeping for the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub num_channels: usize,
    pub num_knots: usize,
    pub num_shape: usize,
    pub knot_times: bool,
}

impl Layout {
    pub fn of(params: &MotionParams) -> Layout {
        Layout {
            num_channels: params.num_channels(),
            num_knots: params.num_knots(),
            num_shape: params.shape.len(),
            knot_times: params.optimize_knot_times,
        }
    }

    pub fn value(&self, channel: usize, knot: usize) -> usize {
        2 * (channel * self.num_knots + knot)
    }

    pub fn tangent(&self, channel: usize, knot: usize) -> usize {
        self.value(channel, knot) + 1
    }

    pub fn intervals(&self) -> usize {
        2 * self.num_channels * self.num_knots
    }

    pub fn num_intervals(&self) -> usize {
        if self.knot_times {
            self.num_knots - 1
        } else {
            0
        }
    }

    pub fn shape(&self) -> usize {
        self.intervals() + self.num_intervals()
    }

    pub fn scale(&self) -> usize {
        self.shape() + self.num_shape
    }

    pub fn yaw0(&self) -> usize {
        self.scale() + 1
    }

    pub fn len(&self) -> usize {
        self.yaw0() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn pack(params: &MotionParams) -> Vec<f64> {
    let l = Layout::of(params);
    let mut x = vec![0.0; l.len()];
    for c in 0..l.num_channels {
        for k in 0..l.num_knots {
            x[l.value(c, k)] = params.values[c][k];
            x[l.tangent(c, k)] = params.tangents[c][k];
        }
    }
    if l.knot_times {
        for k in 0..l.num_knots - 1 {
            x[l.intervals() + k] = params.knot_times[k + 1] - params.knot_times[k];
        }
    }
    x[l.shape()..l.scale()].copy_from_slice(&params.shape);
    x[l.scale()] = params.scale;
    x[l.yaw0()] = params.yaw0;
    x
}

/// Inverse of [`pack`], keeping the sizes and fixed fields of `template`.
pub fn unpack(template: &MotionParams, x: &[f64]) -> Result<MotionParams> {
    let l = Layout::of(template);
    if x.len() != l.len() {
        return Err(Error::Layout(format!("parameter vector has {} entries, expected {}", x.len(), l.len())));
    }
    let mut p = template.clone();
    for c in 0..l.num_channels {
        for k in 0..l.num_knots {
            p.values[c][k] = x[l.value(c, k)];
            p.tangents[c][k] = x[l.tangent(c, k)];
        }
    }
    if l.knot_times {
        for k in 0..l.num_knots - 1 {
            p.knot_times[k + 1] = p.knot_times[k] + x[l.intervals() + k];
        }
    }
    p.shape.copy_from_slice(&x[l.shape()..l.scale()]);
    p.scale = x[l.scale()];
    p.yaw0 = x[l.yaw0()];
    Ok(p)
}

/// Loss breakdown and gradient with respect to [`pack`]`(params)`.
pub fn value_and_gradient(obj: &Objective, params: &MotionParams) -> Result<(LossBreakdown, Vec<f64>)> {
    obj.check_params(params)?;
    let n = params.num_frames;
    let nj = params.num_joints;
    let nc = params.num_channels();
    let dt = params.dt();
    let physics = obj.terms.physics();
    let fc = force_channel(nj, 0);

    let weights: Vec<SampleWeights> = params.frame_times().iter().map(|&t| sample_weights(&params.knot_times, t)).collect();
    let (rows, _) = params.sample_channels();
    let yaws = params.headings(&rows);

    let mut g_rows = vec![vec![0.0; nc]; n];
    let mut g_yaw = vec![0.0; n];
    let mut g_shape = vec![0.0; params.shape.len()];
    let mut g_scale = 0.0;
    let mut sums = [0.0; 9];
    let mut behind = 0;
    let mut adj = Vec::new();
    let inv_n = 1.0 / n as f64;

    let mut b0 = 0;
    while b0 < n {
        let b1 = (b0 + obj.block_size).min(n);
        let (lo, hi) = obj.block_support(n, b0, b1);
        let tape = Tape::begin();
        let mut row_vars: Vec<Vec<Var>> = Vec::with_capacity(hi - lo);
        let mut yaw_vars = Vec::with_capacity(hi - lo);
        for f in lo..hi {
            let with_forces = physics && (b0..b1).contains(&f);
            let row: Vec<Var> = (0..nc)
                .map(|c| {
                    if c == YAW_RATE || (c >= fc && !with_forces) {
                        Var::cst(rows[f][c])
                    } else {
                        tape.input(rows[f][c])
                    }
                })
                .collect();
            row_vars.push(row);
            yaw_vars.push(tape.input(yaws[f]));
        }
        let shape: Vec<Var> = params.shape.iter().map(|v| tape.input(*v)).collect();
        let s = tape.input(params.scale);
        let coords: Vec<_> = row_vars.iter().zip(&yaw_vars).map(|(r, y)| coord_from_row(r, *y, nj)).collect();
        let forces: Vec<Vec<_>> = if physics {
            (b0..b1)
                .map(|f| {
                    let r = &row_vars[f - lo];
                    (0..params.num_sites)
                        .map(|i| crate::math::Vec3::new(r[fc + 3 * i], r[fc + 3 * i + 1], r[fc + 3 * i + 2]))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let r = obj.block_terms(n, dt, lo, b0, b1, &coords, &forces, &shape, s);
        for (a, v) in sums.iter_mut().zip(&r.terms) {
            *a += v.val();
        }
        behind += r.behind_camera;
        let total = r.terms.iter().fold(Var::cst(0.0), |a, v| a + *v) * inv_n;
        tape.gradient_into(total, &mut adj);
        let grad = |v: &Var| v.index().map_or(0.0, |i| adj[i]);
        for (i, f) in (lo..hi).enumerate() {
            for (g, v) in g_rows[f].iter_mut().zip(&row_vars[i]) {
                *g += grad(v);
            }
            g_yaw[f] += grad(&yaw_vars[i]);
        }
        for (g, v) in g_shape.iter_mut().zip(&shape) {
            *g += grad(v);
        }
        g_scale += grad(&s);
        b0 = b1;
    }

    let breakdown = obj.breakdown(sums, n, behind, params);
    breakdown.check_finite()?;

    // headings: yaw_f = yaw0 + dt Σ_{τ<f} rate_τ
    let mut suffix = 0.0;
    for f in (0..n).rev() {
        g_rows[f][YAW_RATE] += dt * suffix;
        suffix += g_yaw[f];
    }
    let g_yaw0 = suffix;

    let l = Layout::of(params);
    let mut g = vec![0.0; l.len()];
    let mut g_times = vec![0.0; l.num_knots];
    for (f, sw) in weights.iter().enumerate() {
        let seg = sw.segment;
        for c in 0..nc {
            let gr = g_rows[f][c];
            if gr == 0.0 {
                continue;
            }
            g[l.value(c, seg)] += sw.w[0] * gr;
            g[l.tangent(c, seg)] += sw.w[1] * gr;
            g[l.value(c, seg + 1)] += sw.w[2] * gr;
            g[l.tangent(c, seg + 1)] += sw.w[3] * gr;
            if l.knot_times {
                let knots = [
                    params.values[c][seg],
                    params.tangents[c][seg],
                    params.values[c][seg + 1],
                    params.tangents[c][seg + 1],
                ];
                let d0: f64 = sw.dw_dt0.iter().zip(&knots).map(|(a, b)| a * b).sum();
                let d1: f64 = sw.dw_dt1.iter().zip(&knots).map(|(a, b)| a * b).sum();
                g_times[seg] += d0 * gr;
                g_times[seg + 1] += d1 * gr;
            }
        }
    }
    if l.knot_times {
        // t_k = t_0 + Σ_{i<k} Δt_i
        let mut acc = 0.0;
        for k in (0..l.num_knots - 1).rev() {
            acc += g_times[k + 1];
            g[l.intervals() + k] = acc;
        }
    }
    let w = &obj.weights;
    for (i, gs) in g_shape.iter().enumerate() {
        let prior = if obj.terms.prior { 2.0 * w.w_beta * (params.shape[i] - 1.0) } else { 0.0 };
        g[l.shape() + i] = gs + prior;
    }
    let scale_reg = if obj.terms.pose3d { 2.0 * w.w_scale * (params.scale - 1.0) } else { 0.0 };
    g[l.scale()] = g_scale + scale_reg;
    g[l.yaw0()] = g_yaw0;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { term: "gradient" });
    }
    Ok((breakdown, g))
}

/// Central-difference gradient of the total loss, for verification.
pub fn finite_difference_gradient(obj: &Objective, params: &MotionParams, step: f64) -> Result<Vec<f64>> {
    let x = pack(params);
    let f = |x: &[f64]| -> Result<f64> { Ok(obj.total_loss(&unpack(params, x)?)?.total) };
    let mut g = vec![0.0; x.len()];
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}
