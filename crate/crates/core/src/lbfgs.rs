//! Limited-memory BFGS with a strong Wolfe line search, and the two-stage
//! kinematic-then-physics refinement schedule.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{pack, unpack, value_and_gradient};
use crate::objective::{LossBreakdown, Objective, TermMask};
use crate::spline::MotionParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    /// First trial step of every line search after the first iteration.
    pub base_step: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_iterations: usize,
    /// Stop when the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the loss decreased by less than this fraction over `patience` iterations.
    pub rel_tol: f64,
    pub patience: usize,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 100,
            base_step: 1.0,
            c1: 1e-4,
            c2: 0.9,
            max_iterations: 500,
            grad_tol: 1e-8,
            rel_tol: 1e-12,
            patience: 10,
            max_line_search: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::validation("optimizer.c1", "need 0 < c1 < c2 < 1"));
        }
        if self.history == 0 {
            return Err(Error::validation("optimizer.history", "must be at least 1"));
        }
        if !(self.base_step > 0.0) {
            return Err(Error::validation("optimizer.base_step", "must be positive"));
        }
        if self.max_line_search == 0 {
            return Err(Error::validation("optimizer.max_line_search", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailed,
}

/// State after an accepted iteration (iteration 0 is the start point).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<P> {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Accepted step length along the search direction.
    pub step: f64,
    pub evaluations: usize,
    /// Curvature pairs stored after this iteration.
    pub history_len: usize,
    /// Whatever the objective attached to this point.
    pub info: P,
}

#[derive(Clone, Debug)]
pub struct Minimum<P> {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    pub info: P,
    pub termination: Termination,
    pub trace: Vec<IterationRecord<P>>,
    pub evaluations: usize,
}

impl<P> Minimum<P> {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn line_search_failed(&self) -> bool {
        self.termination == Termination::LineSearchFailed
    }
}

/// One function evaluation: value, gradient and attached information.
/// Non-finite values are treated as "too large" by the line search.
pub type Evaluation<P> = (f64, Vec<f64>, P);

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point<P> {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
    x: Vec<f64>,
    info: P,
}

impl<P> Point<P> {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.dphi.is_finite()
    }
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded
/// to the interior of the bracket.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let t = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    } else {
        f64::NAN
    };
    if t.is_finite() {
        t.clamp(lo + margin, hi - margin)
    } else {
        0.5 * (lo + hi)
    }
}

struct LineSearch<'a, P, F> {
    fg: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    cfg: &'a LbfgsConfig,
    evaluations: usize,
    /// Lowest point satisfying sufficient decrease.
    best: Option<Point<P>>,
}

impl<P: Clone, F: FnMut(&[f64]) -> Result<Evaluation<P>>> LineSearch<'_, P, F> {
    fn eval(&mut self, alpha: f64) -> Result<Point<P>> {
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect();
        let (f, g, info) = (self.fg)(&x)?;
        self.evaluations += 1;
        let dphi = if f.is_finite() && g.len() == x.len() { dot(&g, self.d) } else { f64::NAN };
        let p = Point { alpha, f, g, dphi, x, info };
        if p.finite() && self.armijo(&p) && self.best.as_ref().is_none_or(|b| p.f < b.f) {
            self.best = Some(Point {
                alpha: p.alpha,
                f: p.f,
                g: p.g.clone(),
                dphi: p.dphi,
                x: p.x.clone(),
                info: p.info.clone(),
            });
        }
        Ok(p)
    }

    fn armijo(&self, p: &Point<P>) -> bool {
        p.f <= self.f0 + self.cfg.c1 * p.alpha * self.dphi0
    }

    fn curvature(&self, p: &Point<P>) -> bool {
        p.dphi.abs() <= -self.cfg.c2 * self.dphi0
    }

    /// A point satisfying the strong Wolfe conditions, if one was found.
    fn run(&mut self, alpha0: f64) -> Result<Option<Point<P>>> {
        let mut prev: Option<Point<P>> = None;
        let mut alpha = alpha0;
        while self.evaluations < self.cfg.max_line_search {
            let p = self.eval(alpha)?;
            let worse_than_prev = prev.as_ref().is_some_and(|q| p.f >= q.f);
            if !p.finite() || !self.armijo(&p) || worse_than_prev {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Ok(Some(p));
            }
            if p.dphi >= 0.0 {
                let hi = prev.unwrap_or_else(|| Point {
                    alpha: 0.0,
                    f: self.f0,
                    g: Vec::new(),
                    dphi: self.dphi0,
                    x: Vec::new(),
                    info: p.info.clone(),
                });
                return self.zoom(Some(p), hi);
            }
            alpha = match &prev {
                Some(q) => {
                    let t = cubic_step(q.alpha, q.f, q.dphi, p.alpha, p.f, p.dphi);
                    if t > p.alpha * 1.1 && t.is_finite() {
                        t.min(p.alpha * 4.0)
                    } else {
                        p.alpha * 2.0
                    }
                }
                None => p.alpha * 2.0,
            };
            prev = Some(p);
        }
        Ok(None)
    }

    /// Bracket search between `lo` (sufficient decrease, `None` = step 0) and `hi`.
    fn zoom(&mut self, lo: Option<Point<P>>, hi: Point<P>) -> Result<Option<Point<P>>> {
        let (mut lo_a, mut lo_f, mut lo_d) = match &lo {
            Some(p) => (p.alpha, p.f, p.dphi),
            None => (0.0, self.f0, self.dphi0),
        };
        let mut hi_p = hi;
        while self.evaluations < self.cfg.max_line_search {
            let width = (hi_p.alpha - lo_a).abs();
            if width <= 1e-14 * hi_p.alpha.abs().max(lo_a.abs()) {
                break;
            }
            let t = if hi_p.finite() {
                cubic_step(lo_a, lo_f, lo_d, hi_p.alpha, hi_p.f, hi_p.dphi)
            } else {
                lo_a + 0.5 * (hi_p.alpha - lo_a)
            };
            let p = self.eval(t)?;
            if !p.finite() || !self.armijo(&p) || p.f >= lo_f {
                hi_p = p;
                continue;
            }
            if self.curvature(&p) {
                return Ok(Some(p));
            }
            if p.dphi * (hi_p.alpha - lo_a) >= 0.0 {
                hi_p = Point {
                    alpha: lo_a,
                    f: lo_f,
                    g: Vec::new(),
                    dphi: lo_d,
                    x: Vec::new(),
                    info: p.info.clone(),
                };
            }
            (lo_a, lo_f, lo_d) = (p.alpha, p.f, p.dphi);
        }
        Ok(None)
    }
}

/// Minimizes `fg`, which returns the value, gradient and attached
/// information at a point. `observe` sees every accepted iterate.
pub fn minimize_observed<P, F, O>(mut fg: F, x0: Vec<f64>, cfg: &LbfgsConfig, mut observe: O) -> Result<Minimum<P>>
where
    P: Clone,
    F: FnMut(&[f64]) -> Result<Evaluation<P>>,
    O: FnMut(&IterationRecord<P>),
{
    cfg.validate()?;
    let (mut f, mut g, mut info) = fg(&x0)?;
    if !f.is_finite() || g.len() != x0.len() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer("objective is not finite at the starting point".into()));
    }
    let mut x = x0;
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trace = vec![IterationRecord {
        iteration: 0,
        loss: f,
        grad_norm: inf_norm(&g),
        step: 0.0,
        evaluations,
        history_len: 0,
        info: info.clone(),
    }];
    observe(&trace[0]);
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=cfg.max_iterations {
        if inf_norm(&g) < cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if iteration > cfg.patience {
            let old = trace[iteration - 1 - cfg.patience].loss;
            if (old - f) <= cfg.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
                termination = Termination::RelativeDecrease;
                break;
            }
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
        }
        let alpha0 = if history.is_empty() {
            cfg.base_step.min(1.0 / g.iter().map(|v| v.abs()).sum::<f64>())
        } else {
            cfg.base_step
        };

        let mut ls = LineSearch {
            fg: &mut fg,
            x: &x,
            d: &d,
            f0: f,
            dphi0,
            cfg,
            evaluations: 0,
            best: None,
        };
        let found = ls.run(alpha0)?;
        let best = ls.best.take();
        evaluations += ls.evaluations;
        let (accepted, failed) = match (found, best) {
            (Some(p), _) => {
                debug_assert!(p.f <= f + cfg.c1 * p.alpha * dphi0 && p.dphi.abs() <= -cfg.c2 * dphi0);
                (p, false)
            }
            (None, Some(p)) => (p, false),
            (None, None) => (
                Point {
                    alpha: 0.0,
                    f,
                    g: Vec::new(),
                    dphi: 0.0,
                    x: Vec::new(),
                    info: info.clone(),
                },
                true,
            ),
        };
        if failed {
            termination = Termination::LineSearchFailed;
            break;
        }
        debug_assert!(accepted.f <= f);
        let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = accepted.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == cfg.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = accepted.x;
        f = accepted.f;
        g = accepted.g;
        info = accepted.info;
        trace.push(IterationRecord {
            iteration,
            loss: f,
            grad_norm: inf_norm(&g),
            step: accepted.alpha,
            evaluations,
            history_len: history.len(),
            info: info.clone(),
        });
        observe(trace.last().unwrap());
    }
    if termination == Termination::MaxIterations && inf_norm(&g) < cfg.grad_tol {
        termination = Termination::GradientTolerance;
    }
    Ok(Minimum {
        x,
        f,
        g,
        info,
        termination,
        trace,
        evaluations,
    })
}

/// [`minimize_observed`] for plain `(value, gradient)` objectives.
pub fn minimize<F>(mut fg: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<Minimum<()>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    minimize_observed(
        |x| {
            let (f, g) = fg(x)?;
            Ok((f, g, ()))
        },
        x0,
        cfg,
        |_| {},
    )
}

/// Iteration budgets of the two refinement stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kinematic_iterations: usize,
    pub physics_iterations: usize,
    pub lbfgs: LbfgsConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kinematic_iterations: 250,
            physics_iterations: 500,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// One row of the optimizer trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub stage: u8,
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub step: f64,
    pub history_len: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub stage: u8,
    pub termination: Termination,
    pub iterations: usize,
    pub start: LossBreakdown,
    pub end: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub params: MotionParams,
    /// Result of the kinematic stage when a physics stage followed it.
    pub kinematic_params: Option<MotionParams>,
    pub stages: Vec<StageOutcome>,
    pub trace: Vec<TraceRow>,
}

impl RefineOutcome {
    pub fn line_search_failed(&self) -> bool {
        self.stages.iter().any(|s| s.termination == Termination::LineSearchFailed)
    }

    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.stages.last().map(|s| &s.end)
    }
}

/// Runs L-BFGS on `objective` with the given term mask, starting at `params`.
pub fn run_stage(
    objective: &Objective,
    terms: TermMask,
    params: &MotionParams,
    cfg: &LbfgsConfig,
    stage: u8,
    trace: &mut Vec<TraceRow>,
) -> Result<(MotionParams, StageOutcome)> {
    let obj = objective.clone().with_terms(terms);
    let fg = |x: &[f64]| -> Result<Evaluation<LossBreakdown>> {
        let p = unpack(params, x)?;
        match value_and_gradient(&obj, &p) {
            Ok((b, g)) => Ok((b.total, g, b)),
            // infeasible trial points make the line search back off
            Err(Error::NonFinite { .. } | Error::Validation { .. }) => Ok((f64::INFINITY, Vec::new(), LossBreakdown::default())),
            Err(e) => Err(e),
        }
    };
    let observe = |r: &IterationRecord<LossBreakdown>| {
        log::debug!("stage {stage} iteration {} loss {:.6e} |g| {:.3e}", r.iteration, r.loss, r.grad_norm);
        trace.push(TraceRow {
            stage,
            iteration: r.iteration,
            loss: r.info,
            grad_norm: r.grad_norm,
            step: r.step,
            history_len: r.history_len,
            evaluations: r.evaluations,
        });
    };
    let m = minimize_observed(fg, pack(params), cfg, observe)?;
    let start = m.trace[0].info;
    let out = unpack(params, &m.x)?;
    log::info!(
        "stage {stage}: {} iterations, loss {:.6e} -> {:.6e} ({:?})",
        m.iterations(),
        start.total,
        m.f,
        m.termination
    );
    Ok((
        out,
        StageOutcome {
            stage,
            termination: m.termination,
            iterations: m.iterations(),
            start,
            end: m.info,
        },
    ))
}

/// Kinematic stage (no physics terms) followed by a physics stage with fresh
/// L-BFGS memory. A stage with a zero budget is skipped.
pub fn two_stage_refine(objective: &Objective, params: &MotionParams, cfg: &OptimizerConfig, enable_physics: bool) -> Result<RefineOutcome> {
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut current = params.clone();
    let mut kinematic_params = None;
    let plan = [
        (1u8, TermMask::with_physics(false), cfg.kinematic_iterations),
        (2u8, TermMask::all(), if enable_physics { cfg.physics_iterations } else { 0 }),
    ];
    for (stage, terms, budget) in plan {
        if budget == 0 {
            continue;
        }
        let lcfg = LbfgsConfig {
            max_iterations: budget,
            ..cfg.lbfgs.clone()
        };
        if stage == 2 && !stages.is_empty() {
            kinematic_params = Some(current.clone());
        }
        let (next, outcome) = run_stage(objective, terms, &current, &lcfg, stage, &mut trace)?;
        current = next;
        let failed = outcome.termination == Termination::LineSearchFailed;
        stages.push(outcome);
        if failed {
            log::warn!("stage {stage}: line search failed, keeping the best iterate");
        }
    }
    Ok(RefineOutcome {
        params: current,
        kinematic_params,
        stages,
        trace,
    })
}

pub const TRACE_HEADER: &str =
    "stage,iteration,total,dynamics,contact,penetration,friction,force_cap,pose2d,pose3d,prior,smooth,grad_norm,step,history_len,evaluations";

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        write!(out, "{},{},{}", r.stage, r.iteration, r.loss.total)?;
        for v in r.loss.terms() {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{},{},{},{}", r.grad_norm, r.step, r.history_len, r.evaluations)?;
    }
    Ok(())
}
