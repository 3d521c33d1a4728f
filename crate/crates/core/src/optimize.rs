//! Limited-memory BFGS maximization with a strong-Wolfe line search, and a
//! central-difference gradient checker.
//!
//! Internally the solver minimizes h = −f; every sign flip happens at the
//! boundary with the caller's objective.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once ‖∇f‖∞ falls to this.
    pub grad_tol: f64,
    /// Optional stop on relative change of the objective between iterations.
    pub value_tol: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            grad_tol: 1e-5,
            value_tol: None,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_iter == 0 || self.max_line_search == 0 {
            return Err(Error::config("memory, max_iter and max_line_search must be positive"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config("Wolfe constants need 0 < c1 < c2 < 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::config("grad_tol must be non-negative"));
        }
        if let Some(v) = self.value_tol {
            if !(v >= 0.0) {
                return Err(Error::config("value_tol must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    ValueTolerance,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found, even along the
    /// steepest-ascent direction. The returned point is the last accepted one.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// One entry per accepted iterate, starting with the initial point (step 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    pub termination: Termination,
    pub evaluations: usize,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].value >= w[0].value)
    }

    pub fn flagged(&self) -> bool {
        self.termination == Termination::LineSearchFailed
    }

    pub fn final_value(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.value)
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub trace: ConvergenceTrace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Wraps the caller's objective as h = −f with gradient −∇f, counting calls.
struct Negated<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Negated<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evaluations += 1;
        g.iter_mut().for_each(|v| *v = 0.0);
        let v = (self.f)(x, g);
        g.iter_mut().for_each(|v| *v = -*v);
        let h = -v;
        if h.is_finite() && g.iter().all(|v| v.is_finite()) {
            h
        } else {
            f64::INFINITY
        }
    }
}

struct Point {
    step: f64,
    x: Vec<f64>,
    h: f64,
    g: Vec<f64>,
}

/// Minimizer of the cubic through (a, fa, da) and (b, fb, db), if it exists.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let m = b - (b - a) * (db + d2 - d1) / denom;
    m.is_finite().then_some(m)
}

/// Strong-Wolfe search along `d` for the minimization of h.
fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    obj: &mut Negated<F>,
    x: &[f64],
    h0: f64,
    dh0: f64,
    d: &[f64],
    step0: f64,
    cfg: &OptimizerConfig,
) -> Option<Point> {
    let n = x.len();
    let mut budget = cfg.max_line_search;
    let probe = |obj: &mut Negated<F>, step: f64| -> Point {
        let xs: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + step * di).collect();
        let mut g = vec![0.0; n];
        let h = obj.eval(&xs, &mut g);
        Point { step, x: xs, h, g }
    };
    let armijo = |p: &Point| p.h <= h0 + cfg.c1 * p.step * dh0;
    let curvature = |dh: f64| dh.abs() <= -cfg.c2 * dh0;

    let mut prev = Point { step: 0.0, x: x.to_vec(), h: h0, g: Vec::new() };
    let mut dprev = dh0;
    let mut step = step0;
    let mut first = true;
    let (mut lo, mut dlo, mut hi, mut dhi);
    loop {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let p = probe(obj, step);
        let dp = if p.h.is_finite() { dot(&p.g, d) } else { f64::NAN };
        if !armijo(&p) || (!first && p.h >= prev.h) {
            lo = prev;
            dlo = dprev;
            hi = p;
            dhi = dp;
            break;
        }
        if curvature(dp) {
            return Some(p);
        }
        if dp >= 0.0 {
            lo = p;
            dlo = dp;
            hi = prev;
            dhi = dprev;
            break;
        }
        first = false;
        step *= 2.0;
        prev = p;
        dprev = dp;
    }

    // zoom: lo always satisfies sufficient decrease and has the lowest h seen
    while budget > 0 {
        budget -= 1;
        let (a, b) = (lo.step, hi.step);
        let width = (b - a).abs();
        if width <= 1e-16 * a.abs().max(b.abs()) {
            break;
        }
        let (left, right) = (a.min(b) + 0.1 * width, a.max(b) - 0.1 * width);
        let trial = if hi.h.is_finite() {
            cubic_min(a, lo.h, dlo, b, hi.h, dhi)
                .filter(|t| *t >= left && *t <= right)
                .unwrap_or(0.5 * (a + b))
        } else {
            0.5 * (a + b)
        };
        let p = probe(obj, trial);
        let dp = if p.h.is_finite() { dot(&p.g, d) } else { f64::NAN };
        if !armijo(&p) || p.h >= lo.h {
            hi = p;
            dhi = dp;
        } else {
            if curvature(dp) {
                return Some(p);
            }
            if dp * (hi.step - lo.step) >= 0.0 {
                hi = std::mem::replace(&mut lo, p);
                dhi = dlo;
            } else {
                lo = p;
            }
            dlo = dp;
        }
    }
    // Budget exhausted inside the bracket: a strict decrease is still progress.
    (lo.step > 0.0 && lo.h < h0).then_some(lo)
}

/// Maximizes `f` starting from `x0`.
///
/// `f(x, grad)` returns the objective and writes its gradient into `grad`,
/// which arrives zeroed. Non-finite values away from the start are treated as
/// "step too long" by the line search.
pub fn maximize<F>(f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<Maximum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    cfg.validate()?;
    let n = x0.len();
    let mut obj = Negated { f, evaluations: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut h = obj.eval(&x, &mut g);
    if !h.is_finite() {
        return Err(Error::input("objective or gradient is not finite at the initial point"));
    }
    let mut entries = vec![TraceEntry { value: -h, grad_norm: inf_norm(&g), step: 0.0 }];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut termination = Termination::MaxIterations;
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; cfg.memory];

    for _ in 0..cfg.max_iter {
        if inf_norm(&g) <= cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut accepted = None;
        // second attempt discards the curvature history and goes downhill
        for attempt in 0..2 {
            if attempt == 1 {
                if pairs.is_empty() {
                    break;
                }
                pairs.clear();
            }
            two_loop(&g, &pairs, &mut d, &mut alpha);
            let mut dh0 = dot(&g, &d);
            if !(dh0 < 0.0) {
                pairs.clear();
                two_loop(&g, &pairs, &mut d, &mut alpha);
                dh0 = dot(&g, &d);
            }
            let step0 = if pairs.is_empty() {
                (1.0 / dot(&d, &d).sqrt()).min(1.0)
            } else {
                1.0
            };
            if let Some(p) = line_search(&mut obj, &x, h, dh0, &d, step0, cfg) {
                accepted = Some(p);
                break;
            }
        }
        let Some(p) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let h_old = h;
        x = p.x;
        g = p.g;
        h = p.h;
        entries.push(TraceEntry { value: -h, grad_norm: inf_norm(&g), step: p.step });
        if let Some(tol) = cfg.value_tol {
            if (h_old - h).abs() <= tol * h.abs().max(1.0) {
                termination = Termination::ValueTolerance;
                break;
            }
        }
    }
    if termination == Termination::MaxIterations && inf_norm(&g) <= cfg.grad_tol {
        termination = Termination::GradientTolerance;
    }
    let grad = g.iter().map(|v| -v).collect();
    Ok(Maximum {
        x,
        value: -h,
        grad,
        trace: ConvergenceTrace { entries, termination, evaluations: obj.evaluations },
    })
}

/// d = −H g via the two-loop recursion, H seeded with γ = sᵀy/yᵀy.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, d: &mut [f64], alpha: &mut [f64]) {
    d.iter_mut().zip(g).for_each(|(di, gi)| *di = -gi);
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, d);
        alpha[k] = a;
        d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        d.iter_mut().for_each(|di| *di *= gamma);
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, d);
        d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - b) * si);
    }
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences with the given step.
///
/// Per coordinate the error is |analytic − numeric| / max(|analytic|, |numeric|, 1),
/// so small gradient entries are compared absolutely.
pub fn grad_check<F>(mut f: F, x: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut grad = vec![0.0; n];
    f(x, &mut grad);
    let mut scratch = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..n {
        xp[k] = x[k] + step;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        let fp = f(&xp, &mut scratch);
        xp[k] = x[k] - step;
        scratch.iter_mut().for_each(|v| *v = 0.0);
        let fm = f(&xp, &mut scratch);
        xp[k] = x[k];
        let numeric = (fp - fm) / (2.0 * step);
        let err = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}
