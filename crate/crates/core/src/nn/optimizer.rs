//! Full-batch optimizers: L-BFGS with a strong-Wolfe line search, and Adam
//! as the first-order fallback.
//!
//! One epoch is one parameter update. The returned history holds the loss
//! at the initial point and after every accepted update, so it is monotone
//! non-increasing under the line-search acceptance rule.

use crate::error::{Error, Result};

/// A differentiable full-batch objective.
pub trait Objective {
    fn n_params(&self) -> usize;
    /// Loss and gradient at `params`; implementations overwrite `grad`.
    fn eval(&mut self, params: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Scale of the first trial step; the standard value is 1.
    pub learning_rate: f64,
    pub c1: f64,
    pub c2: f64,
    /// Stop when `‖∇f‖∞` falls below this.
    pub grad_tol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            memory: 10,
            learning_rate: 1.0,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-12,
            max_line_search: 25,
        }
    }
}

pub struct MinimizeResult {
    pub params: Vec<f64>,
    /// Loss at the start and after each accepted epoch.
    pub history: Vec<f64>,
}

pub fn minimize_lbfgs(
    obj: &mut dyn Objective,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
) -> Result<MinimizeResult> {
    let n = obj.n_params();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    check_finite(f, 0)?;
    let mut history = vec![f];

    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut rho_list: Vec<f64> = Vec::new();
    let mut tried_steepest_restart = false;

    for iter in 0..opts.max_iters {
        if inf_norm(&g) <= opts.grad_tol {
            break;
        }
        let mut d = two_loop_direction(&g, &s_list, &y_list, &rho_list);
        let mut dg = dot(&d, &g);
        if !(dg < 0.0) {
            // Not a descent direction; fall back to steepest descent.
            s_list.clear();
            y_list.clear();
            rho_list.clear();
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
            if !(dg < 0.0) {
                break; // gradient numerically zero
            }
        }

        // First-ever step is conservative, later ones start at full scale.
        let alpha0 = if history.len() == 1 {
            opts.learning_rate * (1.0 / (1.0 + inf_norm(&g))).min(1.0)
        } else {
            opts.learning_rate
        };
        match wolfe_line_search(obj, &x, f, &g, &d, dg, alpha0, opts) {
            Some(found) => {
                let s: Vec<f64> = found.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = found.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm2(&s) * norm2(&y) {
                    if s_list.len() == opts.memory {
                        s_list.remove(0);
                        y_list.remove(0);
                        rho_list.remove(0);
                    }
                    s_list.push(s);
                    y_list.push(y);
                    rho_list.push(1.0 / sy);
                }
                x = found.x;
                f = found.f;
                g = found.g;
                check_finite(f, iter + 1)?;
                history.push(f);
                tried_steepest_restart = false;
            }
            None => {
                // Line search failed; retry once from steepest descent,
                // otherwise accept the current point as converged.
                if tried_steepest_restart || s_list.is_empty() {
                    break;
                }
                s_list.clear();
                y_list.clear();
                rho_list.clear();
                tried_steepest_restart = true;
            }
        }
    }
    Ok(MinimizeResult { params: x, history })
}

struct LinePoint {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimum of the cubic through `(x1, f1, g1)` and `(x2, f2, g2)`, clamped
/// to the interval; falls back to the midpoint when the cubic degenerates.
fn cubic_minimum(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2sq = d1 * d1 - g1 * g2;
    if d2sq >= 0.0 && f1.is_finite() && f2.is_finite() {
        let d2 = d2sq.sqrt();
        let pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        // Keep clear of the bracket ends.
        let margin = 0.1 * (hi - lo);
        if pos.is_finite() {
            return pos.clamp(lo + margin, hi - margin);
        }
    }
    0.5 * (lo + hi)
}

/// Strong-Wolfe line search: bracketing phase followed by a zoom with
/// cubic interpolation.
fn wolfe_line_search(
    obj: &mut dyn Objective,
    x0: &[f64],
    f0: f64,
    _g0: &[f64],
    d: &[f64],
    dg0: f64,
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Option<LinePoint> {
    let n = x0.len();
    let eval_at = |obj: &mut dyn Objective, alpha: f64| -> (Vec<f64>, f64, Vec<f64>, f64) {
        let xa: Vec<f64> = x0.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let mut ga = vec![0.0; n];
        let fa = obj.eval(&xa, &mut ga);
        let dga = dot(&ga, d);
        (xa, fa, ga, dga)
    };

    // Bracket state: (alpha, f, directional derivative) at both ends.
    let mut lo = (0.0, f0, dg0);
    let mut hi;

    let mut alpha = alpha0.max(1e-16);
    let mut budget = opts.max_line_search;
    loop {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let (xa, fa, ga, dga) = eval_at(obj, alpha);
        if !fa.is_finite() || fa > f0 + opts.c1 * alpha * dg0 || (lo.0 > 0.0 && fa >= lo.1) {
            hi = (alpha, fa, dga);
            break;
        }
        if dga.abs() <= -opts.c2 * dg0 {
            return Some(LinePoint { x: xa, f: fa, g: ga });
        }
        if dga >= 0.0 {
            hi = lo;
            lo = (alpha, fa, dga);
            break;
        }
        lo = (alpha, fa, dga);
        alpha *= 2.0;
    }

    // Zoom: lo always satisfies sufficient decrease with the lower value.
    let mut best: Option<LinePoint> = None;
    while budget > 0 {
        budget -= 1;
        if (hi.0 - lo.0).abs() <= 1e-16 * (1.0 + lo.0.abs()) {
            break;
        }
        let trial = cubic_minimum(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
        let (xm, fm, gm, dgm) = eval_at(obj, trial);
        if !fm.is_finite() || fm > f0 + opts.c1 * trial * dg0 || fm >= lo.1 {
            hi = (trial, fm, dgm);
        } else {
            if dgm.abs() <= -opts.c2 * dg0 {
                return Some(LinePoint { x: xm, f: fm, g: gm });
            }
            if dgm * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (trial, fm, dgm);
            best = Some(LinePoint { x: xm, f: fm, g: gm });
        }
    }
    // Budget exhausted without satisfying the curvature condition; accept
    // the best sufficient-decrease point if any.
    best.filter(|p| p.f < f0)
}

fn two_loop_direction(
    g: &[f64],
    s_list: &[Vec<f64>],
    y_list: &[Vec<f64>],
    rho_list: &[f64],
) -> Vec<f64> {
    let mut q = g.to_vec();
    let m = s_list.len();
    let mut alphas = vec![0.0; m];
    for i in (0..m).rev() {
        let a = rho_list[i] * dot(&s_list[i], &q);
        alphas[i] = a;
        for (qv, yv) in q.iter_mut().zip(&y_list[i]) {
            *qv -= a * yv;
        }
    }
    if m > 0 {
        let last = m - 1;
        let gamma = dot(&s_list[last], &y_list[last]) / dot(&y_list[last], &y_list[last]);
        for qv in q.iter_mut() {
            *qv *= gamma;
        }
    }
    for i in 0..m {
        let beta = rho_list[i] * dot(&y_list[i], &q);
        for (qv, sv) in q.iter_mut().zip(&s_list[i]) {
            *qv += (alphas[i] - beta) * sv;
        }
    }
    for qv in q.iter_mut() {
        *qv = -*qv;
    }
    q
}

#[derive(Debug, Clone, Copy)]
pub struct AdamOptions {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub fn minimize_adam(
    obj: &mut dyn Objective,
    x0: Vec<f64>,
    opts: &AdamOptions,
) -> Result<MinimizeResult> {
    let n = obj.n_params();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let f0 = obj.eval(&x, &mut g);
    check_finite(f0, 0)?;
    let mut history = vec![f0];
    for t in 1..=opts.max_iters {
        for k in 0..n {
            m[k] = opts.beta1 * m[k] + (1.0 - opts.beta1) * g[k];
            v[k] = opts.beta2 * v[k] + (1.0 - opts.beta2) * g[k] * g[k];
            let mh = m[k] / (1.0 - opts.beta1.powi(t as i32));
            let vh = v[k] / (1.0 - opts.beta2.powi(t as i32));
            x[k] -= opts.learning_rate * mh / (vh.sqrt() + opts.epsilon);
        }
        let f = obj.eval(&x, &mut g);
        check_finite(f, t)?;
        history.push(f);
    }
    Ok(MinimizeResult { params: x, history })
}

fn check_finite(f: f64, epoch: usize) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            epoch,
            msg: format!("non-finite loss {f}"),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
