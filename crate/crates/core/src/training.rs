//! Residual loss, its analytic gradient, and the optimizers that minimise it.
//!
//! The loss over collocation points `t_i` is
//! `L(p) = (1/n_pts) * sum_i sum_k (yhat_k'(t_i) - f_k(t_i, yhat(t_i)))^2`.
//! Component `k`'s residual reaches network `j` through `df_k/dy_j`, so the
//! gradient is assembled from trial sensitivities and the system Jacobian.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::EvalError;
use crate::reference::{DenseSolution, ReferenceError};
use crate::systems::OdeSystem;
use crate::trial::{EvalScratch, TrialError, TrialSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("rhs evaluation failed at t = {t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error("system has dimension {system} but trial has {trial}")]
    Dimension { system: usize, trial: usize },
    #[error("initial point is not finite")]
    NonFiniteStart,
    #[error("objective returned a non-finite value at the initial point")]
    NonFiniteObjective,
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// Degree of intra-loss parallelism over collocation points.
#[derive(Debug, Clone)]
pub struct Parallelism {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Parallelism {
    pub fn serial() -> Self {
        Parallelism { pool: None }
    }

    pub fn threads(n: usize) -> Self {
        if n <= 1 {
            return Self::serial();
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().ok().map(Arc::new);
        Parallelism { pool }
    }

    /// Reads `LIEODE_THREADS`; unset or unparsable means serial.
    pub fn from_env() -> Self {
        std::env::var("LIEODE_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .map(Self::threads)
            .unwrap_or_else(Self::serial)
    }

    pub fn thread_count(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Self::serial()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossState {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// `L_k = (1/n_pts) * sum_i r_{k,i}^2`; these sum to `loss`.
    pub per_component: Vec<f64>,
}

/// Per-point contribution: squared residuals and the unscaled gradient term.
struct PointTerm {
    sq: Vec<f64>,
    grad: Vec<f64>,
}

/// The collocation loss for one trial layout and system.
pub struct ResidualLoss<'a> {
    trial: &'a TrialSolution,
    system: &'a OdeSystem,
    parallelism: Parallelism,
}

impl<'a> ResidualLoss<'a> {
    pub fn new(trial: &'a TrialSolution, system: &'a OdeSystem) -> Result<Self, TrainError> {
        if system.dim() != trial.dim() {
            return Err(TrainError::Dimension {
                system: system.dim(),
                trial: trial.dim(),
            });
        }
        Ok(ResidualLoss {
            trial,
            system,
            parallelism: Parallelism::serial(),
        })
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn param_count(&self) -> usize {
        self.trial.param_count()
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<LossState, TrainError> {
        self.trial.check_params(p)?;
        let points = self.trial.grid().len();
        let terms: Vec<PointTerm> = match &self.parallelism.pool {
            None => {
                let mut scratch = self.scratch();
                (0..points)
                    .map(|i| self.point_term(i, p, &mut scratch))
                    .collect::<Result<_, _>>()?
            }
            Some(pool) => pool.install(|| {
                (0..points)
                    .into_par_iter()
                    .map_init(|| self.scratch(), |scratch, i| self.point_term(i, p, scratch))
                    .collect::<Result<_, _>>()
            })?,
        };

        // fixed summation order keeps serial and parallel results identical
        let n = self.trial.dim();
        let mut per_component = vec![0.0; n];
        let mut grad = vec![0.0; p.len()];
        for term in &terms {
            for (acc, v) in per_component.iter_mut().zip(&term.sq) {
                *acc += v;
            }
            for (g, v) in grad.iter_mut().zip(&term.grad) {
                *g += v;
            }
        }
        let inv = 1.0 / points as f64;
        for v in &mut per_component {
            *v *= inv;
        }
        for g in &mut grad {
            *g *= 2.0 * inv;
        }
        let loss = per_component.iter().sum();
        Ok(LossState {
            loss,
            grad,
            per_component,
        })
    }

    fn scratch(&self) -> (EvalScratch, Vec<f64>, DMatrix<f64>) {
        let n = self.trial.dim();
        (EvalScratch::new(n, self.trial.width()), vec![0.0; n], DMatrix::zeros(n, n))
    }

    fn point_term(
        &self,
        i: usize,
        p: &[f64],
        (scratch, f, jac): &mut (EvalScratch, Vec<f64>, DMatrix<f64>),
    ) -> Result<PointTerm, TrainError> {
        let n = self.trial.dim();
        let q = self.trial.net_param_count();
        self.trial.eval_grid_point(i, p, scratch);
        let ev = &scratch.out;
        let t = ev.t;
        self.system
            .rhs_into(t, &ev.yhat, f)
            .map_err(|source| TrainError::Eval { t, source })?;
        self.system
            .jacobian_into(t, &ev.yhat, jac)
            .map_err(|source| TrainError::Eval { t, source })?;

        let r: Vec<f64> = (0..n).map(|k| ev.yhat_dt[k] - f[k]).collect();
        let mut grad = vec![0.0; n * q];
        for j in 0..n {
            // d r_k / d p_j = delta_kj * dyhat_j'/dp_j - J_kj * dyhat_j/dp_j
            let coupling: f64 = (0..n).map(|k| r[k] * jac[(k, j)]).sum();
            let sens = &ev.sens[j];
            for (g, (sd, sv)) in grad[j * q..(j + 1) * q].iter_mut().zip(sens.deriv.iter().zip(&sens.value)) {
                *g = r[j] * sd - coupling * sv;
            }
        }
        Ok(PointTerm {
            sq: r.iter().map(|v| v * v).collect(),
            grad,
        })
    }
}

/// Convenience wrapper: `(L, dL/dp)` for a parameter vector.
pub fn loss_and_grad(trial: &TrialSolution, system: &OdeSystem, p: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    let state = ResidualLoss::new(trial, system)?.evaluate(p)?;
    Ok((state.loss, state.grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bfgs,
    GradientDescent,
}

impl Method {
    pub fn short_name(self) -> &'static str {
        match self {
            Method::Bfgs => "bfgs",
            Method::GradientDescent => "gd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bfgs" => Ok(Method::Bfgs),
            "gd" | "gradient_descent" => Ok(Method::GradientDescent),
            other => Err(format!("unknown method {other:?} (expected bfgs or gd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub loss_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_evals: usize,
    /// Curvature safeguard: skip the update when `s.y <= skip * |s| |y|`.
    pub curvature_skip: f64,
    pub restarts: usize,
    pub method: Method,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 1000,
            grad_tol: 1e-8,
            loss_tol: 1e-10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_evals: 40,
            curvature_skip: 1e-10,
            restarts: 1,
            method: Method::Bfgs,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(TrainError::Config(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.max_line_evals == 0 {
            return Err(TrainError::Config("max_line_evals must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(TrainError::Config("restarts must be positive".into()));
        }
        if !(self.grad_tol >= 0.0 && self.loss_tol >= 0.0) {
            return Err(TrainError::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ConvergedGrad,
    ConvergedLoss,
    MaxIters,
    LineSearchFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub loss: f64,
    /// Infinity norm of the gradient.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: Method,
    pub loss_history: Vec<HistoryEntry>,
    pub final_p: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub func_evals: usize,
    /// Filled in by the caller once a reference trajectory is available.
    pub rmse: Option<f64>,
    pub status: Status,
    pub wall_time: f64,
}

/// Something that can report a value and gradient at a point.
pub trait Objective {
    fn evaluate(&mut self, p: &[f64]) -> Result<(f64, Vec<f64>), TrainError>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    fn evaluate(&mut self, p: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
        self(p)
    }
}

impl Objective for ResidualLoss<'_> {
    fn evaluate(&mut self, p: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
        let s = ResidualLoss::evaluate(self, p)?;
        Ok((s.loss, s.grad))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Objective evaluation counting calls; failures during a line search count
/// as an infinitely bad trial point.
struct Counted<'o, O: Objective> {
    inner: &'o mut O,
    evals: usize,
}

impl<O: Objective> Counted<'_, O> {
    fn eval(&mut self, p: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
        self.evals += 1;
        self.inner.evaluate(p)
    }

    fn probe(&mut self, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        match self.eval(p) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            _ => None,
        }
    }
}

#[derive(Clone)]
struct LinePoint {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a> {
    x: &'a [f64],
    g: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
}

impl LineSearch<'_> {
    fn origin(&self) -> LinePoint {
        LinePoint {
            alpha: 0.0,
            f: self.f0,
            slope: self.slope0,
            x: self.x.to_vec(),
            g: self.g.to_vec(),
        }
    }

    fn point<O: Objective>(&self, obj: &mut Counted<'_, O>, alpha: f64) -> Option<LinePoint> {
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + alpha * di).collect();
        let (f, g) = obj.probe(&x)?;
        let slope = dot(&g, self.d);
        Some(LinePoint { alpha, f, slope, x, g })
    }

    fn armijo(&self, p: &LinePoint) -> bool {
        p.f <= self.f0 + self.c1 * p.alpha * self.slope0 && p.f < self.f0
    }

    fn curvature(&self, p: &LinePoint) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// Bracketing phase followed by zoom. Returns a strong-Wolfe point, or
    /// failing that the best Armijo point seen.
    fn run<O: Objective>(&self, obj: &mut Counted<'_, O>, alpha0: f64) -> Option<LinePoint> {
        let start = obj.evals;
        let mut prev = self.origin();
        let mut alpha = alpha0;
        while obj.evals - start < self.budget {
            let Some(cur) = self.point(obj, alpha) else {
                // a failed evaluation is treated as an overlong step
                return self.zoom(obj, start, prev, None, alpha);
            };
            if !self.armijo(&cur) || (prev.alpha > 0.0 && cur.f >= prev.f) {
                let a = cur.alpha;
                return self.zoom(obj, start, prev, Some(cur), a);
            }
            if self.curvature(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                let a = prev.alpha;
                return self.zoom(obj, start, cur, Some(prev), a);
            }
            alpha = 2.0 * cur.alpha;
            prev = cur;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    /// `lo` satisfies Armijo with the lowest value so far (or is the origin).
    fn zoom<O: Objective>(
        &self,
        obj: &mut Counted<'_, O>,
        start: usize,
        mut lo: LinePoint,
        mut hi: Option<LinePoint>,
        mut hi_alpha: f64,
    ) -> Option<LinePoint> {
        while obj.evals - start < self.budget {
            let (a, b) = (lo.alpha, hi_alpha);
            let width = (b - a).abs();
            if width <= f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
            let (l, u) = if a < b { (a, b) } else { (b, a) };
            let trial = hi
                .as_ref()
                .and_then(|h| cubic_min(&lo, h))
                .filter(|&c| c > l + 0.1 * width && c < u - 0.1 * width)
                .unwrap_or(0.5 * (a + b));
            let Some(cur) = self.point(obj, trial) else {
                hi = None;
                hi_alpha = trial;
                continue;
            };
            if !self.armijo(&cur) || cur.f >= lo.f {
                hi_alpha = cur.alpha;
                hi = Some(cur);
            } else {
                if self.curvature(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi_alpha - lo.alpha) >= 0.0 {
                    hi_alpha = lo.alpha;
                    hi = Some(lo);
                }
                lo = cur;
            }
        }
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimiser of the cubic matching value and slope at both ends.
fn cubic_min(a: &LinePoint, b: &LinePoint) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let c = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    c.is_finite().then_some(c)
}

fn start<O: Objective>(obj: &mut Counted<'_, O>, p0: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    if p0.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteStart);
    }
    let (f, g) = obj.eval(p0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteObjective);
    }
    Ok((f, g))
}

fn stop_reason(cfg: &OptimizerConfig, f: f64, g: &[f64]) -> Option<Status> {
    if inf_norm(g) <= cfg.grad_tol {
        Some(Status::ConvergedGrad)
    } else if f <= cfg.loss_tol {
        Some(Status::ConvergedLoss)
    } else {
        None
    }
}

/// Dense inverse-Hessian BFGS with a strong-Wolfe line search, `H0 = I`.
pub fn bfgs_minimize<O: Objective>(obj: &mut O, p0: &[f64], cfg: &OptimizerConfig) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut obj = Counted { inner: obj, evals: 0 };
    let (mut f, mut g) = start(&mut obj, p0)?;
    let dim = p0.len();
    let mut x = p0.to_vec();
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut h_is_identity = true;
    let mut history = vec![HistoryEntry {
        iter: 0,
        loss: f,
        grad_norm: inf_norm(&g),
    }];
    let mut f_prev: Option<f64> = None;
    let mut status = stop_reason(cfg, f, &g).unwrap_or(Status::MaxIters);
    let mut iter = 0;

    if stop_reason(cfg, f, &g).is_none() {
        while iter < cfg.max_iters {
            let gv = nalgebra::DVector::from_column_slice(&g);
            let mut d: Vec<f64> = (-(&h * &gv)).as_slice().to_vec();
            let mut slope0 = dot(&g, &d);
            if !(slope0 < 0.0) {
                h.fill_with_identity();
                h_is_identity = true;
                d = g.iter().map(|v| -v).collect();
                slope0 = dot(&g, &d);
            }
            // initial trial step from the last decrease
            let alpha0 = match f_prev {
                Some(fp) if slope0 < 0.0 => {
                    let a = 1.01 * 2.0 * (f - fp) / slope0;
                    if a > 0.0 { a.min(1.0) } else { 1.0 }
                }
                _ => (1.01 / norm2(&g)).min(1.0),
            };
            let search = LineSearch {
                x: &x,
                g: &g,
                d: &d,
                f0: f,
                slope0,
                c1: cfg.wolfe_c1,
                c2: cfg.wolfe_c2,
                budget: cfg.max_line_evals,
            };
            let accepted = match search.run(&mut obj, alpha0) {
                Some(p) => p,
                None if !h_is_identity => {
                    // retry along steepest descent with a fresh Hessian
                    h.fill_with_identity();
                    h_is_identity = true;
                    continue;
                }
                None => {
                    status = Status::LineSearchFailure;
                    break;
                }
            };
            iter += 1;
            let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = accepted.g.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > cfg.curvature_skip * norm2(&s) * norm2(&y) {
                bfgs_update(&mut h, &s, &y, sy);
                h_is_identity = false;
            }
            f_prev = Some(f);
            x = accepted.x;
            f = accepted.f;
            g = accepted.g;
            history.push(HistoryEntry {
                iter,
                loss: f,
                grad_norm: inf_norm(&g),
            });
            if let Some(reason) = stop_reason(cfg, f, &g) {
                status = reason;
                break;
            }
            status = Status::MaxIters;
        }
    }

    Ok(TrainReport {
        method: Method::Bfgs,
        loss_history: history,
        final_grad_norm: inf_norm(&g),
        final_p: x,
        final_loss: f,
        iterations: iter,
        func_evals: obj.evals,
        rmse: None,
        status,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`, `rho = 1 / (s.y)`.
fn bfgs_update(h: &mut DMatrix<f64>, s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (h.clone() * nalgebra::DVector::from_column_slice(y)).as_slice().to_vec();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    let n = s.len();
    for j in 0..n {
        for i in 0..n {
            h[(i, j)] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Gradient descent with a backtracking Armijo step. The trial step starts at
/// twice the last accepted one.
pub fn gd_minimize<O: Objective>(obj: &mut O, p0: &[f64], cfg: &OptimizerConfig) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    const MAX_BACKTRACKS: usize = 60;
    let clock = Instant::now();
    let mut obj = Counted { inner: obj, evals: 0 };
    let (mut f, mut g) = start(&mut obj, p0)?;
    let mut x = p0.to_vec();
    let mut history = vec![HistoryEntry {
        iter: 0,
        loss: f,
        grad_norm: inf_norm(&g),
    }];
    let mut status = stop_reason(cfg, f, &g).unwrap_or(Status::MaxIters);
    let mut step = (1.0 / norm2(&g)).min(1.0);
    let mut iter = 0;

    if stop_reason(cfg, f, &g).is_none() {
        while iter < cfg.max_iters {
            let gg = dot(&g, &g);
            let mut alpha = step * 2.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
                if let Some((ft, gt)) = obj.probe(&trial) {
                    if ft <= f - cfg.wolfe_c1 * alpha * gg && ft < f {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((xn, fn_, gn)) = accepted else {
                status = Status::LineSearchFailure;
                break;
            };
            iter += 1;
            step = alpha;
            x = xn;
            f = fn_;
            g = gn;
            history.push(HistoryEntry {
                iter,
                loss: f,
                grad_norm: inf_norm(&g),
            });
            if let Some(reason) = stop_reason(cfg, f, &g) {
                status = reason;
                break;
            }
            status = Status::MaxIters;
        }
    }

    Ok(TrainReport {
        method: Method::GradientDescent,
        loss_history: history,
        final_grad_norm: inf_norm(&g),
        final_p: x,
        final_loss: f,
        iterations: iter,
        func_evals: obj.evals,
        rmse: None,
        status,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

pub fn minimize<O: Objective>(obj: &mut O, p0: &[f64], cfg: &OptimizerConfig) -> Result<TrainReport, TrainError> {
    match cfg.method {
        Method::Bfgs => bfgs_minimize(obj, p0, cfg),
        Method::GradientDescent => gd_minimize(obj, p0, cfg),
    }
}

/// Mean over components of the per-component root-mean-square error
/// against a reference trajectory.
pub fn rmse(trial: &TrialSolution, reference: &DenseSolution, eval_times: &[f64]) -> Result<f64, TrainError> {
    let truth = reference.sample(eval_times)?;
    let predicted = eval_times
        .iter()
        .map(|&t| trial.value_at(t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rmse_of(&predicted, &truth))
}

/// The same metric on pre-sampled rows (`rows[i][k]`).
pub fn rmse_of(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    per_component_rmse(predicted, truth).iter().sum::<f64>() / truth.first().map_or(1, |r| r.len()) as f64
}

pub fn per_component_rmse(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<f64> {
    let n = truth.first().map_or(0, |r| r.len());
    let pts = truth.len().max(1) as f64;
    (0..n)
        .map(|k| {
            let ss: f64 = predicted.iter().zip(truth).map(|(a, b)| (a[k] - b[k]).powi(2)).sum();
            (ss / pts).sqrt()
        })
        .collect()
}
