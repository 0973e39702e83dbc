//! Explicit Runge-Kutta reference integrators with dense output.
//!
//! `rk45` is the Dormand-Prince 5(4) pair with a PI step-size controller and
//! the usual automatic initial step. `rk4` is the classic fixed-step method.
//! Both store per-step coefficients so the trajectory can be sampled anywhere
//! in the integration span.

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::EvalError;
use crate::systems::OdeSystem;
use crate::table;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReferenceError {
    #[error("rhs evaluation failed at t = {t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step limit of {limit} reached at t = {t}")]
    MaxSteps { t: f64, limit: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("query time {t} lies outside the solution span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
    #[error("tolerances must be positive and finite (rtol = {rtol}, atol = {atol})")]
    Tolerance { rtol: f64, atol: f64 },
    #[error("step count must be at least 1")]
    Steps,
    #[error("integration span [{0}, {1}] is empty or not finite")]
    Span(f64, f64),
}

/// Safety cap on accepted plus rejected steps for `rk45`.
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-9 }
    }
}

/// A trajectory known at knots and interpolated between them.
///
/// On step `i`, with `theta = (t - t_i) / h_i`, the state is
/// `r1 + theta (r2 + (1 - theta) (r3 + theta (r4 + (1 - theta) r5)))`.
/// With `r5 = 0` this is the cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    // five coefficient vectors per step, flattened as [r1|r2|r3|r4|r5]
    coeffs: Vec<Vec<f64>>,
    accepted: usize,
    rejected: usize,
    tolerances: Option<Tolerances>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// `None` for fixed-step solutions.
    pub fn tolerances(&self) -> Option<Tolerances> {
        self.tolerances
    }

    fn span(&self) -> (f64, f64) {
        let (a, b) = (self.t0(), self.t_end());
        (a.min(b), a.max(b))
    }

    /// State at a single time inside the span.
    pub fn at(&self, t: f64) -> Result<Vec<f64>, ReferenceError> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(ReferenceError::OutOfSpan { t, lo, hi });
        }
        let dir = (self.t_end() - self.t0()).signum();
        // first knot strictly beyond t in the integration direction
        let j = self.times.partition_point(|&k| dir * k <= dir * t);
        if j > 0 && self.times[j - 1] == t {
            return Ok(self.states[j - 1].clone());
        }
        let i = j.saturating_sub(1).min(self.coeffs.len() - 1);
        let h = self.times[i + 1] - self.times[i];
        let theta = (t - self.times[i]) / h;
        let n = self.dim();
        let c = &self.coeffs[i];
        let one = 1.0 - theta;
        Ok((0..n)
            .map(|k| {
                let r = |q: usize| c[q * n + k];
                r(0) + theta * (r(1) + one * (r(2) + theta * (r(3) + one * r(4))))
            })
            .collect())
    }

    /// States at each requested time, one row per time.
    pub fn sample(&self, times: &[f64]) -> Result<Vec<Vec<f64>>, ReferenceError> {
        times.iter().map(|&t| self.at(t)).collect()
    }

    /// CSV with header `t,y1,...,yn`.
    pub fn to_csv(&self, times: &[f64]) -> Result<String, ReferenceError> {
        let rows = self.sample(times)?;
        let mut header = vec!["t".to_string()];
        header.extend(table::indexed("y", self.dim()));
        Ok(table::to_csv(
            &header,
            times.iter().zip(rows).map(|(&t, mut r)| {
                r.insert(0, t);
                r
            }),
        ))
    }
}

struct Rhs<'a> {
    system: &'a OdeSystem,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), ReferenceError> {
        self.system
            .rhs_into(t, y, out)
            .map_err(|source| ReferenceError::Eval { t, source })?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ReferenceError::NonFinite { t });
        }
        Ok(())
    }
}

fn check_span(t_span: (f64, f64)) -> Result<(), ReferenceError> {
    let (a, b) = t_span;
    if !(a.is_finite() && b.is_finite()) || a == b {
        return Err(ReferenceError::Span(a, b));
    }
    Ok(())
}

/// Hermite coefficients of one step from end values and slopes.
fn hermite(y0: &[f64], y1: &[f64], f0: &[f64], f1: &[f64], h: f64, r5: Option<&[f64]>) -> Vec<f64> {
    let n = y0.len();
    let mut c = vec![0.0; 5 * n];
    for k in 0..n {
        let dy = y1[k] - y0[k];
        let r3 = h * f0[k] - dy;
        c[k] = y0[k];
        c[n + k] = dy;
        c[2 * n + k] = r3;
        c[3 * n + k] = dy - h * f1[k] - r3;
        c[4 * n + k] = r5.map_or(0.0, |r| r[k]);
    }
    c
}

/// Classic fourth-order Runge-Kutta with `steps` uniform steps from the
/// system's initial state.
pub fn rk4(system: &OdeSystem, t_span: (f64, f64), steps: usize) -> Result<DenseSolution, ReferenceError> {
    rk4_from(system, system.y0(), t_span, steps)
}

pub fn rk4_from(
    system: &OdeSystem,
    y0: &[f64],
    t_span: (f64, f64),
    steps: usize,
) -> Result<DenseSolution, ReferenceError> {
    check_span(t_span)?;
    if steps == 0 {
        return Err(ReferenceError::Steps);
    }
    let rhs = Rhs { system };
    let n = y0.len();
    let (t0, t1) = t_span;
    let h = (t1 - t0) / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut coeffs = Vec::with_capacity(steps);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs.eval(t, &y, &mut k1)?;
    times.push(t);
    states.push(y.clone());
    for i in 0..steps {
        for k in 0..n {
            tmp[k] = y[k] + 0.5 * h * k1[k];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k2)?;
        for k in 0..n {
            tmp[k] = y[k] + 0.5 * h * k2[k];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k3)?;
        for k in 0..n {
            tmp[k] = y[k] + h * k3[k];
        }
        rhs.eval(t + h, &tmp, &mut k4)?;
        let y_new: Vec<f64> = (0..n)
            .map(|k| y[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
            .collect();
        let t_new = if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * h };
        let mut f_new = vec![0.0; n];
        rhs.eval(t_new, &y_new, &mut f_new)?;
        coeffs.push(hermite(&y, &y_new, &k1, &f_new, t_new - t, None));
        y = y_new;
        t = t_new;
        k1 = f_new;
        times.push(t);
        states.push(y.clone());
    }
    Ok(DenseSolution {
        times,
        states,
        coeffs,
        accepted: steps,
        rejected: 0,
        tolerances: None,
    })
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// quartic dense-output correction
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Adaptive Dormand-Prince integration from the system's initial state.
pub fn rk45(system: &OdeSystem, t_span: (f64, f64), rtol: f64, atol: f64) -> Result<DenseSolution, ReferenceError> {
    rk45_from(system, system.y0(), t_span, Tolerances { rtol, atol })
}

pub fn rk45_from(
    system: &OdeSystem,
    y0: &[f64],
    t_span: (f64, f64),
    tol: Tolerances,
) -> Result<DenseSolution, ReferenceError> {
    check_span(t_span)?;
    let Tolerances { rtol, atol } = tol;
    if !(rtol > 0.0 && atol > 0.0 && rtol.is_finite() && atol.is_finite()) {
        return Err(ReferenceError::Tolerance { rtol, atol });
    }
    let rhs = Rhs { system };
    let n = y0.len();
    let (t0, t1) = t_span;
    let dir = (t1 - t0).signum();
    let hmax = (t1 - t0).abs();
    let expo1 = 0.2 - BETA * 0.75;
    let sc = |a: f64, b: f64| atol + rtol * a.abs().max(b.abs());
    let err_norm = |v: &[f64], ya: &[f64], yb: &[f64]| -> f64 {
        let s: f64 = (0..n).map(|k| (v[k] / sc(ya[k], yb[k])).powi(2)).sum();
        (s / n as f64).sqrt()
    };

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    rhs.eval(t, &y, &mut k1)?;
    let mut h = dir * initial_step(&rhs, t, &y, &k1, dir, hmax, tol)?;

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ys = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut times = vec![t];
    let mut states = vec![y.clone()];
    let mut coeffs = Vec::new();
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if accepted + rejected >= MAX_STEPS {
            return Err(ReferenceError::MaxSteps { t, limit: MAX_STEPS });
        }
        if 0.1 * h.abs() <= t.abs() * f64::EPSILON {
            return Err(ReferenceError::StepUnderflow { t });
        }
        let last = dir * (t + 1.01 * h - t1) >= 0.0;
        if last {
            h = t1 - t;
        }
        let stage = |ys: &mut [f64], terms: &[(f64, &[f64])]| {
            for k in 0..n {
                ys[k] = y[k] + h * terms.iter().map(|(a, kv)| a * kv[k]).sum::<f64>();
            }
        };
        stage(&mut ys, &[(A21, &k1)]);
        rhs.eval(t + C2 * h, &ys, &mut k2)?;
        stage(&mut ys, &[(A31, &k1), (A32, &k2)]);
        rhs.eval(t + C3 * h, &ys, &mut k3)?;
        stage(&mut ys, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        rhs.eval(t + C4 * h, &ys, &mut k4)?;
        stage(&mut ys, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        rhs.eval(t + C5 * h, &ys, &mut k5)?;
        stage(&mut ys, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let t_new = if last { t1 } else { t + h };
        rhs.eval(t + h, &ys, &mut k6)?;
        stage(&mut y_new, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        rhs.eval(t_new, &y_new, &mut k7)?;
        for k in 0..n {
            err[k] = h * (E1 * k1[k] + E3 * k3[k] + E4 * k4[k] + E5 * k5[k] + E6 * k6[k] + E7 * k7[k]);
        }
        let e = err_norm(&err, &y, &y_new);
        if !e.is_finite() {
            return Err(ReferenceError::NonFinite { t });
        }

        // PI controller on the step ratio
        let fac11 = e.powf(expo1);
        let fac = (fac11 / fac_old.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;
        if e <= 1.0 {
            fac_old = e.max(1e-4);
            accepted += 1;
            let r5: Vec<f64> = (0..n)
                .map(|k| h * (D1 * k1[k] + D3 * k3[k] + D4 * k4[k] + D5 * k5[k] + D6 * k6[k] + D7 * k7[k]))
                .collect();
            coeffs.push(hermite(&y, &y_new, &k1, &k7, h, Some(&r5)));
            std::mem::swap(&mut k1, &mut k7);
            y.copy_from_slice(&y_new);
            t = t_new;
            times.push(t);
            states.push(y.clone());
            if last {
                break;
            }
            if h_new.abs() > hmax {
                h_new = dir * hmax;
            }
            if last_rejected {
                h_new = dir * h_new.abs().min(h.abs());
            }
            last_rejected = false;
        } else {
            h_new = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            if accepted >= 1 {
                rejected += 1;
            }
            last_rejected = true;
        }
        h = h_new;
    }

    Ok(DenseSolution {
        times,
        states,
        coeffs,
        accepted,
        rejected,
        tolerances: Some(tol),
    })
}

/// Automatic first step for a fifth-order method (magnitude only).
fn initial_step(
    rhs: &Rhs<'_>,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    hmax: f64,
    tol: Tolerances,
) -> Result<f64, ReferenceError> {
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let dnf: f64 = (0..n).map(|k| (f0[k] / sk[k]).powi(2)).sum();
    let dny: f64 = (0..n).map(|k| (y[k] / sk[k]).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1: Vec<f64> = (0..n).map(|k| y[k] + dir * h * f0[k]).collect();
    let mut f1 = vec![0.0; n];
    rhs.eval(t + dir * h, &y1, &mut f1)?;
    let der2 = (0..n).map(|k| ((f1[k] - f0[k]) / sk[k]).powi(2)).sum::<f64>().sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(hmax))
}
