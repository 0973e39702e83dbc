//! First-order IVP systems `y' = f(t, y)`, `y(0) = y0`, the four benchmark
//! presets, and user systems declared through expressions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprlang::{self, EvalError, Expr, ParseError};
use crate::linflow::{AffineField, FlowError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("unknown builtin system {0:?} (expected food_chain, van_der_pol, lorenz or rossler)")]
    UnknownBuiltin(String),
    #[error("expected {expected} right-hand sides, got {got}")]
    RhsCount { expected: usize, got: usize },
    #[error("initial state has length {got}, expected {expected}")]
    InitialState { expected: usize, got: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("time horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("rhs[{index}]: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("{param:?} is not a parameter of {system}")]
    UnknownParam { system: String, param: String },
    #[error("{0}")]
    Eval(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Evaluator for `f(t, y)` and its Jacobian `df_i/dy_j`.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError>;
    fn jacobian(&self, t: f64, y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError>;
}

/// `y' = A y + c`, used for linear test systems.
impl VectorField for AffineField {
    fn dim(&self) -> usize {
        AffineField::dim(self)
    }

    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        out.copy_from_slice(&self.apply(y));
        Ok(())
    }

    fn jacobian(&self, _t: f64, _y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError> {
        out.copy_from(self.matrix());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    FoodChain,
    VanDerPol,
    Lorenz,
    Rossler,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [Builtin::FoodChain, Builtin::VanDerPol, Builtin::Lorenz, Builtin::Rossler];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::FoodChain => "food_chain",
            Builtin::VanDerPol => "van_der_pol",
            Builtin::Lorenz => "lorenz",
            Builtin::Rossler => "rossler",
        }
    }

    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Builtin::FoodChain => &[
                ("a", 1.0),
                ("b", 1.0),
                ("c", 1.0),
                ("d", 1.0),
                ("e", 1.0),
                ("f", 1.0),
                ("g", 1.0),
            ],
            Builtin::VanDerPol => &[("mu", 1.0)],
            Builtin::Lorenz => &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)],
            Builtin::Rossler => &[("a", 0.2), ("b", 0.2), ("c", 5.7)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = SystemError;

    fn from_str(s: &str) -> Result<Self, SystemError> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| SystemError::UnknownBuiltin(s.to_string()))
    }
}

fn param(params: &BTreeMap<String, f64>, name: &str) -> Result<f64, SystemError> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| SystemError::MissingParam(name.to_string()))
}

/// Hand-coded right-hand sides and Jacobians for the benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BuiltinField {
    FoodChain { a: f64, b: f64, c: f64, d: f64, e: f64, f: f64, g: f64 },
    VanDerPol { mu: f64 },
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Rossler { a: f64, b: f64, c: f64 },
}

impl BuiltinField {
    fn new(kind: Builtin, p: &BTreeMap<String, f64>) -> Result<Self, SystemError> {
        Ok(match kind {
            Builtin::FoodChain => BuiltinField::FoodChain {
                a: param(p, "a")?,
                b: param(p, "b")?,
                c: param(p, "c")?,
                d: param(p, "d")?,
                e: param(p, "e")?,
                f: param(p, "f")?,
                g: param(p, "g")?,
            },
            Builtin::VanDerPol => BuiltinField::VanDerPol { mu: param(p, "mu")? },
            Builtin::Lorenz => BuiltinField::Lorenz {
                sigma: param(p, "sigma")?,
                rho: param(p, "rho")?,
                beta: param(p, "beta")?,
            },
            Builtin::Rossler => BuiltinField::Rossler {
                a: param(p, "a")?,
                b: param(p, "b")?,
                c: param(p, "c")?,
            },
        })
    }
}

impl VectorField for BuiltinField {
    fn dim(&self) -> usize {
        match self {
            BuiltinField::VanDerPol { .. } => 2,
            _ => 3,
        }
    }

    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        match *self {
            BuiltinField::FoodChain { a, b, c, d, e, f, g } => {
                let (x, yy, z) = (y[0], y[1], y[2]);
                out[0] = a * x - b * x * yy;
                out[1] = -c * yy + d * x * yy - e * yy * z;
                out[2] = -f * z + g * yy * z;
            }
            BuiltinField::VanDerPol { mu } => {
                let (x, yy) = (y[0], y[1]);
                out[0] = mu * (x - x * x * x / 3.0 - yy);
                out[1] = x / mu;
            }
            BuiltinField::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (y[1] - y[0]);
                out[1] = rho * y[0] - y[1] - y[0] * y[2];
                out[2] = -beta * y[2] + y[0] * y[1];
            }
            BuiltinField::Rossler { a, b, c } => {
                let (x, yy, z) = (y[0], y[1], y[2]);
                out[0] = -yy - z;
                out[1] = x + a * yy;
                out[2] = b + z * (x - c);
            }
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError> {
        let rows: [[f64; 3]; 3] = match *self {
            BuiltinField::FoodChain { a, b, c, d, e, f, g } => {
                let (x, yy, z) = (y[0], y[1], y[2]);
                [
                    [a - b * yy, -b * x, 0.0],
                    [d * yy, -c + d * x - e * z, -e * yy],
                    [0.0, g * z, -f + g * yy],
                ]
            }
            BuiltinField::VanDerPol { mu } => {
                let x = y[0];
                [[mu * (1.0 - x * x), -mu, 0.0], [1.0 / mu, 0.0, 0.0], [0.0; 3]]
            }
            BuiltinField::Lorenz { sigma, rho, beta } => [
                [-sigma, sigma, 0.0],
                [rho - y[2], -1.0, -y[0]],
                [y[1], y[0], -beta],
            ],
            BuiltinField::Rossler { a, c, .. } => {
                [[0.0, -1.0, -1.0], [1.0, a, 0.0], [y[2], 0.0, y[0] - c]]
            }
        };
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = rows[i][j];
            }
        }
        Ok(())
    }
}

/// Right-hand side given as one expression per component over `y1..yn`, `t`.
#[derive(Debug, Clone)]
pub struct ExprField {
    exprs: Vec<Expr>,
    bound: Vec<Vec<f64>>,
}

impl ExprField {
    pub fn new(rhs_sources: &[String], params: &BTreeMap<String, f64>) -> Result<Self, SystemError> {
        let dim = rhs_sources.len();
        let var_names: Vec<String> = (1..=dim).map(|i| format!("y{i}")).collect();
        let vars: Vec<&str> = var_names.iter().map(String::as_str).collect();
        let param_names: Vec<&str> = params.keys().map(String::as_str).collect();
        let exprs = rhs_sources
            .iter()
            .enumerate()
            .map(|(index, src)| {
                exprlang::parse(src, &vars, &param_names).map_err(|source| SystemError::Parse { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bound = exprs
            .iter()
            .map(|e| e.bind_params(params))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SystemError::Eval(e.to_string()))?;
        Ok(ExprField { exprs, bound })
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }
}

impl VectorField for ExprField {
    fn dim(&self) -> usize {
        self.exprs.len()
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (k, (e, p)) in self.exprs.iter().zip(&self.bound).enumerate() {
            out[k] = e.eval(t, y, p)?;
        }
        Ok(())
    }

    fn jacobian(&self, t: f64, y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError> {
        for j in 0..y.len() {
            for (k, (e, p)) in self.exprs.iter().zip(&self.bound).enumerate() {
                out[(k, j)] = e.eval_dual(t, y, p, j)?.deriv;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OdeSystem {
    name: String,
    params: BTreeMap<String, f64>,
    y0: Vec<f64>,
    horizon: f64,
    field: Arc<dyn VectorField>,
}

impl OdeSystem {
    pub fn new(
        name: impl Into<String>,
        field: Arc<dyn VectorField>,
        params: BTreeMap<String, f64>,
        y0: Vec<f64>,
        horizon: f64,
    ) -> Result<Self, SystemError> {
        let dim = field.dim();
        if dim == 0 {
            return Err(SystemError::ZeroDimension);
        }
        if y0.len() != dim {
            return Err(SystemError::InitialState {
                expected: dim,
                got: y0.len(),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SystemError::Horizon(horizon));
        }
        Ok(OdeSystem {
            name: name.into(),
            params,
            y0,
            horizon,
            field,
        })
    }

    pub fn builtin(kind: Builtin, params: BTreeMap<String, f64>) -> Result<Self, SystemError> {
        let field = BuiltinField::new(kind, &params)?;
        let (y0, horizon) = match kind {
            Builtin::FoodChain => (vec![0.5, 1.0, 2.0], 3.0),
            Builtin::VanDerPol => (vec![1.0, 2.0], 10.0),
            Builtin::Lorenz => (vec![1.0, 5.0, 10.0], 0.5),
            Builtin::Rossler => (vec![1.0, 5.0, 10.0], 1.0),
        };
        Self::new(kind.name(), Arc::new(field), params, y0, horizon)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn with_field(&self, field: Arc<dyn VectorField>) -> Result<Self, SystemError> {
        Self::new(self.name.clone(), field, self.params.clone(), self.y0.clone(), self.horizon)
    }

    pub fn rhs_into(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.field.rhs(t, y, out)
    }

    pub fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim()];
        self.field.rhs(t, y, &mut out)?;
        Ok(out)
    }

    pub fn jacobian_into(&self, t: f64, y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError> {
        self.field.jacobian(t, y, out)
    }

    pub fn jacobian(&self, t: f64, y: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        self.field.jacobian(t, y, &mut out)?;
        Ok(out)
    }
}

/// Builds a system from per-component expressions over `y1..y_dim` and `t`.
pub fn from_expressions(
    dim: usize,
    rhs_sources: &[String],
    params: BTreeMap<String, f64>,
    y0: Vec<f64>,
    horizon: f64,
) -> Result<OdeSystem, SystemError> {
    if dim == 0 {
        return Err(SystemError::ZeroDimension);
    }
    if rhs_sources.len() != dim {
        return Err(SystemError::RhsCount {
            expected: dim,
            got: rhs_sources.len(),
        });
    }
    let field = ExprField::new(rhs_sources, &params)?;
    OdeSystem::new("custom", Arc::new(field), params, y0, horizon)
}

/// A benchmark system together with its training setup and published metrics.
#[derive(Debug, Clone)]
pub struct SystemPreset {
    pub kind: Builtin,
    pub system: OdeSystem,
    pub linear_part: AffineField,
    pub train_interval: (f64, f64),
    pub n_points: usize,
    pub hidden_units: usize,
    pub test_interval: (f64, f64),
    pub test_points: usize,
    pub restarts: usize,
    pub reported_loss: Option<f64>,
    pub reported_rmse: Option<f64>,
}

/// Preset with default parameters.
pub fn builtin(kind: Builtin) -> SystemPreset {
    builtin_with_params(kind, &BTreeMap::new()).expect("default parameters are complete")
}

/// Preset with parameter overrides merged over the defaults.
pub fn builtin_with_params(kind: Builtin, overrides: &BTreeMap<String, f64>) -> Result<SystemPreset, SystemError> {
    let mut params = kind.default_params();
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(SystemError::UnknownParam {
                system: kind.name().to_string(),
                param: k.clone(),
            });
        }
        params.insert(k.clone(), *v);
    }
    let system = OdeSystem::builtin(kind, params.clone())?;
    let linear_part = linear_part(kind, &params)?;
    let preset = match kind {
        Builtin::FoodChain => SystemPreset {
            kind,
            system,
            linear_part,
            train_interval: (0.0, 3.0),
            n_points: 100,
            hidden_units: 100,
            test_interval: (0.0, 3.5),
            test_points: 200,
            restarts: 5,
            reported_loss: Some(7.303e-5),
            reported_rmse: Some(0.00851),
        },
        Builtin::VanDerPol => SystemPreset {
            kind,
            system,
            linear_part,
            train_interval: (0.0, 10.0),
            n_points: 40,
            hidden_units: 50,
            test_interval: (0.0, 11.0),
            test_points: 200,
            restarts: 10,
            reported_loss: Some(2.07e-4),
            reported_rmse: Some(0.082),
        },
        Builtin::Lorenz => SystemPreset {
            kind,
            system,
            linear_part,
            train_interval: (0.0, 0.5),
            n_points: 40,
            hidden_units: 30,
            test_interval: (0.0, 0.6),
            test_points: 200,
            restarts: 5,
            reported_loss: None,
            reported_rmse: None,
        },
        Builtin::Rossler => SystemPreset {
            kind,
            system,
            linear_part,
            train_interval: (0.0, 1.0),
            n_points: 40,
            hidden_units: 50,
            test_interval: (0.0, 1.4),
            test_points: 200,
            restarts: 5,
            reported_loss: Some(3.266e-6),
            reported_rmse: Some(4.747e-5),
        },
    };
    Ok(preset)
}

fn linear_part(kind: Builtin, p: &BTreeMap<String, f64>) -> Result<AffineField, SystemError> {
    let field = match kind {
        Builtin::FoodChain => {
            let diag = DVector::from_vec(vec![param(p, "a")?, -param(p, "c")?, -param(p, "f")?]);
            AffineField::linear(DMatrix::from_diagonal(&diag))?
        }
        Builtin::VanDerPol => {
            let mu = param(p, "mu")?;
            AffineField::from_rows(&[vec![0.0, -mu], vec![1.0 / mu, 0.0]], &[0.0, 0.0])?
        }
        Builtin::Lorenz => {
            let diag = DVector::from_vec(vec![-param(p, "sigma")?, -1.0, -param(p, "beta")?]);
            AffineField::linear(DMatrix::from_diagonal(&diag))?
        }
        Builtin::Rossler => {
            let c = param(p, "c")?;
            AffineField::from_rows(
                &[vec![0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -c]],
                &[0.0, 0.0, 0.0],
            )?
        }
    };
    Ok(field)
}

impl SystemPreset {
    /// Alternative base field with hand-simplified closed forms that differ
    /// from the exact flow of `linear_part`: Lorenz uses rates
    /// `(-sigma, -1, -rho)`, and the Rossler `y` component drops the secular
    /// term. Other presets return `linear_part` unchanged.
    pub fn literal_base(&self) -> Result<AffineField, SystemError> {
        let p = self.system.params();
        Ok(match self.kind {
            Builtin::Lorenz => {
                let diag = DVector::from_vec(vec![-param(p, "sigma")?, -1.0, -param(p, "rho")?]);
                AffineField::linear(DMatrix::from_diagonal(&diag))?
            }
            Builtin::Rossler => {
                let c = param(p, "c")?;
                let y0 = self.system.y0();
                // xbar settles at x0 - z0/c; shifting ybar' by its negative removes the ramp
                let drift = y0[2] / c - y0[0];
                AffineField::new(self.linear_part.matrix().clone(), DVector::from_vec(vec![0.0, drift, 0.0]))?
            }
            _ => self.linear_part.clone(),
        })
    }

    pub fn train_grid(&self) -> Vec<f64> {
        linspace(self.train_interval.0, self.train_interval.1, self.n_points)
    }

    pub fn test_grid(&self) -> Vec<f64> {
        linspace(self.test_interval.0, self.test_interval.1, self.test_points)
    }
}

/// `n` evenly spaced points including both endpoints.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + i as f64 * h }).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub trials: usize,
    pub max_rel_error: f64,
    pub worst_state: Vec<f64>,
    pub worst_entry: (usize, usize),
    pub tol: f64,
    pub passed: bool,
    pub eval_failures: usize,
}

/// Compares the analytic Jacobian with central differences of the rhs at
/// random states in a box around `y0`. Relative errors use a unit floor.
pub fn jacobian_check(system: &OdeSystem, trials: usize, tol: f64, seed: u64) -> JacobianReport {
    let n = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = JacobianReport {
        trials,
        max_rel_error: 0.0,
        worst_state: system.y0().to_vec(),
        worst_entry: (0, 0),
        tol,
        passed: true,
        eval_failures: 0,
    };
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let mut jac = DMatrix::zeros(n, n);
    for _ in 0..trials.max(1) {
        let t = rng.random_range(0.0..system.horizon());
        let y: Vec<f64> = system
            .y0()
            .iter()
            .map(|&v| v + rng.random_range(-1.0..1.0) * v.abs().max(1.0))
            .collect();
        if system.jacobian_into(t, &y, &mut jac).is_err() {
            report.eval_failures += 1;
            continue;
        }
        for j in 0..n {
            let h = 1e-6 * y[j].abs().max(1.0);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            if system.rhs_into(t, &yp, &mut fp).is_err() || system.rhs_into(t, &ym, &mut fm).is_err() {
                report.eval_failures += 1;
                continue;
            }
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let err = (fd - jac[(i, j)]).abs() / jac[(i, j)].abs().max(1.0);
                if !(err <= report.max_rel_error) {
                    report.max_rel_error = err;
                    report.worst_state = y.clone();
                    report.worst_entry = (i, j);
                }
            }
        }
    }
    report.passed = report.eval_failures == 0 && report.max_rel_error <= tol;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn food_chain_rhs_at_y0() {
        let p = builtin(Builtin::FoodChain);
        // -c y + d x y - e y z = -1 + 0.5 - 2
        assert_eq!(p.system.rhs(0.0, &[0.5, 1.0, 2.0]).unwrap(), vec![0.0, -2.5, 0.0]);
    }

    #[test]
    fn rossler_linear_part() {
        let p = builtin(Builtin::Rossler);
        let a = p.linear_part.matrix();
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -5.7]);
        assert_eq!(a, &expect);
        assert!(p.linear_part.offset().iter().all(|&v| v == 0.0));
        let (y, _) = crate::linflow::flow(&p.linear_part, p.system.y0(), 0.0).unwrap();
        assert_eq!(y, vec![1.0, 5.0, 10.0]);
    }

    #[test]
    fn van_der_pol_preset() {
        let p = builtin(Builtin::VanDerPol);
        assert_eq!(p.system.y0(), &[1.0, 2.0]);
        assert_eq!((p.n_points, p.hidden_units), (40, 50));
        assert_eq!(p.train_interval, (0.0, 10.0));
        assert_eq!(p.test_interval, (0.0, 11.0));
    }

    #[test]
    fn presets_are_consistent() {
        for kind in Builtin::ALL {
            let p = builtin(kind);
            assert!(p.test_interval.0 <= p.train_interval.0 && p.test_interval.1 >= p.train_interval.1);
            assert_eq!(p.system.y0().len(), p.system.dim());
            assert_eq!(p.linear_part.dim(), p.system.dim());
            let f = p.system.rhs(0.0, p.system.y0()).unwrap();
            assert!(f.iter().all(|v| v.is_finite()));
            let report = jacobian_check(&p.system, 50, 1e-6, 11);
            assert!(report.passed, "{kind}: {report:?}");
            assert_eq!(p.system.horizon(), p.train_interval.1);
        }
        assert_eq!(builtin(Builtin::Lorenz).reported_loss, None);
    }

    #[test]
    fn builtin_names_round_trip() {
        for kind in Builtin::ALL {
            assert_eq!(kind.name().parse::<Builtin>().unwrap(), kind);
        }
        assert_eq!(
            "duffing".parse::<Builtin>(),
            Err(SystemError::UnknownBuiltin("duffing".into()))
        );
    }

    #[test]
    fn param_overrides() {
        let mut o = BTreeMap::new();
        o.insert("a".to_string(), 0.1);
        let p = builtin_with_params(Builtin::Rossler, &o).unwrap();
        assert_eq!(p.system.rhs(0.0, &[0.0, 1.0, 0.0]).unwrap()[1], 0.1);
        o.insert("zeta".to_string(), 1.0);
        assert!(builtin_with_params(Builtin::Rossler, &o).is_err());
    }

    #[test]
    fn literal_bases() {
        let lorenz = builtin(Builtin::Lorenz);
        let lit = lorenz.literal_base().unwrap();
        let (y, _) = crate::linflow::flow(&lit, lorenz.system.y0(), 0.1).unwrap();
        let expect = [(-1.0f64).exp(), 5.0 * (-0.1f64).exp(), 10.0 * (-2.8f64).exp()];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-13 * b.abs(), "{a} vs {b}");
        }

        let ross = builtin(Builtin::Rossler);
        let lit = ross.literal_base().unwrap();
        for &t in &[0.0, 0.4, 1.0] {
            let (y, _) = crate::linflow::flow(&lit, ross.system.y0(), t).unwrap();
            let e = (-5.7 * t).exp();
            assert!((y[0] - (-0.754386 + 1.75439 * e)).abs() < 1e-5);
            assert!((y[1] - (5.30779 - 0.307787 * e)).abs() < 1e-5);
            assert!((y[2] - 10.0 * e).abs() < 1e-12);
        }
    }

    #[test]
    fn expression_system() {
        let sys = from_expressions(1, &["-y1".to_string()], BTreeMap::new(), vec![1.0], 1.0).unwrap();
        assert_eq!(sys.rhs(0.0, &[2.0]).unwrap(), vec![-2.0]);
        assert_eq!(sys.jacobian(0.0, &[2.0]).unwrap()[(0, 0)], -1.0);
        assert_eq!(
            from_expressions(2, &["-y1".to_string()], BTreeMap::new(), vec![1.0, 0.0], 1.0).unwrap_err(),
            SystemError::RhsCount { expected: 2, got: 1 }
        );
        assert!(matches!(
            from_expressions(1, &["-q".to_string()], BTreeMap::new(), vec![1.0], 1.0),
            Err(SystemError::Parse { index: 0, .. })
        ));
        assert_eq!(
            from_expressions(1, &["-y1".to_string()], BTreeMap::new(), vec![1.0, 2.0], 1.0).unwrap_err(),
            SystemError::InitialState { expected: 1, got: 2 }
        );
    }

    #[test]
    fn lorenz_expressions_match_builtin() {
        let preset = builtin(Builtin::Lorenz);
        let rhs = ["sigma*(y2-y1)", "rho*y1 - y2 - y1*y3", "-beta*y3 + y1*y2"].map(String::from);
        let sys = from_expressions(3, &rhs, preset.system.params().clone(), vec![1.0, 5.0, 10.0], 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
            let a = sys.rhs(0.0, &y).unwrap();
            let b = preset.system.rhs(0.0, &y).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12);
            }
            let ja = sys.jacobian(0.0, &y).unwrap();
            let jb = preset.system.jacobian(0.0, &y).unwrap();
            assert!((ja - jb).abs().max() <= 1e-12);
        }
        assert!(jacobian_check(&sys, 50, 1e-6, 5).passed);
    }

    #[derive(Debug)]
    struct Corrupted(BuiltinField);

    impl VectorField for Corrupted {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
            self.0.rhs(t, y, out)
        }
        fn jacobian(&self, t: f64, y: &[f64], out: &mut DMatrix<f64>) -> Result<(), EvalError> {
            self.0.jacobian(t, y, out)?;
            out[(1, 2)] += 1.0;
            Ok(())
        }
    }

    #[test]
    fn corrupted_jacobian_fails_check() {
        let preset = builtin(Builtin::Lorenz);
        let field = BuiltinField::new(Builtin::Lorenz, preset.system.params()).unwrap();
        let bad = preset.system.with_field(Arc::new(Corrupted(field))).unwrap();
        let report = jacobian_check(&bad, 10, 1e-6, 1);
        assert!(!report.passed);
        assert_eq!(report.worst_entry, (1, 2));
    }

    #[test]
    fn linear_system_jacobian_is_constant() {
        let field = AffineField::from_rows(&[vec![0.0, 1.0], vec![-4.0, -0.2]], &[0.0, 0.0]).unwrap();
        let sys = OdeSystem::new("linear", Arc::new(field.clone()), BTreeMap::new(), vec![1.0, 0.0], 1.0).unwrap();
        for y in [[0.0, 0.0], [3.0, -7.0], [1e3, 2.5]] {
            assert_eq!(&sys.jacobian(0.4, &y).unwrap(), field.matrix());
        }
        assert!(jacobian_check(&sys, 20, 1e-6, 2).passed);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(0.0, 3.0, 100);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[99], 3.0);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }
}
