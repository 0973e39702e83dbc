//! Trial solution `yhat_k(t) = ybar_k(t) + t * N_k(t)` and its time derivative
//! `yhat_k'(t) = ybar_k'(t) + N_k(t) + t * dN_k/dt`.
//!
//! `ybar` is the exact flow of the chosen affine part, so `yhat(0) = y0` for
//! every parameter vector.

use thiserror::Error;

use crate::linflow::{self, AffineField, FlowError, FlowTable};
use crate::neuralnet::{self, NetError, NetEval, ScalarNet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("expected {expected} networks, got {got}")]
    NetCount { expected: usize, got: usize },
    #[error("all networks must share one hidden width")]
    MixedWidths,
    #[error("training grid is empty")]
    EmptyGrid,
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
}

/// Sensitivities of one component with respect to its own network.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSens {
    /// `d yhat_k / d p_k = t * dN_k/dp`
    pub value: Vec<f64>,
    /// `d yhat_k' / d p_k = dN_k/dp + t * d2N_k/(dt dp)`
    pub deriv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialEval {
    pub t: f64,
    pub yhat: Vec<f64>,
    pub yhat_dt: Vec<f64>,
    pub sens: Vec<ComponentSens>,
}

impl TrialEval {
    fn zeros(n: usize, m: usize) -> Self {
        let p = neuralnet::param_count(m);
        TrialEval {
            t: 0.0,
            yhat: vec![0.0; n],
            yhat_dt: vec![0.0; n],
            sens: (0..n)
                .map(|_| ComponentSens {
                    value: vec![0.0; p],
                    deriv: vec![0.0; p],
                })
                .collect(),
        }
    }
}

/// Reusable buffers for evaluating a trial point without allocation.
#[derive(Debug, Clone)]
pub struct EvalScratch {
    net: NetEval,
    pub out: TrialEval,
}

impl EvalScratch {
    pub fn new(n: usize, m: usize) -> Self {
        EvalScratch {
            net: NetEval::zeros(m),
            out: TrialEval::zeros(n, m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialSolution {
    field: AffineField,
    y0: Vec<f64>,
    base: FlowTable,
    nets: Vec<ScalarNet>,
    width: usize,
}

impl TrialSolution {
    pub fn new(field: AffineField, y0: &[f64], grid: &[f64], nets: Vec<ScalarNet>) -> Result<Self, TrialError> {
        if grid.is_empty() {
            return Err(TrialError::EmptyGrid);
        }
        if nets.len() != field.dim() {
            return Err(TrialError::NetCount {
                expected: field.dim(),
                got: nets.len(),
            });
        }
        let width = nets[0].width();
        if nets.iter().any(|n| n.width() != width) {
            return Err(TrialError::MixedWidths);
        }
        let base = linflow::flow_table(&field, y0, grid)?;
        Ok(TrialSolution {
            field,
            y0: y0.to_vec(),
            base,
            nets,
            width,
        })
    }

    /// One freshly initialised network per component; component `k` uses
    /// seed `seed * n + k` so nets never share a stream.
    pub fn seeded(field: AffineField, y0: &[f64], grid: &[f64], width: usize, seed: u64) -> Result<Self, TrialError> {
        let n = field.dim() as u64;
        let nets = (0..n)
            .map(|k| ScalarNet::init(width, seed.wrapping_mul(n).wrapping_add(k)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(field, y0, grid, nets)
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn field(&self) -> &AffineField {
        &self.field
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn grid(&self) -> &[f64] {
        self.base.times()
    }

    pub fn base(&self) -> &FlowTable {
        &self.base
    }

    pub fn nets(&self) -> &[ScalarNet] {
        &self.nets
    }

    pub fn net_param_count(&self) -> usize {
        neuralnet::param_count(self.width)
    }

    pub fn param_count(&self) -> usize {
        self.dim() * self.net_param_count()
    }

    /// Flat parameter vector: nets concatenated in component order.
    pub fn params(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), TrialError> {
        self.check_params(p)?;
        let q = self.net_param_count();
        for (net, chunk) in self.nets.iter_mut().zip(p.chunks(q)) {
            net.params_mut().copy_from_slice(chunk);
        }
        Ok(())
    }

    pub fn check_params(&self, p: &[f64]) -> Result<(), TrialError> {
        if p.len() != self.param_count() {
            return Err(TrialError::ParamLength {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Evaluates at any time, computing the base flow on demand.
    pub fn eval_at(&self, t: f64) -> Result<TrialEval, TrialError> {
        let (y, dy) = linflow::flow(&self.field, &self.y0, t)?;
        let mut scratch = EvalScratch::new(self.dim(), self.width);
        let p = self.params();
        self.eval_point(t, &y, &dy, &p, &mut scratch);
        Ok(scratch.out)
    }

    /// Trial values only (no sensitivities) at `t`.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>, TrialError> {
        let (y, _) = linflow::flow(&self.field, &self.y0, t)?;
        Ok(y.iter()
            .zip(&self.nets)
            .map(|(ybar, net)| ybar + t * net.forward(t))
            .collect())
    }

    pub fn eval_grid(&self) -> Vec<TrialEval> {
        let p = self.params();
        let mut scratch = EvalScratch::new(self.dim(), self.width);
        (0..self.base.len())
            .map(|i| {
                self.eval_grid_point(i, &p, &mut scratch);
                scratch.out.clone()
            })
            .collect()
    }

    /// Evaluates grid point `i` for an external parameter vector `p`.
    pub fn eval_grid_point(&self, i: usize, p: &[f64], scratch: &mut EvalScratch) {
        let t = self.base.times()[i];
        self.eval_point(t, self.base.value(i), self.base.deriv(i), p, scratch);
    }

    fn eval_point(&self, t: f64, ybar: &[f64], ybar_dt: &[f64], p: &[f64], scratch: &mut EvalScratch) {
        let m = self.width;
        let q = self.net_param_count();
        let out = &mut scratch.out;
        out.t = t;
        for k in 0..self.dim() {
            let net = &mut scratch.net;
            neuralnet::eval_full_into(m, &p[k * q..(k + 1) * q], t, net);
            out.yhat[k] = ybar[k] + t * net.value;
            out.yhat_dt[k] = ybar_dt[k] + net.value + t * net.dt;
            let sens = &mut out.sens[k];
            for j in 0..q {
                sens.value[j] = t * net.grad_p[j];
                sens.deriv[j] = net.grad_p[j] + t * net.grad_p_dt[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{builtin, linspace, Builtin};
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn food_chain_trial(seed: u64) -> TrialSolution {
        let p = builtin(Builtin::FoodChain);
        let grid = linspace(0.0, 3.0, 10);
        TrialSolution::seeded(p.linear_part, p.system.y0(), &grid, 4, seed).unwrap()
    }

    #[test]
    fn initial_condition_is_exact() {
        for seed in 0..5 {
            let trial = food_chain_trial(seed);
            let e = trial.eval_at(0.0).unwrap();
            assert_eq!(e.yhat, vec![0.5, 1.0, 2.0]);
            for k in 0..3 {
                let n0 = trial.nets()[k].forward(0.0);
                let base = trial.field().apply(&[0.5, 1.0, 2.0])[k];
                assert_eq!(e.yhat_dt[k], base + n0);
            }
            assert_eq!(trial.eval_grid()[0].yhat, vec![0.5, 1.0, 2.0]);
        }
    }

    #[test]
    fn zero_nets_reproduce_base_flow() {
        let p = builtin(Builtin::FoodChain);
        let grid = linspace(0.0, 3.0, 7);
        let nets = vec![ScalarNet::zeros(3).unwrap(); 3];
        let trial = TrialSolution::new(p.linear_part, p.system.y0(), &grid, nets).unwrap();
        for &t in &[0.0, 0.5, 1.0, 2.9] {
            let y = trial.eval_at(t).unwrap().yhat;
            let expect = [0.5 * t.exp(), (-t).exp(), 2.0 * (-t).exp()];
            for k in 0..3 {
                assert!((y[k] - expect[k]).abs() <= 1e-14 * expect[k].max(1.0));
            }
        }
        let y = trial.eval_at(1.0).unwrap().yhat;
        assert!((y[0] - 0.5 * E).abs() < 1e-14);
    }

    #[test]
    fn rossler_grid_with_zero_nets_is_flow_table() {
        let p = builtin(Builtin::Rossler);
        let grid = linspace(0.0, 1.0, 40);
        let nets = vec![ScalarNet::zeros(5).unwrap(); 3];
        let trial = TrialSolution::new(p.linear_part.clone(), p.system.y0(), &grid, nets).unwrap();
        for (i, e) in trial.eval_grid().iter().enumerate() {
            let (y, dy) = linflow::flow(&p.linear_part, p.system.y0(), grid[i]).unwrap();
            for k in 0..3 {
                assert!((e.yhat[k] - y[k]).abs() <= 1e-12);
                assert!((e.yhat_dt[k] - dy[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_point_grid() {
        let p = builtin(Builtin::VanDerPol);
        let trial = TrialSolution::seeded(p.linear_part, p.system.y0(), &[0.0], 3, 1).unwrap();
        let evals = trial.eval_grid();
        assert_eq!(evals.len(), 1);
        assert_eq!(evals[0].yhat, vec![1.0, 2.0]);
    }

    #[test]
    fn grid_matches_pointwise_bit_exactly() {
        let trial = food_chain_trial(3);
        let grid = trial.grid().to_vec();
        // uniform grids propagate the base by repeated stepping, so compare
        // against the same base values
        let p = trial.params();
        let mut scratch = EvalScratch::new(3, 4);
        for (i, e) in trial.eval_grid().iter().enumerate() {
            trial.eval_grid_point(i, &p, &mut scratch);
            assert_eq!(&scratch.out, e);
            assert_eq!(e.t, grid[i]);
        }
    }

    #[test]
    fn construction_errors() {
        let p = builtin(Builtin::FoodChain);
        assert_eq!(
            TrialSolution::new(p.linear_part.clone(), p.system.y0(), &[], vec![]).unwrap_err(),
            TrialError::EmptyGrid
        );
        assert_eq!(
            TrialSolution::new(p.linear_part.clone(), p.system.y0(), &[0.0], vec![ScalarNet::zeros(2).unwrap()])
                .unwrap_err(),
            TrialError::NetCount { expected: 3, got: 1 }
        );
        let mixed = vec![
            ScalarNet::zeros(2).unwrap(),
            ScalarNet::zeros(3).unwrap(),
            ScalarNet::zeros(2).unwrap(),
        ];
        assert_eq!(
            TrialSolution::new(p.linear_part, p.system.y0(), &[0.0], mixed).unwrap_err(),
            TrialError::MixedWidths
        );
        let mut trial = food_chain_trial(0);
        assert!(matches!(trial.set_params(&[1.0]), Err(TrialError::ParamLength { .. })));
    }

    proptest! {
        #[test]
        fn time_derivative_matches_finite_differences(seed in 0u64..1000, t in 0.05f64..3.0) {
            let trial = food_chain_trial(seed);
            let e = trial.eval_at(t).unwrap();
            let h = 1e-6;
            let yp = trial.value_at(t + h).unwrap();
            let ym = trial.value_at(t - h).unwrap();
            for k in 0..3 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                prop_assert!((fd - e.yhat_dt[k]).abs() <= 1e-6 * e.yhat_dt[k].abs().max(1.0));
            }
        }

        #[test]
        fn sensitivities_match_finite_differences(seed in 0u64..1000, t in 0.0f64..3.0) {
            let trial = food_chain_trial(seed);
            let e = trial.eval_at(t).unwrap();
            let base = trial.params();
            let q = trial.net_param_count();
            let h = 1e-6;
            for idx in 0..base.len() {
                let k = idx / q;
                let mut plus = trial.clone();
                let mut minus = trial.clone();
                let mut pp = base.clone();
                pp[idx] += h;
                plus.set_params(&pp).unwrap();
                pp[idx] -= 2.0 * h;
                minus.set_params(&pp).unwrap();
                let ep = plus.eval_at(t).unwrap();
                let em = minus.eval_at(t).unwrap();
                let fd_v = (ep.yhat[k] - em.yhat[k]) / (2.0 * h);
                let fd_d = (ep.yhat_dt[k] - em.yhat_dt[k]) / (2.0 * h);
                let s = &e.sens[k];
                prop_assert!((fd_v - s.value[idx % q]).abs() <= 1e-5 * s.value[idx % q].abs().max(1.0));
                prop_assert!((fd_d - s.deriv[idx % q]).abs() <= 1e-5 * s.deriv[idx % q].abs().max(1.0));
            }
        }

        #[test]
        fn perturbing_one_net_leaves_others(seed in 0u64..1000, which in 0usize..3, t in 0.0f64..3.0) {
            let trial = food_chain_trial(seed);
            let before = trial.eval_at(t).unwrap();
            let mut p = trial.params();
            let q = trial.net_param_count();
            for v in &mut p[which * q..(which + 1) * q] { *v += 0.37; }
            let mut other = trial.clone();
            other.set_params(&p).unwrap();
            let after = other.eval_at(t).unwrap();
            for k in (0..3).filter(|&k| k != which) {
                prop_assert_eq!(before.yhat[k].to_bits(), after.yhat[k].to_bits());
                prop_assert_eq!(before.yhat_dt[k].to_bits(), after.yhat_dt[k].to_bits());
            }
        }
    }
}
