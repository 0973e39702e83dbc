//! Hybrid ODE solver: the exact flow of an affine sub-system plus a trained
//! neural correction, with reference integrators and an experiment pipeline.
//!
//! The trial solution for component `k` is `yhat_k(t) = ybar_k(t) + t N_k(t, p)`
//! where `ybar` is the flow of `y' = A y + c` and `N_k` a one-hidden-layer tanh
//! network. Training minimises the collocation residual with BFGS.

// `!(x < y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod exprlang;
pub mod linflow;
pub mod neuralnet;
pub mod reference;
pub mod systems;
pub mod table;
pub mod training;
pub mod trial;

pub use exprlang::{parse, Expr, ParseError};
pub use linflow::{expm, flow, flow_table, AffineField, FlowError, FlowTable};
pub use neuralnet::{NetError, ScalarNet};
pub use reference::{rk4, rk45, DenseSolution, ReferenceError, Tolerances};
pub use systems::{builtin, Builtin, OdeSystem, SystemError, SystemPreset, VectorField};
pub use training::{
    bfgs_minimize, gd_minimize, loss_and_grad, rmse, Method, OptimizerConfig, ResidualLoss, Status, TrainError,
    TrainReport,
};
pub use trial::{TrialError, TrialSolution};
