//! Single-hidden-layer tanh network `N(t) = sum_j w2_j tanh(w1_j t + b1_j) + b2`
//! with closed-form derivatives in `t` and in the parameters.
//!
//! Parameters are stored flat as `[w1 (m) | b1 (m) | w2 (m) | b2]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("hidden width must be at least 1")]
    ZeroWidth,
    #[error("expected {expected} parameters for width {m}, got {got}")]
    ParamCount { m: usize, expected: usize, got: usize },
}

pub const fn param_count(m: usize) -> usize {
    3 * m + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetJson", try_from = "NetJson")]
pub struct ScalarNet {
    m: usize,
    params: Vec<f64>,
}

/// On-disk layout of a trained network.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetJson {
    m: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl From<ScalarNet> for NetJson {
    fn from(net: ScalarNet) -> Self {
        NetJson {
            m: net.m,
            w1: net.w1().to_vec(),
            b1: net.b1().to_vec(),
            w2: net.w2().to_vec(),
            b2: net.b2(),
        }
    }
}

impl TryFrom<NetJson> for ScalarNet {
    type Error = NetError;

    fn try_from(j: NetJson) -> Result<Self, NetError> {
        if j.w1.len() != j.m || j.b1.len() != j.m || j.w2.len() != j.m {
            return Err(NetError::ParamCount {
                m: j.m,
                expected: param_count(j.m),
                got: j.w1.len() + j.b1.len() + j.w2.len() + 1,
            });
        }
        let mut params = j.w1;
        params.extend(j.b1);
        params.extend(j.w2);
        params.push(j.b2);
        ScalarNet::from_params(j.m, params)
    }
}

/// Value, time derivative, and their parameter gradients at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetEval {
    pub value: f64,
    pub dt: f64,
    pub grad_p: Vec<f64>,
    pub grad_p_dt: Vec<f64>,
}

impl NetEval {
    pub fn zeros(m: usize) -> Self {
        NetEval {
            value: 0.0,
            dt: 0.0,
            grad_p: vec![0.0; param_count(m)],
            grad_p_dt: vec![0.0; param_count(m)],
        }
    }
}

impl ScalarNet {
    /// Seeded initialisation: `w1, b1 ~ U(-1, 1)`, `w2 ~ U(-1, 1) / sqrt(m)`, `b2 = 0`.
    pub fn init(m: usize, seed: u64) -> Result<Self, NetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(m, &mut rng)
    }

    pub fn init_with<R: Rng>(m: usize, rng: &mut R) -> Result<Self, NetError> {
        if m == 0 {
            return Err(NetError::ZeroWidth);
        }
        let scale = 1.0 / (m as f64).sqrt();
        let mut params = Vec::with_capacity(param_count(m));
        params.extend((0..m).map(|_| rng.random_range(-1.0..1.0)));
        params.extend((0..m).map(|_| rng.random_range(-1.0..1.0)));
        params.extend((0..m).map(|_| rng.random_range(-1.0..1.0) * scale));
        params.push(0.0);
        Ok(ScalarNet { m, params })
    }

    pub fn zeros(m: usize) -> Result<Self, NetError> {
        Self::from_params(m, vec![0.0; param_count(m)])
    }

    pub fn from_params(m: usize, params: Vec<f64>) -> Result<Self, NetError> {
        if m == 0 {
            return Err(NetError::ZeroWidth);
        }
        if params.len() != param_count(m) {
            return Err(NetError::ParamCount {
                m,
                expected: param_count(m),
                got: params.len(),
            });
        }
        Ok(ScalarNet { m, params })
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.m]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.m..2 * self.m]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[2 * self.m..3 * self.m]
    }

    pub fn b2(&self) -> f64 {
        self.params[3 * self.m]
    }

    pub fn forward(&self, t: f64) -> f64 {
        forward(self.m, &self.params, t)
    }

    pub fn eval_full(&self, t: f64) -> NetEval {
        let mut out = NetEval::zeros(self.m);
        eval_full_into(self.m, &self.params, t, &mut out);
        out
    }
}

/// Network output for a raw parameter slice of width `m`.
pub fn forward(m: usize, params: &[f64], t: f64) -> f64 {
    let (w1, rest) = params.split_at(m);
    let (b1, rest) = rest.split_at(m);
    let (w2, b2) = rest.split_at(m);
    w1.iter()
        .zip(b1)
        .zip(w2)
        .map(|((w1, b1), w2)| w2 * (w1 * t + b1).tanh())
        .sum::<f64>()
        + b2[0]
}

/// Fills `out` with value, `dN/dt`, `dN/dp` and `d2N/(dt dp)`.
pub fn eval_full_into(m: usize, params: &[f64], t: f64, out: &mut NetEval) {
    debug_assert_eq!(params.len(), param_count(m));
    debug_assert_eq!(out.grad_p.len(), param_count(m));
    let (w1, rest) = params.split_at(m);
    let (b1, rest) = rest.split_at(m);
    let (w2, b2) = rest.split_at(m);
    let (g_w1, rest) = out.grad_p.split_at_mut(m);
    let (g_b1, rest) = rest.split_at_mut(m);
    let (g_w2, g_b2) = rest.split_at_mut(m);
    let (h_w1, rest) = out.grad_p_dt.split_at_mut(m);
    let (h_b1, rest) = rest.split_at_mut(m);
    let (h_w2, h_b2) = rest.split_at_mut(m);

    let mut value = b2[0];
    let mut dt = 0.0;
    for j in 0..m {
        let s = (w1[j] * t + b1[j]).tanh();
        let d = 1.0 - s * s;
        let w2d = w2[j] * d;
        value += w2[j] * s;
        dt += w2d * w1[j];

        g_w1[j] = w2d * t;
        g_b1[j] = w2d;
        g_w2[j] = s;

        let curv = -2.0 * w2d * w1[j] * s;
        h_w1[j] = w2d + curv * t;
        h_b1[j] = curv;
        h_w2[j] = w1[j] * d;
    }
    g_b2[0] = 1.0;
    h_b2[0] = 0.0;
    out.value = value;
    out.dt = dt;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dt_of(m: usize, p: &[f64], t: f64) -> f64 {
        let mut e = NetEval::zeros(m);
        eval_full_into(m, p, t, &mut e);
        e.dt
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let a = ScalarNet::init(50, 7).unwrap();
        let b = ScalarNet::init(50, 7).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.param_count(), 151);
        let c = ScalarNet::init(50, 8).unwrap();
        assert_ne!(a.params(), c.params());
        assert_eq!(a.b2(), 0.0);
        let bound = 1.0 / 50f64.sqrt();
        assert!(a.w2().iter().all(|w| w.abs() <= bound));
        assert!(a.w1().iter().chain(a.b1()).all(|w| w.abs() <= 1.0));
        assert_eq!(ScalarNet::init(0, 1), Err(NetError::ZeroWidth));
    }

    #[test]
    fn forward_values() {
        let zero = ScalarNet::zeros(4).unwrap();
        assert_eq!(zero.forward(0.0), 0.0);
        assert_eq!(zero.forward(12.5), 0.0);

        let one = ScalarNet::from_params(1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(one.forward(0.0), 0.0);
        assert!((one.forward(40.0) - 1.0).abs() < 1e-15);

        let sym = ScalarNet::from_params(2, vec![1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.5]).unwrap();
        assert_eq!(sym.forward(0.3), 0.5);
    }

    #[test]
    fn eval_full_at_zero_params() {
        let e = ScalarNet::zeros(3).unwrap().eval_full(0.7);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.dt, 0.0);
        let mut expect = vec![0.0; 10];
        expect[9] = 1.0;
        assert_eq!(e.grad_p, expect);
        assert!(e.grad_p_dt.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_full_hand_value() {
        let net = ScalarNet::from_params(1, vec![2.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(net.eval_full(0.0).dt, 6.0);
    }

    #[test]
    fn param_count_errors() {
        assert_eq!(
            ScalarNet::from_params(2, vec![0.0; 6]),
            Err(NetError::ParamCount { m: 2, expected: 7, got: 6 })
        );
    }

    #[test]
    fn json_layout() {
        let net = ScalarNet::from_params(2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        assert_eq!(s, r#"{"m":2,"w1":[0.1,0.2],"b1":[0.3,0.4],"w2":[0.5,0.6],"b2":0.7}"#);
        let back: ScalarNet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
        assert!(serde_json::from_str::<ScalarNet>(r#"{"m":2,"w1":[0.1],"b1":[0.3,0.4],"w2":[0.5,0.6],"b2":0.7}"#).is_err());
    }

    fn arb_net() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (1usize..6).prop_flat_map(|m| (Just(m), proptest::collection::vec(-1.5f64..1.5, param_count(m))))
    }

    proptest! {
        #[test]
        fn dt_matches_finite_differences((m, p) in arb_net(), t in -2.0f64..3.0) {
            let h = 1e-6;
            let fd = (forward(m, &p, t + h) - forward(m, &p, t - h)) / (2.0 * h);
            let dt = dt_of(m, &p, t);
            prop_assert!((fd - dt).abs() <= 1e-6 * dt.abs().max(1.0));
        }

        #[test]
        fn parameter_gradients_match_finite_differences((m, p) in arb_net(), t in -2.0f64..3.0) {
            let mut e = NetEval::zeros(m);
            eval_full_into(m, &p, t, &mut e);
            let h = 1e-6;
            for q in 0..p.len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[q] += h;
                pm[q] -= h;
                let fd = (forward(m, &pp, t) - forward(m, &pm, t)) / (2.0 * h);
                prop_assert!((fd - e.grad_p[q]).abs() <= 1e-6 * e.grad_p[q].abs().max(1.0));
                let fd_dt = (dt_of(m, &pp, t) - dt_of(m, &pm, t)) / (2.0 * h);
                prop_assert!((fd_dt - e.grad_p_dt[q]).abs() <= 1e-5 * e.grad_p_dt[q].abs().max(1.0));
            }
        }

        #[test]
        fn odd_without_biases((m, mut p) in arb_net(), t in -3.0f64..3.0) {
            for v in &mut p[m..2 * m] { *v = 0.0; }
            p[3 * m] = 0.0;
            prop_assert_eq!(forward(m, &p, -t), -forward(m, &p, t));
        }

        #[test]
        fn output_bounded((m, p) in arb_net(), t in -50.0f64..50.0) {
            let bound: f64 = p[2 * m..3 * m].iter().map(|w| w.abs()).sum::<f64>() + p[3 * m].abs();
            prop_assert!(forward(m, &p, t).abs() <= bound + 1e-12);
        }

        #[test]
        fn flatten_round_trip((m, p) in arb_net()) {
            let net = ScalarNet::from_params(m, p.clone()).unwrap();
            let back = ScalarNet::from_params(m, net.clone().into_params()).unwrap();
            prop_assert_eq!(back.params(), &p[..]);
            let json: ScalarNet = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
            prop_assert_eq!(json, net);
        }
    }
}
