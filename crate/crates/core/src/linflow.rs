//! Exact flow of an affine vector field `y' = A y + c`.
//!
//! The flow is the top block of `exp(t * [[A, c], [0, 0]]) * (y0, 1)`, so a
//! singular `A` (secular terms) needs no special handling.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("matrix exponential overflowed the floating-point range")]
    Overflow,
    #[error("non-finite entry in matrix or time")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("flow times must be sorted ascending")]
    UnsortedTimes,
}

/// Scaled series is truncated once a term falls below this fraction of the sum.
const SERIES_REL_TOL: f64 = 1e-17;
/// Scaling target for the one-norm before the series is summed.
const SCALED_NORM: f64 = 0.5;
const MAX_SERIES_TERMS: usize = 60;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring around a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FlowError> {
    if !m.is_square() {
        return Err(FlowError::Dimension(format!(
            "expm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite);
    }
    let n = m.nrows();
    let norm = norm1(m);
    let mut squarings = 0i32;
    if norm > SCALED_NORM {
        squarings = (norm / SCALED_NORM).log2().ceil() as i32;
        // guard against log2 rounding just below the target
        while norm / 2f64.powi(squarings) > SCALED_NORM {
            squarings += 1;
        }
    }
    let scaled = m / 2f64.powi(squarings);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=MAX_SERIES_TERMS {
        term = &term * &scaled / k as f64;
        sum += &term;
        if norm1(&term) < SERIES_REL_TOL * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
        if sum.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Overflow);
        }
    }
    if sum.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::Overflow);
    }
    Ok(sum)
}

/// The affine operator `y' = A y + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    a: DMatrix<f64>,
    c: DVector<f64>,
}

impl AffineField {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Result<Self, FlowError> {
        if !a.is_square() || a.nrows() != c.len() {
            return Err(FlowError::Dimension(format!(
                "A is {}x{} but c has length {}",
                a.nrows(),
                a.ncols(),
                c.len()
            )));
        }
        Ok(AffineField { a, c })
    }

    pub fn linear(a: DMatrix<f64>) -> Result<Self, FlowError> {
        let n = a.nrows();
        Self::new(a, DVector::zeros(n))
    }

    /// Builds a field from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>], c: &[f64]) -> Result<Self, FlowError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(FlowError::Dimension("A must be square".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(c))
    }

    pub fn zero(n: usize) -> Self {
        AffineField {
            a: DMatrix::zeros(n, n),
            c: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect()
    }

    /// `A y + c`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        (&self.a * y + &self.c).as_slice().to_vec()
    }

    fn augmented(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * t));
        aug.view_mut((0, n), (n, 1)).copy_from(&(&self.c * t));
        aug
    }

    fn check_state(&self, y0: &[f64]) -> Result<(), FlowError> {
        if y0.len() != self.dim() {
            return Err(FlowError::Dimension(format!(
                "state has length {} but field has dimension {}",
                y0.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Returns `(y(t), y'(t))` for the flow started at `y0`.
pub fn flow(field: &AffineField, y0: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
    field.check_state(y0)?;
    if !t.is_finite() {
        return Err(FlowError::NonFinite);
    }
    if t == 0.0 {
        return Ok((y0.to_vec(), field.apply(y0)));
    }
    let e = expm(&field.augmented(t))?;
    let y = propagate(&e, y0);
    let dy = field.apply(&y);
    Ok((y, dy))
}

fn propagate(e: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut v = DVector::from_element(n + 1, 1.0);
    v.rows_mut(0, n).copy_from_slice(y);
    let out = e * v;
    out.rows(0, n).iter().copied().collect()
}

/// Base-flow values and derivatives on a fixed time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl FlowTable {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i]
    }
}

fn is_uniform(times: &[f64]) -> Option<f64> {
    if times.len() < 3 {
        return None;
    }
    let t0 = times[0];
    let h = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    if h <= 0.0 {
        return None;
    }
    let uniform = times
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (t0 + i as f64 * h)).abs() <= 1e-12 * t.abs().max(1.0));
    uniform.then_some(h)
}

/// Evaluates the flow on `times`. Uniform grids reuse one step propagator.
pub fn flow_table(field: &AffineField, y0: &[f64], times: &[f64]) -> Result<FlowTable, FlowError> {
    field.check_state(y0)?;
    if times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(FlowError::UnsortedTimes);
    }
    let mut values = Vec::with_capacity(times.len());
    if let Some(h) = is_uniform(times) {
        let step = expm(&field.augmented(h))?;
        let (mut y, _) = flow(field, y0, times[0])?;
        values.push(y.clone());
        for _ in 1..times.len() {
            y = propagate(&step, &y);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(FlowError::Overflow);
            }
            values.push(y.clone());
        }
    } else {
        for &t in times {
            values.push(flow(field, y0, t)?.0);
        }
    }
    let derivs = values.iter().map(|y| field.apply(y)).collect();
    Ok(FlowTable {
        times: times.to_vec(),
        values,
        derivs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max() / b.abs().max()
    }

    /// Independent oracle: fixed 30-term Taylor sum on M / 2^10, squared back.
    fn taylor_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let scaled = m / 1024.0;
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..=30 {
            term = term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..10 {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn expm_diagonal() {
        let e = expm(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).unwrap();
        assert!((e[(0, 0)] - E).abs() / E <= 1e-14);
        assert!((e[(1, 1)] - 1.0 / E).abs() * E <= 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
        assert_eq!(e[(1, 0)], 0.0);
    }

    #[test]
    fn expm_nilpotent() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(expm(&m).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
    }

    #[test]
    fn expm_errors() {
        assert!(matches!(expm(&DMatrix::zeros(2, 3)), Err(FlowError::Dimension(_))));
        let big = DMatrix::from_diagonal(&DVector::from_vec(vec![1000.0]));
        assert_eq!(expm(&big), Err(FlowError::Overflow));
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert_eq!(expm(&nan), Err(FlowError::NonFinite));
    }

    #[test]
    fn food_chain_base_flow() {
        let field = AffineField::linear(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0]))).unwrap();
        let (y, dy) = flow(&field, &[0.5, 1.0, 2.0], 1.0).unwrap();
        let expect = [0.5 * E, 1.0 / E, 2.0 / E];
        for k in 0..3 {
            assert!((y[k] - expect[k]).abs() <= 1e-14 * expect[k].abs());
        }
        assert!((dy[0] - 0.5 * E).abs() < 1e-14);
    }

    #[test]
    fn rotation_flow() {
        let field = AffineField::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]], &[0.0, 0.0]).unwrap();
        for &t in &[0.3, 1.7, 6.0, 10.0] {
            let (y, dy) = flow(&field, &[1.0, 2.0], t).unwrap();
            let (s, c) = f64::sin_cos(t);
            assert!((y[0] - (c - 2.0 * s)).abs() < 1e-13);
            assert!((y[1] - (2.0 * c + s)).abs() < 1e-13);
            assert!((dy[0] + y[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn rossler_flow_has_secular_term() {
        let field = AffineField::from_rows(
            &[vec![0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -5.7]],
            &[0.0, 0.0, 0.0],
        )
        .unwrap();
        let y0 = [1.0, 5.0, 10.0];
        assert_eq!(flow(&field, &y0, 0.0).unwrap().0, y0.to_vec());
        let k = 10.0 / 5.7;
        for &t in &[0.1, 0.5, 1.0, 1.4] {
            let (y, _) = flow(&field, &y0, t).unwrap();
            let e = (-5.7 * t).exp();
            let x = (1.0 - k) + k * e;
            let yy = 5.0 + k / 5.7 + (1.0 - k) * t - (k / 5.7) * e;
            assert!((y[0] - x).abs() < 1e-12);
            assert!((y[1] - yy).abs() < 1e-12);
            assert!((y[2] - 10.0 * e).abs() < 1e-12);
            // printed constants, six digits
            assert!((y[0] - (-0.754386 + 1.75439 * e)).abs() < 1e-5);
            assert!((y[1] - (5.307787 - 0.754386 * t - 0.307787 * e)).abs() < 1e-5);
        }
    }

    #[test]
    fn flow_table_single_time() {
        let field = AffineField::from_rows(&[vec![0.0, 1.0], vec![-2.0, 0.5]], &[1.0, -1.0]).unwrap();
        let table = flow_table(&field, &[0.3, 0.4], &[0.0]).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.value(0), &[0.3, 0.4]);
        assert_eq!(table.deriv(0), field.apply(&[0.3, 0.4]).as_slice());
    }

    #[test]
    fn flow_table_uniform_matches_pointwise() {
        let field = AffineField::from_rows(
            &[vec![-0.5, 2.0, 0.0], vec![-2.0, -0.1, 0.3], vec![0.0, 0.4, -1.0]],
            &[0.2, 0.0, -0.7],
        )
        .unwrap();
        let y0 = [1.0, -1.0, 0.5];
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 2.0 / 49.0).collect();
        let table = flow_table(&field, &y0, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let (y, dy) = flow(&field, &y0, t).unwrap();
            for k in 0..3 {
                assert!((table.value(i)[k] - y[k]).abs() <= 1e-12);
                assert!((table.deriv(i)[k] - dy[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn flow_table_food_chain_grid() {
        let field = AffineField::linear(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0]))).unwrap();
        let times: Vec<f64> = (0..100).map(|i| 3.0 * i as f64 / 99.0).collect();
        let table = flow_table(&field, &[0.5, 1.0, 2.0], &times).unwrap();
        assert_eq!(table.value(0), &[0.5, 1.0, 2.0]);
        for (i, &t) in times.iter().enumerate() {
            let row = table.value(i);
            assert!((row[0] - 0.5 * t.exp()).abs() <= 1e-12);
            assert!((row[1] - (-t).exp()).abs() <= 1e-12);
            assert!((row[2] - 2.0 * (-t).exp()).abs() <= 1e-12);
            let d = table.deriv(i);
            let ad = field.apply(row);
            for k in 0..3 {
                assert!((d[k] - ad[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn flow_table_rejects_unsorted() {
        let field = AffineField::zero(1);
        assert_eq!(flow_table(&field, &[1.0], &[0.0, 1.0, 0.5]), Err(FlowError::UnsortedTimes));
    }

    #[test]
    fn derivative_is_second_order_consistent() {
        let field = AffineField::from_rows(&[vec![0.3, -1.2], vec![0.8, -0.4]], &[0.5, 0.1]).unwrap();
        let y0 = [0.7, -0.2];
        let t = 0.9;
        let (_, dy) = flow(&field, &y0, t).unwrap();
        let err = |h: f64| {
            let (p, _) = flow(&field, &y0, t + h).unwrap();
            let (m, _) = flow(&field, &y0, t - h).unwrap();
            (0..2).map(|k| ((p[k] - m[k]) / (2.0 * h) - dy[k]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    fn arb_matrix(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let m = DMatrix::from_vec(n, n, v);
            let norm = norm1(&m);
            if norm > 0.0 { m * (scale / norm) } else { m }
        })
    }

    proptest! {
        #[test]
        fn expm_matches_taylor_oracle(m in arb_matrix(4, 1.0), shrink in 0.05f64..1.0) {
            let m = m * shrink;
            let e = expm(&m).unwrap();
            let o = taylor_oracle(&m);
            prop_assert!(max_rel(&e, &o) <= 1e-12);
        }

        #[test]
        fn semigroup(m in arb_matrix(3, 4.0), c in proptest::collection::vec(-1.0f64..1.0, 3),
                     y0 in proptest::collection::vec(-2.0f64..2.0, 3), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            // one-norm 4 bounds the spectral radius below 5
            let field = AffineField::new(m, DVector::from_vec(c)).unwrap();
            let (direct, _) = flow(&field, &y0, s + t).unwrap();
            let (mid, _) = flow(&field, &y0, s).unwrap();
            let (composed, _) = flow(&field, &mid, t).unwrap();
            let scale = direct.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for k in 0..3 {
                prop_assert!((direct[k] - composed[k]).abs() <= 1e-10 * scale);
            }
        }
    }
}
