//! Finite Fourier series over a half-period trigonometric basis.
//!
//! A shape of order n on [0, T] is
//!
//! ```text
//! f(t) = a0/2 + Σ_{k=1..n} [ a_k cos(kπt/T) + b_k sin(kπt/T) ]
//! ```
//!
//! with the coefficient vector laid out as (a0, a1, b1, a2, b2, …), so a_k
//! sits at index 2k−1 and b_k at index 2k. The argument kπt/T (not 2kπt/T)
//! means the series is not T-periodic; endpoint values and slopes are
//! independent, which is what lets boundary conditions pin them.

use nalgebra::{DMatrix, DVector};

/// Fourier coefficients in the (a0, a1, b1, a2, b2, …) layout.
pub type CoefficientVector = DVector<f64>;

#[derive(Debug, thiserror::Error)]
pub enum FourierError {
    #[error("Fourier order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("coefficient vector has length {got}, basis of order {order} needs {expected}")]
    LengthMismatch {
        order: usize,
        expected: usize,
        got: usize,
    },
}

/// Trigonometric basis of a fixed order and interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    order: usize,
    period: f64,
}

impl FourierBasis {
    pub fn new(order: usize, period: f64) -> Result<Self, FourierError> {
        if order < 1 {
            return Err(FourierError::InvalidOrder(order));
        }
        if period <= 0.0 || !period.is_finite() {
            return Err(FourierError::InvalidPeriod(period));
        }
        Ok(Self { order, period })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of coefficients, 2·order + 1.
    pub fn n_coeffs(&self) -> usize {
        2 * self.order + 1
    }

    fn check_len(&self, coeffs: &CoefficientVector) -> Result<(), FourierError> {
        if coeffs.len() != self.n_coeffs() {
            return Err(FourierError::LengthMismatch {
                order: self.order,
                expected: self.n_coeffs(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Basis-function values at `t`, one entry per coefficient.
    pub fn value_row(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.n_coeffs());
        self.fill_rows(t, Some(row.as_mut_slice()), None, None);
        row
    }

    /// First time derivatives of the basis functions at `t`.
    pub fn d1_row(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.n_coeffs());
        self.fill_rows(t, None, Some(row.as_mut_slice()), None);
        row
    }

    /// Second time derivatives of the basis functions at `t`.
    pub fn d2_row(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.n_coeffs());
        self.fill_rows(t, None, None, Some(row.as_mut_slice()));
        row
    }

    fn fill_rows(
        &self,
        t: f64,
        mut value: Option<&mut [f64]>,
        mut d1: Option<&mut [f64]>,
        mut d2: Option<&mut [f64]>,
    ) {
        if let Some(v) = value.as_deref_mut() {
            v[0] = 0.5;
        }
        if let Some(v) = d1.as_deref_mut() {
            v[0] = 0.0;
        }
        if let Some(v) = d2.as_deref_mut() {
            v[0] = 0.0;
        }
        for k in 1..=self.order {
            let w = k as f64 * std::f64::consts::PI / self.period;
            let (s, c) = (w * t).sin_cos();
            let (ia, ib) = (2 * k - 1, 2 * k);
            if let Some(v) = value.as_deref_mut() {
                v[ia] = c;
                v[ib] = s;
            }
            if let Some(v) = d1.as_deref_mut() {
                v[ia] = -w * s;
                v[ib] = w * c;
            }
            if let Some(v) = d2.as_deref_mut() {
                v[ia] = -w * w * c;
                v[ib] = -w * w * s;
            }
        }
    }

    /// Series value and its first two time derivatives at `t`.
    pub fn evaluate(
        &self,
        coeffs: &CoefficientVector,
        t: f64,
    ) -> Result<(f64, f64, f64), FourierError> {
        self.check_len(coeffs)?;
        let mut value = 0.5 * coeffs[0];
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for k in 1..=self.order {
            let w = k as f64 * std::f64::consts::PI / self.period;
            let (s, c) = (w * t).sin_cos();
            let (a, b) = (coeffs[2 * k - 1], coeffs[2 * k]);
            value += a * c + b * s;
            d1 += w * (b * c - a * s);
            d2 -= w * w * (a * c + b * s);
        }
        Ok((value, d1, d2))
    }

    /// Dense basis tables over a time grid, one row per sample.
    pub fn tables(&self, times: &[f64]) -> BasisTables {
        let (rows, cols) = (times.len(), self.n_coeffs());
        let mut value = DMatrix::zeros(rows, cols);
        let mut d1 = DMatrix::zeros(rows, cols);
        let mut d2 = DMatrix::zeros(rows, cols);
        let mut vr = vec![0.0; cols];
        let mut d1r = vec![0.0; cols];
        let mut d2r = vec![0.0; cols];
        for (i, &t) in times.iter().enumerate() {
            self.fill_rows(t, Some(&mut vr), Some(&mut d1r), Some(&mut d2r));
            for j in 0..cols {
                value[(i, j)] = vr[j];
                d1[(i, j)] = d1r[j];
                d2[(i, j)] = d2r[j];
            }
        }
        BasisTables { value, d1, d2 }
    }
}

/// Pre-evaluated basis rows over a grid; `value · X` gives the series values.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTables {
    pub value: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

/// `dp` evenly spaced samples covering [0, t_end], endpoints included.
pub fn uniform_grid(dp: usize, t_end: f64) -> Vec<f64> {
    assert!(dp >= 2, "a grid needs at least both endpoints");
    let h = t_end / (dp - 1) as f64;
    (0..dp)
        .map(|i| if i == dp - 1 { t_end } else { i as f64 * h })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Naive term-by-term reference summation, kept independent of the
    /// production loop on purpose.
    fn naive_eval(coeffs: &[f64], order: usize, period: f64, t: f64) -> (f64, f64, f64) {
        let mut v = coeffs[0] / 2.0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for k in 1..=order {
            let w = k as f64 * PI / period;
            let a = coeffs[2 * k - 1];
            let b = coeffs[2 * k];
            v += a * (w * t).cos() + b * (w * t).sin();
            d1 += -a * w * (w * t).sin() + b * w * (w * t).cos();
            d2 += -a * w * w * (w * t).cos() - b * w * w * (w * t).sin();
        }
        (v, d1, d2)
    }

    #[test]
    fn coefficient_count() {
        let basis = FourierBasis::new(3, 2.0).unwrap();
        assert_eq!(basis.n_coeffs(), 7);
    }

    #[test]
    fn rejects_degenerate_construction() {
        assert!(FourierBasis::new(0, 1.0).is_err());
        assert!(FourierBasis::new(2, 0.0).is_err());
        assert!(FourierBasis::new(2, -1.0).is_err());
        assert!(FourierBasis::new(2, f64::NAN).is_err());
    }

    #[test]
    fn constant_series() {
        let basis = FourierBasis::new(2, 3.0).unwrap();
        let coeffs = CoefficientVector::from_vec(vec![2.0, 0.0, 0.0, 0.0, 0.0]);
        for t in [0.0, 0.7, 1.5, 3.0] {
            let (v, d1, d2) = basis.evaluate(&coeffs, t).unwrap();
            assert_relative_eq!(v, 1.0, max_relative = 1e-15);
            assert_eq!(d1, 0.0);
            assert_eq!(d2, 0.0);
        }
    }

    #[test]
    fn single_cosine_harmonic() {
        // f(t) = cos(πt/2) on T = 2
        let basis = FourierBasis::new(1, 2.0).unwrap();
        let coeffs = CoefficientVector::from_vec(vec![0.0, 1.0, 0.0]);
        let (v, d1, d2) = basis.evaluate(&coeffs, 1.0).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d1, -PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d2, 0.0, epsilon = 1e-15);
        let (v0, d10, d20) = basis.evaluate(&coeffs, 0.0).unwrap();
        assert_eq!(v0, 1.0);
        assert_eq!(d10, 0.0);
        assert_relative_eq!(d20, -(PI / 2.0).powi(2), max_relative = 1e-15);
    }

    #[test]
    fn endpoint_rows_are_analytic() {
        let t_end = 1.7;
        let basis = FourierBasis::new(2, t_end).unwrap();
        let v0 = basis.value_row(0.0);
        assert_eq!(v0.as_slice(), &[0.5, 1.0, 0.0, 1.0, 0.0]);
        let vt = basis.value_row(t_end);
        // cos(kπ) alternates sign, sin(kπ) vanishes
        assert_relative_eq!(vt[0], 0.5);
        assert_relative_eq!(vt[1], -1.0, max_relative = 1e-14);
        assert!(vt[2].abs() < 1e-14);
        assert_relative_eq!(vt[3], 1.0, max_relative = 1e-14);
        assert!(vt[4].abs() < 1e-14);
        let d0 = basis.d1_row(0.0);
        assert_eq!(d0[0], 0.0);
        assert_eq!(d0[1], 0.0);
        assert_relative_eq!(d0[2], PI / t_end, max_relative = 1e-15);
        assert_eq!(d0[3], 0.0);
        assert_relative_eq!(d0[4], 2.0 * PI / t_end, max_relative = 1e-15);
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let order = rng.gen_range(1..=7usize);
            let period = rng.gen_range(0.5..200.0);
            let basis = FourierBasis::new(order, period).unwrap();
            let coeffs = CoefficientVector::from_fn(basis.n_coeffs(), |_, _| {
                rng.gen_range(-2.0..2.0)
            });
            let t = rng.gen_range(0.0..period);
            let (v, d1, d2) = basis.evaluate(&coeffs, t).unwrap();
            let (vn, d1n, d2n) = naive_eval(coeffs.as_slice(), order, period, t);
            assert_relative_eq!(v, vn, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(d1, d1n, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(d2, d2n, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = FourierBasis::new(4, 5.0).unwrap();
        for _ in 0..20 {
            let coeffs = CoefficientVector::from_fn(basis.n_coeffs(), |_, _| {
                rng.gen_range(-1.0..1.0)
            });
            let t = rng.gen_range(0.1..4.9);
            let h = 1e-5;
            let (_, d1, d2) = basis.evaluate(&coeffs, t).unwrap();
            let (vp, d1p, _) = basis.evaluate(&coeffs, t + h).unwrap();
            let (vm, d1m, _) = basis.evaluate(&coeffs, t - h).unwrap();
            assert_relative_eq!(d1, (vp - vm) / (2.0 * h), max_relative = 1e-6, epsilon = 1e-6);
            assert_relative_eq!(d2, (d1p - d1m) / (2.0 * h), max_relative = 1e-6, epsilon = 1e-6);
        }
    }

    #[test]
    fn tables_agree_with_rows() {
        let basis = FourierBasis::new(3, 11.0).unwrap();
        let grid = uniform_grid(17, 11.0);
        let tables = basis.tables(&grid);
        for (i, &t) in grid.iter().enumerate() {
            let v = basis.value_row(t);
            let d1 = basis.d1_row(t);
            let d2 = basis.d2_row(t);
            for j in 0..basis.n_coeffs() {
                assert_eq!(tables.value[(i, j)], v[j]);
                assert_eq!(tables.d1[(i, j)], d1[j]);
                assert_eq!(tables.d2[(i, j)], d2[j]);
            }
        }
    }

    #[test]
    fn tables_times_coefficients_is_series() {
        let basis = FourierBasis::new(2, 4.0).unwrap();
        let grid = uniform_grid(9, 4.0);
        let tables = basis.tables(&grid);
        let coeffs = CoefficientVector::from_vec(vec![1.0, -0.5, 0.25, 0.125, -0.0625]);
        let values = &tables.value * &coeffs;
        for (i, &t) in grid.iter().enumerate() {
            let (v, _, _) = basis.evaluate(&coeffs, t).unwrap();
            assert_relative_eq!(values[i], v, max_relative = 1e-14, epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_grid_covers_interval() {
        let grid = uniform_grid(160, 148.7337319994045);
        assert_eq!(grid.len(), 160);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[159], 148.7337319994045);
        let h = grid[1] - grid[0];
        for w in grid.windows(2) {
            assert_relative_eq!(w[1] - w[0], h, max_relative = 1e-10);
        }
    }

    #[test]
    fn evaluate_rejects_wrong_length() {
        let basis = FourierBasis::new(2, 1.0).unwrap();
        let coeffs = CoefficientVector::zeros(3);
        assert!(matches!(
            basis.evaluate(&coeffs, 0.5),
            Err(FourierError::LengthMismatch { expected: 5, got: 3, .. })
        ));
    }
}
