//! Analytic elimination of trajectory boundary conditions.
//!
//! Endpoint values and slopes are linear in the Fourier coefficients, so a
//! handful of coefficients can be solved for exactly and expressed as an
//! affine function of the rest: `full = gain · free + offset`. The optimizer
//! then works on the free coefficients alone and every candidate it produces
//! satisfies the boundary conditions identically.
//!
//! The eliminated coefficients are the lowest harmonics: indices {1, 2, 3, 4}
//! (a1, b1, a2, b2) when both endpoint values and both slopes are pinned, and
//! {1, 2, 4} when the end value is unconstrained. The latter skips index 3
//! because the slope rows only touch sine coefficients; using both first- and
//! second-harmonic sines keeps the eliminated block nonsingular.

use crate::fourier::{CoefficientVector, FourierBasis};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error)]
pub enum BoundaryError {
    #[error("basis order {order} cannot absorb {n_bc} boundary conditions; order 2 is the minimum")]
    InsufficientOrder { order: usize, n_bc: usize },
    #[error("eliminated coefficient block is singular")]
    SingularBlock,
    #[error("boundary condition values must be finite")]
    NonFinite,
}

/// Endpoint constraints on one Fourier-series state component.
///
/// `value_end = None` leaves the final value free (used for the polar angle
/// when the final phase is unconstrained).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEndpoints {
    pub value_start: f64,
    pub slope_start: f64,
    pub value_end: Option<f64>,
    pub slope_end: f64,
}

/// Affine map from free coefficients to the full coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMap {
    gain: DMatrix<f64>,
    offset: DVector<f64>,
    free: Vec<usize>,
    eliminated: Vec<usize>,
}

impl CoefficientMap {
    /// Full coefficient vector for a given free vector.
    pub fn full(&self, free: &DVector<f64>) -> CoefficientVector {
        assert_eq!(free.len(), self.n_free(), "free vector length mismatch");
        &self.gain * free + &self.offset
    }

    /// Pull the free entries out of a full coefficient vector.
    pub fn extract_free(&self, full: &CoefficientVector) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_full(&self) -> usize {
        self.offset.len()
    }

    /// Indices of the free coefficients in the full layout, ascending.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    /// Indices of the eliminated coefficients in the full layout.
    pub fn eliminated_indices(&self) -> &[usize] {
        &self.eliminated
    }

    /// The linear part of the map.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

/// Build the elimination map for one series under the given endpoints.
pub fn constrained_map(
    basis: &FourierBasis,
    endpoints: &SeriesEndpoints,
) -> Result<CoefficientMap, BoundaryError> {
    let finite = endpoints.value_start.is_finite()
        && endpoints.slope_start.is_finite()
        && endpoints.slope_end.is_finite()
        && endpoints.value_end.map_or(true, f64::is_finite);
    if !finite {
        return Err(BoundaryError::NonFinite);
    }

    let t_end = basis.period();
    let mut rows: Vec<(DVector<f64>, f64)> = vec![
        (basis.value_row(0.0), endpoints.value_start),
        (basis.d1_row(0.0), endpoints.slope_start),
        (basis.d1_row(t_end), endpoints.slope_end),
    ];
    if let Some(value_end) = endpoints.value_end {
        rows.push((basis.value_row(t_end), value_end));
    }
    let n_bc = rows.len();
    let eliminated: Vec<usize> = if n_bc == 4 {
        vec![1, 2, 3, 4]
    } else {
        vec![1, 2, 4]
    };
    let n_full = basis.n_coeffs();
    if basis.order() < 2 {
        return Err(BoundaryError::InsufficientOrder {
            order: basis.order(),
            n_bc,
        });
    }
    let free: Vec<usize> = (0..n_full).filter(|i| !eliminated.contains(i)).collect();

    // Solve M_E x_E = rhs − M_F x_F for the eliminated block.
    let mut m_elim = DMatrix::zeros(n_bc, n_bc);
    let mut m_free = DMatrix::zeros(n_bc, free.len());
    let mut rhs = DVector::zeros(n_bc);
    for (r, (row, b)) in rows.iter().enumerate() {
        for (c, &i) in eliminated.iter().enumerate() {
            m_elim[(r, c)] = row[i];
        }
        for (c, &i) in free.iter().enumerate() {
            m_free[(r, c)] = row[i];
        }
        rhs[r] = *b;
    }
    let lu = m_elim.lu();
    let offset_elim = lu.solve(&rhs).ok_or(BoundaryError::SingularBlock)?;
    let gain_elim = lu.solve(&m_free).ok_or(BoundaryError::SingularBlock)?;

    let mut gain = DMatrix::zeros(n_full, free.len());
    let mut offset = DVector::zeros(n_full);
    for (c, &i) in free.iter().enumerate() {
        gain[(i, c)] = 1.0;
    }
    for (r, &i) in eliminated.iter().enumerate() {
        offset[i] = offset_elim[r];
        for c in 0..free.len() {
            gain[(i, c)] = -gain_elim[(r, c)];
        }
    }

    Ok(CoefficientMap {
        gain,
        offset,
        free,
        eliminated,
    })
}
