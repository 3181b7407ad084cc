//! Spectral traces on the right-hand side of the collocated flows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::regulator::Regulator;

/// Indices of modes with `∂_κ r ≠ 0`.
pub fn active_set(reg: &Regulator, eigenvalues: &[f64], kappa: f64) -> Vec<usize> {
    (0..eigenvalues.len())
        .filter(|&a| reg.dr_unchecked(eigenvalues[a], kappa) != 0.0)
        .collect()
}

/// Active set on the open interval `(lo, hi)` between two consecutive
/// breakpoints. Litim activity is constant there, so evaluating at the
/// midpoint gives the one-sided limit at both ends.
pub fn piece_active_set(reg: &Regulator, eigenvalues: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    active_set(reg, eigenvalues, 0.5 * (lo + hi))
}

/// `∂_κ r` of a mode known to be active (the Litim value holds up to the kink).
pub fn dr_active(reg: &Regulator, lambda: f64, kappa: f64) -> f64 {
    match reg {
        Regulator::Litim => 2.0 * kappa,
        Regulator::Exponential { .. } => reg.dr_unchecked(lambda, kappa),
    }
}

/// `½ Σ_α ∂_κ r(λ_α) [(H + diag r)⁻¹]_αα` for a Hessian in the eigenbasis,
/// summed over the given active modes. `index` only labels the error.
pub fn wetterich_trace(
    reg: &Regulator,
    eigenvalues: &[f64],
    kappa: f64,
    mut hess: DMatrix<f64>,
    active: &[usize],
    index: usize,
) -> Result<f64> {
    if active.is_empty() {
        return Ok(0.0);
    }
    for (a, l) in eigenvalues.iter().enumerate() {
        hess[(a, a)] += reg.r_unchecked(*l, kappa);
    }
    let chol = Cholesky::new(hess).map_err(|_| Error::SingularFlowMatrix { index, kappa })?;
    let inv = chol.inverse_diagonal(active);
    Ok(0.5
        * active
            .iter()
            .zip(inv)
            .map(|(&a, g)| dr_active(reg, eigenvalues[a], kappa) * g)
            .sum::<f64>())
}

/// `½ Σ_α ∂_κ r(λ_α) (H_αα + D_α²)` over the active modes.
pub fn wp_trace(
    reg: &Regulator,
    eigenvalues: &[f64],
    kappa: f64,
    hess_diag: &DVector<f64>,
    grad: &DVector<f64>,
    active: &[usize],
) -> f64 {
    0.5 * active
        .iter()
        .map(|&a| dr_active(reg, eigenvalues[a], kappa) * (hess_diag[a] + grad[a] * grad[a]))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn litim_below_first_threshold_keeps_zero_mode() {
        let eig = [0.0, 4.0, 4.0];
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 1.0, 2.0]));
        let k = 1.5;
        let act = active_set(&Regulator::Litim, &eig, k);
        let t = wetterich_trace(&Regulator::Litim, &eig, k, h, &act, 0).unwrap();
        assert_relative_eq!(t, k / (0.7 + k * k), max_relative = 1e-14);
    }

    #[test]
    fn no_active_modes_give_zero() {
        let eig = [4.0, 4.0];
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-10.0, 1.0]));
        let act = active_set(&Regulator::Litim, &eig, 1.0);
        assert_eq!(wetterich_trace(&Regulator::Litim, &eig, 1.0, h, &act, 0).unwrap(), 0.0);
    }

    #[test]
    fn piece_set_is_one_sided_at_kinks() {
        let eig = [0.0, 4.0];
        // On (1, 2) only the zero mode is active even when evaluated at κ = 2.
        assert_eq!(piece_active_set(&Regulator::Litim, &eig, 1.0, 2.0), vec![0]);
        assert_eq!(piece_active_set(&Regulator::Litim, &eig, 2.0, 3.0), vec![0, 1]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let eig = [0.0];
        let h = DMatrix::from_element(1, 1, -1.0);
        match wetterich_trace(&Regulator::Litim, &eig, 1.0, h, &[0], 7) {
            Err(Error::SingularFlowMatrix { index, .. }) => assert_eq!(index, 7),
            other => panic!("unexpected {other:?}"),
        }
    }
}
