//! Spectral regulator profiles `r_κ(λ)` and their scale derivatives.

use crate::error::{invalid, Result};

/// Below this value of `(λ/κ²)^α` the exponential profile switches to its
/// series expansion.
const SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regulator {
    /// `(κ² − λ)₊`.
    Litim,
    /// `λ^α / (exp((λ/κ²)^α) − 1)`.
    Exponential { alpha: f64 },
}

impl Regulator {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return invalid(format!("exponential regulator needs alpha > 0, got {alpha}"));
        }
        Ok(Regulator::Exponential { alpha })
    }

    pub fn r(&self, lambda: f64, kappa: f64) -> Result<f64> {
        check(lambda, kappa)?;
        Ok(self.r_unchecked(lambda, kappa))
    }

    pub fn dr_dkappa(&self, lambda: f64, kappa: f64) -> Result<f64> {
        check(lambda, kappa)?;
        Ok(self.dr_unchecked(lambda, kappa))
    }

    /// Whether the mode contributes to the flow, i.e. `∂_κ r ≠ 0`.
    pub fn is_active(&self, lambda: f64, kappa: f64) -> bool {
        match self {
            Regulator::Litim => lambda < kappa * kappa,
            Regulator::Exponential { .. } => self.dr_unchecked(lambda, kappa) != 0.0,
        }
    }

    /// Scales `κ = √λ` at which the Litim derivative jumps.
    pub fn breakpoints(&self, eigenvalues: &[f64]) -> Vec<f64> {
        match self {
            Regulator::Litim => {
                let mut k: Vec<f64> = eigenvalues.iter().filter(|l| **l > 0.0).map(|l| l.sqrt()).collect();
                k.sort_by(|a, b| a.total_cmp(b));
                k.dedup();
                k
            }
            Regulator::Exponential { .. } => Vec::new(),
        }
    }

    pub(crate) fn r_unchecked(&self, lambda: f64, kappa: f64) -> f64 {
        let k2 = kappa * kappa;
        match *self {
            Regulator::Litim => (k2 - lambda).max(0.0),
            Regulator::Exponential { alpha } => {
                let y = (lambda / k2).powf(alpha);
                k2.powf(alpha) * y_over_expm1(y)
            }
        }
    }

    pub(crate) fn dr_unchecked(&self, lambda: f64, kappa: f64) -> f64 {
        let k2 = kappa * kappa;
        match *self {
            Regulator::Litim => {
                if lambda < k2 {
                    2.0 * kappa
                } else {
                    0.0
                }
            }
            Regulator::Exponential { alpha } => {
                // d/dκ of κ^{2α}·y/(e^y − 1) with y = λ^α κ^{-2α} equals
                // 2α κ^{2α−1}·y² e^y/(e^y − 1)².
                let y = (lambda / k2).powf(alpha);
                2.0 * alpha * kappa.powf(2.0 * alpha - 1.0) * y2_exp_over_expm1_sq(y)
            }
        }
    }
}

fn check(lambda: f64, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid(format!("regulator scale must be positive, got {kappa}"));
    }
    if !(lambda >= 0.0) {
        return invalid(format!("eigenvalue must be non-negative, got {lambda}"));
    }
    Ok(())
}

/// `y / (e^y − 1)`.
fn y_over_expm1(y: f64) -> f64 {
    if y < SERIES_CUTOFF {
        1.0 - y / 2.0 + y * y / 12.0
    } else if y > 745.0 {
        0.0
    } else {
        y / y.exp_m1()
    }
}

/// `y² e^y / (e^y − 1)²`.
fn y2_exp_over_expm1_sq(y: f64) -> f64 {
    if y < SERIES_CUTOFF {
        1.0 - y * y / 12.0
    } else if y > 700.0 {
        0.0
    } else {
        let q = y / y.exp_m1();
        q * q * y.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn litim_values() {
        let r = Regulator::Litim;
        assert_eq!(r.r(1.0, 2.0).unwrap(), 3.0);
        assert_eq!(r.r(4.0, 2.0).unwrap(), 0.0);
        assert_eq!(r.dr_dkappa(1.0, 2.0).unwrap(), 4.0);
        assert_eq!(r.dr_dkappa(5.0, 2.0).unwrap(), 0.0);
        assert_eq!(r.dr_dkappa(4.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn exponential_values() {
        let r = Regulator::exponential(1.0).unwrap();
        assert_relative_eq!(r.r(1.0, 1.0).unwrap(), 0.581_976_706_869_326_4, max_relative = 1e-14);
        assert_eq!(r.dr_dkappa(0.0, 1.0).unwrap(), 2.0);
        assert_eq!(r.r(0.0, 3.0).unwrap(), 9.0);
        let k = 0.7;
        assert_relative_eq!(r.r(1e-8 * k * k, k).unwrap(), k * k, max_relative = 1e-6);
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(Regulator::Litim.r(1.0, 0.0).is_err());
        assert!(Regulator::Litim.dr_dkappa(1.0, -1.0).is_err());
        assert!(Regulator::exponential(0.0).is_err());
    }

    #[test]
    fn series_branch_is_continuous() {
        let below = y_over_expm1(SERIES_CUTOFF * (1.0 - 1e-9));
        let above = y_over_expm1(SERIES_CUTOFF * (1.0 + 1e-9));
        assert_relative_eq!(below, above, max_relative = 1e-14);
        let below = y2_exp_over_expm1_sq(SERIES_CUTOFF * (1.0 - 1e-9));
        let above = y2_exp_over_expm1_sq(SERIES_CUTOFF * (1.0 + 1e-9));
        assert_relative_eq!(below, above, max_relative = 1e-12);
    }

    #[test]
    fn general_alpha_matches_chain_rule() {
        let r = Regulator::exponential(2.0).unwrap();
        let (l, k) = (3.0, 1.4);
        let h = 1e-5 * k;
        let fd = (r.r(l, k + h).unwrap() - r.r(l, k - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(r.dr_dkappa(l, k).unwrap(), fd, max_relative = 1e-8);
    }
}
