//! One-dimensional lattice φ⁴: LPA and GP predictor-projector flows for the
//! local potential, the transfer-matrix reference and the derived observables.
//! The LPA flow also runs on the truncated continuum spectrum.

mod flow;
pub mod gp;
pub mod lpa;
pub mod observables;
pub mod tm;

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::flow::ode::OdeOptions;

pub use gp::{gp_flow, softplus, GpFlowOptions, GpFlowResult, GpPotential, Projector, ThetaParams};
pub use lpa::{lpa_flow, lpa_trajectory, LpaOptions, LpaResult};
pub use observables::{log_sources, observables, solve_magnetization, Observation, Potential, SplinePotential};
pub use tm::{tm_magnetization, tm_susceptibility, transfer_matrix, TransferMatrix};

/// Integrator tolerances for the lattice flows. The susceptibility is a
/// second derivative of the infrared potential and needs tighter control
/// than the continuum defaults.
pub fn lattice_ode_options() -> OdeOptions {
    OdeOptions { rtol: 1e-9, atol: 1e-11, ..OdeOptions::default() }
}

/// Periodic lattice with unit spacing and bare potential `m²φ²/2 + λφ⁴/24`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    n_x: usize,
    m2: f64,
    lambda: f64,
    eigenvalues: Vec<f64>,
}

impl LatticeModel {
    pub fn new(n_x: usize, m2: f64, lambda: f64) -> Result<Self> {
        if n_x < 2 {
            return invalid(format!("lattice needs at least 2 sites, got {n_x}"));
        }
        if !(lambda > 0.0 && lambda.is_finite() && m2.is_finite()) {
            return invalid(format!("need finite m2 and lambda > 0, got m2 = {m2}, lambda = {lambda}"));
        }
        let eigenvalues = (0..n_x).map(|q| 4.0 * (PI * q as f64 / n_x as f64).sin().powi(2)).collect();
        Ok(Self { n_x, m2, lambda, eigenvalues })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

}

/// A local potential `m²φ²/2 + λφ⁴/24` flowing under a Litim regulator on a
/// discrete Laplacian spectrum. The flow per unit volume is
/// `∂_κ U = κ S(κ) / (V (κ² + U''))` with `S(κ) = #{α : λ_α < κ²}`.
pub trait LocalModel: Sync {
    fn m2(&self) -> f64;
    fn lambda(&self) -> f64;
    fn eigenvalues(&self) -> &[f64];
    /// Volume `V`: the site count on a lattice, the box length in the continuum.
    fn volume(&self) -> f64;

    fn bare(&self, phi: f64) -> f64 {
        self.m2() * phi * phi / 2.0 + self.lambda() * phi.powi(4) / 24.0
    }

    fn bare_d1(&self, phi: f64) -> f64 {
        self.m2() * phi + self.lambda() * phi.powi(3) / 6.0
    }

    fn bare_d2(&self, phi: f64) -> f64 {
        self.m2() + self.lambda() * phi * phi / 2.0
    }

    /// Scales `√λ_α > 0` at which the active-mode count jumps, ascending and
    /// deduplicated.
    fn thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.eigenvalues().iter().filter(|l| **l > 0.0).map(|l| l.sqrt()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        t
    }
}

impl LocalModel for LatticeModel {
    fn m2(&self) -> f64 {
        self.m2
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn volume(&self) -> f64 {
        self.n_x as f64
    }
}

/// The continuum model on the periodic unit interval truncated to the modes
/// `|p| ≤ P`, eigenvalues `(2πp)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumModel {
    m2: f64,
    lambda: f64,
    eigenvalues: Vec<f64>,
}

impl ContinuumModel {
    pub fn new(p_max: usize, m2: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && m2.is_finite()) {
            return invalid(format!("need finite m2 and lambda > 0, got m2 = {m2}, lambda = {lambda}"));
        }
        let mut eigenvalues = vec![0.0];
        for p in 1..=p_max {
            let l = (2.0 * PI * p as f64).powi(2);
            eigenvalues.extend([l, l]);
        }
        Ok(Self { m2, lambda, eigenvalues })
    }
}

impl LocalModel for ContinuumModel {
    fn m2(&self) -> f64 {
        self.m2
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn volume(&self) -> f64 {
        1.0
    }
}

/// `S(κ) = #{α : λ_α < κ²}`.
pub fn active_modes(model: &dyn LocalModel, kappa: f64) -> usize {
    let k2 = kappa * kappa;
    model.eigenvalues().iter().filter(|&&l| l < k2).count()
}

/// Potential sampled on a uniform grid over `[−φ_max, φ_max]`, endpoints
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrid {
    phi_max: f64,
    points: Vec<f64>,
    values: DVector<f64>,
}

impl PotentialGrid {
    pub fn new(phi_max: f64, values: DVector<f64>) -> Result<Self> {
        let n = values.len();
        if n < 3 {
            return invalid(format!("potential grid needs at least 3 points, got {n}"));
        }
        if !(phi_max > 0.0 && phi_max.is_finite()) {
            return invalid(format!("field window must be positive, got {phi_max}"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("potential values must be finite");
        }
        let points = (0..n).map(|j| -phi_max + 2.0 * phi_max * j as f64 / (n - 1) as f64).collect();
        Ok(Self { phi_max, points, values })
    }

    /// The bare potential of `model` on `n_phi` points.
    pub fn bare(model: &dyn LocalModel, phi_max: f64, n_phi: usize) -> Result<Self> {
        let g = Self::new(phi_max, DVector::zeros(n_phi.max(3)))?;
        if n_phi < 3 {
            return invalid(format!("potential grid needs at least 3 points, got {n_phi}"));
        }
        let values = DVector::from_iterator(n_phi, g.points.iter().map(|&p| model.bare(p)));
        Ok(Self { values, ..g })
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.phi_max / (self.points.len() - 1) as f64
    }

    pub(crate) fn with_values(&self, values: DVector<f64>) -> Self {
        Self { phi_max: self.phi_max, points: self.points.clone(), values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn active_mode_examples() {
        let m = LatticeModel::new(4, -1.5, 1.0).unwrap();
        assert_eq!(active_modes(&m, 1.0), 1);
        assert_eq!(active_modes(&m, 2.1), 4);
        assert_eq!(active_modes(&m, 1e6), 4);
    }

    #[test]
    fn thresholds_are_distinct_roots() {
        let m = LatticeModel::new(4, 1.0, 1.0).unwrap();
        let t = m.thresholds();
        assert_eq!(t.len(), 2);
        assert_relative_eq!(t[0], 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(t[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn continuum_spectrum() {
        let m = ContinuumModel::new(2, -1.5, 1.0).unwrap();
        assert_eq!(m.eigenvalues().len(), 5);
        assert_eq!(active_modes(&m, 2.0), 1);
        assert_eq!(active_modes(&m, 7.0), 3);
        assert_eq!(m.volume(), 1.0);
        let t = m.thresholds();
        assert_eq!(t.len(), 2);
        assert_relative_eq!(t[0], 2.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn invalid_models() {
        assert!(LatticeModel::new(1, 1.0, 1.0).is_err());
        assert!(LatticeModel::new(4, 1.0, 0.0).is_err());
        assert!(PotentialGrid::new(5.0, DVector::zeros(2)).is_err());
    }

    #[test]
    fn grid_is_symmetric() {
        let m = LatticeModel::new(8, -1.5, 1.0).unwrap();
        let g = PotentialGrid::bare(&m, 5.0, 11).unwrap();
        assert_eq!(g.points()[0], -5.0);
        assert_eq!(g.points()[10], 5.0);
        assert_eq!(g.points()[5], 0.0);
        assert_eq!(g.values()[0], g.values()[10]);
    }
}
