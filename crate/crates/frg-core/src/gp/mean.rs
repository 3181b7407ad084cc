use nalgebra::{DMatrix, DVector};

use super::kernel::Hess;
use crate::error::{invalid, Result};
use crate::field::Basis;

/// Prior mean of a surrogate, expressed in feature coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean {
    Zero,
    /// Quadratic form `½ zᵀ Q z`; kinetic terms take this shape.
    Kinetic(Hess),
    /// Local bare potential `m² z²/2 + λ z⁴/24` on scalar features.
    BarePotential { m2: f64, lambda: f64 },
}

impl PriorMean {
    /// `½ Σ_α γ (λ_α + m²) c_α²` on spectral features.
    pub fn kinetic(basis: &Basis, gamma: f64, m2: f64) -> Self {
        PriorMean::Kinetic(Hess::Diagonal(DVector::from_iterator(
            basis.modes(),
            basis.eigenvalues().iter().map(|l| gamma * (l + m2)),
        )))
    }

    /// The same kinetic form on pointwise features sampled at the uniform
    /// grid `k/M`. Coefficients are recovered exactly as `c = Eᵀ z / M`.
    pub fn kinetic_pointwise(basis: &Basis, points: &[f64], gamma: f64, m2: f64) -> Result<Self> {
        let m = points.len();
        if m < basis.modes() {
            return invalid("pointwise kinetic mean needs at least as many points as modes");
        }
        let e = basis.mode_matrix(points);
        let d = DVector::from_iterator(basis.modes(), basis.eigenvalues().iter().map(|l| gamma * (l + m2)));
        let mut ed = e.clone();
        for (a, mut col) in ed.column_iter_mut().enumerate() {
            col *= d[a];
        }
        let q: DMatrix<f64> = (ed * e.transpose()) / (m * m) as f64;
        Ok(PriorMean::Kinetic(Hess::Dense(q)))
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Kinetic(Hess::Diagonal(d)) => {
                0.5 * z.iter().zip(d.iter()).map(|(x, q)| q * x * x).sum::<f64>()
            }
            PriorMean::Kinetic(Hess::Dense(q)) => {
                let v = DVector::from_column_slice(z);
                0.5 * v.dot(&(q * &v))
            }
            PriorMean::BarePotential { m2, lambda } => {
                let x = z[0];
                m2 * x * x / 2.0 + lambda * x.powi(4) / 24.0
            }
        }
    }

    pub fn grad(&self, z: &[f64]) -> DVector<f64> {
        match self {
            PriorMean::Zero => DVector::zeros(z.len()),
            PriorMean::Kinetic(Hess::Diagonal(d)) => DVector::from_fn(z.len(), |a, _| d[a] * z[a]),
            PriorMean::Kinetic(Hess::Dense(q)) => q * DVector::from_column_slice(z),
            PriorMean::BarePotential { m2, lambda } => {
                let x = z[0];
                DVector::from_element(1, m2 * x + lambda * x.powi(3) / 6.0)
            }
        }
    }

    pub fn hess(&self, z: &[f64]) -> Hess {
        match self {
            PriorMean::Zero => Hess::zeros_like_diag(z.len()),
            PriorMean::Kinetic(h) => h.clone(),
            PriorMean::BarePotential { m2, lambda } => {
                Hess::Diagonal(DVector::from_element(1, m2 + lambda * z[0] * z[0] / 2.0))
            }
        }
    }

    pub fn values(&self, z: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.nrows(),
            z.row_iter().map(|r| {
                let v: Vec<f64> = r.iter().copied().collect();
                self.value(&v)
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::uniform_grid;
    use approx::assert_relative_eq;

    #[test]
    fn pointwise_kinetic_matches_spectral() {
        let b = Basis::continuum(3);
        let c = [0.4, -1.0, 0.3, 0.8, -0.2, 0.1, 0.5];
        let pts = uniform_grid(8 * b.modes());
        let e = b.mode_matrix(&pts);
        let z = &e * DVector::from_column_slice(&c);
        let spectral = PriorMean::kinetic(&b, 1.0, 0.0).value(&c);
        let pointwise = PriorMean::kinetic_pointwise(&b, &pts, 1.0, 0.0).unwrap().value(z.as_slice());
        assert_relative_eq!(spectral, pointwise, max_relative = 1e-12);
    }

    #[test]
    fn bare_potential_derivatives() {
        let m = PriorMean::BarePotential { m2: -1.5, lambda: 1.0 };
        assert_relative_eq!(m.value(&[2.0]), -3.0 + 16.0 / 24.0);
        assert_relative_eq!(m.grad(&[2.0])[0], -3.0 + 8.0 / 6.0);
        assert_relative_eq!(m.hess(&[2.0]).diagonal()[0], -1.5 + 2.0);
    }
}
