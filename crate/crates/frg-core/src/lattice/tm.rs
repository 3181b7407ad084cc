//! Transfer-matrix reference for the discretized one-dimensional model.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{LatticeModel, LocalModel};
use crate::error::{invalid, Error, Result};

/// Largest exponent accepted before an entry would overflow.
const MAX_EXPONENT: f64 = 700.0;

/// Shifted transfer matrix `T₂` for a homogeneous source `c` on a field grid.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    n_x: usize,
    points: Vec<f64>,
    c: f64,
    phi0: f64,
    t2: DMatrix<f64>,
}

/// Builds `(T₂)_ij = exp(−½((φ_j − φ_i)² + U₂(φ_i) + U₂(φ_j)))` with
/// `U₂(φ) = m²φ²/2 + λφ⁴/24 − c(φ − φ₀)`. Without an explicit shift, `φ₀`
/// is the grid minimizer of the tilted bare potential.
pub fn transfer_matrix(model: &LatticeModel, points: &[f64], c: f64, phi0: Option<f64>) -> Result<TransferMatrix> {
    if points.is_empty() || points.iter().any(|p| !p.is_finite()) || !c.is_finite() {
        return invalid("transfer matrix needs a non-empty finite grid and a finite source");
    }
    let phi0 = phi0.unwrap_or_else(|| {
        points
            .iter()
            .copied()
            .min_by(|a, b| (model.bare(*a) - c * a).total_cmp(&(model.bare(*b) - c * b)))
            .expect("non-empty grid")
    });
    let u2: Vec<f64> = points.iter().map(|&p| model.bare(p) - c * (p - phi0)).collect();
    let n = points.len();
    let mut t2 = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let d = points[j] - points[i];
            let e = -0.5 * (d * d + u2[i] + u2[j]);
            if e > MAX_EXPONENT {
                return Err(Error::Overflow { i, j });
            }
            t2[(i, j)] = e.exp();
            t2[(j, i)] = t2[(i, j)];
        }
    }
    Ok(TransferMatrix { n_x: model.n_x(), points: points.to_vec(), c, phi0, t2 })
}

struct Spectrum {
    /// `ln |μ_max|`.
    log_top: f64,
    /// `μ_k^N / μ_max^N`.
    weights: Vec<f64>,
    /// `v_kᵀ Φ v_k`.
    fields: Vec<f64>,
}

impl TransferMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t2
    }

    pub fn source(&self) -> f64 {
        self.c
    }

    pub fn shift(&self) -> f64 {
        self.phi0
    }

    fn spectrum(&self) -> Result<Spectrum> {
        let eig = SymmetricEigen::new(self.t2.clone());
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(top > 0.0 && top.is_finite()) {
            return Err(Error::Internal("transfer matrix has no positive leading eigenvalue".into()));
        }
        let log_top = top.ln();
        let n = self.n_x as i32;
        let mut weights = Vec::with_capacity(self.points.len());
        let mut fields = Vec::with_capacity(self.points.len());
        for (k, mu) in eig.eigenvalues.iter().enumerate() {
            let ratio = mu / top;
            weights.push(ratio.powi(n));
            let v = eig.eigenvectors.column(k);
            fields.push(v.iter().zip(&self.points).map(|(x, p)| x * x * p).sum());
        }
        Ok(Spectrum { log_top, weights, fields })
    }

    /// `ln Z` of the unshifted model: `ln Tr T₂^N + N c φ₀`.
    pub fn log_partition(&self) -> Result<f64> {
        let s = self.spectrum()?;
        let sum: f64 = s.weights.iter().sum();
        Ok(self.n_x as f64 * s.log_top + sum.ln() + self.n_x as f64 * self.c * self.phi0)
    }

    /// `Tr(Φ T₂^N) / Tr(T₂^N)`.
    pub fn magnetization(&self) -> Result<f64> {
        let s = self.spectrum()?;
        let num: f64 = s.weights.iter().zip(&s.fields).map(|(w, f)| w * f).sum();
        let den: f64 = s.weights.iter().sum();
        Ok(num / den)
    }
}

pub fn tm_magnetization(tm: &TransferMatrix) -> Result<f64> {
    tm.magnetization()
}

/// `χ(c) ≈ (m(c + δc) − m(c − δc)) / (2δc)` for a relative step `δ`.
pub fn tm_susceptibility(model: &LatticeModel, points: &[f64], c: f64, delta: f64) -> Result<f64> {
    let dc = delta * c.abs();
    if !(dc > 0.0) || !(c - dc > 0.0) {
        return invalid(format!("susceptibility step needs c - dc > 0, got c = {c}, delta = {delta}"));
    }
    let up = transfer_matrix(model, points, c + dc, None)?.magnetization()?;
    let down = transfer_matrix(model, points, c - dc, None)?.magnetization()?;
    Ok((up - down) / (2.0 * dc))
}
