//! Closed-form Gaussian solutions and bare φ⁴ actions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::field::{uniform_grid, Basis, BasisKind, Field};
use crate::flow::trace::{active_set, wetterich_trace, wp_trace};
use crate::regulator::Regulator;

fn check_basis(basis: &Arc<Basis>, field: &Field) -> Result<()> {
    if field.basis().as_ref() != basis.as_ref() {
        return invalid("field lives on a different basis than the model");
    }
    Ok(())
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return invalid(format!("scale must be positive, got {kappa}"));
    }
    Ok(())
}

/// Gaussian Wilson–Polchinski model with `Γ₂ = −Δ + 1`.
#[derive(Debug, Clone)]
pub struct GaussianWp {
    pub basis: Arc<Basis>,
    pub regulator: Regulator,
}

impl GaussianWp {
    fn denom(&self, a: usize, kappa: f64) -> f64 {
        let l = self.basis.eigenvalues()[a];
        l + 1.0 + self.regulator.r_unchecked(l, kappa)
    }

    /// `W_κ[J]` on the truncated subspace.
    pub fn value(&self, c: &[f64], kappa: f64) -> f64 {
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (a, l) in self.basis.eigenvalues().iter().enumerate() {
            let d = self.denom(a, kappa);
            quad += c[a] * c[a] / d;
            logdet += (d / (l + 1.0)).ln();
        }
        -0.5 * quad - 0.5 * logdet
    }

    /// Hessian diagonal `−1/(λ + 1 + r)`.
    pub fn hessian_diag(&self, kappa: f64) -> DVector<f64> {
        DVector::from_fn(self.basis.modes(), |a, _| -1.0 / self.denom(a, kappa))
    }

    pub fn gradient(&self, c: &[f64], kappa: f64) -> DVector<f64> {
        DVector::from_fn(self.basis.modes(), |a, _| -c[a] / self.denom(a, kappa))
    }
}

/// Gaussian Wetterich model `½ Σ γ(λ + m²) c² + ½ Σ ln(1 + r/(γλ + γm²))`.
#[derive(Debug, Clone)]
pub struct GaussianWetterich {
    pub basis: Arc<Basis>,
    pub regulator: Regulator,
    pub gamma: f64,
    pub m2: f64,
}

impl GaussianWetterich {
    pub fn new(basis: Arc<Basis>, regulator: Regulator, gamma: f64, m2: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() || !m2.is_finite() {
            return invalid("Gaussian Wetterich model needs gamma > 0 and finite m2");
        }
        if basis.eigenvalues().iter().any(|l| gamma * (l + m2) <= 0.0) {
            return invalid("Gaussian Wetterich model needs gamma (lambda + m2) > 0 for every mode");
        }
        Ok(Self { basis, regulator, gamma, m2 })
    }

    pub fn value(&self, c: &[f64], kappa: f64) -> f64 {
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for (a, l) in self.basis.eigenvalues().iter().enumerate() {
            let g = self.gamma * (l + self.m2);
            quad += g * c[a] * c[a];
            logdet += (self.regulator.r_unchecked(*l, kappa) / g).ln_1p();
        }
        0.5 * quad + 0.5 * logdet
    }

    /// Field-independent Hessian `diag γ(λ + m²)`.
    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.basis.modes(),
            self.basis.eigenvalues().iter().map(|l| self.gamma * (l + self.m2)),
        ))
    }
}

pub fn wp_exact(model: &GaussianWp, j: &Field, kappa: f64) -> Result<f64> {
    check_basis(&model.basis, j)?;
    check_kappa(kappa)?;
    Ok(model.value(j.coeffs().as_slice(), kappa))
}

pub fn wetterich_exact(model: &GaussianWetterich, phi: &Field, kappa: f64) -> Result<f64> {
    check_basis(&model.basis, phi)?;
    check_kappa(kappa)?;
    Ok(model.value(phi.coeffs().as_slice(), kappa))
}

/// Bare φ⁴ action.
#[derive(Debug, Clone)]
pub enum Phi4Bare {
    /// `∫ ½(∂φ)² + m²φ²/2 + λφ⁴/24` on `[0, 1)`; the potential is averaged
    /// over `grid` uniform points.
    Continuum { basis: Arc<Basis>, m2: f64, lambda: f64, grid: usize },
    /// `Σ_i ½(φ_{i+1} − φ_i)² + m²φ_i²/2 + λφ_i⁴/24`.
    Lattice { basis: Arc<Basis>, m2: f64, lambda: f64 },
}

impl Phi4Bare {
    /// Continuum action with the default quadrature size `8·(2P + 1)`.
    pub fn continuum(basis: Arc<Basis>, m2: f64, lambda: f64) -> Result<Self> {
        let grid = 8 * basis.modes();
        Self::continuum_with_grid(basis, m2, lambda, grid)
    }

    pub fn continuum_with_grid(basis: Arc<Basis>, m2: f64, lambda: f64, grid: usize) -> Result<Self> {
        if basis.kind() != BasisKind::ContinuumTorus {
            return invalid("continuum action needs a continuum basis");
        }
        check_couplings(m2, lambda)?;
        if grid < 8 * basis.modes() {
            return invalid(format!("quadrature grid {grid} is below 8 x mode count"));
        }
        Ok(Phi4Bare::Continuum { basis, m2, lambda, grid })
    }

    pub fn lattice(basis: Arc<Basis>, m2: f64, lambda: f64) -> Result<Self> {
        if basis.kind() != BasisKind::LatticePeriodic {
            return invalid("lattice action needs a lattice basis");
        }
        check_couplings(m2, lambda)?;
        Ok(Phi4Bare::Lattice { basis, m2, lambda })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        match self {
            Phi4Bare::Continuum { basis, .. } | Phi4Bare::Lattice { basis, .. } => basis,
        }
    }

    /// Local potential `m²φ²/2 + λφ⁴/24`.
    pub fn potential(&self, phi: f64) -> f64 {
        let (m2, lambda) = match self {
            Phi4Bare::Continuum { m2, lambda, .. } | Phi4Bare::Lattice { m2, lambda, .. } => (*m2, *lambda),
        };
        m2 * phi * phi / 2.0 + lambda * phi.powi(4) / 24.0
    }
}

fn check_couplings(m2: f64, lambda: f64) -> Result<()> {
    if !m2.is_finite() || !(lambda > 0.0 && lambda.is_finite()) {
        return invalid("phi^4 action needs finite m2 and lambda > 0");
    }
    Ok(())
}

pub fn bare_phi4(action: &Phi4Bare, phi: &Field) -> Result<f64> {
    check_basis(action.basis(), phi)?;
    let c = phi.coeffs();
    match action {
        Phi4Bare::Continuum { basis, grid, .. } => {
            let kinetic: f64 = 0.5 * basis.eigenvalues().iter().zip(c.iter()).map(|(l, x)| l * x * x).sum::<f64>();
            let values = basis.mode_matrix(&uniform_grid(*grid)) * c;
            let pot: f64 = values.iter().map(|v| action.potential(*v)).sum::<f64>() / *grid as f64;
            Ok(kinetic + pot)
        }
        Phi4Bare::Lattice { basis, .. } => {
            let n = basis.size();
            let sites: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let v = basis.mode_matrix(&sites) * c;
            Ok((0..n)
                .map(|i| {
                    let d = v[(i + 1) % n] - v[i];
                    0.5 * d * d + action.potential(v[i])
                })
                .sum())
        }
    }
}

/// A Gaussian model with a closed-form flow.
#[derive(Debug, Clone)]
pub enum GaussianModel {
    Wp(GaussianWp),
    Wetterich(GaussianWetterich),
}

impl GaussianModel {
    pub fn basis(&self) -> &Arc<Basis> {
        match self {
            GaussianModel::Wp(m) => &m.basis,
            GaussianModel::Wetterich(m) => &m.basis,
        }
    }

    pub fn regulator(&self) -> &Regulator {
        match self {
            GaussianModel::Wp(m) => &m.regulator,
            GaussianModel::Wetterich(m) => &m.regulator,
        }
    }

    pub fn value(&self, c: &[f64], kappa: f64) -> f64 {
        match self {
            GaussianModel::Wp(m) => m.value(c, kappa),
            GaussianModel::Wetterich(m) => m.value(c, kappa),
        }
    }

    /// Right-hand side of the flow at `c` built from the closed-form
    /// Hessian (and gradient).
    pub fn exact_rhs(&self, c: &[f64], kappa: f64) -> Result<f64> {
        let eig = self.basis().eigenvalues();
        let act = active_set(self.regulator(), eig, kappa);
        match self {
            GaussianModel::Wp(m) => {
                Ok(wp_trace(&m.regulator, eig, kappa, &m.hessian_diag(kappa), &m.gradient(c, kappa), &act))
            }
            GaussianModel::Wetterich(m) => wetterich_trace(&m.regulator, eig, kappa, m.hessian(), &act, 0),
        }
    }
}

/// Relative mismatch between a Richardson-extrapolated central difference of
/// the closed form in `κ` and the spectral-trace right-hand side.
pub fn flow_residual(model: &GaussianModel, kappa: f64, field: &Field) -> Result<f64> {
    check_basis(model.basis(), field)?;
    check_kappa(kappa)?;
    let c = field.coeffs().as_slice();
    let mut h = 1e-3 * kappa;
    // Stay clear of Litim kinks.
    for b in model.regulator().breakpoints(model.basis().eigenvalues()) {
        let gap = (b - kappa).abs();
        if gap > 0.0 {
            h = h.min(0.25 * gap);
        }
    }
    let d = |h: f64| (model.value(c, kappa + h) - model.value(c, kappa - h)) / (2.0 * h);
    let fd = (4.0 * d(h / 2.0) - d(h)) / 3.0;
    let rhs = model.exact_rhs(c, kappa)?;
    let scale = rhs.abs().max(fd.abs());
    Ok(if scale == 0.0 { 0.0 } else { (fd - rhs).abs() / scale })
}
