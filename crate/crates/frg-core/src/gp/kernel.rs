//! Functional and scalar kernels with derivatives in their first argument.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{invalid, Result};
use crate::field::{Basis, BasisKind};

/// Second-derivative matrix, kept diagonal when the structure allows it.
#[derive(Debug, Clone, PartialEq)]
pub enum Hess {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Hess {
    pub fn zeros_like_diag(n: usize) -> Self {
        Hess::Diagonal(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        match self {
            Hess::Diagonal(d) => d.len(),
            Hess::Dense(m) => m.nrows(),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Hess::Diagonal(d) => d.clone(),
            Hess::Dense(m) => m.diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Hess::Diagonal(d) => DMatrix::from_diagonal(d),
            Hess::Dense(m) => m.clone(),
        }
    }

    /// `self += s · other`, densifying only when needed.
    pub fn axpy(&mut self, s: f64, other: &Hess) {
        match (&mut *self, other) {
            (Hess::Diagonal(a), Hess::Diagonal(b)) => a.axpy(s, b, 1.0),
            (Hess::Dense(a), Hess::Diagonal(b)) => {
                for i in 0..b.len() {
                    a[(i, i)] += s * b[i];
                }
            }
            (Hess::Dense(a), Hess::Dense(b)) => *a += b * s,
            (Hess::Diagonal(a), Hess::Dense(b)) => {
                let mut d = b * s;
                for i in 0..a.len() {
                    d[(i, i)] += a[i];
                }
                *self = Hess::Dense(d);
            }
        }
    }

    /// `Jᵀ H J` for a linear change of variables with Jacobian `J`.
    pub fn congruence(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Hess::Diagonal(d) => {
                let mut hj = j.clone();
                for (r, mut row) in hj.row_iter_mut().enumerate() {
                    row *= d[r];
                }
                j.tr_mul(&hj)
            }
            Hess::Dense(m) => j.tr_mul(&(m * j)),
        }
    }
}

/// Quadratic feature kernel `Σ_α ω_α (s_α z_α z'_α + 1)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticKernel {
    pub omega: Vec<f64>,
    pub scale: Vec<f64>,
}

impl QuadraticKernel {
    /// Unit weights: `Σ_α (z_α z'_α + 1)²`.
    pub fn plain(m: usize) -> Self {
        Self { omega: vec![1.0; m], scale: vec![1.0; m] }
    }

    /// `Σ_{p=-P..P} (c_p c'_p + 1)²` for mirrored coefficients `c_{-p} = c_p`,
    /// written over `c_0..c_P`: the pair `±p` is one term of weight 2.
    pub fn mirrored(p_max: usize) -> Self {
        let omega = (0..=p_max).map(|p| if p == 0 { 1.0 } else { 2.0 }).collect();
        Self { omega, scale: vec![1.0; p_max + 1] }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// Explicit feature dimension `2m + 1`.
    pub fn feature_dim(&self) -> usize {
        2 * self.dim() + 1
    }

    /// Feature vector `f(z)` with `k(z, z') = f(z)·f(z')`.
    pub fn features(&self, z: &[f64]) -> DVector<f64> {
        let m = self.dim();
        let mut f = DVector::zeros(2 * m + 1);
        for a in 0..m {
            let (w, s) = (self.omega[a], self.scale[a]);
            f[a] = w.sqrt() * s * z[a] * z[a];
            f[m + a] = (2.0 * w * s).sqrt() * z[a];
        }
        f[2 * m] = self.omega.iter().sum::<f64>().sqrt();
        f
    }

    /// Gradient of `f(z)·β`.
    pub fn feature_grad(&self, z: &[f64], beta: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        DVector::from_fn(m, |a, _| {
            let (w, s) = (self.omega[a], self.scale[a]);
            2.0 * w.sqrt() * s * z[a] * beta[a] + (2.0 * w * s).sqrt() * beta[m + a]
        })
    }

    /// Hessian of `f(z)·β`; diagonal and independent of `z`.
    pub fn feature_hess(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |a, _| 2.0 * self.omega[a].sqrt() * self.scale[a] * beta[a])
    }
}

/// Scalar cosine-spectral kernel
/// `Σ_{q=0..Q} σ² (η² + a_q²)^{-β} cos(a_q φ) cos(a_q φ')`, `a_q = πq/φ_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineSpectral {
    pub sigma2: f64,
    pub eta: f64,
    pub beta: f64,
    pub q_max: usize,
    pub phi_max: f64,
}

impl CosineSpectral {
    fn frequency(&self, q: usize) -> f64 {
        PI * q as f64 / self.phi_max
    }

    fn weight(&self, q: usize) -> f64 {
        let a = self.frequency(q);
        self.sigma2 * (self.eta * self.eta + a * a).powf(-self.beta)
    }

    pub fn feature_dim(&self) -> usize {
        self.q_max + 1
    }

    /// Row `√w_q · d^n/dφ^n cos(a_q φ)` for `n = 0, 1, 2`.
    pub fn feature_row(&self, phi: f64, order: usize) -> DVector<f64> {
        DVector::from_fn(self.q_max + 1, |q, _| {
            let a = self.frequency(q);
            let w = self.weight(q).sqrt();
            match order {
                0 => w * (a * phi).cos(),
                1 => -w * a * (a * phi).sin(),
                _ => -w * a * a * (a * phi).cos(),
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma2, self.eta, self.beta, self.phi_max].iter().all(|v| v.is_finite())
            && self.sigma2 > 0.0
            && self.phi_max > 0.0;
        if ok {
            Ok(())
        } else {
            invalid("cosine-spectral hyperparameters must be finite with sigma2 > 0, phi_max > 0")
        }
    }
}

/// Polynomial features `f(φ) = (φ²/2, φ⁴/12)` of the linear surrogate and
/// their first two derivatives.
pub fn poly_features(phi: f64, order: usize) -> Vector2<f64> {
    match order {
        0 => Vector2::new(phi * phi / 2.0, phi.powi(4) / 12.0),
        1 => Vector2::new(phi, phi.powi(3) / 3.0),
        _ => Vector2::new(1.0, phi * phi),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Quadratic(QuadraticKernel),
    /// Integrated local kernel on pointwise samples:
    /// `C(z, z') = mean_k mean_l K_U(z_k², z'_l²)` with
    /// `K_U(u, u') = 1 + uu' + (uu')² + exp(−(u − u')²/(2σ²))`.
    AdditiveLpa { sigma: f64 },
    CosineSpectral(CosineSpectral),
    /// `f(φ)ᵀ Σ_a f(φ') + K_U(φ, φ')`.
    LinearSurrogate { sigma_a: Matrix2<f64>, base: CosineSpectral },
}

/// Scalar additive kernel `K_U(u, u')`.
pub fn k_u(u: f64, v: f64, sigma: f64) -> f64 {
    let uv = u * v;
    1.0 + uv + uv * uv + (-(u - v) * (u - v) / (2.0 * sigma * sigma)).exp()
}

/// `(K_U, ∂_u K_U, ∂²_u K_U)` at `(u, v)`.
#[inline]
pub fn k_u_derivs(u: f64, v: f64, sigma: f64) -> (f64, f64, f64) {
    let s2 = sigma * sigma;
    let d = u - v;
    let e = (-d * d / (2.0 * s2)).exp();
    let uv = u * v;
    (
        1.0 + uv + uv * uv + e,
        v + 2.0 * u * v * v - e * d / s2,
        2.0 * v * v + e * (d * d / (s2 * s2) - 1.0 / s2),
    )
}

impl Kernel {
    /// Quadratic kernel over the mirrored features of a continuum basis.
    pub fn quadratic_fourier(basis: &Basis) -> Self {
        debug_assert_eq!(basis.kind(), BasisKind::ContinuumTorus);
        Kernel::Quadratic(QuadraticKernel::mirrored(basis.size()))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Quadratic(q) => {
                if q.omega.len() != q.scale.len() {
                    return invalid("quadratic kernel weight vectors differ in length");
                }
                if q.omega.iter().chain(&q.scale).any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return invalid("quadratic kernel weights must be finite and non-negative");
                }
                Ok(())
            }
            Kernel::AdditiveLpa { sigma } => {
                if sigma.is_finite() && *sigma > 0.0 {
                    Ok(())
                } else {
                    invalid(format!("additive kernel length-scale must be positive, got {sigma}"))
                }
            }
            Kernel::CosineSpectral(c) => c.validate(),
            Kernel::LinearSurrogate { sigma_a, base } => {
                base.validate()?;
                let sym = (sigma_a - sigma_a.transpose()).abs().max() == 0.0;
                if !sym || sigma_a.cholesky().is_none() {
                    return invalid("sigma_a must be symmetric positive definite");
                }
                Ok(())
            }
        }
    }

    /// Checks an argument length against the kernel's expected input.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        let expect = match self {
            Kernel::Quadratic(q) => Some(q.dim()),
            Kernel::AdditiveLpa { .. } => None,
            Kernel::CosineSpectral(_) | Kernel::LinearSurrogate { .. } => Some(1),
        };
        match expect {
            Some(e) if e != n => invalid(format!("kernel expects {e} features, got {n}")),
            _ if n == 0 => invalid("empty feature vector"),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: &[f64], zp: &[f64]) -> f64 {
        match self {
            Kernel::Quadratic(q) => z
                .iter()
                .zip(zp)
                .enumerate()
                .map(|(a, (x, y))| {
                    let t = q.scale[a] * x * y + 1.0;
                    q.omega[a] * t * t
                })
                .sum(),
            Kernel::AdditiveLpa { sigma } => {
                let mut acc = 0.0;
                for x in z {
                    let u = x * x;
                    for y in zp {
                        acc += k_u(u, y * y, *sigma);
                    }
                }
                acc / (z.len() * zp.len()) as f64
            }
            Kernel::CosineSpectral(c) => c.feature_row(z[0], 0).dot(&c.feature_row(zp[0], 0)),
            Kernel::LinearSurrogate { sigma_a, base } => {
                poly_features(z[0], 0).dot(&(sigma_a * poly_features(zp[0], 0)))
                    + base.feature_row(z[0], 0).dot(&base.feature_row(zp[0], 0))
            }
        }
    }

    /// Gradient of `k(z, z')` with respect to `z`.
    pub fn grad1(&self, z: &[f64], zp: &[f64]) -> DVector<f64> {
        match self {
            Kernel::Quadratic(q) => DVector::from_fn(z.len(), |a, _| {
                let s = q.scale[a];
                2.0 * q.omega[a] * s * zp[a] * (s * z[a] * zp[a] + 1.0)
            }),
            Kernel::AdditiveLpa { sigma } => {
                let norm = (z.len() * zp.len()) as f64;
                DVector::from_fn(z.len(), |k, _| {
                    let u = z[k] * z[k];
                    let d1: f64 = zp.iter().map(|y| k_u_derivs(u, y * y, *sigma).1).sum();
                    2.0 * z[k] * d1 / norm
                })
            }
            Kernel::CosineSpectral(c) => {
                DVector::from_element(1, c.feature_row(z[0], 1).dot(&c.feature_row(zp[0], 0)))
            }
            Kernel::LinearSurrogate { sigma_a, base } => DVector::from_element(
                1,
                poly_features(z[0], 1).dot(&(sigma_a * poly_features(zp[0], 0)))
                    + base.feature_row(z[0], 1).dot(&base.feature_row(zp[0], 0)),
            ),
        }
    }

    /// Hessian of `k(z, z')` with respect to `z`.
    pub fn hess1(&self, z: &[f64], zp: &[f64]) -> Hess {
        match self {
            Kernel::Quadratic(q) => Hess::Diagonal(DVector::from_fn(z.len(), |a, _| {
                2.0 * q.omega[a] * q.scale[a] * q.scale[a] * zp[a] * zp[a]
            })),
            Kernel::AdditiveLpa { sigma } => {
                let norm = (z.len() * zp.len()) as f64;
                Hess::Diagonal(DVector::from_fn(z.len(), |k, _| {
                    let u = z[k] * z[k];
                    let (d1, d2) = zp.iter().fold((0.0, 0.0), |(a, b), y| {
                        let (_, g, h) = k_u_derivs(u, y * y, *sigma);
                        (a + g, b + h)
                    });
                    (2.0 * d1 + 4.0 * u * d2) / norm
                }))
            }
            Kernel::CosineSpectral(c) => Hess::Diagonal(DVector::from_element(
                1,
                c.feature_row(z[0], 2).dot(&c.feature_row(zp[0], 0)),
            )),
            Kernel::LinearSurrogate { sigma_a, base } => Hess::Diagonal(DVector::from_element(
                1,
                poly_features(z[0], 2).dot(&(sigma_a * poly_features(zp[0], 0)))
                    + base.feature_row(z[0], 2).dot(&base.feature_row(zp[0], 0)),
            )),
        }
    }

    /// Dimension of an explicit finite feature map, if the kernel has one.
    pub fn feature_dim(&self) -> Option<usize> {
        match self {
            Kernel::Quadratic(q) => Some(q.feature_dim()),
            Kernel::AdditiveLpa { .. } => None,
            Kernel::CosineSpectral(c) => Some(c.feature_dim()),
            Kernel::LinearSurrogate { base, .. } => Some(base.feature_dim() + 2),
        }
    }

    /// Row of `∂^order`-differentiated features for scalar kernels, or the
    /// plain features for the quadratic kernel (`order` must be 0 there).
    pub fn feature_row(&self, z: &[f64], order: usize) -> Option<DVector<f64>> {
        match self {
            Kernel::Quadratic(q) if order == 0 => Some(q.features(z)),
            Kernel::CosineSpectral(c) => Some(c.feature_row(z[0], order)),
            Kernel::LinearSurrogate { sigma_a, base } => {
                let l = sigma_a.cholesky()?.l();
                let p = l.transpose() * poly_features(z[0], order);
                let b = base.feature_row(z[0], order);
                Some(DVector::from_iterator(b.len() + 2, p.iter().copied().chain(b.iter().copied())))
            }
            _ => None,
        }
    }

    /// Gram matrix `K(Z, Z')` for row-stacked inputs.
    pub fn cross_gram(&self, z: &DMatrix<f64>, zp: &DMatrix<f64>) -> DMatrix<f64> {
        if !matches!(self, Kernel::Quadratic(_)) && self.feature_dim().is_some() {
            let f = self.feature_matrix(z, 0);
            let g = self.feature_matrix(zp, 0);
            return f * g.transpose();
        }
        let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
        let cols: Vec<Vec<f64>> = zp.row_iter().map(|r| r.iter().copied().collect()).collect();
        DMatrix::from_fn(z.nrows(), zp.nrows(), |i, j| self.eval(&rows[i], &cols[j]))
    }

    /// Row-stacked feature matrix; panics for kernels without features.
    pub fn feature_matrix(&self, z: &DMatrix<f64>, order: usize) -> DMatrix<f64> {
        let d = self.feature_dim().expect("kernel has no finite feature map");
        let mut f = DMatrix::zeros(z.nrows(), d);
        for (i, row) in z.row_iter().enumerate() {
            let zi: Vec<f64> = row.iter().copied().collect();
            let fi = self.feature_row(&zi, order).expect("feature row");
            f.row_mut(i).copy_from(&fi.transpose());
        }
        f
    }
}
