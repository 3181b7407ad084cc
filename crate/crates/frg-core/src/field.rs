//! Truncated spectral representations of periodic fields.
//!
//! Two bases are supported. The continuum torus `[0, 1)` uses the real
//! Fourier basis `e_0 = 1`, `e_{2p-1} = √2 cos(2πpx)`, `e_{2p} = √2 sin(2πpx)`
//! with eigenvalues `(2πp)²`. The periodic lattice with `N_x` sites (spacing
//! one) uses the real eigenvectors of the discrete Laplacian indexed by
//! `q = 0..N_x`, with eigenvalues `4 sin²(πq/N_x)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    ContinuumTorus,
    LatticePeriodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    kind: BasisKind,
    size: usize,
    eigenvalues: Vec<f64>,
    frequency: Vec<usize>,
    distinct: Vec<(f64, usize)>,
}

impl Basis {
    /// Builds a basis. `size` is the truncation `P` on the continuum and the
    /// site count `N_x` on the lattice.
    pub fn new(kind: BasisKind, size: usize) -> Result<Self> {
        let frequency: Vec<usize> = match kind {
            BasisKind::ContinuumTorus => (0..2 * size + 1).map(|a| a.div_ceil(2)).collect(),
            BasisKind::LatticePeriodic => {
                if size < 2 {
                    return invalid(format!("lattice needs at least 2 sites, got {size}"));
                }
                (0..size).map(|q| q.min(size - q)).collect()
            }
        };
        let eigenvalues: Vec<f64> = frequency
            .iter()
            .map(|&p| match kind {
                BasisKind::ContinuumTorus => (2.0 * PI * p as f64).powi(2),
                BasisKind::LatticePeriodic => 4.0 * (PI * p as f64 / size as f64).sin().powi(2),
            })
            .collect();
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        let mut sorted = eigenvalues.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        for l in sorted {
            match distinct.last_mut() {
                Some((v, g)) if *v == l => *g += 1,
                _ => distinct.push((l, 1)),
            }
        }
        Ok(Self { kind, size, eigenvalues, frequency, distinct })
    }

    pub fn continuum(p: usize) -> Self {
        Self::new(BasisKind::ContinuumTorus, p).expect("continuum basis is always valid")
    }

    pub fn lattice(nx: usize) -> Result<Self> {
        Self::new(BasisKind::LatticePeriodic, nx)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Truncation `P` (continuum) or site count `N_x` (lattice).
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of modes `m`.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Integer frequency `p(α)` of each mode.
    pub fn frequencies(&self) -> &[usize] {
        &self.frequency
    }

    /// Distinct eigenvalues in ascending order with their multiplicities.
    pub fn distinct_eigenvalues(&self) -> &[(f64, usize)] {
        &self.distinct
    }

    /// Value of basis function `alpha` at `x` (a position in `[0, 1)` on the
    /// continuum, a site index on the lattice). No domain check.
    pub fn mode_value(&self, alpha: usize, x: f64) -> f64 {
        let p = self.frequency[alpha] as f64;
        match self.kind {
            BasisKind::ContinuumTorus => {
                if alpha == 0 {
                    1.0
                } else if alpha % 2 == 1 {
                    SQRT_2 * (2.0 * PI * p * x).cos()
                } else {
                    SQRT_2 * (2.0 * PI * p * x).sin()
                }
            }
            BasisKind::LatticePeriodic => {
                let n = self.size;
                let norm = (n as f64).sqrt();
                if alpha == 0 {
                    1.0 / norm
                } else if 2 * alpha == n {
                    if (x as i64) % 2 == 0 {
                        1.0 / norm
                    } else {
                        -1.0 / norm
                    }
                } else {
                    let arg = 2.0 * PI * p * x / n as f64;
                    let trig = if 2 * alpha < n { arg.cos() } else { arg.sin() };
                    SQRT_2 * trig / norm
                }
            }
        }
    }

    /// Matrix `E` with `E[k, α] = e_α(x_k)`.
    pub fn mode_matrix(&self, points: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), self.modes(), |k, a| self.mode_value(a, points[k]))
    }

    fn check_position(&self, x: f64) -> Result<()> {
        match self.kind {
            BasisKind::ContinuumTorus if !(0.0..1.0).contains(&x) => {
                invalid(format!("position {x} outside [0, 1)"))
            }
            BasisKind::LatticePeriodic
                if x.fract() != 0.0 || x < 0.0 || x >= self.size as f64 =>
            {
                invalid(format!("site index {x} outside 0..{}", self.size))
            }
            _ => Ok(()),
        }
    }
}

/// Uniform quadrature nodes `k/M` on the unit torus.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    (0..m).map(|k| k as f64 / m as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    basis: Arc<Basis>,
    coeffs: DVector<f64>,
}

impl Field {
    pub fn new(basis: Arc<Basis>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != basis.modes() {
            return invalid(format!(
                "coefficient length {} does not match mode count {}",
                coeffs.len(),
                basis.modes()
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("non-finite field coefficient");
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: Arc<Basis>) -> Self {
        let m = basis.modes();
        Self { basis, coeffs: DVector::zeros(m) }
    }

    /// The constant field `φ ≡ v`.
    pub fn constant(basis: Arc<Basis>, v: f64) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[0] = v / f.basis.mode_value(0, 0.0);
        f
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// `Σ_α c_α e_α(x)`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.basis.check_position(x)?;
        Ok(self
            .coeffs
            .iter()
            .enumerate()
            .map(|(a, c)| c * self.basis.mode_value(a, x))
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariance {
    /// `Σ = AᵀA` with `A` an `m × m` standard normal matrix drawn once per seed.
    Correlated,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// Divide mode `p ≠ 0` by `|p|`.
    InverseFrequency,
    /// Multiply mode `p` by `(1 + |p|)^(-3/2)`.
    InverseFrequency32,
    None,
}

impl Decay {
    pub fn factor(self, p: usize) -> f64 {
        match self {
            Decay::InverseFrequency if p > 0 => 1.0 / p as f64,
            Decay::InverseFrequency => 1.0,
            Decay::InverseFrequency32 => (1.0 + p as f64).powf(-1.5),
            Decay::None => 1.0,
        }
    }
}

/// Which coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Every real mode independently.
    Full,
    /// Complex coefficients `ĉ_0..ĉ_P` mirrored to `ĉ_{-p} = ĉ_p`: the real
    /// field `ĉ_0 + 2 Σ ĉ_p cos(2πpx)` has cosine coefficient `√2 ĉ_p` and no
    /// sine part. Continuum only.
    Mirrored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub cov: Covariance,
    pub decay: Decay,
    pub symmetry: Symmetry,
}

/// An ordered set of fields on one basis, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    basis: Arc<Basis>,
    spec: Option<EnsembleSpec>,
    coeffs: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps explicit coefficient rows.
    pub fn from_rows(basis: Arc<Basis>, coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() == 0 {
            return invalid("ensemble must contain at least one field");
        }
        if coeffs.ncols() != basis.modes() {
            return invalid(format!(
                "ensemble has {} columns, basis has {} modes",
                coeffs.ncols(),
                basis.modes()
            ));
        }
        Ok(Self { basis, spec: None, coeffs })
    }

    /// Draws `n` coefficient vectors from `N(0, Σ)`, mirrors them if
    /// requested, then applies the decay rule.
    pub fn sample(basis: Arc<Basis>, n: usize, spec: EnsembleSpec) -> Result<Self> {
        if n == 0 {
            return invalid("ensemble size must be positive");
        }
        let full = basis.modes();
        // Drawn coordinate k lands in real mode `target[k]` scaled by `gain[k]`.
        let (target, gain): (Vec<usize>, Vec<f64>) = match spec.symmetry {
            Symmetry::Full => ((0..full).collect(), vec![1.0; full]),
            Symmetry::Mirrored => {
                if basis.kind() != BasisKind::ContinuumTorus {
                    return invalid("mirrored sampling needs a continuum basis");
                }
                (0..=basis.size())
                    .map(|p| if p == 0 { (0, 1.0) } else { (2 * p - 1, SQRT_2) })
                    .unzip()
            }
        };
        let m = target.len();
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let a = match spec.cov {
            Covariance::Correlated => Some(DMatrix::from_row_iterator(m, m, (0..m * m).map(|_| normal()))),
            Covariance::Identity => None,
        };
        let scale: Vec<f64> = basis.frequencies().iter().map(|&p| spec.decay.factor(p)).collect();
        let mut coeffs = DMatrix::zeros(n, full);
        let mut xi = DVector::zeros(m);
        for i in 0..n {
            for v in xi.iter_mut() {
                *v = normal();
            }
            let raw = match &a {
                Some(a) => a.tr_mul(&xi),
                None => xi.clone(),
            };
            for k in 0..m {
                let alpha = target[k];
                coeffs[(i, alpha)] = raw[k] * gain[k] * scale[alpha];
            }
        }
        Ok(Self { basis, spec: Some(spec), coeffs })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn spec(&self) -> Option<EnsembleSpec> {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    /// Coefficient matrix, one field per row.
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn field(&self, i: usize) -> Field {
        Field {
            basis: self.basis.clone(),
            coeffs: self.coeffs.row(i).transpose(),
        }
    }
}

/// Linear encoding `w(φ)` of a field as a finite feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Identity on the stored coefficients.
    Spectral,
    /// Field values at the given points.
    Pointwise(Vec<f64>),
    /// Complex coefficients `ĉ_0..ĉ_P` of mirrored continuum fields: the
    /// zero-mode coefficient and the cosine coefficients divided by `√2`.
    Mirrored,
}

impl FeatureMap {
    pub fn dim(&self, basis: &Basis) -> usize {
        match self {
            FeatureMap::Spectral => basis.modes(),
            FeatureMap::Pointwise(points) => points.len(),
            FeatureMap::Mirrored => basis.size() + 1,
        }
    }

    /// Jacobian `∂w/∂c` (features × modes).
    pub fn jacobian(&self, basis: &Basis) -> DMatrix<f64> {
        match self {
            FeatureMap::Spectral => DMatrix::identity(basis.modes(), basis.modes()),
            FeatureMap::Pointwise(points) => basis.mode_matrix(points),
            FeatureMap::Mirrored => DMatrix::from_fn(basis.size() + 1, basis.modes(), |p, a| {
                if p == 0 && a == 0 {
                    1.0
                } else if p > 0 && a == 2 * p - 1 {
                    FRAC_1_SQRT_2
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn apply(&self, field: &Field) -> DVector<f64> {
        match self {
            FeatureMap::Spectral => field.coeffs.clone(),
            FeatureMap::Pointwise(points) => field.basis.mode_matrix(points) * &field.coeffs,
            FeatureMap::Mirrored => self.jacobian(&field.basis) * &field.coeffs,
        }
    }

    /// Feature matrix of a whole ensemble, one row per field.
    pub fn apply_rows(&self, ensemble: &Ensemble) -> DMatrix<f64> {
        match self {
            FeatureMap::Spectral => ensemble.coeffs.clone(),
            FeatureMap::Pointwise(points) => {
                &ensemble.coeffs * ensemble.basis.mode_matrix(points).transpose()
            }
            FeatureMap::Mirrored => &ensemble.coeffs * self.jacobian(&ensemble.basis).transpose(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn continuum_p1_modes() {
        let b = Basis::continuum(1);
        assert_eq!(b.modes(), 3);
        let l = (2.0 * PI).powi(2);
        assert_eq!(b.eigenvalues(), &[0.0, l, l]);
        assert_eq!(b.distinct_eigenvalues(), &[(0.0, 1), (l, 2)]);
    }

    #[test]
    fn lattice_eigenvalues() {
        let b = Basis::lattice(4).unwrap();
        let expect = [0.0, 2.0, 4.0, 2.0];
        for (l, e) in b.eigenvalues().iter().zip(expect) {
            assert_relative_eq!(*l, e, epsilon = 1e-15);
        }
        let b = Basis::lattice(2).unwrap();
        assert_relative_eq!(b.eigenvalues()[1], 4.0, epsilon = 1e-15);
        assert!(Basis::lattice(0).is_err());
        assert!(Basis::lattice(1).is_err());
    }

    #[test]
    fn multiplicities_sum_to_mode_count() {
        for n in 2..12 {
            let b = Basis::lattice(n).unwrap();
            assert_eq!(b.distinct_eigenvalues().iter().map(|d| d.1).sum::<usize>(), n);
        }
    }

    #[test]
    fn evaluate_examples() {
        let b = Arc::new(Basis::continuum(1));
        let f = Field::new(b.clone(), DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(f.evaluate(0.0).unwrap(), SQRT_2, epsilon = 1e-15);
        assert!(f.evaluate(0.25).unwrap().abs() < 1e-15);
        let c = Field::new(b, DVector::from_vec(vec![0.7, 0.0, 0.0])).unwrap();
        assert_eq!(c.evaluate(0.3).unwrap(), 0.7);
        assert!(c.evaluate(1.0).is_err());
        assert!(c.evaluate(-0.1).is_err());
    }

    #[test]
    fn lattice_site_domain() {
        let b = Arc::new(Basis::lattice(4).unwrap());
        let f = Field::zeros(b);
        assert!(f.evaluate(3.0).is_ok());
        assert!(f.evaluate(4.0).is_err());
        assert!(f.evaluate(1.5).is_err());
    }

    #[test]
    fn decay_rules() {
        assert_relative_eq!(0.8 * Decay::InverseFrequency.factor(4), 0.2);
        assert_relative_eq!(Decay::InverseFrequency32.factor(3), 0.125);
        assert_eq!(Decay::InverseFrequency.factor(0), 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = Arc::new(Basis::continuum(3));
        let spec = EnsembleSpec {
            seed: 7,
            cov: Covariance::Correlated,
            decay: Decay::InverseFrequency,
            symmetry: Symmetry::Full,
        };
        let a = Ensemble::sample(b.clone(), 5, spec).unwrap();
        let c = Ensemble::sample(b.clone(), 5, spec).unwrap();
        assert_eq!(a, c);
        let d = Ensemble::sample(b, 5, EnsembleSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.coeffs(), d.coeffs());
    }

    #[test]
    fn mirrored_fields_are_cosine_only() {
        let b = Arc::new(Basis::continuum(4));
        let spec = EnsembleSpec {
            seed: 3,
            cov: Covariance::Identity,
            decay: Decay::InverseFrequency,
            symmetry: Symmetry::Mirrored,
        };
        let e = Ensemble::sample(b.clone(), 6, spec).unwrap();
        for i in 0..6 {
            for p in 1..=4 {
                assert_eq!(e.coeffs()[(i, 2 * p)], 0.0);
            }
        }
        // Features recover ĉ_p / |p| exactly.
        let z = FeatureMap::Mirrored.apply_rows(&e);
        assert_eq!(z.ncols(), 5);
        let f = e.field(2);
        for x in [0.0, 0.13, 0.5] {
            let direct: f64 = z[(2, 0)] + (1..=4).map(|p| 2.0 * z[(2, p)] * (2.0 * PI * p as f64 * x).cos()).sum::<f64>();
            assert_relative_eq!(f.evaluate(x).unwrap(), direct, max_relative = 1e-12);
        }
        assert!(Ensemble::sample(Arc::new(Basis::lattice(4).unwrap()), 2, spec).is_err());
    }

    #[test]
    fn features() {
        let b = Arc::new(Basis::continuum(1));
        let f = Field::new(b.clone(), DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(FeatureMap::Spectral.apply(&f).as_slice(), &[1.0, 2.0, 3.0]);
        let g = Field::new(b.clone(), DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        let w = FeatureMap::Pointwise(vec![0.0, 0.25]).apply(&g);
        assert_relative_eq!(w[0], SQRT_2, epsilon = 1e-15);
        assert!(w[1].abs() < 1e-15);
        let v = Field::new(b, DVector::from_vec(vec![2.5, 0.0, 0.0])).unwrap();
        let w = FeatureMap::Pointwise(uniform_grid(7)).apply(&v);
        assert!(w.iter().all(|x| *x == 2.5));
    }
}
