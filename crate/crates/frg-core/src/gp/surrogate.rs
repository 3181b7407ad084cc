use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::kernel::{k_u_derivs, Hess, Kernel};
use super::mean::PriorMean;
use crate::error::{invalid, Result};
use crate::linalg::Cholesky;

/// Beyond this squared, scaled distance `exp(−d²/2σ²)` is exactly zero in
/// double precision, so skipping such pairs changes nothing.
const EXP_UNDERFLOW: f64 = 746.0;

/// Symmetric Gram matrix `K(Z, Z)` (rows of `z` are inputs).
pub fn gram(kernel: &Kernel, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut k = match kernel {
        Kernel::AdditiveLpa { sigma } => additive_tables(z, *sigma, false).0,
        _ => kernel.cross_gram(z, z),
    };
    for i in 0..k.nrows() {
        for j in 0..i {
            k[(j, i)] = k[(i, j)];
        }
    }
    k
}

/// Cholesky factor of `K(Z, Z) + εI`.
pub fn assemble_gram(kernel: &Kernel, z: &DMatrix<f64>, nugget: f64) -> Result<Cholesky> {
    check_inputs(kernel, z, nugget, &PriorMean::Zero)?;
    let mut k = gram(kernel, z);
    for i in 0..k.nrows() {
        k[(i, i)] += nugget;
    }
    Cholesky::new(k)
}

fn check_inputs(kernel: &Kernel, z: &DMatrix<f64>, nugget: f64, mean: &PriorMean) -> Result<()> {
    kernel.validate()?;
    if !(nugget > 0.0 && nugget.is_finite()) {
        return invalid(format!("nugget must be positive, got {nugget}"));
    }
    if z.nrows() == 0 {
        return invalid("at least one collocation input is required");
    }
    if z.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite collocation feature");
    }
    match mean {
        PriorMean::Kinetic(q) if q.dim() != z.ncols() => {
            return invalid(format!("prior mean acts on {} features, inputs have {}", q.dim(), z.ncols()));
        }
        PriorMean::BarePotential { .. } if z.ncols() != 1 => return invalid("bare-potential mean needs scalar inputs"),
        _ => {}
    }
    kernel.check_dim(z.ncols())
}

/// Gram matrix and, optionally, the row-Hessian table of the integrated
/// additive kernel. The table has one column per collocation field `j`;
/// entry `(i·M + k, j)` is the `k`-th diagonal Hessian entry of
/// `C(z_i, z_j)` in its first argument.
fn additive_tables(z: &DMatrix<f64>, sigma: f64, want_hess: bool) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let (n, m) = z.shape();
    let cut = (2.0 * sigma * sigma * EXP_UNDERFLOW).sqrt();
    let centers: Vec<Vec<f64>> = z
        .row_iter()
        .map(|r| {
            let mut v: Vec<f64> = r.iter().map(|x| x * x).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        })
        .collect();
    let moments: Vec<(f64, f64)> = centers
        .iter()
        .map(|v| (v.iter().sum(), v.iter().map(|x| x * x).sum()))
        .collect();
    let norm = (m * m) as f64;
    // For each row i: gram row and the M×N block of Hessian entries.
    let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; n];
            let mut h = if want_hess { vec![0.0; m * n] } else { Vec::new() };
            for k in 0..m {
                let u = z[(i, k)] * z[(i, k)];
                for j in 0..n {
                    let v = &centers[j];
                    let (s1, s2) = moments[j];
                    let lo = v.partition_point(|x| *x < u - cut);
                    let hi = v.partition_point(|x| *x <= u + cut);
                    let (mut e0, mut e1, mut e2) = (0.0, 0.0, 0.0);
                    for &vl in &v[lo..hi] {
                        let d = u - vl;
                        let e = (-d * d / (2.0 * sigma * sigma)).exp();
                        e0 += e;
                        if want_hess {
                            e1 += -e * d / (sigma * sigma);
                            e2 += e * (d * d / sigma.powi(4) - 1.0 / (sigma * sigma));
                        }
                    }
                    g[j] += m as f64 + u * s1 + u * u * s2 + e0;
                    if want_hess {
                        let d1 = s1 + 2.0 * u * s2 + e1;
                        let d2 = 2.0 * s2 + e2;
                        h[j * m + k] = (2.0 * d1 + 4.0 * u * d2) / norm;
                    }
                }
            }
            for gj in g.iter_mut() {
                *gj /= norm;
            }
            (g, h)
        })
        .collect();
    let mut gram = DMatrix::zeros(n, n);
    for (i, (g, _)) in per_row.iter().enumerate() {
        for j in 0..n {
            gram[(i, j)] = g[j];
        }
    }
    let table = want_hess.then(|| {
        let mut t = DMatrix::zeros(n * m, n);
        for (i, (_, h)) in per_row.iter().enumerate() {
            for j in 0..n {
                for k in 0..m {
                    t[(i * m + k, j)] = h[j * m + k];
                }
            }
        }
        t
    });
    (gram, table)
}

// Sanity helper kept next to the tables so both use the same formulas.
#[allow(dead_code)]
fn additive_hess_direct(zi: &[f64], zj: &[f64], sigma: f64) -> Vec<f64> {
    let norm = (zi.len() * zj.len()) as f64;
    zi.iter()
        .map(|x| {
            let u = x * x;
            let (d1, d2) = zj.iter().fold((0.0, 0.0), |(a, b), y| {
                let (_, g, h) = k_u_derivs(u, y * y, sigma);
                (a + g, b + h)
            });
            (2.0 * d1 + 4.0 * u * d2) / norm
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Solve {
    /// `w = (K + εI)⁻¹ (Y − mean)`.
    Dual { chol: Cholesky },
    /// `β = (FᵀF + εI)⁻¹ Fᵀ (Y − mean)` for kernels with `K = F Fᵀ` and more
    /// rows than features; `Fβ = K(K + εI)⁻¹(Y − mean)` holds exactly.
    Primal { f: DMatrix<f64>, chol: Cholesky },
}

/// The data-independent part of a surrogate: inputs, kernel, factorization.
#[derive(Debug)]
pub struct GpModel {
    kernel: Kernel,
    z: DMatrix<f64>,
    rows: Vec<Vec<f64>>,
    nugget: f64,
    mean: PriorMean,
    solve: Solve,
    row_hess: OnceLock<DMatrix<f64>>,
}

impl GpModel {
    pub fn new(kernel: Kernel, z: DMatrix<f64>, nugget: f64, mean: PriorMean) -> Result<Self> {
        check_inputs(&kernel, &z, nugget, &mean)?;
        let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
        let primal = match &kernel {
            Kernel::Quadratic(q) if z.nrows() > q.feature_dim() => {
                let f = kernel.feature_matrix(&z, 0);
                let mut a = f.tr_mul(&f);
                for i in 0..a.nrows() {
                    a[(i, i)] += nugget;
                }
                Some(Solve::Primal { chol: Cholesky::new(a)?, f })
            }
            _ => None,
        };
        let row_hess = OnceLock::new();
        let solve = match primal {
            Some(s) => s,
            None => {
                let mut k = match &kernel {
                    Kernel::AdditiveLpa { sigma } => {
                        let (g, t) = additive_tables(&z, *sigma, true);
                        let _ = row_hess.set(t.expect("table requested"));
                        g
                    }
                    _ => gram(&kernel, &z),
                };
                for i in 0..k.nrows() {
                    for j in 0..i {
                        k[(j, i)] = k[(i, j)];
                    }
                    k[(i, i)] += nugget;
                }
                Solve::Dual { chol: Cholesky::new(k)? }
            }
        };
        Ok(Self { kernel, z, rows, nugget, mean, solve, row_hess })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn mean(&self) -> &PriorMean {
        &self.mean
    }

    /// Whether the weight-space (primal) solve is in use.
    pub fn is_primal(&self) -> bool {
        matches!(self.solve, Solve::Primal { .. })
    }

    /// Condition estimate of the factorized regularized matrix.
    pub fn condition_estimate(&self) -> f64 {
        match &self.solve {
            Solve::Dual { chol } | Solve::Primal { chol, .. } => chol.condition_estimate(),
        }
    }

    pub fn factor(&self) -> &Cholesky {
        match &self.solve {
            Solve::Dual { chol } | Solve::Primal { chol, .. } => chol,
        }
    }

    /// Solves for the coefficient vector given data `y` at the inputs.
    pub fn fit(self: &Arc<Self>, y: &DVector<f64>) -> Result<GpSurrogate> {
        if y.len() != self.len() {
            return invalid(format!("{} data values for {} inputs", y.len(), self.len()));
        }
        let resid = y - self.mean.values(&self.z);
        let coef = match &self.solve {
            Solve::Dual { chol } => chol.solve(&resid),
            Solve::Primal { f, chol } => chol.solve(&f.tr_mul(&resid)),
        };
        Ok(GpSurrogate { model: self.clone(), coef })
    }

    /// Precomputed cross-covariances for repeated prediction at fixed inputs.
    pub fn cross(&self, zt: &DMatrix<f64>) -> Result<Cross> {
        if zt.ncols() != self.z.ncols() && !matches!(self.kernel, Kernel::AdditiveLpa { .. }) {
            return invalid("test inputs have the wrong feature dimension");
        }
        let k = match &self.solve {
            Solve::Primal { .. } => self.kernel.feature_matrix(zt, 0),
            Solve::Dual { .. } => match &self.kernel {
                Kernel::AdditiveLpa { sigma } => additive_cross(zt, &self.z, *sigma),
                k => k.cross_gram(zt, &self.z),
            },
        };
        Ok(Cross { k, mean: self.mean.values(zt) })
    }

    fn row_hess_table(&self) -> &DMatrix<f64> {
        self.row_hess.get_or_init(|| {
            let (n, d) = self.z.shape();
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let mut c = Vec::with_capacity(n * d);
                    for i in 0..n {
                        c.extend(self.kernel.hess1(&self.rows[i], &self.rows[j]).diagonal().iter());
                    }
                    c
                })
                .collect();
            DMatrix::from_fn(n * d, n, |r, j| cols[j][r])
        })
    }

    /// Curvature operator for scalar-input kernels: the matrix `C` with
    /// `U''(p) − m''(p) = C (Y − m(X))` at the given points.
    pub fn curvature_operator(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let Solve::Dual { chol } = &self.solve else {
            return invalid("curvature operator needs the dual solve");
        };
        if self.z.ncols() != 1 || self.kernel.feature_dim().is_none() {
            return invalid("curvature operator needs a scalar kernel with features");
        }
        let p = DMatrix::from_column_slice(points.len(), 1, points);
        let k2 = self.kernel.feature_matrix(&p, 2) * self.kernel.feature_matrix(&self.z, 0).transpose();
        Ok(chol.solve_matrix(&k2.transpose()).transpose())
    }
}

fn additive_cross(zt: &DMatrix<f64>, z: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let kern = Kernel::AdditiveLpa { sigma };
    let trows: Vec<Vec<f64>> = zt.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rows: Vec<Vec<f64>> = z.row_iter().map(|r| r.iter().copied().collect()).collect();
    let out: Vec<Vec<f64>> = trows
        .par_iter()
        .map(|t| rows.iter().map(|r| kern.eval(t, r)).collect())
        .collect();
    DMatrix::from_fn(zt.nrows(), z.nrows(), |i, j| out[i][j])
}

/// Cross-covariances (or features) between test inputs and a model.
#[derive(Debug, Clone)]
pub struct Cross {
    k: DMatrix<f64>,
    mean: DVector<f64>,
}

/// Kernel surrogate `Γ†(z) = mean(z) + k(z, Z) w`.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    model: Arc<GpModel>,
    coef: DVector<f64>,
}

/// Fits a surrogate in one call.
pub fn fit(kernel: Kernel, z: DMatrix<f64>, y: &DVector<f64>, mean: PriorMean, nugget: f64) -> Result<GpSurrogate> {
    Arc::new(GpModel::new(kernel, z, nugget, mean)?).fit(y)
}

impl GpSurrogate {
    pub fn model(&self) -> &Arc<GpModel> {
        &self.model
    }

    /// Dual weights `w`, or primal feature weights `β` when
    /// [`GpModel::is_primal`] holds.
    pub fn weights(&self) -> &DVector<f64> {
        &self.coef
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        self.model.kernel.check_dim(z.len())?;
        if !matches!(self.model.kernel, Kernel::AdditiveLpa { .. }) && z.len() != self.model.z.ncols() {
            return invalid("feature dimension mismatch");
        }
        Ok(())
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let m = &self.model;
        let data = match &m.solve {
            Solve::Primal { .. } => m.kernel.feature_row(z, 0).expect("features").dot(&self.coef),
            Solve::Dual { .. } => m.rows.iter().zip(self.coef.iter()).map(|(r, w)| w * m.kernel.eval(z, r)).sum(),
        };
        Ok(m.mean.value(z) + data)
    }

    pub fn predict_cross(&self, cross: &Cross) -> DVector<f64> {
        &cross.mean + &cross.k * &self.coef
    }

    pub fn grad_features(&self, z: &[f64]) -> Result<DVector<f64>> {
        self.check(z)?;
        let m = &self.model;
        let mut g = m.mean.grad(z);
        match (&m.solve, &m.kernel) {
            (Solve::Primal { .. }, Kernel::Quadratic(q)) => g += q.feature_grad(z, &self.coef),
            (Solve::Primal { .. }, _) => unreachable!("primal solve is only used for the quadratic kernel"),
            (Solve::Dual { .. }, k) => {
                for (r, w) in m.rows.iter().zip(self.coef.iter()) {
                    g.axpy(*w, &k.grad1(z, r), 1.0);
                }
            }
        }
        Ok(g)
    }

    pub fn hessian_features(&self, z: &[f64]) -> Result<Hess> {
        self.check(z)?;
        let m = &self.model;
        let mut h = m.mean.hess(z);
        match (&m.solve, &m.kernel) {
            (Solve::Primal { .. }, Kernel::Quadratic(q)) => h.axpy(1.0, &Hess::Diagonal(q.feature_hess(&self.coef))),
            (Solve::Primal { .. }, _) => unreachable!("primal solve is only used for the quadratic kernel"),
            (Solve::Dual { .. }, k) => {
                for (r, w) in m.rows.iter().zip(self.coef.iter()) {
                    h.axpy(*w, &k.hess1(z, r));
                }
            }
        }
        Ok(h)
    }

    /// `U''(φ)` of a scalar-input surrogate.
    pub fn local_curvature(&self, phi: f64) -> Result<f64> {
        Ok(self.hessian_features(&[phi])?.diagonal()[0])
    }

    /// Hessians at every collocation input, in feature coordinates.
    pub fn row_hessians(&self) -> Vec<Hess> {
        let m = &self.model;
        let (n, d) = m.z.shape();
        match (&m.solve, &m.kernel) {
            (Solve::Primal { .. }, Kernel::Quadratic(q)) => {
                let shared = Hess::Diagonal(q.feature_hess(&self.coef));
                m.rows
                    .iter()
                    .map(|r| {
                        let mut h = m.mean.hess(r);
                        h.axpy(1.0, &shared);
                        h
                    })
                    .collect()
            }
            _ => {
                let all = m.row_hess_table() * &self.coef;
                (0..n)
                    .map(|i| {
                        let mut h = m.mean.hess(&m.rows[i]);
                        h.axpy(1.0, &Hess::Diagonal(all.rows(i * d, d).into_owned()));
                        h
                    })
                    .collect()
            }
        }
    }

    /// Gradients at every collocation input, in feature coordinates.
    pub fn row_gradients(&self) -> Vec<DVector<f64>> {
        let m = &self.model;
        m.rows
            .par_iter()
            .map(|r| self.grad_features(r).expect("collocation rows have valid dimension"))
            .collect()
    }
}
