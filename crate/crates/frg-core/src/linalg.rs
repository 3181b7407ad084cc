//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    /// Fails with the index of the first non-positive pivot.
    pub fn new(mut a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        for j in 0..n {
            let (left, mut right) = a.columns_range_pair_mut(0..j, j..);
            let mut col = right.column_mut(0);
            if j > 0 {
                let row_j = left.row(j).transpose();
                col.rows_mut(j, n - j).gemv(-1.0, &left.rows(j, n - j), &row_j, 1.0);
            }
            let d = col[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Factorization { pivot: j, value: d });
            }
            let s = d.sqrt();
            col[j] = s;
            col.rows_mut(j + 1, n - j - 1).unscale_mut(s);
        }
        a.fill_upper_triangle(0.0, 1);
        Ok(Self { l: a })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_mut(&mut x);
        x
    }

    pub fn solve_mut(&self, x: &mut DVector<f64>) {
        self.l.solve_lower_triangular_mut(x);
        self.l.tr_solve_lower_triangular_mut(x);
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Cheap condition estimate `(max L_ii / min L_ii)²`; a lower bound on
    /// the spectral condition number.
    pub fn condition_estimate(&self) -> f64 {
        let d = self.l.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        (hi / lo).powi(2)
    }

    /// Diagonal of `A⁻¹` restricted to the given indices.
    pub fn inverse_diagonal(&self, indices: &[usize]) -> Vec<f64> {
        let n = self.dim();
        indices
            .iter()
            .map(|&a| {
                // (A⁻¹)_aa = ‖L⁻¹ e_a‖²; only rows a.. of L⁻¹ e_a are nonzero.
                let mut e = DVector::zeros(n - a);
                e[0] = 1.0;
                self.l.view((a, a), (n - a, n - a)).solve_lower_triangular_mut(&mut e);
                e.norm_squared()
            })
            .collect()
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 0.5 } else { 0.0 });
        &b * b.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn reconstructs_matrix() {
        let a = spd(6);
        let c = Cholesky::new(a.clone()).unwrap();
        let r = c.l() * c.l().transpose();
        assert!((r - a).abs().max() < 1e-12);
    }

    #[test]
    fn reports_pivot() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]);
        match Cholesky::new(a) {
            Err(Error::Factorization { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_diagonal_matches_dense_inverse() {
        let a = spd(7);
        let inv = a.clone().try_inverse().unwrap();
        let c = Cholesky::new(a).unwrap();
        let d = c.inverse_diagonal(&[0, 3, 6]);
        assert_relative_eq!(d[0], inv[(0, 0)], max_relative = 1e-12);
        assert_relative_eq!(d[1], inv[(3, 3)], max_relative = 1e-12);
        assert_relative_eq!(d[2], inv[(6, 6)], max_relative = 1e-12);
    }

    #[test]
    fn solves() {
        let a = spd(5);
        let b = DVector::from_fn(5, |i, _| i as f64 - 1.0);
        let x = Cholesky::new(a.clone()).unwrap().solve(&b);
        assert!((a * x - b).abs().max() < 1e-12);
    }
}
