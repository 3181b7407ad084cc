//! Per-point local-potential flow `∂_κ U_j = κ S(κ) / (V (κ² + U''_j))` with
//! a linear curvature closure `U'' = C (Y − m) + m''`.

use nalgebra::{DMatrix, DVector};

use super::{active_modes, LocalModel};
use crate::error::{Error, Result};
use crate::flow::ode::{Integrator, OdeSystem};

pub(crate) struct LocalFlow<'a> {
    pub model: &'a dyn LocalModel,
    pub points: &'a [f64],
    pub op: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub offset_d2: DVector<f64>,
    pub log_kappa: bool,
    /// Mode count frozen on the current piece between thresholds.
    pub frozen: Option<usize>,
}

impl LocalFlow<'_> {
    pub fn kappa(&self, t: f64) -> f64 {
        if self.log_kappa {
            t.exp()
        } else {
            t
        }
    }

    pub fn to_time(&self, kappa: f64) -> f64 {
        if self.log_kappa {
            kappa.ln()
        } else {
            kappa
        }
    }

    fn modes(&self, kappa: f64) -> usize {
        self.frozen.unwrap_or_else(|| active_modes(self.model, kappa))
    }

    pub fn curvature(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.op * (y - &self.offset) + &self.offset_d2
    }

    /// Denominators `κ² + U''_j`, checked to be positive.
    fn denominators(&self, kappa: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let mut d = self.curvature(y);
        for (j, v) in d.iter_mut().enumerate() {
            *v += kappa * kappa;
            if !(*v > 0.0) {
                return Err(Error::FlowSingularity { kappa, phi: self.points[j] });
            }
        }
        Ok(d)
    }

    /// `dκ/dt` times the prefactor `κ S / V`.
    fn prefactor(&self, kappa: f64) -> f64 {
        let jac = if self.log_kappa { kappa } else { 1.0 };
        jac * kappa * self.modes(kappa) as f64 / self.model.volume()
    }
}

impl OdeSystem for LocalFlow<'_> {
    fn rhs(&mut self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let kappa = self.kappa(t);
        let a = self.prefactor(kappa);
        if a == 0.0 {
            return Ok(DVector::zeros(y.len()));
        }
        let d = self.denominators(kappa, y)?;
        Ok(d.map(|v| a / v))
    }

    fn jacobian(&mut self, t: f64, y: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        let kappa = self.kappa(t);
        let a = self.prefactor(kappa);
        let d = match self.denominators(kappa, y) {
            Ok(d) => d,
            Err(e) => return Some(Err(e)),
        };
        let mut j = self.op.clone();
        for (r, mut row) in j.row_iter_mut().enumerate() {
            row *= -a / (d[r] * d[r]);
        }
        Some(Ok(j))
    }

    fn enter_piece(&mut self, from: f64, to: f64) {
        self.frozen = Some(active_modes(self.model, self.kappa(0.5 * (from + to))));
    }
}

/// Advances to `t_end`, stopping at every break strictly inside the span so
/// that the mode count stays one-sided on each piece.
pub(crate) fn advance_pieces(integ: &mut Integrator<LocalFlow<'_>>, t_end: f64, breaks: &[f64]) -> Result<()> {
    let t0 = integ.t();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut stops: Vec<f64> = breaks.iter().copied().filter(|b| (b - t0) * dir > 0.0 && (t_end - b) * dir > 0.0).collect();
    stops.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    stops.push(t_end);
    let mut sink = Vec::new();
    for stop in stops {
        let from = integ.t();
        integ.system_mut().enter_piece(from, stop);
        integ.advance(stop, &[], &mut sink)?;
    }
    if integ.y().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { kappa: integ.system().kappa(t_end) });
    }
    Ok(())
}

/// Second-difference operator on a uniform grid: central in the interior,
/// one-sided second order at the two ends.
pub(crate) fn second_difference(n: usize, h: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    let s = 1.0 / (h * h);
    for j in 1..n - 1 {
        d[(j, j - 1)] = s;
        d[(j, j)] = -2.0 * s;
        d[(j, j + 1)] = s;
    }
    if n >= 4 {
        for (k, c) in [2.0, -5.0, 4.0, -1.0].into_iter().enumerate() {
            d[(0, k)] = c * s;
            d[(n - 1, n - 1 - k)] = c * s;
        }
    } else {
        for (k, c) in [1.0, -2.0, 1.0].into_iter().enumerate() {
            d[(0, k)] = c * s;
            d[(n - 1, n - 1 - k)] = c * s;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn second_difference_is_exact_on_cubics() {
        let n = 9;
        let h = 0.25;
        let x: Vec<f64> = (0..n).map(|j| -1.0 + h * j as f64).collect();
        let y = DVector::from_iterator(n, x.iter().map(|v| v.powi(3) - 2.0 * v * v));
        let d2 = second_difference(n, h) * y;
        for (j, v) in x.iter().enumerate() {
            assert_relative_eq!(d2[j], 6.0 * v - 4.0, epsilon = 1e-10);
        }
    }
}
