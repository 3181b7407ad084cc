//! Magnetization and susceptibility from an infrared potential.

use rayon::prelude::*;

use super::PotentialGrid;
use crate::error::{invalid, Error, Result};

/// A twice differentiable potential on a field window.
pub trait Potential: Sync {
    fn value(&self, phi: f64) -> f64;
    fn d1(&self, phi: f64) -> f64;
    fn d2(&self, phi: f64) -> f64;
    fn window(&self) -> (f64, f64);
}

/// Cubic spline through grid values. The end curvatures are pinned to the
/// one-sided second differences of the data.
#[derive(Debug, Clone)]
pub struct SplinePotential {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl SplinePotential {
    pub fn new(grid: &PotentialGrid) -> Result<Self> {
        let y: Vec<f64> = grid.values().iter().copied().collect();
        let n = y.len();
        if n < 4 {
            return invalid("spline needs at least 4 grid points");
        }
        let h = grid.spacing();
        let h2 = h * h;
        let end0 = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / h2;
        let end1 = (2.0 * y[n - 1] - 5.0 * y[n - 2] + 4.0 * y[n - 3] - y[n - 4]) / h2;
        // Interior equations m[j−1] + 4 m[j] + m[j+1] = 6 (y[j−1] − 2y[j] + y[j+1]) / h².
        let k = n - 2;
        let mut rhs: Vec<f64> = (1..n - 1).map(|j| 6.0 * (y[j - 1] - 2.0 * y[j] + y[j + 1]) / h2).collect();
        rhs[0] -= end0;
        rhs[k - 1] -= end1;
        // Thomas algorithm with constant diagonals (1, 4, 1).
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        c[0] = 1.0 / 4.0;
        d[0] = rhs[0] / 4.0;
        for i in 1..k {
            let den = 4.0 - c[i - 1];
            c[i] = 1.0 / den;
            d[i] = (rhs[i] - d[i - 1]) / den;
        }
        let mut m = vec![0.0; n];
        m[0] = end0;
        m[n - 1] = end1;
        m[k] = d[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = d[i] - c[i] * m[i + 2];
        }
        Ok(Self { x0: grid.points()[0], h, y, m })
    }

    fn locate(&self, phi: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = ((phi - self.x0) / self.h).floor();
        let i = if s < 0.0 { 0 } else { (s as usize).min(n - 2) };
        (i, phi - (self.x0 + i as f64 * self.h))
    }
}

impl Potential for SplinePotential {
    fn value(&self, phi: f64) -> f64 {
        let (i, t) = self.locate(phi);
        let h = self.h;
        let (a, b) = (self.m[i], self.m[i + 1]);
        let u = h - t;
        a * u.powi(3) / (6.0 * h) + b * t.powi(3) / (6.0 * h) + (self.y[i] / h - a * h / 6.0) * u + (self.y[i + 1] / h - b * h / 6.0) * t
    }

    fn d1(&self, phi: f64) -> f64 {
        let (i, t) = self.locate(phi);
        let h = self.h;
        let (a, b) = (self.m[i], self.m[i + 1]);
        let u = h - t;
        -a * u * u / (2.0 * h) + b * t * t / (2.0 * h) + (self.y[i + 1] - self.y[i]) / h - (b - a) * h / 6.0
    }

    fn d2(&self, phi: f64) -> f64 {
        let (i, t) = self.locate(phi);
        self.m[i] + (self.m[i + 1] - self.m[i]) * t / self.h
    }

    fn window(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.h * (self.y.len() - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub c: f64,
    pub m: f64,
    pub chi: f64,
}

/// `n` logarithmically spaced sources in `[lo, hi]`, endpoints included.
pub fn log_sources(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| if i + 1 == n { hi } else { 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64) })
        .collect()
}

const SCAN_POINTS: usize = 2000;
const MAX_NEWTON: usize = 50;

/// Solves `U'(m) = c` for the global minimizer of `U − cφ`.
///
/// The window is scanned for sign changes of `U' − c`; among the bracketed
/// roots the one with the lowest tilted potential is refined by Newton
/// steps, falling back to bisection whenever a step leaves the bracket.
pub fn solve_magnetization(pot: &dyn Potential, c: f64) -> Result<f64> {
    let (lo, hi) = pot.window();
    let g = |x: f64| pot.d1(x) - c;
    let xs: Vec<f64> = (0..=SCAN_POINTS).map(|k| lo + (hi - lo) * k as f64 / SCAN_POINTS as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..SCAN_POINTS {
        if gs[k] <= 0.0 && gs[k + 1] > 0.0 {
            let mid = 0.5 * (xs[k] + xs[k + 1]);
            let f = pot.value(mid) - c * mid;
            if best.is_none_or(|b| f < b.2) {
                best = Some((xs[k], xs[k + 1], f));
            }
        }
    }
    let Some((mut a, mut b, _)) = best else {
        return Err(Error::RootFailure { c });
    };
    let tol = 1e-10 * c.abs().max(1.0);
    let mut x = 0.5 * (a + b);
    for _ in 0..MAX_NEWTON {
        let gx = g(x);
        if gx.abs() <= tol {
            let curv = pot.d2(x);
            if !(curv > 0.0) {
                return Err(Error::NonConvexMinimum { c, curvature: curv });
            }
            return Ok(x);
        }
        if gx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let d = pot.d2(x);
        let newton = x - gx / d;
        x = if d > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
    }
    Err(Error::RootFailure { c })
}

/// `m(c)` and `χ(c) = 1/U''(m(c))` for each source.
pub fn observables(pot: &dyn Potential, sources: &[f64]) -> Result<Vec<Observation>> {
    sources
        .par_iter()
        .map(|&c| {
            let m = solve_magnetization(pot, c)?;
            Ok(Observation { c, m, chi: 1.0 / pot.d2(m) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    struct Poly {
        quartic: f64,
    }

    impl Potential for Poly {
        fn value(&self, x: f64) -> f64 {
            x * x / 2.0 + self.quartic * x.powi(4) / 24.0
        }
        fn d1(&self, x: f64) -> f64 {
            x + self.quartic * x.powi(3) / 6.0
        }
        fn d2(&self, x: f64) -> f64 {
            1.0 + self.quartic * x * x / 2.0
        }
        fn window(&self) -> (f64, f64) {
            (-5.0, 5.0)
        }
    }

    #[test]
    fn quadratic_closed_form() {
        let obs = observables(&Poly { quartic: 0.0 }, &log_sources(18, 1e-4, 10f64.powf(0.4))).unwrap();
        for o in obs {
            assert_relative_eq!(o.m, o.c, max_relative = 1e-9);
            assert_relative_eq!(o.chi, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn quartic_matches_bisection() {
        let p = Poly { quartic: 1.0 };
        for c in [1e-3, 0.05, 0.3] {
            let m = solve_magnetization(&p, c).unwrap();
            let (mut a, mut b) = (0.0, 5.0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if p.d1(mid) < c {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            assert!((m - 0.5 * (a + b)).abs() <= 1e-10);
            assert!((p.d1(m) - c).abs() <= 1e-10);
            assert!((m - (c - c.powi(3) / 6.0)).abs() <= c.powi(5) / 10.0);
        }
    }

    #[test]
    fn tilted_double_well_picks_global_minimum() {
        struct Dw;
        impl Potential for Dw {
            fn value(&self, x: f64) -> f64 {
                -x * x / 2.0 + x.powi(4) / 4.0
            }
            fn d1(&self, x: f64) -> f64 {
                -x + x.powi(3)
            }
            fn d2(&self, x: f64) -> f64 {
                -1.0 + 3.0 * x * x
            }
            fn window(&self) -> (f64, f64) {
                (-3.0, 3.0)
            }
        }
        // The global minimum of the tilted potential is in the right well.
        let m = solve_magnetization(&Dw, 0.01).unwrap();
        assert!(m > 0.9);
    }

    #[test]
    fn log_source_grid() {
        let c = log_sources(18, 1e-4, 10f64.powf(0.4));
        assert_eq!(c.len(), 18);
        assert_eq!(c[0], 1e-4);
        assert_eq!(c[17], 10f64.powf(0.4));
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn spline_reproduces_cubics() {
        let g = PotentialGrid::new(2.0, DVector::from_iterator(21, (0..21).map(|j| {
            let x = -2.0 + 0.2 * j as f64;
            x.powi(3) - x
        })))
        .unwrap();
        let s = SplinePotential::new(&g).unwrap();
        for x in [-1.93, -0.5, 0.0, 0.37, 1.99] {
            assert_relative_eq!(s.value(x), x.powi(3) - x, epsilon = 1e-10);
            assert_relative_eq!(s.d1(x), 3.0 * x * x - 1.0, epsilon = 1e-9);
            assert_relative_eq!(s.d2(x), 6.0 * x, epsilon = 1e-8);
        }
    }
}
