//! GP predictor-projector flow for the lattice local potential.
//!
//! On each recorded scale interval the per-site flow is advanced with the
//! curvature of a linear-Gaussian surrogate (prior mean `m₀`, kernel
//! `fᵀ Σ_a f + K_U`). The predicted profile is then projected onto
//! `m₀ + softplus(θ₂) φ²/2 + softplus(θ₄) φ⁴/12 + g`, `g ~ GP(0, K_U)`, by
//! damped Gauss–Newton in `θ`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::flow::{advance_pieces, LocalFlow};
use super::lpa::check_scales;
use super::observables::Potential;
use super::{LocalModel, PotentialGrid};
use crate::error::{invalid, Error, Result};
use crate::flow::ode::{Integrator, OdeOptions, OdeStats};
use crate::flow::uniform_scales;
use crate::gp::{CosineSpectral, GpModel, Kernel, PriorMean};
use crate::linalg::Cholesky;

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaParams {
    pub theta2: f64,
    pub theta4: f64,
}

impl ThetaParams {
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.theta2, self.theta4)
    }

    fn from_vector(v: Vector2<f64>) -> Self {
        Self { theta2: v[0], theta4: v[1] }
    }

    /// Effective couplings `(softplus θ₂, softplus θ₄)`.
    pub fn couplings(&self) -> (f64, f64) {
        (softplus(self.theta2), softplus(self.theta4))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpFlowOptions {
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    /// Number of recorded intervals `S`.
    pub steps: usize,
    pub kernel: CosineSpectral,
    pub sigma_a: Matrix2<f64>,
    pub nugget: f64,
    /// Tikhonov weight on `θ − θ_prev`.
    pub gamma: f64,
    pub theta0: ThetaParams,
    pub max_gauss_newton: usize,
    /// Levenberg–Marquardt damping added to the Gauss–Newton normal matrix.
    pub damping: f64,
    pub ode: OdeOptions,
    pub log_kappa: bool,
}

impl GpFlowOptions {
    /// Spectral kernel with the cutoff `Q = min(N_φ − 1, 1024)`.
    pub fn for_grid(grid: &PotentialGrid) -> Self {
        let q_max = (grid.len() - 1).min(1024);
        Self {
            kappa_uv: 100.0,
            kappa_ir: 1e-10,
            steps: 1000,
            kernel: CosineSpectral { sigma2: 1.0, eta: 0.98, beta: 2.0, q_max, phi_max: grid.phi_max() },
            sigma_a: Matrix2::from_diagonal(&Vector2::new(1e-2, 1e-2)),
            nugget: 1e-11,
            gamma: 1e-6,
            theta0: ThetaParams { theta2: -8.0, theta4: -8.0 },
            max_gauss_newton: 6,
            damping: 1.0,
            ode: super::lattice_ode_options(),
            log_kappa: false,
        }
    }
}

/// Result of projecting one predicted profile.
#[derive(Debug, Clone)]
pub struct Projection {
    pub theta: ThetaParams,
    /// `(K_U + εI)⁻¹ r` for the final residual.
    pub whitened: DVector<f64>,
    /// Objective before and after the θ update.
    pub objective_start: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Reconstructed grid values `m₀ + v_θ + g_post`.
    pub values: DVector<f64>,
}

/// Fixed pieces of the projection problem on a grid.
pub struct Projector {
    chol: Cholesky,
    nugget: f64,
    gamma: f64,
    damping: f64,
    max_iter: usize,
    base: DVector<f64>,
    f2: DVector<f64>,
    f4: DVector<f64>,
    w_f2: DVector<f64>,
    w_f4: DVector<f64>,
}

impl Projector {
    pub fn new(model: &dyn LocalModel, points: &[f64], opts: &GpFlowOptions) -> Result<Self> {
        let kernel = &opts.kernel;
        kernel.validate()?;
        let (nugget, gamma, damping) = (opts.nugget, opts.gamma, opts.damping);
        if !(nugget >= 0.0 && gamma >= 0.0 && damping >= 0.0) {
            return invalid("nugget, Tikhonov weight and damping must be non-negative");
        }
        let x = DMatrix::from_column_slice(points.len(), 1, points);
        let k = Kernel::CosineSpectral(kernel.clone());
        let f = k.feature_matrix(&x, 0);
        let mut gram = &f * f.transpose();
        for i in 0..points.len() {
            gram[(i, i)] += nugget;
        }
        let chol = Cholesky::new(gram)?;
        let base = DVector::from_iterator(points.len(), points.iter().map(|&p| model.bare(p)));
        let f2 = DVector::from_iterator(points.len(), points.iter().map(|p| p * p / 2.0));
        let f4 = DVector::from_iterator(points.len(), points.iter().map(|p| p.powi(4) / 12.0));
        let w_f2 = chol.solve(&f2);
        let w_f4 = chol.solve(&f4);
        Ok(Self { chol, nugget, gamma, damping, max_iter: opts.max_gauss_newton, base, f2, f4, w_f2, w_f4 })
    }

    fn residual(&self, d: &DVector<f64>, w_d: &DVector<f64>, th: &Vector2<f64>) -> (DVector<f64>, DVector<f64>) {
        let (s2, s4) = (softplus(th[0]), softplus(th[1]));
        let r = d - &self.f2 * s2 - &self.f4 * s4;
        let wr = w_d - &self.w_f2 * s2 - &self.w_f4 * s4;
        (r, wr)
    }

    fn objective(&self, r: &DVector<f64>, wr: &DVector<f64>, th: &Vector2<f64>, prev: &Vector2<f64>) -> f64 {
        0.5 * r.dot(wr) + 0.5 * self.gamma * (th - prev).norm_squared()
    }

    /// Minimizes `½ rᵀ (K_U + εI)⁻¹ r + γ/2 ‖θ − θ_prev‖²`, warm-started at
    /// `θ_prev`. A step that raises the objective ends the iteration.
    pub fn project(&self, predicted: &DVector<f64>, prev: ThetaParams, step: usize) -> Result<Projection> {
        if predicted.len() != self.base.len() {
            return invalid("predicted profile does not match the grid");
        }
        let d = predicted - &self.base;
        let w_d = self.chol.solve(&d);
        let p = prev.as_vector();
        let mut th = p;
        let (mut r, mut wr) = self.residual(&d, &w_d, &th);
        let start = self.objective(&r, &wr, &th, &p);
        let mut obj = start;
        let mut iterations = 0;
        for _ in 0..self.max_iter {
            // Residual Jacobian columns are −σ(θ_k) f_k.
            let (g2, g4) = (sigmoid(th[0]), sigmoid(th[1]));
            let a = Matrix2::new(
                g2 * g2 * self.f2.dot(&self.w_f2),
                g2 * g4 * self.f2.dot(&self.w_f4),
                g2 * g4 * self.f4.dot(&self.w_f2),
                g4 * g4 * self.f4.dot(&self.w_f4),
            ) + Matrix2::identity() * (self.gamma + self.damping);
            let grad = Vector2::new(-g2 * self.f2.dot(&wr), -g4 * self.f4.dot(&wr)) + (th - p) * self.gamma;
            let Some(delta) = a.lu().solve(&(-grad)) else {
                return Err(Error::ProjectionFailure { step, reason: "singular Gauss-Newton system".into() });
            };
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::ProjectionFailure { step, reason: "non-finite Gauss-Newton step".into() });
            }
            let trial = th + delta;
            let (r_t, wr_t) = self.residual(&d, &w_d, &trial);
            let obj_t = self.objective(&r_t, &wr_t, &trial, &p);
            if !(obj_t <= obj) {
                break;
            }
            iterations += 1;
            let done = obj - obj_t <= 1e-14 * obj.abs();
            th = trial;
            r = r_t;
            wr = wr_t;
            obj = obj_t;
            if done {
                break;
            }
        }
        let (s2, s4) = (softplus(th[0]), softplus(th[1]));
        // K_U (K_U + εI)⁻¹ r = r − ε (K_U + εI)⁻¹ r.
        let g = &r - &wr * self.nugget;
        let values = &self.base + &self.f2 * s2 + &self.f4 * s4 + g;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { kappa: f64::NAN });
        }
        Ok(Projection { theta: ThetaParams::from_vector(th), whitened: wr, objective_start: start, objective: obj, iterations, values })
    }
}

/// Reconstructed potential `m₀ + v_θ + g_post` with analytic derivatives.
#[derive(Debug, Clone)]
pub struct GpPotential {
    m2: f64,
    lambda: f64,
    theta: ThetaParams,
    kernel: CosineSpectral,
    /// Feature weights of the remainder: `g(φ) = feature_row(φ) · β`.
    beta: DVector<f64>,
    phi_max: f64,
}

impl GpPotential {
    fn new(model: &dyn LocalModel, points: &[f64], kernel: &CosineSpectral, proj: &Projection) -> Self {
        let x = DMatrix::from_column_slice(points.len(), 1, points);
        let f = Kernel::CosineSpectral(kernel.clone()).feature_matrix(&x, 0);
        Self {
            m2: model.m2(),
            lambda: model.lambda(),
            theta: proj.theta,
            kernel: kernel.clone(),
            beta: f.tr_mul(&proj.whitened),
            phi_max: kernel.phi_max,
        }
    }

    pub fn theta(&self) -> ThetaParams {
        self.theta
    }

    fn derivative(&self, phi: f64, order: usize) -> f64 {
        let (s2, s4) = self.theta.couplings();
        let poly = match order {
            0 => self.m2 * phi * phi / 2.0 + self.lambda * phi.powi(4) / 24.0 + s2 * phi * phi / 2.0 + s4 * phi.powi(4) / 12.0,
            1 => self.m2 * phi + self.lambda * phi.powi(3) / 6.0 + s2 * phi + s4 * phi.powi(3) / 3.0,
            _ => self.m2 + self.lambda * phi * phi / 2.0 + s2 + s4 * phi * phi,
        };
        poly + self.kernel.feature_row(phi, order).dot(&self.beta)
    }
}

impl Potential for GpPotential {
    fn value(&self, phi: f64) -> f64 {
        self.derivative(phi, 0)
    }

    fn d1(&self, phi: f64) -> f64 {
        self.derivative(phi, 1)
    }

    fn d2(&self, phi: f64) -> f64 {
        self.derivative(phi, 2)
    }

    fn window(&self) -> (f64, f64) {
        (-self.phi_max, self.phi_max)
    }
}

#[derive(Debug, Clone)]
pub struct GpFlowResult {
    pub potential: GpPotential,
    /// Reconstructed values on the grid at `κ_IR`.
    pub grid: PotentialGrid,
    /// Projected parameters at every recorded scale, `κ_UV` first.
    pub thetas: Vec<ThetaParams>,
    pub kappas: Vec<f64>,
    pub stats: OdeStats,
}

/// Runs the predictor-projector loop over `S` uniform scale intervals.
pub fn gp_flow(model: &dyn LocalModel, grid: &PotentialGrid, opts: &GpFlowOptions) -> Result<GpFlowResult> {
    check_scales(opts.kappa_uv, opts.kappa_ir)?;
    if opts.steps == 0 {
        return invalid("gp flow needs at least one scale interval");
    }
    let points = grid.points();
    let n = points.len();
    let surrogate = Kernel::LinearSurrogate { sigma_a: opts.sigma_a, base: opts.kernel.clone() };
    let x = DMatrix::from_column_slice(n, 1, points);
    let mean = PriorMean::BarePotential { m2: model.m2(), lambda: model.lambda() };
    let closure = GpModel::new(surrogate, x, opts.nugget, mean)?;
    let projector = Projector::new(model, points, opts)?;

    let sys = LocalFlow {
        model,
        points,
        op: closure.curvature_operator(points)?,
        offset: DVector::from_iterator(n, points.iter().map(|&p| model.bare(p))),
        offset_d2: DVector::from_iterator(n, points.iter().map(|&p| model.bare_d2(p))),
        log_kappa: opts.log_kappa,
        frozen: None,
    };
    let breaks: Vec<f64> = model.thresholds().into_iter().map(|k| sys.to_time(k)).collect();
    let kappas = uniform_scales(opts.kappa_uv, opts.kappa_ir, opts.steps);
    let t0 = sys.to_time(kappas[0]);

    let mut theta = opts.theta0;
    let first = projector.project(grid.values(), theta, 0)?;
    theta = first.theta;
    let mut thetas = vec![theta];
    let mut integ = Integrator::new(sys, t0, first.values.clone(), opts.ode)?;
    let mut last = first;
    for (s, &k) in kappas.iter().enumerate().skip(1) {
        let t = integ.system().to_time(k);
        advance_pieces(&mut integ, t, &breaks)?;
        last = projector.project(integ.y(), theta, s)?;
        theta = last.theta;
        thetas.push(theta);
        integ.set_state(last.values.clone());
    }
    let potential = GpPotential::new(model, points, &opts.kernel, &last);
    Ok(GpFlowResult { potential, grid: grid.with_values(last.values), thetas, kappas, stats: integ.stats() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeModel;
    use approx::assert_relative_eq;

    fn small() -> (LatticeModel, PotentialGrid, GpFlowOptions) {
        let model = LatticeModel::new(8, -1.0, 1.0).unwrap();
        let grid = PotentialGrid::bare(&model, 4.0, 41).unwrap();
        let opts = GpFlowOptions::for_grid(&grid);
        (model, grid, opts)
    }

    #[test]
    fn softplus_values() {
        assert_relative_eq!(softplus(-8.0), (-8f64).exp().ln_1p(), max_relative = 1e-15);
        assert!((softplus(-8.0) - 3.354e-4).abs() < 1e-7);
        assert_relative_eq!(softplus(0.0), 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(softplus(50.0), 50.0, max_relative = 1e-15);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn projection_keeps_profiles_in_the_model_family() {
        let (model, grid, k) = small();
        let proj = Projector::new(&model, grid.points(), &k).unwrap();
        let th = ThetaParams { theta2: -1.0, theta4: 0.5 };
        let (s2, s4) = th.couplings();
        let y = DVector::from_iterator(
            grid.len(),
            grid.points().iter().map(|&p| model.bare(p) + s2 * p * p / 2.0 + s4 * p.powi(4) / 12.0),
        );
        let out = proj.project(&y, th, 0).unwrap();
        assert_relative_eq!(out.theta.theta2, th.theta2, epsilon = 1e-8);
        assert_relative_eq!(out.theta.theta4, th.theta4, epsilon = 1e-8);
        assert!(out.objective < 1e-12);
        assert!((&out.values - &y).amax() < 1e-8);
    }

    #[test]
    fn projection_objective_never_increases() {
        let (model, grid, k) = small();
        let proj = Projector::new(&model, grid.points(), &k).unwrap();
        let y = DVector::from_iterator(
            grid.len(),
            grid.points().iter().map(|&p| model.bare(p) + 0.3 * p * p + 0.01 * p.powi(4) + 0.1 * (p / 2.0).cos()),
        );
        let out = proj.project(&y, ThetaParams { theta2: -8.0, theta4: -8.0 }, 3).unwrap();
        eprintln!("{:?} {} {} {}", out.theta, out.objective_start, out.objective, out.iterations);
        assert!(out.objective <= out.objective_start);
        assert!(out.theta.theta2 > -8.0);
    }

    #[test]
    fn gaussian_lattice_matches_lpa() {
        use crate::lattice::{lpa_flow, LpaOptions};
        let model = LatticeModel::new(8, 0.8, 1e-12).unwrap();
        let grid = PotentialGrid::bare(&model, 4.0, 101).unwrap();
        let mut opts = GpFlowOptions::for_grid(&grid);
        opts.kappa_uv = 10.0;
        opts.kappa_ir = 1e-3;
        opts.steps = 20;
        let gp = gp_flow(&model, &grid, &opts).unwrap();
        let lpa = lpa_flow(&model, &grid, &LpaOptions { kappa_uv: 10.0, kappa_ir: 1e-3, ..Default::default() }).unwrap();
        // The spectral kernel is only accurate in curvature away from the window edges.
        for j in 25..=75 {
            let (a, b) = (gp.grid.values()[j], lpa.potential.values()[j]);
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
