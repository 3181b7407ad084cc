//! Collocated flow equations: the functional flow restricted to a fixed
//! ensemble of fields becomes an ODE system for the functional values there.

pub mod ode;
pub mod trace;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::field::{Basis, Ensemble, FeatureMap};
use crate::gp::{GpModel, GpSurrogate, Kernel, PriorMean};
use crate::models::GaussianModel;
use crate::regulator::Regulator;
use ode::{OdeOptions, OdeStats, OdeSystem};
use trace::{active_set, piece_active_set, wetterich_trace, wp_trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowVariant {
    Wetterich,
    WilsonPolchinski,
}

/// A collocated flow from `κ_UV` down to `κ_IR`.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    basis: Arc<Basis>,
    regulator: Regulator,
    features: FeatureMap,
    /// `∂w/∂c`; `None` for the spectral map.
    jacobian: Option<DMatrix<f64>>,
    model: Arc<GpModel>,
    ensemble: Ensemble,
    y0: DVector<f64>,
    variant: FlowVariant,
    kappa_uv: f64,
    kappa_ir: f64,
    n_t: usize,
    ode: OdeOptions,
    log_kappa: bool,
}

/// Builder-style settings of a [`FlowProblem`].
#[derive(Debug, Clone)]
pub struct FlowSettings {
    pub regulator: Regulator,
    pub kernel: Kernel,
    pub mean: PriorMean,
    pub features: FeatureMap,
    pub variant: FlowVariant,
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    pub n_t: usize,
    pub nugget: f64,
    pub ode: OdeOptions,
    /// Integrate in `ln κ` instead of `κ`.
    pub log_kappa: bool,
}

impl FlowProblem {
    /// `y0` holds the initial functional values at the ensemble fields.
    pub fn new(ensemble: Ensemble, y0: DVector<f64>, s: FlowSettings) -> Result<Self> {
        if !(s.kappa_uv > s.kappa_ir && s.kappa_ir > 0.0 && s.kappa_uv.is_finite()) {
            return invalid(format!("need kappa_uv > kappa_ir > 0, got {} and {}", s.kappa_uv, s.kappa_ir));
        }
        if s.n_t == 0 {
            return invalid("output grid needs at least one interval");
        }
        if y0.len() != ensemble.len() {
            return invalid(format!("{} initial values for {} fields", y0.len(), ensemble.len()));
        }
        let basis = ensemble.basis().clone();
        let z = s.features.apply_rows(&ensemble);
        let model = Arc::new(GpModel::new(s.kernel, z, s.nugget, s.mean)?);
        let jacobian = match &s.features {
            FeatureMap::Spectral => None,
            FeatureMap::Pointwise(_) | FeatureMap::Mirrored => Some(s.features.jacobian(&basis)),
        };
        Ok(Self {
            basis,
            regulator: s.regulator,
            features: s.features,
            jacobian,
            model,
            ensemble,
            y0,
            variant: s.variant,
            kappa_uv: s.kappa_uv,
            kappa_ir: s.kappa_ir,
            n_t: s.n_t,
            ode: s.ode,
            log_kappa: s.log_kappa,
        })
    }

    pub fn model(&self) -> &Arc<GpModel> {
        &self.model
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn initial_values(&self) -> &DVector<f64> {
        &self.y0
    }

    /// Uniform output scales from `κ_UV` to `κ_IR` (both included exactly).
    pub fn output_grid(&self) -> Vec<f64> {
        uniform_scales(self.kappa_uv, self.kappa_ir, self.n_t)
    }

    fn hessian_in_modes(&self, h: &crate::gp::Hess) -> DMatrix<f64> {
        let mut m = match &self.jacobian {
            None => h.to_dense(),
            Some(j) => h.congruence(j),
        };
        if self.features == FeatureMap::Mirrored {
            mirror_sine_block(&mut m);
        }
        m
    }

    fn rhs_with(&self, kappa: f64, y: &DVector<f64>, active: &[usize]) -> Result<DVector<f64>> {
        let n = self.ensemble.len();
        if y.len() != n {
            return invalid(format!("state has {} entries for {} fields", y.len(), n));
        }
        if active.is_empty() {
            return Ok(DVector::zeros(n));
        }
        let s = self.model.fit(y)?;
        let eig = self.basis.eigenvalues();
        let reg = &self.regulator;
        let out: Vec<f64> = match self.variant {
            FlowVariant::Wetterich => {
                let hess = s.row_hessians();
                hess.par_iter()
                    .enumerate()
                    .map(|(i, h)| wetterich_trace(reg, eig, kappa, self.hessian_in_modes(h), active, i))
                    .collect::<Result<Vec<f64>>>()?
            }
            FlowVariant::WilsonPolchinski => {
                let hess = s.row_hessians();
                let grads = s.row_gradients();
                hess.par_iter()
                    .zip(grads.par_iter())
                    .map(|(h, g)| {
                        let (hd, gc) = match &self.jacobian {
                            None => (h.diagonal(), g.clone()),
                            Some(j) => (self.hessian_in_modes(h).diagonal(), j.tr_mul(g)),
                        };
                        wp_trace(reg, eig, kappa, &hd, &gc, active)
                    })
                    .collect()
            }
        };
        Ok(DVector::from_vec(out))
    }

    /// Right-hand side `∂_κ Y` at scale `κ`.
    pub fn rhs(&self, kappa: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        if !(kappa > 0.0) {
            return invalid(format!("scale must be positive, got {kappa}"));
        }
        let active = active_set(&self.regulator, self.basis.eigenvalues(), kappa);
        self.rhs_with(kappa, y, &active)
    }

    /// Regulator kinks strictly inside `(κ_IR, κ_UV)`.
    fn breakpoints(&self) -> Vec<f64> {
        self.regulator
            .breakpoints(self.basis.eigenvalues())
            .into_iter()
            .filter(|b| *b > self.kappa_ir && *b < self.kappa_uv)
            .collect()
    }
}

/// Gives each sine mode the Hessian of its cosine partner, with no
/// cosine-sine coupling. For mirrored ensembles this makes the real-basis
/// trace equal the sum over the signed modes `±p`.
fn mirror_sine_block(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in (2..n).step_by(2) {
        for b in 0..n {
            m[(a, b)] = 0.0;
            m[(b, a)] = 0.0;
        }
    }
    for a in (2..n).step_by(2) {
        for b in (2..n).step_by(2) {
            m[(a, b)] = m[(a - 1, b - 1)];
        }
    }
}

pub fn uniform_scales(kappa_uv: f64, kappa_ir: f64, n_t: usize) -> Vec<f64> {
    let d = (kappa_uv - kappa_ir) / n_t as f64;
    (0..=n_t).map(|l| if l == n_t { kappa_ir } else { kappa_uv - l as f64 * d }).collect()
}

struct CollocatedSystem<'a> {
    problem: &'a FlowProblem,
    /// Active set frozen on the current piece between regulator kinks.
    frozen: Option<Vec<usize>>,
}

impl CollocatedSystem<'_> {
    fn kappa(&self, t: f64) -> f64 {
        if self.problem.log_kappa {
            t.exp()
        } else {
            t
        }
    }
}

impl OdeSystem for CollocatedSystem<'_> {
    fn rhs(&mut self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.problem;
        let kappa = self.kappa(t);
        let active = match &self.frozen {
            Some(a) => a.clone(),
            None => active_set(&p.regulator, p.basis.eigenvalues(), kappa),
        };
        let mut f = p.rhs_with(kappa, y, &active)?;
        if p.log_kappa {
            f *= kappa;
        }
        Ok(f)
    }

    fn enter_piece(&mut self, from: f64, to: f64) {
        let p = self.problem;
        self.frozen = match p.regulator {
            Regulator::Litim => {
                let (a, b) = (self.kappa(from), self.kappa(to));
                Some(piece_active_set(&p.regulator, p.basis.eigenvalues(), a.min(b), a.max(b)))
            }
            Regulator::Exponential { .. } => None,
        };
    }
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub kappas: Vec<f64>,
    /// One row per output scale, one column per collocation field.
    pub values: DMatrix<f64>,
    pub stats: OdeStats,
    model: Arc<GpModel>,
    features: FeatureMap,
}

pub fn integrate(problem: &FlowProblem) -> Result<FlowTrajectory> {
    let kappas = problem.output_grid();
    let map = |k: f64| if problem.log_kappa { k.ln() } else { k };
    let outs: Vec<f64> = kappas.iter().map(|k| map(*k)).collect();
    let breaks: Vec<f64> = problem.breakpoints().into_iter().map(map).collect();
    let sys = CollocatedSystem { problem, frozen: None };
    let (rows, stats) = ode::solve(sys, outs[0], problem.y0.clone(), &outs, &breaks, problem.ode)?;
    let n = problem.ensemble.len();
    let values = DMatrix::from_fn(rows.len(), n, |l, i| rows[l][i]);
    Ok(FlowTrajectory { kappas, values, stats, model: problem.model.clone(), features: problem.features.clone() })
}

impl FlowTrajectory {
    pub fn model(&self) -> &Arc<GpModel> {
        &self.model
    }

    /// Surrogate fitted to the values at output scale `ℓ`.
    pub fn surrogate_at(&self, l: usize) -> Result<GpSurrogate> {
        if l >= self.kappas.len() {
            return invalid(format!("scale index {l} out of range 0..{}", self.kappas.len()));
        }
        self.model.fit(&self.values.row(l).transpose())
    }

    /// Surrogate predictions at every output scale for the given fields.
    pub fn predict(&self, ensemble: &Ensemble) -> Result<DMatrix<f64>> {
        let cross = self.model.cross(&self.features.apply_rows(ensemble))?;
        let mut out = DMatrix::zeros(self.kappas.len(), ensemble.len());
        for l in 0..self.kappas.len() {
            let s = self.surrogate_at(l)?;
            out.row_mut(l).copy_from(&s.predict_cross(&cross).transpose());
        }
        Ok(out)
    }
}

pub fn surrogate_at(trajectory: &FlowTrajectory, l: usize) -> Result<GpSurrogate> {
    trajectory.surrogate_at(l)
}

/// Closed-form values on a grid of scales, one row per scale.
pub fn exact_values(model: &GaussianModel, ensemble: &Ensemble, kappas: &[f64]) -> DMatrix<f64> {
    let c = ensemble.coeffs();
    DMatrix::from_fn(kappas.len(), ensemble.len(), |l, i| {
        let row: Vec<f64> = c.row(i).iter().copied().collect();
        model.value(&row, kappas[l])
    })
}

/// Per-scale relative `L²` errors and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Report {
    pub per_scale: Vec<f64>,
    pub average: f64,
    /// Scales where the exact values vanish identically; their entries are NaN
    /// and the average is NaN as well.
    pub degenerate: Vec<usize>,
}

/// `‖W − W†‖₂ / ‖W‖₂` across fields at each scale (rows).
pub fn rel_l2(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> Result<L2Report> {
    if approx.shape() != exact.shape() {
        return invalid("approximate and exact value matrices differ in shape");
    }
    let mut degenerate = Vec::new();
    let per_scale: Vec<f64> = (0..exact.nrows())
        .map(|l| {
            let den = exact.row(l).norm();
            if den == 0.0 {
                degenerate.push(l);
                f64::NAN
            } else {
                (approx.row(l) - exact.row(l)).norm() / den
            }
        })
        .collect();
    let average = per_scale.iter().sum::<f64>() / per_scale.len() as f64;
    Ok(L2Report { per_scale, average, degenerate })
}

/// Errors of the trajectory against a Gaussian model on an ensemble. For the
/// collocation ensemble itself pass `collocation = true` to use the evolved
/// values directly instead of surrogate predictions.
pub fn rel_l2_errors(
    trajectory: &FlowTrajectory,
    exact: &GaussianModel,
    ensemble: &Ensemble,
    collocation: bool,
) -> Result<L2Report> {
    let truth = exact_values(exact, ensemble, &trajectory.kappas);
    if collocation {
        if ensemble.len() != trajectory.values.ncols() {
            return invalid("collocation ensemble does not match the trajectory");
        }
        rel_l2(&trajectory.values, &truth)
    } else {
        rel_l2(&trajectory.predict(ensemble)?, &truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Covariance, Decay, EnsembleSpec, Symmetry};
    use crate::models::{GaussianWetterich, GaussianWp};
    use approx::assert_relative_eq;

    fn setup(p: usize, n: usize, seed: u64) -> (Arc<Basis>, Ensemble) {
        let b = Arc::new(Basis::continuum(p));
        let spec = EnsembleSpec {
            seed,
            cov: Covariance::Correlated,
            decay: Decay::InverseFrequency,
            symmetry: Symmetry::Mirrored,
        };
        let e = Ensemble::sample(b.clone(), n, spec).unwrap();
        (b, e)
    }

    fn settings(reg: Regulator, b: &Basis, variant: FlowVariant) -> FlowSettings {
        FlowSettings {
            regulator: reg,
            kernel: Kernel::quadratic_fourier(b),
            mean: PriorMean::Zero,
            features: FeatureMap::Mirrored,
            variant,
            kappa_uv: 10.0,
            kappa_ir: 1e-10,
            n_t: 10,
            nugget: 1e-12,
            ode: OdeOptions::default(),
            log_kappa: false,
        }
    }

    #[test]
    fn grid_contract() {
        assert_eq!(uniform_scales(10.0, 1e-10, 1), vec![10.0, 1e-10]);
        let g = uniform_scales(10.0, 2.0, 4);
        assert_eq!(g.len(), 5);
        assert_eq!(g[4], 2.0);
    }

    #[test]
    fn l2_scaling_examples() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        assert!(rel_l2(&w, &w).unwrap().per_scale.iter().all(|e| *e == 0.0));
        let r = rel_l2(&(&w * 2.0), &w).unwrap();
        assert!(r.per_scale.iter().all(|e| (*e - 1.0).abs() < 1e-15));
        let z = DMatrix::zeros(1, 2);
        let r = rel_l2(&w.rows(0, 1).into_owned(), &z).unwrap();
        assert_eq!(r.degenerate, vec![0]);
        assert!(r.average.is_nan());
    }

    #[test]
    fn wetterich_rhs_matches_closed_form() {
        let (b, e) = setup(3, 40, 1);
        let reg = Regulator::exponential(1.0).unwrap();
        let m = GaussianWetterich::new(b.clone(), reg, 1e-3, 1.0).unwrap();
        let gm = GaussianModel::Wetterich(m.clone());
        let kappa = 0.7;
        let y = exact_values(&gm, &e, &[kappa]).row(0).transpose();
        let p = FlowProblem::new(e.clone(), y.clone(), settings(reg, &b, FlowVariant::Wetterich)).unwrap();
        let f = p.rhs(kappa, &y).unwrap();
        for i in 0..e.len() {
            let c: Vec<f64> = e.coeffs().row(i).iter().copied().collect();
            let expect = gm.exact_rhs(&c, kappa).unwrap();
            assert_relative_eq!(f[i], expect, max_relative = 1e-4);
        }
    }

    #[test]
    fn wp_rhs_matches_closed_form() {
        let (b, e) = setup(2, 60, 2);
        let m = GaussianModel::Wp(GaussianWp { basis: b.clone(), regulator: Regulator::Litim });
        let kappa = 7.0;
        let y = exact_values(&m, &e, &[kappa]).row(0).transpose();
        let p = FlowProblem::new(e.clone(), y.clone(), settings(Regulator::Litim, &b, FlowVariant::WilsonPolchinski)).unwrap();
        let f = p.rhs(kappa, &y).unwrap();
        for i in 0..e.len() {
            let c: Vec<f64> = e.coeffs().row(i).iter().copied().collect();
            assert_relative_eq!(f[i], m.exact_rhs(&c, kappa).unwrap(), max_relative = 1e-4);
        }
    }

    #[test]
    fn zero_data_gives_zero_wp_rhs() {
        let (b, e) = setup(1, 5, 3);
        let p = FlowProblem::new(e, DVector::zeros(5), settings(Regulator::Litim, &b, FlowVariant::WilsonPolchinski)).unwrap();
        assert_eq!(p.rhs(3.0, &DVector::zeros(5)).unwrap().amax(), 0.0);
    }
}
