//! Experiment drivers. Each returns its numbers; writing files is left to
//! [`crate::output`].

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use frg_core::field::{uniform_grid, Basis, Covariance, Decay, Ensemble, EnsembleSpec, FeatureMap, Symmetry};
use frg_core::flow::ode::OdeOptions;
use frg_core::flow::{exact_values, integrate, rel_l2_errors, FlowProblem, FlowSettings, FlowTrajectory, FlowVariant, L2Report};
use frg_core::gp::{CosineSpectral, Kernel, PriorMean};
use frg_core::lattice::{
    gp_flow, log_sources, lpa_flow, lpa_trajectory, observables, transfer_matrix, tm_susceptibility, ContinuumModel,
    GpFlowOptions, GpFlowResult, LatticeModel, LpaOptions, LpaResult, Potential, PotentialGrid, SplinePotential,
    ThetaParams,
};
use frg_core::models::{bare_phi4, GaussianModel, GaussianWetterich, GaussianWp, Phi4Bare};
use frg_core::regulator::Regulator;

use crate::config::{ContinuumConfig, LatticeConfig, WetterichConfig, WpConfig};
use crate::error::CliResult;

/// Reference values below this magnitude are left out of relative errors.
pub const ZERO_REFERENCE: f64 = 1e-10;

/// Collocation ensemble of the Gaussian benchmarks.
pub fn gaussian_collocation(basis: Arc<Basis>, n: usize, seed: u64) -> frg_core::Result<Ensemble> {
    let spec = EnsembleSpec { seed, cov: Covariance::Correlated, decay: Decay::InverseFrequency, symmetry: Symmetry::Mirrored };
    Ensemble::sample(basis, n, spec)
}

/// Test ensemble of the Gaussian benchmarks: identity covariance, next seed.
pub fn gaussian_test(basis: Arc<Basis>, n: usize, seed: u64) -> frg_core::Result<Ensemble> {
    let spec = EnsembleSpec {
        seed: seed.wrapping_add(1),
        cov: Covariance::Identity,
        decay: Decay::InverseFrequency,
        symmetry: Symmetry::Mirrored,
    };
    Ensemble::sample(basis, n, spec)
}

pub struct GaussianRun {
    pub model: GaussianModel,
    pub trajectory: FlowTrajectory,
    pub collocation: Ensemble,
    pub test: Ensemble,
    pub coll_errors: L2Report,
    pub test_errors: L2Report,
    pub runtime: Duration,
}

struct GaussianSetup {
    model: GaussianModel,
    variant: FlowVariant,
    n: usize,
    n_test: usize,
    kappa_uv: f64,
    kappa_ir: f64,
    n_t: usize,
    nugget: f64,
    ode: OdeOptions,
}

fn gaussian(s: GaussianSetup, seed: u64) -> CliResult<GaussianRun> {
    let basis = s.model.basis().clone();
    let collocation = gaussian_collocation(basis.clone(), s.n, seed)?;
    let test = gaussian_test(basis.clone(), s.n_test, seed)?;
    let y0 = exact_values(&s.model, &collocation, &[s.kappa_uv]).row(0).transpose();
    let settings = FlowSettings {
        regulator: *s.model.regulator(),
        kernel: Kernel::quadratic_fourier(&basis),
        mean: PriorMean::Zero,
        features: FeatureMap::Mirrored,
        variant: s.variant,
        kappa_uv: s.kappa_uv,
        kappa_ir: s.kappa_ir,
        n_t: s.n_t,
        nugget: s.nugget,
        ode: s.ode,
        log_kappa: false,
    };
    let start = Instant::now();
    let problem = FlowProblem::new(collocation.clone(), y0, settings)?;
    let trajectory = integrate(&problem)?;
    let runtime = start.elapsed();
    let coll_errors = rel_l2_errors(&trajectory, &s.model, &collocation, true)?;
    let test_errors = rel_l2_errors(&trajectory, &s.model, &test, false)?;
    Ok(GaussianRun { model: s.model, trajectory, collocation, test, coll_errors, test_errors, runtime })
}

pub fn wp_gaussian(c: &WpConfig, seed: u64) -> CliResult<GaussianRun> {
    let basis = Arc::new(Basis::continuum(c.p));
    let model = GaussianModel::Wp(GaussianWp { basis, regulator: Regulator::Litim });
    gaussian(
        GaussianSetup {
            model,
            variant: FlowVariant::WilsonPolchinski,
            n: c.n,
            n_test: c.n_test,
            kappa_uv: c.kappa_uv,
            kappa_ir: c.kappa_ir,
            n_t: c.n_t,
            nugget: c.nugget,
            ode: OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() },
        },
        seed,
    )
}

pub fn wetterich_gaussian(c: &WetterichConfig, seed: u64) -> CliResult<GaussianRun> {
    let basis = Arc::new(Basis::continuum(c.p));
    let regulator = Regulator::exponential(c.alpha)?;
    let model = GaussianModel::Wetterich(GaussianWetterich::new(basis, regulator, c.gamma, c.m2)?);
    gaussian(
        GaussianSetup {
            model,
            variant: FlowVariant::Wetterich,
            n: c.n,
            n_test: c.n_test,
            kappa_uv: c.kappa_uv,
            kappa_ir: c.kappa_ir,
            n_t: c.n_t,
            nugget: c.nugget,
            ode: OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() },
        },
        seed,
    )
}

pub struct ContinuumRun {
    pub trajectory: FlowTrajectory,
    pub collocation: Ensemble,
    /// Constant test fields.
    pub phis: Vec<f64>,
    /// Surrogate on the constant fields, one row per output scale.
    pub gp: DMatrix<f64>,
    /// LPA potential at the same `(κ, φ)` points.
    pub lpa: DMatrix<f64>,
    /// `|Γ† − U| / |U|`; NaN where `|U| ≤ ZERO_REFERENCE`.
    pub rel: DMatrix<f64>,
    pub max_rel: f64,
    /// `(κ, φ)` of the largest relative difference.
    pub argmax: (f64, f64),
    pub excluded: usize,
    pub runtime_gp: Duration,
    pub runtime_lpa: Duration,
}

/// Collocation ensemble of the continuum φ⁴ run: full real basis,
/// `(1 + |p|)^(-3/2)` decay.
pub fn continuum_collocation(basis: Arc<Basis>, n: usize, seed: u64) -> frg_core::Result<Ensemble> {
    let spec = EnsembleSpec { seed, cov: Covariance::Correlated, decay: Decay::InverseFrequency32, symmetry: Symmetry::Full };
    Ensemble::sample(basis, n, spec)
}

pub fn phi4_continuum(c: &ContinuumConfig, seed: u64) -> CliResult<ContinuumRun> {
    let basis = Arc::new(Basis::continuum(c.p));
    let collocation = continuum_collocation(basis.clone(), c.n, seed)?;
    let bare = Phi4Bare::continuum(basis.clone(), c.m2, c.lambda)?;
    let y0 = (0..c.n).map(|i| bare_phi4(&bare, &collocation.field(i))).collect::<frg_core::Result<Vec<f64>>>()?;
    let points = uniform_grid(8 * basis.modes());
    let settings = FlowSettings {
        regulator: Regulator::Litim,
        kernel: Kernel::AdditiveLpa { sigma: c.sigma },
        mean: PriorMean::kinetic_pointwise(&basis, &points, 1.0, 0.0)?,
        features: FeatureMap::Pointwise(points),
        variant: FlowVariant::Wetterich,
        kappa_uv: c.kappa_uv,
        kappa_ir: c.kappa_ir,
        n_t: c.n_t,
        nugget: c.nugget,
        ode: OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() },
        log_kappa: false,
    };
    let start = Instant::now();
    let problem = FlowProblem::new(collocation.clone(), DVector::from_vec(y0), settings)?;
    let trajectory = integrate(&problem)?;
    let phis: Vec<f64> = (0..c.n_phi).map(|j| c.phi_test_max * j as f64 / (c.n_phi - 1) as f64).collect();
    let constants =
        Ensemble::from_rows(basis.clone(), DMatrix::from_fn(c.n_phi, basis.modes(), |j, a| if a == 0 { phis[j] } else { 0.0 }))?;
    let gp = trajectory.predict(&constants)?;
    let runtime_gp = start.elapsed();

    let start = Instant::now();
    let model = ContinuumModel::new(c.p, c.m2, c.lambda)?;
    let grid = PotentialGrid::bare(&model, c.lpa_phi_max, c.lpa_points)?;
    let opts = LpaOptions {
        kappa_uv: c.kappa_uv,
        kappa_ir: c.kappa_ir,
        ode: OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() },
        log_kappa: false,
    };
    let (grids, _) = lpa_trajectory(&model, &grid, &opts, &trajectory.kappas)?;
    let mut lpa = DMatrix::zeros(grids.len(), c.n_phi);
    for (l, g) in grids.iter().enumerate() {
        let spline = SplinePotential::new(g)?;
        for (j, &phi) in phis.iter().enumerate() {
            lpa[(l, j)] = spline.value(phi);
        }
    }
    let runtime_lpa = start.elapsed();

    let mut rel = DMatrix::from_element(lpa.nrows(), lpa.ncols(), f64::NAN);
    let (mut max_rel, mut argmax, mut excluded) = (0.0, (f64::NAN, f64::NAN), 0);
    for l in 0..lpa.nrows() {
        for j in 0..lpa.ncols() {
            let u = lpa[(l, j)];
            if u.abs() <= ZERO_REFERENCE {
                excluded += 1;
                continue;
            }
            let e = (gp[(l, j)] - u).abs() / u.abs();
            rel[(l, j)] = e;
            if e > max_rel {
                max_rel = e;
                argmax = (trajectory.kappas[l], phis[j]);
            }
        }
    }
    Ok(ContinuumRun { trajectory, collocation, phis, gp, lpa, rel, max_rel, argmax, excluded, runtime_gp, runtime_lpa })
}

/// Which parts of the lattice pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeParts {
    pub lpa: bool,
    pub gp: bool,
    pub tm: bool,
    pub observables: bool,
}

impl LatticeParts {
    pub const ALL: Self = Self { lpa: true, gp: true, tm: true, observables: true };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRow {
    pub c: f64,
    pub m_lpa: Option<f64>,
    pub m_gp: Option<f64>,
    pub m_tm: Option<f64>,
    pub chi_lpa: Option<f64>,
    pub chi_gp: Option<f64>,
    pub chi_tm: Option<f64>,
}

/// Counts of sources where GP is strictly closer to TM than LPA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wins {
    pub m: usize,
    pub chi: usize,
    pub total: usize,
}

impl Wins {
    pub fn fraction_m(&self) -> f64 {
        self.m as f64 / self.total as f64
    }

    pub fn fraction_chi(&self) -> f64 {
        self.chi as f64 / self.total as f64
    }
}

pub fn count_wins(rows: &[ObservableRow]) -> Option<Wins> {
    let mut w = Wins { m: 0, chi: 0, total: rows.len() };
    for r in rows {
        let beats = |gp: Option<f64>, lpa: Option<f64>, tm: Option<f64>| Some((gp? - tm?).abs() < (lpa? - tm?).abs());
        w.m += usize::from(beats(r.m_gp, r.m_lpa, r.m_tm)?);
        w.chi += usize::from(beats(r.chi_gp, r.chi_lpa, r.chi_tm)?);
    }
    Some(w)
}

pub struct LatticeRun {
    pub model: LatticeModel,
    pub grid: PotentialGrid,
    pub lpa: Option<LpaResult>,
    pub gp: Option<GpFlowResult>,
    pub rows: Vec<ObservableRow>,
    pub wins: Option<Wins>,
    pub runtime_lpa: Option<Duration>,
    pub runtime_gp: Option<Duration>,
    pub runtime_tm: Option<Duration>,
}

pub fn lattice_gp_options(c: &LatticeConfig, grid: &PotentialGrid) -> GpFlowOptions {
    GpFlowOptions {
        kappa_uv: c.kappa_uv,
        kappa_ir: c.kappa_ir,
        steps: c.steps,
        kernel: CosineSpectral { sigma2: c.sigma2, eta: c.eta, beta: c.beta, q_max: c.q_max(), phi_max: grid.phi_max() },
        sigma_a: Matrix2::from_diagonal(&Vector2::new(c.sigma_a[0], c.sigma_a[1])),
        nugget: c.nugget,
        gamma: c.gamma,
        theta0: ThetaParams { theta2: c.theta0[0], theta4: c.theta0[1] },
        max_gauss_newton: c.max_gauss_newton,
        damping: c.damping,
        ode: OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() },
        log_kappa: c.log_kappa,
    }
}

fn observe(pot: Option<&dyn Potential>, sources: &[f64]) -> frg_core::Result<Vec<Option<(f64, f64)>>> {
    match pot {
        Some(p) => Ok(observables(p, sources)?.into_iter().map(|o| Some((o.m, o.chi))).collect()),
        None => Ok(vec![None; sources.len()]),
    }
}

pub fn lattice(c: &LatticeConfig, parts: LatticeParts) -> CliResult<LatticeRun> {
    let model = LatticeModel::new(c.n_x, c.m2, c.lambda)?;
    let grid = PotentialGrid::bare(&model, c.phi_max, c.n_phi)?;
    let ode = OdeOptions { rtol: c.rtol, atol: c.atol, ..OdeOptions::default() };

    let (lpa, runtime_lpa) = if parts.lpa {
        let start = Instant::now();
        let opts = LpaOptions { kappa_uv: c.kappa_uv, kappa_ir: c.kappa_ir, ode, log_kappa: c.log_kappa };
        (Some(lpa_flow(&model, &grid, &opts)?), Some(start.elapsed()))
    } else {
        (None, None)
    };
    let (gp, runtime_gp) = if parts.gp {
        let start = Instant::now();
        (Some(gp_flow(&model, &grid, &lattice_gp_options(c, &grid))?), Some(start.elapsed()))
    } else {
        (None, None)
    };

    let sources = log_sources(c.n_sources, c.c_min, c.c_max);
    let (tm, runtime_tm) = if parts.tm {
        let start = Instant::now();
        let values = sources
            .par_iter()
            .map(|&s| {
                let m = transfer_matrix(&model, grid.points(), s, None)?.magnetization()?;
                let chi = tm_susceptibility(&model, grid.points(), s, c.chi_delta)?;
                Ok(Some((m, chi)))
            })
            .collect::<frg_core::Result<Vec<_>>>()?;
        (values, Some(start.elapsed()))
    } else {
        (vec![None; sources.len()], None)
    };

    let (lpa_obs, gp_obs) = if parts.observables {
        let spline = lpa.as_ref().map(|r| SplinePotential::new(&r.potential)).transpose()?;
        (
            observe(spline.as_ref().map(|s| s as &dyn Potential), &sources)?,
            observe(gp.as_ref().map(|g| &g.potential as &dyn Potential), &sources)?,
        )
    } else {
        (vec![None; sources.len()], vec![None; sources.len()])
    };

    let rows: Vec<ObservableRow> = sources
        .iter()
        .enumerate()
        .map(|(k, &s)| ObservableRow {
            c: s,
            m_lpa: lpa_obs[k].map(|o| o.0),
            m_gp: gp_obs[k].map(|o| o.0),
            m_tm: tm[k].map(|o| o.0),
            chi_lpa: lpa_obs[k].map(|o| o.1),
            chi_gp: gp_obs[k].map(|o| o.1),
            chi_tm: tm[k].map(|o| o.1),
        })
        .collect();
    let wins = count_wins(&rows);
    Ok(LatticeRun { model, grid, lpa, gp, rows, wins, runtime_lpa, runtime_gp, runtime_tm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: [f64; 3], chi: [f64; 3]) -> ObservableRow {
        ObservableRow {
            c: 1.0,
            m_lpa: Some(m[0]),
            m_gp: Some(m[1]),
            m_tm: Some(m[2]),
            chi_lpa: Some(chi[0]),
            chi_gp: Some(chi[1]),
            chi_tm: Some(chi[2]),
        }
    }

    #[test]
    fn wins_need_strict_improvement() {
        let rows = [row([1.0, 1.1, 1.2], [1.0, 0.9, 1.0]), row([1.0, 1.0, 1.2], [2.0, 2.0, 1.0])];
        let w = count_wins(&rows).unwrap();
        assert_eq!((w.m, w.chi, w.total), (1, 0, 2));
    }

    #[test]
    fn wins_undefined_without_all_three() {
        let mut r = row([1.0; 3], [1.0; 3]);
        r.m_gp = None;
        assert!(count_wins(&[r]).is_none());
    }

    #[test]
    fn small_gaussian_runs_are_accurate() {
        let c = WpConfig { p: 4, n: 40, n_test: 10, n_t: 10, ..Default::default() };
        let r = wp_gaussian(&c, 3).unwrap();
        assert!(r.coll_errors.average < 1e-6, "{}", r.coll_errors.average);
        assert_eq!(r.trajectory.kappas.len(), 11);
    }

    #[test]
    fn lattice_reference_only() {
        let c = LatticeConfig { n_x: 4, n_phi: 41, phi_max: 4.0, n_sources: 3, ..Default::default() };
        let parts = LatticeParts { lpa: false, gp: false, tm: true, observables: false };
        let r = lattice(&c, parts).unwrap();
        assert!(r.rows.iter().all(|o| o.m_tm.unwrap() > 0.0 && o.chi_tm.unwrap() > 0.0));
        assert!(r.wins.is_none());
    }
}
