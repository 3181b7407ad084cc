//! Local potential approximation with finite-difference curvature.

use nalgebra::DVector;

use super::flow::{advance_pieces, second_difference, LocalFlow};
use super::{LocalModel, PotentialGrid};
use crate::error::{invalid, Result};
use crate::flow::ode::{Integrator, OdeOptions, OdeStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpaOptions {
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    pub ode: OdeOptions,
    /// Integrate in `ln κ` instead of `κ`.
    pub log_kappa: bool,
}

impl Default for LpaOptions {
    fn default() -> Self {
        Self { kappa_uv: 100.0, kappa_ir: 1e-10, ode: super::lattice_ode_options(), log_kappa: false }
    }
}

#[derive(Debug, Clone)]
pub struct LpaResult {
    pub potential: PotentialGrid,
    pub stats: OdeStats,
}

pub(crate) fn check_scales(uv: f64, ir: f64) -> Result<()> {
    if uv > ir && ir > 0.0 && uv.is_finite() {
        Ok(())
    } else {
        invalid(format!("need kappa_uv > kappa_ir > 0, got {uv} and {ir}"))
    }
}

/// Integrates the LPA flow from `κ_UV` down to `κ_IR`, starting from `grid`.
pub fn lpa_flow(model: &dyn LocalModel, grid: &PotentialGrid, opts: &LpaOptions) -> Result<LpaResult> {
    let (mut grids, stats) = run(model, grid, opts, &[opts.kappa_ir])?;
    Ok(LpaResult { potential: grids.pop().expect("one output scale"), stats })
}

/// The LPA potential at each of `scales`, which must descend from `κ_UV`
/// to `κ_IR` (both ends may be included).
pub fn lpa_trajectory(
    model: &dyn LocalModel,
    grid: &PotentialGrid,
    opts: &LpaOptions,
    scales: &[f64],
) -> Result<(Vec<PotentialGrid>, OdeStats)> {
    run(model, grid, opts, scales)
}

fn run(model: &dyn LocalModel, grid: &PotentialGrid, opts: &LpaOptions, scales: &[f64]) -> Result<(Vec<PotentialGrid>, OdeStats)> {
    check_scales(opts.kappa_uv, opts.kappa_ir)?;
    let ordered = scales.windows(2).all(|w| w[1] <= w[0]);
    let inside = scales.iter().all(|k| *k <= opts.kappa_uv && *k >= opts.kappa_ir);
    if scales.is_empty() || !ordered || !inside {
        return invalid("output scales must descend inside [kappa_ir, kappa_uv]");
    }
    let n = grid.len();
    let sys = LocalFlow {
        model,
        points: grid.points(),
        op: second_difference(n, grid.spacing()),
        offset: DVector::zeros(n),
        offset_d2: DVector::zeros(n),
        log_kappa: opts.log_kappa,
        frozen: None,
    };
    let breaks: Vec<f64> = model.thresholds().into_iter().map(|k| sys.to_time(k)).collect();
    let t0 = sys.to_time(opts.kappa_uv);
    let targets: Vec<f64> = scales.iter().map(|&k| sys.to_time(k)).collect();
    let mut integ = Integrator::new(sys, t0, grid.values().clone(), opts.ode)?;
    let mut out = Vec::with_capacity(scales.len());
    for t in targets {
        if t != integ.t() {
            advance_pieces(&mut integ, t, &breaks)?;
        }
        out.push(grid.with_values(integ.y().clone()));
    }
    Ok((out, integ.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ContinuumModel, LatticeModel};

    #[test]
    fn gaussian_limit_shifts_by_a_constant() {
        let model = LatticeModel::new(8, 0.7, 1e-12).unwrap();
        let grid = PotentialGrid::bare(&model, 3.0, 41).unwrap();
        let opts = LpaOptions { kappa_uv: 20.0, kappa_ir: 1e-3, ..Default::default() };
        let out = lpa_flow(&model, &grid, &opts).unwrap();
        let shift: Vec<f64> = out.potential.values().iter().zip(grid.values().iter()).map(|(a, b)| a - b).collect();
        for s in &shift {
            assert!((s - shift[20]).abs() < 1e-6, "{s} vs {}", shift[20]);
        }
    }

    #[test]
    fn symmetric_data_stays_even() {
        let model = LatticeModel::new(8, -1.0, 1.0).unwrap();
        let grid = PotentialGrid::bare(&model, 4.0, 41).unwrap();
        let opts = LpaOptions { kappa_uv: 20.0, kappa_ir: 1e-4, ..Default::default() };
        let out = lpa_flow(&model, &grid, &opts).unwrap();
        let v = out.potential.values();
        for j in 0..20 {
            assert!((v[j] - v[40 - j]).abs() <= 1e-10 * v[j].abs().max(1.0));
        }
    }

    #[test]
    fn continuum_gaussian_shift_matches_log_integral() {
        let model = ContinuumModel::new(2, 1.0, 1e-12).unwrap();
        let grid = PotentialGrid::bare(&model, 3.0, 31).unwrap();
        let opts = LpaOptions { kappa_uv: 10.0, kappa_ir: 2.0, ..Default::default() };
        let out = lpa_flow(&model, &grid, &opts).unwrap();
        // S = 3 above 2π and 1 below; each active mode contributes ½ ln(κ² + m²).
        let k1 = 2.0 * std::f64::consts::PI;
        let expect = -1.5 * (101.0 / (k1 * k1 + 1.0)).ln() - 0.5 * ((k1 * k1 + 1.0) / 5.0).ln();
        for (u, u0) in out.potential.values().iter().zip(grid.values().iter()) {
            assert!((u - u0 - expect).abs() < 1e-6, "{} vs {expect}", u - u0);
        }
    }

    #[test]
    fn rejects_bad_scales() {
        let model = LatticeModel::new(4, 1.0, 1.0).unwrap();
        let grid = PotentialGrid::bare(&model, 2.0, 5).unwrap();
        let opts = LpaOptions { kappa_uv: 1.0, kappa_ir: 2.0, ..Default::default() };
        assert!(lpa_flow(&model, &grid, &opts).is_err());
    }
}
