use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::config::{Config, Experiment};
use crate::error::CliResult;
use crate::experiments::{self, GaussianRun, LatticeParts};
use crate::output::{self, summary};
use crate::plots;

fn gaussian_artifacts(out: &Path, r: &GaussianRun, plot: bool) -> CliResult<(Value, Value)> {
    output::write_ensemble(out, "collocation", &r.collocation)?;
    output::write_ensemble(out, "test", &r.test)?;
    output::write_trajectory(out, &r.trajectory)?;
    output::write_errors(out, &r.trajectory.kappas, &r.coll_errors, &r.test_errors)?;
    output::write_weights(out, &r.trajectory.surrogate_at(r.trajectory.kappas.len() - 1)?)?;
    if plot {
        plots::gaussian(out, r)?;
    }
    Ok(output::gaussian_results(r))
}

fn lattice_parts(experiment: Experiment) -> LatticeParts {
    match experiment {
        Experiment::Lpa => LatticeParts { lpa: true, gp: false, tm: false, observables: false },
        Experiment::TransferMatrix => LatticeParts { lpa: false, gp: false, tm: true, observables: false },
        Experiment::Observables => LatticeParts { lpa: true, gp: false, tm: true, observables: true },
        _ => LatticeParts::ALL,
    }
}

/// Runs one experiment, writes its artifacts into `out` and returns the
/// summary that was written to `summary.json`.
pub fn execute(experiment: Experiment, config: &Config, out: &Path, plot: bool) -> CliResult<Value> {
    config.validate(experiment)?;
    fs::create_dir_all(out)?;
    let seed = config.seed;
    let (results, runtimes) = match experiment {
        Experiment::WpGaussian => gaussian_artifacts(out, &experiments::wp_gaussian(&config.wp, seed)?, plot)?,
        Experiment::WetterichGaussian => {
            gaussian_artifacts(out, &experiments::wetterich_gaussian(&config.wetterich, seed)?, plot)?
        }
        Experiment::Phi4Continuum => {
            let r = experiments::phi4_continuum(&config.continuum, seed)?;
            output::write_ensemble(out, "collocation", &r.collocation)?;
            output::write_trajectory(out, &r.trajectory)?;
            output::write_surface(out, &r)?;
            output::write_weights(out, &r.trajectory.surrogate_at(r.trajectory.kappas.len() - 1)?)?;
            if plot {
                plots::continuum(out, &r)?;
            }
            output::continuum_results(&r)
        }
        Experiment::Phi4Lattice | Experiment::Lpa | Experiment::TransferMatrix | Experiment::Observables => {
            let parts = lattice_parts(experiment);
            let r = experiments::lattice(&config.lattice, parts)?;
            if parts.lpa || parts.gp {
                output::write_potential(out, &r)?;
                output::write_thetas(out, &r)?;
            }
            if parts.tm || parts.observables {
                output::write_observables(out, &r.rows)?;
            }
            if plot {
                plots::lattice(out, &r)?;
            }
            output::lattice_results(&r)
        }
    };
    let s = summary(experiment, config, results, runtimes);
    output::write_summary(out, &s)?;
    Ok(s)
}
