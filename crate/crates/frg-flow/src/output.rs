//! Artifact writers. Numbers are written with Rust's shortest round-trip
//! `{:e}` formatting so repeated runs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use frg_core::field::{BasisKind, Covariance, Decay, Ensemble, Symmetry};
use frg_core::flow::ode::OdeStats;
use frg_core::flow::{FlowTrajectory, L2Report};
use frg_core::gp::GpSurrogate;

use crate::config::{Config, Experiment};
use crate::error::CliResult;
use crate::experiments::{ContinuumRun, GaussianRun, LatticeRun, ObservableRow};

pub const SCHEMA_VERSION: u32 = 1;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn json_num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn strs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `name.csv` with one field per row plus the `name.json` sidecar.
pub fn write_ensemble(dir: &Path, name: &str, e: &Ensemble) -> CliResult<()> {
    let c = e.coeffs();
    let header: Vec<String> = (0..c.ncols()).map(|a| format!("mode_{a}")).collect();
    write_rows(&dir.join(format!("{name}.csv")), &header, c.row_iter().map(|r| r.iter().map(|&x| num(x)).collect()))?;
    let kind = match e.basis().kind() {
        BasisKind::ContinuumTorus => "continuum",
        BasisKind::LatticePeriodic => "lattice",
    };
    let mut meta = json!({ "kind": kind, "size": e.basis().size(), "fields": e.len() });
    if let Some(s) = e.spec() {
        meta["seed"] = json!(s.seed);
        meta["cov"] = json!(match s.cov {
            Covariance::Identity => "identity",
            Covariance::Correlated => "correlated",
        });
        meta["decay"] = json!(match s.decay {
            Decay::None => "none",
            Decay::InverseFrequency => "inverse-frequency",
            Decay::InverseFrequency32 => "inverse-frequency-3/2",
        });
        meta["symmetry"] = json!(match s.symmetry {
            Symmetry::Full => "full",
            Symmetry::Mirrored => "mirrored",
        });
    }
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&meta).unwrap() + "\n")?;
    Ok(())
}

pub fn write_trajectory(dir: &Path, t: &FlowTrajectory) -> CliResult<()> {
    let mut header = vec!["kappa".to_string()];
    header.extend((0..t.values.ncols()).map(|i| format!("Y_{i}")));
    let rows = t.kappas.iter().enumerate().map(|(l, &k)| {
        let mut r = vec![num(k)];
        r.extend(t.values.row(l).iter().map(|&y| num(y)));
        r
    });
    write_rows(&dir.join("trajectory.csv"), &header, rows)
}

pub fn write_errors(dir: &Path, kappas: &[f64], coll: &L2Report, test: &L2Report) -> CliResult<()> {
    let rows = kappas.iter().enumerate().map(|(l, &k)| vec![num(k), num(coll.per_scale[l]), num(test.per_scale[l])]);
    write_rows(&dir.join("errors.csv"), &strs(&["kappa", "rel_l2_coll", "rel_l2_test"]), rows)
}

/// Surrogate weights at the last output scale.
pub fn write_weights(dir: &Path, s: &GpSurrogate) -> CliResult<()> {
    let rows = s.weights().iter().enumerate().map(|(i, &w)| vec![i.to_string(), num(w)]);
    write_rows(&dir.join("weights.csv"), &strs(&["index", "weight"]), rows)
}

pub fn write_surface(dir: &Path, r: &ContinuumRun) -> CliResult<()> {
    let mut rows = Vec::new();
    for (l, &k) in r.trajectory.kappas.iter().enumerate() {
        for (j, &phi) in r.phis.iter().enumerate() {
            rows.push(vec![num(k), num(phi), num(r.gp[(l, j)]), num(r.lpa[(l, j)]), num(r.rel[(l, j)])]);
        }
    }
    write_rows(&dir.join("surface.csv"), &strs(&["kappa", "phi", "gamma_gp", "u_lpa", "rel_diff"]), rows)
}

pub fn write_potential(dir: &Path, r: &LatticeRun) -> CliResult<()> {
    let pts = r.grid.points();
    let rows = (0..pts.len()).map(|i| {
        vec![
            num(pts[i]),
            r.lpa.as_ref().map(|l| num(l.potential.values()[i])).unwrap_or_default(),
            r.gp.as_ref().map(|g| num(g.grid.values()[i])).unwrap_or_default(),
        ]
    });
    write_rows(&dir.join("potential.csv"), &strs(&["phi", "U_LPA", "U_GP"]), rows)
}

pub fn write_thetas(dir: &Path, r: &LatticeRun) -> CliResult<()> {
    let Some(gp) = &r.gp else { return Ok(()) };
    let rows = gp.kappas.iter().zip(&gp.thetas).map(|(&k, t)| vec![num(k), num(t.theta2), num(t.theta4)]);
    write_rows(&dir.join("theta.csv"), &strs(&["kappa", "theta2", "theta4"]), rows)
}

pub const OBSERVABLE_COLUMNS: [&str; 11] = [
    "c", "m_lpa", "m_gp", "m_tm", "chi_lpa", "chi_gp", "chi_tm", "abs_dm_lpa", "abs_dm_gp", "abs_dchi_lpa", "abs_dchi_gp",
];

fn abs_diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

pub fn write_observables(dir: &Path, rows: &[ObservableRow]) -> CliResult<()> {
    let out = rows.iter().map(|o| {
        vec![
            num(o.c),
            opt(o.m_lpa),
            opt(o.m_gp),
            opt(o.m_tm),
            opt(o.chi_lpa),
            opt(o.chi_gp),
            opt(o.chi_tm),
            opt(abs_diff(o.m_lpa, o.m_tm)),
            opt(abs_diff(o.m_gp, o.m_tm)),
            opt(abs_diff(o.chi_lpa, o.chi_tm)),
            opt(abs_diff(o.chi_gp, o.chi_tm)),
        ]
    });
    write_rows(&dir.join("observables.csv"), &strs(&OBSERVABLE_COLUMNS), out)
}

pub fn stats_json(s: &OdeStats) -> Value {
    json!({
        "steps": s.steps,
        "rejected": s.rejected,
        "rhs_evals": s.rhs_evals,
        "jacobian_evals": s.jacobian_evals,
        "factorizations": s.factorizations,
        "switched_at": s.switched_at,
    })
}

fn secs(d: Duration) -> Value {
    json!(d.as_secs_f64())
}

fn report_json(r: &L2Report) -> Value {
    json!({ "average": json_num(r.average), "final": json_num(*r.per_scale.last().unwrap_or(&f64::NAN)) })
}

pub fn gaussian_results(r: &GaussianRun) -> (Value, Value) {
    let results = json!({
        "rel_l2_coll": report_json(&r.coll_errors),
        "rel_l2_test": report_json(&r.test_errors),
        "collocation_fields": r.collocation.len(),
        "test_fields": r.test.len(),
        "integrator": stats_json(&r.trajectory.stats),
    });
    (results, json!({ "flow": secs(r.runtime) }))
}

pub fn continuum_results(r: &ContinuumRun) -> (Value, Value) {
    let per_scale: Vec<Value> = (0..r.rel.nrows())
        .map(|l| json_num(r.rel.row(l).iter().copied().filter(|x| !x.is_nan()).fold(0.0, f64::max)))
        .collect();
    let results = json!({
        "max_rel_diff": r.max_rel,
        "argmax": { "kappa": r.argmax.0, "phi": r.argmax.1 },
        "excluded_points": r.excluded,
        "max_rel_diff_per_scale": per_scale,
        "integrator": stats_json(&r.trajectory.stats),
    });
    (results, json!({ "gp": secs(r.runtime_gp), "lpa": secs(r.runtime_lpa) }))
}

pub fn lattice_results(r: &LatticeRun) -> (Value, Value) {
    let mut results = json!({});
    if let Some(l) = &r.lpa {
        results["lpa_integrator"] = stats_json(&l.stats);
    }
    if let Some(g) = &r.gp {
        let t = g.potential.theta();
        results["gp_integrator"] = stats_json(&g.stats);
        results["theta_ir"] = json!({ "theta2": t.theta2, "theta4": t.theta4 });
    }
    if let Some(w) = r.wins {
        results["wins"] = json!({
            "m": w.m,
            "chi": w.chi,
            "total": w.total,
            "fraction_m": w.fraction_m(),
            "fraction_chi": w.fraction_chi(),
        });
    }
    let mut runtimes = json!({});
    for (key, d) in [("lpa", r.runtime_lpa), ("gp", r.runtime_gp), ("tm", r.runtime_tm)] {
        if let Some(d) = d {
            runtimes[key] = secs(d);
        }
    }
    (results, runtimes)
}

pub fn summary(experiment: Experiment, config: &Config, results: Value, runtimes: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment.name(),
        "config": config,
        "results": results,
        "runtimes": runtimes,
    })
}

/// Writes `summary.json`. Runtimes vary between runs; the CSVs do not.
pub fn write_summary(dir: &Path, s: &Value) -> CliResult<PathBuf> {
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(s).unwrap() + "\n")?;
    Ok(path)
}

/// Reads a CSV written by this module back into a header and rows.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}
