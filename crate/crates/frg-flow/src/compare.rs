//! Joins the CSV artifacts of several runs of the same experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::experiments::{count_wins, ObservableRow, Wins};
use crate::output::{read_csv, OBSERVABLE_COLUMNS, SCHEMA_VERSION};

/// Artifact compared for each experiment.
fn artifact(experiment: &str) -> Option<&'static str> {
    match experiment {
        "wp-gaussian" | "wetterich-gaussian" => Some("errors.csv"),
        "phi4-continuum" => Some("surface.csv"),
        "lpa" => Some("potential.csv"),
        "phi4-lattice" | "transfer-matrix" | "observables" => Some("observables.csv"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub dir: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub wins: Option<Wins>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub experiment: String,
    pub artifact: String,
    pub runs: Vec<RunTable>,
    /// Largest absolute difference per column against the first run, one
    /// entry per further run. Empty cells compare equal only to empty cells.
    pub max_abs_diff: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn schema(msg: String) -> CliError {
    CliError::Validation(format!("schema mismatch: {msg}"))
}

fn read_summary(dir: &Path) -> CliResult<(String, u64)> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| schema(format!("{}: {e}", path.display())))?;
    let exp = v["experiment"].as_str().ok_or_else(|| schema(format!("{}: no experiment", path.display())))?;
    let version = v["schema_version"].as_u64().ok_or_else(|| schema(format!("{}: no schema_version", path.display())))?;
    Ok((exp.to_string(), version))
}

fn cell(s: &str) -> Option<f64> {
    if s.is_empty() {
        None
    } else {
        s.parse().ok()
    }
}

fn observable_rows(header: &[String], rows: &[Vec<String>]) -> Option<Vec<ObservableRow>> {
    if header.iter().map(String::as_str).ne(OBSERVABLE_COLUMNS) {
        return None;
    }
    rows.iter()
        .map(|r| {
            Some(ObservableRow {
                c: cell(&r[0])?,
                m_lpa: cell(&r[1]),
                m_gp: cell(&r[2]),
                m_tm: cell(&r[3]),
                chi_lpa: cell(&r[4]),
                chi_gp: cell(&r[5]),
                chi_tm: cell(&r[6]),
            })
        })
        .collect()
}

fn column_diffs(a: &RunTable, b: &RunTable) -> CliResult<Vec<f64>> {
    if a.header != b.header || a.rows.len() != b.rows.len() {
        return Err(schema(format!("{} and {} have different tables", a.dir.display(), b.dir.display())));
    }
    let mut out = vec![0.0f64; a.header.len()];
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
            let d = match (cell(x), cell(y)) {
                _ if x == y => 0.0,
                (Some(x), Some(y)) => (x - y).abs(),
                _ => f64::INFINITY,
            };
            out[k] = out[k].max(d);
        }
    }
    Ok(out)
}

pub fn compare(dirs: &[PathBuf]) -> CliResult<Comparison> {
    if dirs.is_empty() {
        return Err(CliError::Validation("compare needs at least one run directory".into()));
    }
    let (experiment, version) = read_summary(&dirs[0])?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(schema(format!("unsupported schema_version {version}")));
    }
    let name = artifact(&experiment).ok_or_else(|| schema(format!("unknown experiment {experiment}")))?;
    let mut runs = Vec::new();
    for d in dirs {
        let (e, v) = read_summary(d)?;
        if e != experiment || v != version {
            return Err(schema(format!("{} is a {e} run, expected {experiment}", d.display())));
        }
        let (header, rows) = read_csv(&d.join(name))?;
        let wins = observable_rows(&header, &rows).and_then(|o| count_wins(&o));
        runs.push(RunTable { dir: d.clone(), header, rows, wins });
    }
    let max_abs_diff = runs[1..].iter().map(|r| column_diffs(&runs[0], r)).collect::<CliResult<Vec<_>>>()?;
    let mut warnings = Vec::new();
    if runs.len() == 1 {
        warnings.push("single run: nothing to compare against".to_string());
    }
    Ok(Comparison { experiment, artifact: name.to_string(), runs, max_abs_diff, warnings })
}

impl Comparison {
    pub fn to_json(&self) -> Value {
        let runs: Vec<Value> = self
            .runs
            .iter()
            .map(|r| {
                let mut v = json!({ "dir": r.dir.display().to_string(), "rows": r.rows.len() });
                if let Some(w) = r.wins {
                    v["wins"] = json!({ "m": w.m, "chi": w.chi, "total": w.total,
                        "fraction_m": w.fraction_m(), "fraction_chi": w.fraction_chi() });
                }
                v
            })
            .collect();
        let diffs: Vec<Value> = self
            .max_abs_diff
            .iter()
            .zip(&self.runs[1..])
            .map(|(d, r)| {
                let cols: serde_json::Map<String, Value> = r
                    .header
                    .iter()
                    .zip(d)
                    .map(|(h, &x)| (h.clone(), if x.is_finite() { json!(x) } else { json!("mismatch") }))
                    .collect();
                json!({ "dir": r.dir.display().to_string(), "max_abs_diff": cols })
            })
            .collect();
        json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "artifact": self.artifact,
            "runs": runs,
            "differences": diffs,
            "warnings": self.warnings,
        })
    }

    /// Plain-text report: per-run error table against TM where available,
    /// then the column differences.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} ({})", self.experiment, self.artifact);
        for r in &self.runs {
            let _ = writeln!(s, "\n{}", r.dir.display());
            if let Some(obs) = observable_rows(&r.header, &r.rows) {
                let _ = writeln!(s, "{:>12} {:>12} {:>12} {:>12} {:>12}", "c", "|dm| LPA", "|dm| GP", "|dchi| LPA", "|dchi| GP");
                let f = |a: Option<f64>, b: Option<f64>| match (a, b) {
                    (Some(a), Some(b)) => format!("{:.4e}", (a - b).abs()),
                    _ => "-".to_string(),
                };
                for o in &obs {
                    let _ = writeln!(
                        s,
                        "{:>12.4e} {:>12} {:>12} {:>12} {:>12}",
                        o.c,
                        f(o.m_lpa, o.m_tm),
                        f(o.m_gp, o.m_tm),
                        f(o.chi_lpa, o.chi_tm),
                        f(o.chi_gp, o.chi_tm)
                    );
                }
            }
            if let Some(w) = r.wins {
                let _ = writeln!(s, "GP closer to TM than LPA: m {}/{}, chi {}/{}", w.m, w.total, w.chi, w.total);
            }
        }
        for (d, r) in self.max_abs_diff.iter().zip(&self.runs[1..]) {
            let _ = writeln!(s, "\nmax |difference| of {} against {}", r.dir.display(), self.runs[0].dir.display());
            for (h, x) in r.header.iter().zip(d) {
                let _ = writeln!(s, "  {h:<14} {x:e}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "\nwarning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_run(dir: &Path, experiment: &str, csv: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join("summary.json"), format!(r#"{{"schema_version":1,"experiment":"{experiment}"}}"#)).unwrap();
        fs::write(dir.join(artifact(experiment).unwrap()), csv).unwrap();
    }

    const OBS: &str = "c,m_lpa,m_gp,m_tm,chi_lpa,chi_gp,chi_tm,abs_dm_lpa,abs_dm_gp,abs_dchi_lpa,abs_dchi_gp\n\
                       1e-1,1e0,1.1e0,1.2e0,2e0,2e0,3e0,,,,\n";

    #[test]
    fn identical_runs_have_zero_differences() {
        let t = tempfile::tempdir().unwrap();
        let (a, b) = (t.path().join("a"), t.path().join("b"));
        fake_run(&a, "phi4-lattice", OBS);
        fake_run(&b, "phi4-lattice", OBS);
        let c = compare(&[a, b]).unwrap();
        assert!(c.max_abs_diff[0].iter().all(|&d| d == 0.0));
        let w = c.runs[0].wins.unwrap();
        assert_eq!((w.m, w.chi, w.total), (1, 0, 1));
    }

    #[test]
    fn single_run_warns() {
        let t = tempfile::tempdir().unwrap();
        fake_run(t.path(), "wp-gaussian", "kappa,rel_l2_coll,rel_l2_test\n1e1,0e0,0e0\n");
        let c = compare(&[t.path().to_path_buf()]).unwrap();
        assert!(c.max_abs_diff.is_empty());
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn mixed_experiments_are_rejected() {
        let t = tempfile::tempdir().unwrap();
        let (a, b) = (t.path().join("a"), t.path().join("b"));
        fake_run(&a, "phi4-lattice", OBS);
        fake_run(&b, "wp-gaussian", "kappa,rel_l2_coll,rel_l2_test\n");
        let e = compare(&[a, b]).unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_VALIDATION);
    }

    #[test]
    fn differing_values_are_measured() {
        let t = tempfile::tempdir().unwrap();
        let (a, b) = (t.path().join("a"), t.path().join("b"));
        fake_run(&a, "wp-gaussian", "kappa,rel_l2_coll,rel_l2_test\n1e1,1e-8,2e-8\n");
        fake_run(&b, "wp-gaussian", "kappa,rel_l2_coll,rel_l2_test\n1e1,1e-8,3e-8\n");
        let d = &compare(&[a, b]).unwrap().max_abs_diff[0];
        assert_eq!(d[1], 0.0);
        assert!((d[2] - 1e-8).abs() < 1e-20);
    }
}
