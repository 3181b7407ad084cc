//! Run configuration. Every experiment reads its own section; missing keys
//! take the defaults below.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    WpGaussian,
    WetterichGaussian,
    Phi4Continuum,
    Phi4Lattice,
    Lpa,
    TransferMatrix,
    Observables,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::WpGaussian => "wp-gaussian",
            Experiment::WetterichGaussian => "wetterich-gaussian",
            Experiment::Phi4Continuum => "phi4-continuum",
            Experiment::Phi4Lattice => "phi4-lattice",
            Experiment::Lpa => "lpa",
            Experiment::TransferMatrix => "transfer-matrix",
            Experiment::Observables => "observables",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub wp: WpConfig,
    pub wetterich: WetterichConfig,
    pub continuum: ContinuumConfig,
    pub lattice: LatticeConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            wp: WpConfig::default(),
            wetterich: WetterichConfig::default(),
            continuum: ContinuumConfig::default(),
            lattice: LatticeConfig::default(),
        }
    }
}

/// Gaussian Wilson–Polchinski benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WpConfig {
    pub p: usize,
    pub n: usize,
    pub n_test: usize,
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    pub n_t: usize,
    pub nugget: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for WpConfig {
    fn default() -> Self {
        Self { p: 20, n: 1000, n_test: 200, kappa_uv: 10.0, kappa_ir: 1e-10, n_t: 100, nugget: 1e-12, rtol: 1e-8, atol: 1e-10 }
    }
}

/// Gaussian Wetterich benchmark with the exponential regulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WetterichConfig {
    pub p: usize,
    pub n: usize,
    pub n_test: usize,
    pub gamma: f64,
    pub m2: f64,
    pub alpha: f64,
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    pub n_t: usize,
    pub nugget: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for WetterichConfig {
    fn default() -> Self {
        Self {
            p: 20,
            n: 1000,
            n_test: 200,
            gamma: 1e-3,
            m2: 1.0,
            alpha: 1.0,
            kappa_uv: 10.0,
            kappa_ir: 1e-10,
            n_t: 100,
            nugget: 1e-12,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Continuum φ⁴ Wetterich flow compared against the LPA on constant fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumConfig {
    pub p: usize,
    pub n: usize,
    pub m2: f64,
    pub lambda: f64,
    /// Length-scale of the exponential part of the additive kernel.
    pub sigma: f64,
    pub nugget: f64,
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    pub n_t: usize,
    /// Constant test fields on `[0, phi_test_max]`.
    pub n_phi: usize,
    pub phi_test_max: f64,
    /// LPA reference window `[−lpa_phi_max, lpa_phi_max]` and its grid size.
    pub lpa_phi_max: f64,
    pub lpa_points: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self {
            p: 4,
            n: 200,
            m2: -1.5,
            lambda: 1.0,
            sigma: 1.0,
            nugget: 1e-4,
            kappa_uv: 10.0,
            kappa_ir: 2.0,
            n_t: 100,
            n_phi: 41,
            phi_test_max: 4.0,
            lpa_phi_max: 8.0,
            lpa_points: 801,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Lattice φ⁴: LPA, GP predictor-projector, transfer matrix, observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_x: usize,
    pub m2: f64,
    pub lambda: f64,
    pub phi_max: f64,
    pub n_phi: usize,
    pub kappa_uv: f64,
    pub kappa_ir: f64,
    /// Recorded scales of the predictor-projector loop.
    pub steps: usize,
    pub sigma2: f64,
    pub eta: f64,
    pub beta: f64,
    /// Spectral cutoff; `min(n_phi − 1, 1024)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<usize>,
    pub nugget: f64,
    /// Tikhonov weight on `θ − θ_prev`.
    pub gamma: f64,
    pub theta0: [f64; 2],
    /// Diagonal of `Σ_a`.
    pub sigma_a: [f64; 2],
    pub max_gauss_newton: usize,
    pub damping: f64,
    pub n_sources: usize,
    pub c_min: f64,
    pub c_max: f64,
    /// Relative source step of the transfer-matrix susceptibility.
    pub chi_delta: f64,
    pub rtol: f64,
    pub atol: f64,
    pub log_kappa: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            n_x: 32,
            m2: -1.5,
            lambda: 1.0,
            phi_max: 5.0,
            n_phi: 800,
            kappa_uv: 100.0,
            kappa_ir: 1e-10,
            steps: 1000,
            sigma2: 1.0,
            eta: 0.98,
            beta: 2.0,
            q_max: None,
            nugget: 1e-11,
            gamma: 1e-6,
            theta0: [-8.0, -8.0],
            sigma_a: [1e-2, 1e-2],
            max_gauss_newton: 6,
            damping: 1.0,
            n_sources: 18,
            c_min: 1e-4,
            c_max: 10f64.powf(0.4),
            chi_delta: 1e-3,
            rtol: 1e-9,
            atol: 1e-11,
            log_kappa: false,
        }
    }
}

impl LatticeConfig {
    pub fn q_max(&self) -> usize {
        self.q_max.unwrap_or_else(|| (self.n_phi.saturating_sub(1)).min(1024))
    }
}

fn check(ok: bool, path: &str, msg: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{path}: {msg}")))
    }
}

fn check_tol(section: &str, rtol: f64, atol: f64) -> CliResult<()> {
    check(rtol > 0.0 && rtol < 1.0, &format!("{section}.rtol"), "must lie in (0, 1)")?;
    check(atol > 0.0 && atol.is_finite(), &format!("{section}.atol"), "must be positive")
}

fn check_scales(section: &str, uv: f64, ir: f64) -> CliResult<()> {
    check(ir > 0.0, &format!("{section}.kappa_ir"), "must be positive")?;
    check(uv > ir && uv.is_finite(), &format!("{section}.kappa_uv"), "must be finite and exceed kappa_ir")
}

impl Config {
    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `section.field=value` override; the value is parsed as a
    /// TOML literal, falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let bad = |msg: String| CliError::Validation(format!("--set {assignment}: {msg}"));
        let (key, raw) = assignment.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
        let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.trim().to_string()),
        };
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let mut node = &mut root;
        let path: Vec<&str> = key.trim().split('.').collect();
        for (k, part) in path.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| bad(format!("{} is not a section", path[..k].join("."))))?;
            if k + 1 == path.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        *self = root.try_into().map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
        Ok(())
    }

    /// Checks the section used by `experiment`.
    pub fn validate(&self, experiment: Experiment) -> CliResult<()> {
        match experiment {
            Experiment::WpGaussian => {
                let c = &self.wp;
                check(c.n >= 1, "wp.n", "must be at least 1")?;
                check(c.n_test >= 1, "wp.n_test", "must be at least 1")?;
                check(c.n_t >= 1, "wp.n_t", "must be at least 1")?;
                check(c.nugget > 0.0, "wp.nugget", "must be positive")?;
                check_scales("wp", c.kappa_uv, c.kappa_ir)?;
                check_tol("wp", c.rtol, c.atol)
            }
            Experiment::WetterichGaussian => {
                let c = &self.wetterich;
                check(c.n >= 1, "wetterich.n", "must be at least 1")?;
                check(c.n_test >= 1, "wetterich.n_test", "must be at least 1")?;
                check(c.n_t >= 1, "wetterich.n_t", "must be at least 1")?;
                check(c.nugget > 0.0, "wetterich.nugget", "must be positive")?;
                check(c.gamma > 0.0, "wetterich.gamma", "must be positive")?;
                check(c.m2 > 0.0, "wetterich.m2", "must be positive")?;
                check(c.alpha > 0.0, "wetterich.alpha", "must be positive")?;
                check_scales("wetterich", c.kappa_uv, c.kappa_ir)?;
                check_tol("wetterich", c.rtol, c.atol)
            }
            Experiment::Phi4Continuum => {
                let c = &self.continuum;
                check(c.p >= 1, "continuum.p", "must be at least 1")?;
                check(c.n >= 1, "continuum.n", "must be at least 1")?;
                check(c.n_t >= 1, "continuum.n_t", "must be at least 1")?;
                check(c.n_phi >= 2, "continuum.n_phi", "must be at least 2")?;
                check(c.lambda > 0.0, "continuum.lambda", "must be positive")?;
                check(c.sigma > 0.0, "continuum.sigma", "must be positive")?;
                check(c.nugget > 0.0, "continuum.nugget", "must be positive")?;
                check(c.phi_test_max > 0.0, "continuum.phi_test_max", "must be positive")?;
                check(c.lpa_phi_max > c.phi_test_max, "continuum.lpa_phi_max", "must exceed phi_test_max")?;
                check(c.lpa_points >= 5, "continuum.lpa_points", "must be at least 5")?;
                check_scales("continuum", c.kappa_uv, c.kappa_ir)?;
                check_tol("continuum", c.rtol, c.atol)
            }
            Experiment::Phi4Lattice | Experiment::Lpa | Experiment::TransferMatrix | Experiment::Observables => {
                let c = &self.lattice;
                check(c.n_x >= 2, "lattice.n_x", "must be at least 2")?;
                check(c.lambda > 0.0, "lattice.lambda", "must be positive")?;
                check(c.phi_max > 0.0, "lattice.phi_max", "must be positive")?;
                check(c.n_phi >= 5, "lattice.n_phi", "must be at least 5")?;
                check(c.steps >= 1, "lattice.steps", "must be at least 1")?;
                check(c.nugget > 0.0, "lattice.nugget", "must be positive")?;
                check(c.gamma >= 0.0, "lattice.gamma", "must be non-negative")?;
                check(c.sigma_a.iter().all(|v| *v > 0.0), "lattice.sigma_a", "entries must be positive")?;
                check(c.n_sources >= 1, "lattice.n_sources", "must be at least 1")?;
                check(c.c_min > 0.0 && c.c_max >= c.c_min, "lattice.c_min", "need 0 < c_min <= c_max")?;
                check(c.chi_delta > 0.0 && c.chi_delta < 1.0, "lattice.chi_delta", "must lie in (0, 1)")?;
                check_scales("lattice", c.kappa_uv, c.kappa_ir)?;
                check_tol("lattice", c.rtol, c.atol)
            }
        }
    }
}
