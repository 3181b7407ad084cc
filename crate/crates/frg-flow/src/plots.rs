//! Static SVG line charts of the run artifacts.

use std::path::Path;

use plotters::coord::ranged1d::{AsRangedCoord, ValueFormatter};
use plotters::prelude::*;

use crate::error::{CliError, CliResult};
use crate::experiments::{ContinuumRun, GaussianRun, LatticeRun, ObservableRow};

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.to_string(), points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axes {
    pub log_x: bool,
    pub log_y: bool,
}

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(format!("plot: {e}"))
}

fn bounds(values: impl Iterator<Item = f64>, log: bool) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite() && (!log || *v > 0.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    Some(if log {
        (lo / 1.5, hi * 1.5)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    })
}

fn tick_label(log: bool) -> impl Fn(&f64) -> String {
    move |v: &f64| {
        if log {
            format!("{v:.0e}")
        } else {
            let s = format!("{v:.3}");
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        }
    }
}

fn draw<X, Y>(path: &Path, title: &str, labels: (&str, &str), x: X, y: Y, series: &[Series], axes: Axes) -> CliResult<()>
where
    X: AsRangedCoord<Value = f64>,
    Y: AsRangedCoord<Value = f64>,
    X::CoordDescType: ValueFormatter<f64>,
    Y::CoordDescType: ValueFormatter<f64>,
{
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x, y)
        .map_err(plot_err)?;
    let (fx, fy) = (tick_label(axes.log_x), tick_label(axes.log_y));
    chart
        .configure_mesh()
        .x_desc(labels.0)
        .y_desc(labels.1)
        .x_label_formatter(&fx)
        .y_label_formatter(&fy)
        .draw()
        .map_err(plot_err)?;
    for (k, s) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let pts = s
            .points
            .iter()
            .copied()
            .filter(|&(a, b)| a.is_finite() && b.is_finite() && (!axes.log_x || a > 0.0) && (!axes.log_y || b > 0.0));
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.name.clone())
            .legend(move |(a, b)| PathElement::new(vec![(a, b), (a + 18, b)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Line chart; silently skipped when no series has a drawable point.
pub fn line_chart(path: &Path, title: &str, labels: (&str, &str), series: &[Series], axes: Axes) -> CliResult<()> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let Some((x0, x1)) = bounds(all().map(|p| p.0), axes.log_x) else { return Ok(()) };
    let Some((y0, y1)) = bounds(all().map(|p| p.1), axes.log_y) else { return Ok(()) };
    match (axes.log_x, axes.log_y) {
        (false, false) => draw(path, title, labels, x0..x1, y0..y1, series, axes),
        (true, false) => draw(path, title, labels, (x0..x1).log_scale(), y0..y1, series, axes),
        (false, true) => draw(path, title, labels, x0..x1, (y0..y1).log_scale(), series, axes),
        (true, true) => draw(path, title, labels, (x0..x1).log_scale(), (y0..y1).log_scale(), series, axes),
    }
}

const LOG_Y: Axes = Axes { log_x: false, log_y: true };
const LINEAR: Axes = Axes { log_x: false, log_y: false };
const LOG_LOG: Axes = Axes { log_x: true, log_y: true };

pub fn gaussian(dir: &Path, r: &GaussianRun) -> CliResult<()> {
    let k = &r.trajectory.kappas;
    let pts = |v: &[f64]| k.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let series =
        [Series::new("collocation", pts(&r.coll_errors.per_scale)), Series::new("test", pts(&r.test_errors.per_scale))];
    line_chart(&dir.join("errors.svg"), "relative L2 error", ("kappa", "error"), &series, LOG_Y)
}

pub fn continuum(dir: &Path, r: &ContinuumRun) -> CliResult<()> {
    let n = r.trajectory.kappas.len();
    let mut series = Vec::new();
    for l in [0, n / 2, n - 1] {
        let kappa = r.trajectory.kappas[l];
        let row = |m: &nalgebra::DMatrix<f64>| r.phis.iter().enumerate().map(|(j, &p)| (p, m[(l, j)])).collect();
        series.push(Series::new(&format!("GP, kappa = {kappa}"), row(&r.gp)));
        series.push(Series::new(&format!("LPA, kappa = {kappa}"), row(&r.lpa)));
    }
    line_chart(&dir.join("potential.svg"), "effective potential", ("phi", "U"), &series, LINEAR)?;
    let worst: Vec<(f64, f64)> = (0..n)
        .map(|l| (r.trajectory.kappas[l], r.rel.row(l).iter().copied().filter(|x| !x.is_nan()).fold(0.0, f64::max)))
        .collect();
    line_chart(
        &dir.join("rel_diff.svg"),
        "max relative difference GP vs LPA",
        ("kappa", "max |rel diff|"),
        &[Series::new("max over phi", worst)],
        LOG_Y,
    )
}

fn observable(rows: &[ObservableRow], f: impl Fn(&ObservableRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|o| Some((o.c, f(o)?))).collect()
}

pub fn lattice(dir: &Path, r: &LatticeRun) -> CliResult<()> {
    let pts = r.grid.points();
    let mut pot = Vec::new();
    if let Some(l) = &r.lpa {
        pot.push(Series::new("LPA", pts.iter().copied().zip(l.potential.values().iter().copied()).collect()));
    }
    if let Some(g) = &r.gp {
        pot.push(Series::new("GP", pts.iter().copied().zip(g.grid.values().iter().copied()).collect()));
    }
    line_chart(&dir.join("potential.svg"), "IR potential", ("phi", "U"), &pot, LINEAR)?;

    let rows = &r.rows;
    let m = [
        Series::new("TM", observable(rows, |o| o.m_tm)),
        Series::new("LPA", observable(rows, |o| o.m_lpa)),
        Series::new("GP", observable(rows, |o| o.m_gp)),
    ];
    line_chart(&dir.join("magnetization.svg"), "magnetization", ("c", "m"), &m, LOG_LOG)?;
    let chi = [
        Series::new("TM", observable(rows, |o| o.chi_tm)),
        Series::new("LPA", observable(rows, |o| o.chi_lpa)),
        Series::new("GP", observable(rows, |o| o.chi_gp)),
    ];
    line_chart(&dir.join("susceptibility.svg"), "susceptibility", ("c", "chi"), &chi, LOG_LOG)?;
    let err = |f: fn(&ObservableRow) -> (Option<f64>, Option<f64>)| {
        observable(rows, move |o| {
            let (a, b) = f(o);
            Some((a? - b?).abs())
        })
    };
    let errors = [
        Series::new("|m_LPA - m_TM|", err(|o| (o.m_lpa, o.m_tm))),
        Series::new("|m_GP - m_TM|", err(|o| (o.m_gp, o.m_tm))),
        Series::new("|chi_LPA - chi_TM|", err(|o| (o.chi_lpa, o.chi_tm))),
        Series::new("|chi_GP - chi_TM|", err(|o| (o.chi_gp, o.chi_tm))),
    ];
    line_chart(&dir.join("observable_errors.svg"), "absolute error against TM", ("c", "error"), &errors, LOG_LOG)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_bounds_skip_nonpositive() {
        assert_eq!(bounds([0.0, -1.0].into_iter(), true), None);
        let (lo, hi) = bounds([1e-3, 0.0, 10.0].into_iter(), true).unwrap();
        assert!(lo < 1e-3 && hi > 10.0);
    }

    #[test]
    fn writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.svg");
        let s = [Series::new("x", vec![(1.0, 1.0), (10.0, 100.0)])];
        line_chart(&path, "t", ("x", "y"), &s, LOG_LOG).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("<svg"));
    }
}
