//! Presets, overrides, verdicts and the output files behind the CLI.
//!
//! A scenario file is TOML with a `name`, an `expected` outcome and exactly
//! one of the `[sim]`, `[fluid]` or `[steady]` tables, plus an optional
//! `[verdict]` table. The shipped presets live in `presets/` and are
//! compiled in verbatim.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{FluidConfig, FluidError, FluidGrid};
use crate::sim::{run_batch, write_summary_csv, RunTrace, ScenarioConfig, SimError};
use crate::stats::{linear_fit, mean};
use crate::steady::{
    random_selection_fixed_point, solve_fixed_point, verify_orphan_persistence, SteadyConfig,
    SteadyError,
};
use crate::weight::WeightFunction;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },
    #[error("malformed scenario: {0}")]
    Config(String),
    #[error("bad override `{0}`: expected key=value with a dotted key")]
    Override(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("cannot compute a verdict: {0}")]
    Verdict(String),
    #[error("plot failed: {0}")]
    Plot(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
}

pub struct Preset {
    pub name: &'static str,
    pub source: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "fig6", source: include_str!("../presets/fig6.toml") },
    Preset { name: "fig7", source: include_str!("../presets/fig7.toml") },
    Preset { name: "fig8", source: include_str!("../presets/fig8.toml") },
    Preset { name: "rs-baseline", source: include_str!("../presets/rs-baseline.toml") },
    Preset { name: "fluid-random", source: include_str!("../presets/fluid-random.toml") },
    Preset { name: "fluid-integrable", source: include_str!("../presets/fluid-integrable.toml") },
    Preset { name: "steady-exp", source: include_str!("../presets/steady-exp.toml") },
];

pub fn find_preset(name: &str) -> Result<&'static Preset, ExperimentError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| ExperimentError::UnknownPreset {
        name: name.to_string(),
        available: PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", "),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expected {
    Diverges,
    Bounded,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictParams {
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_eps")]
    pub slope_epsilon: f64,
}

fn default_tail() -> f64 {
    crate::sim::DEFAULT_TAIL_FRACTION
}

fn default_eps() -> f64 {
    0.5
}

impl Default for VerdictParams {
    fn default() -> Self {
        Self { tail_fraction: default_tail(), slope_epsilon: default_eps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyParams {
    pub h: f64,
    pub weights: Vec<WeightFunction<f64>>,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub multi_start: bool,
}

fn default_s_max() -> f64 {
    1000.0
}

fn default_tolerance() -> f64 {
    1e-13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub expected: Expected,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid: Option<FluidConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadyParams>,
    #[serde(default)]
    pub verdict: VerdictParams,
}

/// Command-line adjustments applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub horizon: Option<u64>,
    /// `dotted.key=value`; the value is read as a TOML value, falling back
    /// to a plain string.
    pub set: Vec<String>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.seed.is_none() && self.runs.is_none() && self.horizon.is_none() && self.set.is_empty()
    }
}

impl Scenario {
    /// Loads a preset by name, or else a scenario file from disk.
    pub fn load(name_or_path: &str, overrides: &Overrides) -> Result<Self, ExperimentError> {
        let source = match find_preset(name_or_path) {
            Ok(p) => p.source.to_string(),
            Err(unknown) => {
                let path = Path::new(name_or_path);
                if !path.exists() {
                    return Err(unknown);
                }
                fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?
            }
        };
        Self::parse_with(&source, overrides)
    }

    pub fn parse_with(source: &str, overrides: &Overrides) -> Result<Self, ExperimentError> {
        let config_err = |e: toml::de::Error| ExperimentError::Config(e.to_string());
        // Deserialising the text itself keeps line numbers in errors.
        let scenario: Scenario = toml::from_str(source).map_err(config_err)?;
        let scenario = if overrides.is_empty() {
            scenario
        } else {
            let mut table: toml::Table = source.parse().map_err(config_err)?;
            apply_overrides(&mut table, overrides)?;
            table.try_into().map_err(config_err)?
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let count = [self.sim.is_some(), self.fluid.is_some(), self.steady.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if count != 1 {
            return Err(ExperimentError::Config(format!(
                "`{}` needs exactly one of [sim], [fluid], [steady]; found {count}",
                self.name
            )));
        }
        let v = &self.verdict;
        if !(v.tail_fraction > 0.0 && v.tail_fraction <= 1.0) || !(v.slope_epsilon > 0.0) {
            return Err(ExperimentError::Config(format!("invalid verdict thresholds {v:?}")));
        }
        if let Some(sim) = &self.sim {
            sim.validate().map_err(|e| ExperimentError::Config(format!("[sim]: {e}")))?;
        }
        if let Some(fluid) = &self.fluid {
            fluid.validate().map_err(|e| ExperimentError::Config(format!("[fluid]: {e}")))?;
        }
        Ok(())
    }

    /// The effective configuration as TOML, for the manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }
}

fn apply_overrides(table: &mut toml::Table, o: &Overrides) -> Result<(), ExperimentError> {
    let section = if table.contains_key("fluid") {
        "fluid"
    } else if table.contains_key("steady") {
        "steady"
    } else {
        "sim"
    };
    let mut pairs: Vec<(String, toml::Value)> = Vec::new();
    if let Some(seed) = o.seed {
        pairs.push(("sim.seed".into(), toml::Value::Integer(seed as i64)));
    }
    if let Some(runs) = o.runs {
        pairs.push(("sim.runs".into(), toml::Value::Integer(runs as i64)));
    }
    if let Some(horizon) = o.horizon {
        let key = if section == "fluid" { "fluid.t_max" } else { "sim.horizon" };
        let value = if section == "fluid" {
            toml::Value::Float(horizon as f64)
        } else {
            toml::Value::Integer(horizon as i64)
        };
        pairs.push((key.into(), value));
    }
    for raw in &o.set {
        let (key, value) = raw.split_once('=').ok_or_else(|| ExperimentError::Override(raw.clone()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ExperimentError::Override(raw.clone()));
        }
        let value = value.trim();
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        pairs.push((key.to_string(), parsed));
    }
    for (key, value) in pairs {
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().unwrap();
        let mut node = &mut *table;
        for part in parts {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| ExperimentError::Override(key.clone()))?;
        }
        node.insert(leaf.to_string(), value);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Diverges,
    Bounded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Diverges => "diverges",
            Verdict::Bounded => "bounded",
        })
    }
}

impl FromStr for Verdict {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "diverges" => Ok(Verdict::Diverges),
            "bounded" => Ok(Verdict::Bounded),
            other => Err(ExperimentError::Verdict(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictReport {
    pub verdict: Verdict,
    /// Slope of the mean series over the tail window, per unit time.
    pub slope: f64,
    pub tail_mean: f64,
    /// `slope_epsilon · tail_mean / horizon`.
    pub threshold: f64,
    pub horizon: f64,
    pub params: VerdictParams,
    pub traces: usize,
    /// Runs whose own tail slope is positive.
    pub positive_slopes: usize,
}

impl VerdictReport {
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "verdict = {}", self.verdict)?;
        writeln!(out, "tail_slope = {}", self.slope)?;
        writeln!(out, "tail_mean = {}", self.tail_mean)?;
        writeln!(out, "threshold = {}", self.threshold)?;
        writeln!(out, "horizon = {}", self.horizon)?;
        writeln!(out, "tail_fraction = {}", self.params.tail_fraction)?;
        writeln!(out, "slope_epsilon = {}", self.params.slope_epsilon)?;
        writeln!(out, "traces = {}", self.traces)?;
        writeln!(out, "positive_slopes = {}", self.positive_slopes)
    }

    /// Reads the `verdict = ...` line back.
    pub fn read_verdict(text: &str) -> Result<Verdict, ExperimentError> {
        text.lines()
            .find_map(|l| l.strip_prefix("verdict = "))
            .ok_or_else(|| ExperimentError::Verdict("no `verdict =` line".into()))?
            .parse()
    }
}

/// Tail-slope test on one time series.
pub fn series_verdict(
    times: &[f64],
    values: &[f64],
    params: VerdictParams,
) -> Result<VerdictReport, ExperimentError> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(ExperimentError::Verdict("need at least two samples".into()));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(ExperimentError::Verdict("series is identically zero".into()));
    }
    let start = RunTrace::tail_start(values.len(), params.tail_fraction);
    let (slope, _) = linear_fit(&times[start..], &values[start..]);
    let tail_mean = mean(&values[start..]);
    let horizon = times[times.len() - 1] - times[0];
    let threshold = params.slope_epsilon * tail_mean / horizon;
    Ok(VerdictReport {
        verdict: if slope > threshold { Verdict::Diverges } else { Verdict::Bounded },
        slope,
        tail_mean,
        threshold,
        horizon,
        params,
        traces: 1,
        positive_slopes: usize::from(slope > 0.0),
    })
}

/// Tail-slope test on the ensemble mean of `L(t)`.
pub fn verdict(traces: &[RunTrace], params: VerdictParams) -> Result<VerdictReport, ExperimentError> {
    if traces.len() < 2 {
        return Err(ExperimentError::Verdict(format!("need at least 2 traces, got {}", traces.len())));
    }
    let len = traces.iter().map(RunTrace::len).min().unwrap_or(0);
    if len < 2 {
        return Err(ExperimentError::Verdict("traces are shorter than two steps".into()));
    }
    if traces.iter().all(|t| t.l.iter().all(|&v| v == 0)) {
        return Err(ExperimentError::Verdict("all traces are identically zero".into()));
    }
    let n = traces.len() as f64;
    let ensemble: Vec<f64> =
        (0..len).map(|t| traces.iter().map(|tr| tr.l[t] as f64).sum::<f64>() / n).collect();
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let mut report = series_verdict(&times, &ensemble, params)?;
    report.traces = traces.len();
    report.positive_slopes =
        traces.iter().filter(|t| t.tail_slope(params.tail_fraction) > 0.0).count();
    Ok(report)
}

/// Recomputes the verdict from the CSVs in an output directory.
pub fn verdict_from_dir(dir: &Path, params: VerdictParams) -> Result<VerdictReport, ExperimentError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|e| ExperimentError::Verdict(format!("{}: {e}", p.display())))
    };
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ExperimentError::Verdict(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    runs.sort();
    if !runs.is_empty() {
        let traces = runs
            .iter()
            .map(|p| {
                RunTrace::read_csv(&read(p)?)
                    .map_err(|e| ExperimentError::Verdict(format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return verdict(&traces, params);
    }
    let fluid = dir.join("fluid.csv");
    if fluid.exists() {
        let (times, values) = read_fluid_l(&read(&fluid)?)?;
        return series_verdict(&times, &values, params);
    }
    Err(ExperimentError::Verdict(format!("no run_*.csv or fluid.csv in {}", dir.display())))
}

fn read_fluid_l(text: &str) -> Result<(Vec<f64>, Vec<f64>), ExperimentError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("t,x_total,l_total,w_total") {
        return Err(ExperimentError::Verdict("fluid.csv has an unexpected header".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let mut next = || -> Result<f64, ExperimentError> {
            fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| ExperimentError::Verdict(format!("fluid.csv line {}", i + 2)))
        };
        let t = next()?;
        let _x = next()?;
        times.push(t);
        values.push(next()?);
    }
    Ok((times, values))
}

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub verdict: Option<VerdictReport>,
    pub traces: Vec<RunTrace>,
    /// Short human-readable lines for the terminal.
    pub summary: Vec<String>,
    /// Whether the outcome matches `expected`.
    pub as_expected: bool,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::Output { path: path.to_path_buf(), source })
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Output { path: path.to_path_buf(), source }
}

fn write_with<F>(path: &Path, f: F) -> Result<(), ExperimentError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(io_at(path))
}

/// Runs a scenario and writes its outputs into `out`.
pub fn run(scenario: Scenario, out: &Path) -> Result<RunOutcome, ExperimentError> {
    fs::create_dir_all(out).map_err(io_at(out))?;
    let manifest = out.join("manifest.txt");
    write_with(&manifest, |w| {
        writeln!(w, "# tipflow {}", env!("CARGO_PKG_VERSION"))?;
        w.write_all(scenario.to_toml().as_bytes())
    })?;
    if let Some(sim) = scenario.sim.clone() {
        run_sim(scenario, &sim, out)
    } else if let Some(fluid) = scenario.fluid.clone() {
        run_fluid(scenario, fluid, out)
    } else {
        let steady = scenario.steady.clone().expect("validated");
        run_steady(scenario, &steady, out)
    }
}

fn run_sim(scenario: Scenario, sim: &ScenarioConfig, out: &Path) -> Result<RunOutcome, ExperimentError> {
    log::info!("running {} x {} steps of `{}`", sim.runs, sim.horizon, sim.policy);
    let traces = run_batch(sim)?;
    for (i, trace) in traces.iter().enumerate() {
        let path = out.join(format!("run_{i:03}.csv"));
        write_with(&path, |w| trace.write_csv(w))?;
    }
    let params = scenario.verdict;
    write_with(&out.join("summary.csv"), |w| write_summary_csv(&traces, params.tail_fraction, w))?;
    let report = if traces.len() >= 2 { Some(verdict(&traces, params)?) } else { None };
    if let Some(r) = &report {
        write_with(&out.join("verdict.txt"), |w| r.write(w))?;
    }
    let series: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|t| t.l.iter().enumerate().map(|(i, &v)| (i as f64, v as f64)).collect())
        .collect();
    plot_lines(&out.join("plot.svg"), &scenario.name, "L(t)", &series)?;

    let mean_tail = mean(&traces.iter().map(|t| t.tail_mean_l(params.tail_fraction)).collect::<Vec<_>>());
    let mut summary = vec![format!("{} runs, mean tail L = {mean_tail:.2}", traces.len())];
    if let Some(r) = &report {
        summary.push(format!(
            "verdict: {} (slope {:.4} vs threshold {:.4}; {}/{} runs with positive slope)",
            r.verdict, r.slope, r.threshold, r.positive_slopes, r.traces
        ));
    }
    let as_expected = match (scenario.expected, &report) {
        (Expected::Diverges, Some(r)) => r.verdict == Verdict::Diverges,
        (Expected::Bounded, Some(r)) => r.verdict == Verdict::Bounded,
        _ => true,
    };
    Ok(RunOutcome { scenario, verdict: report, traces, summary, as_expected })
}

fn run_fluid(scenario: Scenario, config: FluidConfig<f64>, out: &Path) -> Result<RunOutcome, ExperimentError> {
    let weights = config.weights.clone();
    let h = config.h;
    let mut grid = FluidGrid::new(config)?;
    grid.solve()?;
    write_with(&out.join("fluid.csv"), |w| grid.write_totals_csv(w))?;
    if grid.config().density_stride.is_some() {
        write_with(&out.join("density.csv"), |w| grid.write_density_csv(w))?;
    }
    let startup = grid.startup().expect("solved").clone();
    write_with(&out.join("startup.txt"), |w| {
        for (name, residual, tol) in &startup.residuals {
            writeln!(w, "{name}: residual {residual:e} (tolerance {tol:e})")?;
        }
        writeln!(w, "zeta truncation bound: {:e}", grid.truncation_bound)
    })?;
    let series = grid.series();
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let ls: Vec<f64> = series.iter().map(|r| r.l).collect();
    let report = series_verdict(&times, &ls, scenario.verdict)?;
    write_with(&out.join("verdict.txt"), |w| report.write(w))?;
    let lines = vec![
        series.iter().map(|r| (r.t, r.l)).collect(),
        series.iter().map(|r| (r.t, r.x)).collect(),
        series.iter().map(|r| (r.t, r.w)).collect(),
    ];
    plot_lines(&out.join("plot.svg"), &scenario.name, "l, x, w", &lines)?;

    let last = *series.last().unwrap();
    let mut summary = vec![
        format!("t = {}: l = {:.6}, x = {:.6}, w = {:.6}", last.t, last.l, last.x, last.w),
        format!("verdict: {} (slope {:.5} vs threshold {:.5})", report.verdict, report.slope, report.threshold),
    ];
    let as_expected = match scenario.expected {
        Expected::Diverges => report.verdict == Verdict::Diverges,
        Expected::Bounded => report.verdict == Verdict::Bounded,
        Expected::FixedPoint => {
            let unit = weights.iter().all(|g| *g == WeightFunction::uniform());
            if unit {
                let (x_star, l_star) = random_selection_fixed_point(h, weights.len())?;
                summary.push(format!("fixed point: l* = {l_star}, x* = {x_star}"));
                ((last.l - l_star) / l_star).abs() < 0.01 && ((last.x - x_star) / x_star).abs() < 0.01
            } else {
                report.verdict == Verdict::Bounded
            }
        }
    };
    Ok(RunOutcome { scenario, verdict: Some(report), traces: Vec::new(), summary, as_expected })
}

fn run_steady(scenario: Scenario, params: &SteadyParams, out: &Path) -> Result<RunOutcome, ExperimentError> {
    let mut config = SteadyConfig::new(params.h, params.weights.clone());
    config.tolerance = params.tolerance;
    config.multi_start = params.multi_start;
    let profile = solve_fixed_point(&config)?;
    let report = verify_orphan_persistence(&profile, params.s_max);
    write_with(&out.join("steady.txt"), |w| {
        report.write_text(&mut *w)?;
        writeln!(w, "iterations = {}", profile.iterations)?;
        if let Some(unique) = profile.unique_in_box() {
            writeln!(w, "unique between bounds = {unique}")?;
        }
        Ok(())
    })?;
    write_with(&out.join("steady.csv"), |w| report.write_csv(w))?;
    let samples = 400;
    let profile_lines = vec![
        (0..=samples)
            .map(|k| {
                let s = params.s_max.min(20.0 * params.h) * k as f64 / samples as f64;
                (s, profile.x(s))
            })
            .collect(),
        (0..=samples)
            .map(|k| {
                let s = params.s_max.min(20.0 * params.h) * k as f64 / samples as f64;
                (s, profile.l(s))
            })
            .collect(),
    ];
    plot_lines(&out.join("plot.svg"), &scenario.name, "x(s), l(s)", &profile_lines)?;
    let summary = vec![
        format!("zeta = {:?}, residual {:e}", report.zeta, report.residual),
        format!(
            "x_infinity = {:.8}, tail slope {:.8} (relative error {:.2e})",
            report.x_infinity,
            report.tail_slope,
            report.slope_relative_error()
        ),
    ];
    let as_expected = report.certifies_divergence() && profile.residual < 1e-8;
    Ok(RunOutcome { scenario, verdict: None, traces: Vec::new(), summary, as_expected })
}

/// Line plot of several series into an SVG file.
pub fn plot_lines(
    path: &Path,
    title: &str,
    y_label: &str,
    series: &[Vec<(f64, f64)>],
) -> Result<(), ExperimentError> {
    let plot_err = |e: String| ExperimentError::Plot(format!("{}: {e}", path.display()));
    let points = series.iter().flatten();
    let (mut x_max, mut y_max) = (f64::MIN, f64::MIN);
    let (mut x_min, mut y_min) = (f64::MAX, f64::MAX);
    for &(x, y) in points {
        if x.is_finite() && y.is_finite() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_min > x_max {
        return Err(plot_err("nothing to plot".into()));
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x_min..x_max, (y_min - pad).min(0.0)..y_max + pad)
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("t")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).mix(if series.len() > 5 { 0.45 } else { 1.0 });
        chart
            .draw_series(LineSeries::new(s.iter().copied(), color.stroke_width(1)))
            .map_err(|e| plot_err(e.to_string()))?;
    }
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}
