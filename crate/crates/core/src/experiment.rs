//! Experiment harness: configuration, convergence ladders against a
//! reference solution, timing, and CSV output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eulerian::{project, AlphaProfile, EulerianState, InitialData};
use crate::evolution::{evolve_with, plan, EvolutionConfig, Snapshot, Solution};
use crate::lagrangian::to_lagrangian;
use crate::oracle::{fine_reference, Cusp, ExactMultipeakon};
use crate::piecewise::{merge_knots, sup_norm_diff, MonotoneStep, PiecewiseLinear};

pub const CONFIG_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "dx,sup_u_err,F_inf_err,N,iterations,time_minimal_s,time_full_s";

/// Number of evenly spaced comparison times used with a fine reference.
pub const FINE_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Multipeakon,
    Cusp {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// Piecewise-linear `u` and `F` on common nodes; `f` holds left limits
    /// of `F` and `f_right` its right limits where `F` jumps.
    Nodes {
        x: Vec<f64>,
        u: Vec<f64>,
        f: Vec<f64>,
        #[serde(default)]
        f_right: Option<Vec<f64>>,
    },
}

fn default_beta() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSpec {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Exact,
    Fine(f64),
    None,
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Reference::Exact),
            "none" => Ok(Reference::None),
            _ => {
                let dx = s
                    .strip_prefix("fine:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .filter(|d| *d > 0.0 && d.is_finite())
                    .ok_or_else(|| {
                        Error::Configuration(format!(
                            "reference must be exact, none or fine:<dx>, got {s:?}"
                        ))
                    })?;
                Ok(Reference::Fine(dx))
            }
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Exact => write!(f, "exact"),
            Reference::Fine(dx) => write!(f, "fine:{dx}"),
            Reference::None => write!(f, "none"),
        }
    }
}

impl Serialize for Reference {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Reference {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub data: DataSpec,
    /// Overrides the dissipation profile of the builtin data; zero if absent
    /// for node data.
    #[serde(default)]
    pub alpha: Option<AlphaSpec>,
    pub dx_list: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Extra comparison times; node dumps are written at these and at `T`.
    #[serde(default)]
    pub query_times: Vec<f64>,
    #[serde(default = "yes")]
    pub minimal_steps: bool,
    /// Defaults to `exact` for the multipeakon and `none` otherwise.
    #[serde(default)]
    pub reference: Option<Reference>,
    /// Measure wall time with and without minimal steps. Off by default so
    /// that reruns produce identical files.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "yes")]
    pub check_invariants: bool,
}

fn yes() -> bool {
    true
}

fn default_iterations() -> usize {
    3
}

impl ExperimentConfig {
    pub fn new(data: DataSpec, dx_list: Vec<f64>, t_final: f64) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            data,
            alpha: None,
            dx_list,
            t_final,
            query_times: Vec::new(),
            minimal_steps: true,
            reference: None,
            timing: false,
            out_dir: None,
            max_iterations: default_iterations(),
            check_invariants: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Configuration(format!("invalid configuration: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported configuration version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.dx_list.is_empty() {
            return bad("dx_list is empty".into());
        }
        if let Some(dx) = self.dx_list.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return bad(format!("dx must be positive, got {dx}"));
        }
        let mut sorted = self.dx_list.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("dx_list contains duplicates".into());
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t_final));
        }
        if let Some(t) = self
            .query_times
            .iter()
            .find(|t| !(0.0..=self.t_final).contains(*t))
        {
            return bad(format!("query time {t} outside [0, T]"));
        }
        if self.max_iterations < 2 {
            return bad("max_iterations must be at least 2".into());
        }
        if let DataSpec::Cusp { beta } = self.data {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("beta must lie in [0, 1), got {beta}"));
            }
        }
        if self.reference() == Reference::Exact
            && (self.data != DataSpec::Multipeakon || self.alpha.is_some())
        {
            return bad("the exact reference is only available for the builtin multipeakon".into());
        }
        if let Reference::Fine(r) = self.reference() {
            if let Some(dx) = self.dx_list.iter().find(|d| **d < r) {
                return bad(format!("fine reference dx {r} exceeds ladder dx {dx}"));
            }
        }
        self.alpha_profile()?;
        self.initial_data()?;
        Ok(())
    }

    pub fn reference(&self) -> Reference {
        self.reference.unwrap_or(match self.data {
            DataSpec::Multipeakon if self.alpha.is_none() => Reference::Exact,
            _ => Reference::None,
        })
    }

    pub fn evolution_config(&self, minimal_steps: bool) -> EvolutionConfig {
        EvolutionConfig {
            minimal_steps,
            dt_cap: None,
            max_iterations: self.max_iterations,
            check_invariants: self.check_invariants,
        }
    }

    pub fn alpha_profile(&self) -> Result<AlphaProfile> {
        if let Some(a) = &self.alpha {
            return AlphaProfile::new(a.nodes.clone(), a.values.clone())
                .map_err(|e| Error::Configuration(format!("invalid alpha: {e}")));
        }
        match self.data {
            DataSpec::Multipeakon => Ok(ExactMultipeakon.alpha()),
            DataSpec::Cusp { beta } => Cusp { beta }.alpha(),
            DataSpec::Nodes { .. } => AlphaProfile::constant(0.0),
        }
    }

    pub fn initial_data(&self) -> Result<Box<dyn InitialData>> {
        match &self.data {
            DataSpec::Multipeakon => Ok(Box::new(ExactMultipeakon.initial_state())),
            DataSpec::Cusp { beta } => Ok(Box::new(Cusp { beta: *beta })),
            DataSpec::Nodes { x, u, f, f_right } => {
                let cfg = |e: Error| Error::Configuration(format!("invalid node data: {e}"));
                let u = PiecewiseLinear::new(x.clone(), u.clone()).map_err(cfg)?;
                let right = f_right.clone().unwrap_or_else(|| f.clone());
                let f = MonotoneStep::new(x.clone(), f.clone(), right).map_err(cfg)?;
                let s = EulerianState::initial(u, f.continuous_part(), f.jump_part());
                s.validate_initial()
                    .map_err(|v| Error::Configuration(format!("invalid node data: {v}")))?;
                Ok(Box::new(s))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub dx: f64,
    /// Largest sup-norm error of `u` over the comparison times.
    pub sup_u_err: Option<f64>,
    /// Error of the total energy at `T`.
    pub f_inf_err: Option<f64>,
    /// Number of partition intervals.
    pub n: usize,
    pub iterations: usize,
    pub time_minimal_s: Option<f64>,
    pub time_full_s: Option<f64>,
    pub dt: f64,
    pub final_energy: f64,
    pub comparison_times: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub reference: String,
    pub t_final: f64,
    pub rows: Vec<ErrorRow>,
}

/// Formats with 17 significant digits; `None` becomes an empty field.
fn fmt17(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => String::new(),
    }
}

pub fn write_csv<W: Write>(report: &ErrorReport, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt17(Some(r.dx)),
            fmt17(r.sup_u_err),
            fmt17(r.f_inf_err),
            r.n,
            r.iterations,
            fmt17(r.time_minimal_s),
            fmt17(r.time_full_s)
        )?;
    }
    Ok(())
}

pub fn emit_csv(report: &ErrorReport, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(report, &mut buf)?;
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Node values of `u` and the left and right limits of `F` and `G`.
pub fn write_state_csv<W: Write>(s: &EulerianState, mut w: W) -> Result<()> {
    let f = s.f();
    let x = merge_knots(s.u.nodes(), f.nodes());
    let x = merge_knots(&x, s.g.nodes());
    writeln!(w, "x,u,F_left,F_right,G_left,G_right")?;
    for &p in &x {
        let (fl, fr) = f.limits(p);
        let (gl, gr) = s.g.limits(p);
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p,
            s.u.eval(p),
            fl,
            fr,
            gl,
            gr
        )?;
    }
    Ok(())
}

pub fn write_energy_csv<W: Write>(sol: &Solution, mut w: W) -> Result<()> {
    writeln!(w, "t,F_inf")?;
    for (t, e) in &sol.energy {
        writeln!(w, "{t:.16e},{e:.16e}")?;
    }
    Ok(())
}

fn label(x: f64) -> String {
    format!("{x:e}")
}

/// Outcome of one streamed run.
pub struct RunOutcome {
    pub solution: Solution,
    /// Wall time of the run without the time spent in the snapshot handler.
    pub elapsed: Duration,
}

/// Projects, maps and evolves, handing snapshots at `query_times` to `sink`.
pub fn run_single(
    data: &dyn InitialData,
    alpha: &AlphaProfile,
    dx: f64,
    t_final: f64,
    config: &EvolutionConfig,
    query_times: &[f64],
    sink: &mut dyn FnMut(Snapshot) -> Result<()>,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut in_sink = Duration::ZERO;
    let projected = project(data, dx)?;
    let grid = to_lagrangian(&projected)?;
    let solution = evolve_with(&grid, alpha, dx, t_final, config, query_times, &mut |s| {
        let t0 = Instant::now();
        let r = sink(s);
        in_sink += t0.elapsed();
        r
    })?;
    Ok(RunOutcome {
        solution,
        elapsed: start.elapsed().saturating_sub(in_sink),
    })
}

fn check_solution(sol: &Solution) -> Result<()> {
    if let Some(r) = &sol.invariants {
        let v = r.violations();
        if !v.is_empty() {
            return Err(Error::InvariantViolation(v.join("; ")));
        }
    }
    if !sol.energy_nonincreasing() {
        return Err(Error::InvariantViolation("energy increased".into()));
    }
    Ok(())
}

/// Runs the ladder. With an output directory, writes `errors.csv`,
/// `energy_dx<dx>.csv`, node dumps `nodes_dx<dx>_t<t>.csv` at the extra
/// query times and `T`, and `summary.json`.
pub fn run(config: &ExperimentConfig) -> Result<ErrorReport> {
    config.validate()?;
    let data = config.initial_data()?;
    let alpha = config.alpha_profile()?;
    let t_final = config.t_final;
    let reference = config.reference();
    let out = config.out_dir.as_deref();

    let mut dump_times = config.query_times.clone();
    dump_times.push(t_final);
    dump_times.sort_by(f64::total_cmp);
    dump_times.dedup();

    let fine = match reference {
        Reference::Fine(dx_ref) => {
            let mut times: Vec<f64> = (1..=FINE_SAMPLES)
                .map(|k| t_final * k as f64 / FINE_SAMPLES as f64)
                .collect();
            times.extend(&dump_times);
            times.push(0.0);
            let cache = out.map(|d| d.join("cache"));
            Some(fine_reference(
                data.as_ref(),
                &alpha,
                dx_ref,
                t_final,
                &times,
                cache.as_deref(),
            )?)
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(config.dx_list.len());
    for &dx in &config.dx_list {
        let cfg = config.evolution_config(config.minimal_steps);
        let grid = to_lagrangian(&project(data.as_ref(), dx)?)?;
        let times: Vec<f64> = match &fine {
            Some(f) => f.iter().map(|(t, _)| *t).collect(),
            None => {
                let p = plan(&grid, &alpha, dx, t_final, &cfg)?;
                let mut t = p.partition.taus.clone();
                t.extend(&dump_times);
                t
            }
        };
        let mut sup_u: Option<f64> = None;
        let mut compared = 0;
        let mut dumps: Vec<(f64, Vec<u8>)> = Vec::new();
        let outcome = run_single(
            data.as_ref(),
            &alpha,
            dx,
            t_final,
            &cfg,
            &times,
            &mut |s: Snapshot| {
                let e = s.eulerian()?;
                let r = match (&fine, reference) {
                    (_, Reference::Exact) => Some(ExactMultipeakon.eulerian(s.t).u),
                    (Some(f), _) => f.iter().find(|(t, _)| *t == s.t).map(|(_, r)| r.u.clone()),
                    _ => None,
                };
                if let Some(r) = r {
                    let d = sup_norm_diff(&e.u, &r);
                    sup_u = Some(sup_u.map_or(d, |m| m.max(d)));
                    compared += 1;
                }
                if out.is_some() && dump_times.contains(&s.t) {
                    let mut buf = Vec::new();
                    write_state_csv(&e, &mut buf)?;
                    dumps.push((s.t, buf));
                }
                Ok(())
            },
        )?;
        let sol = outcome.solution;
        check_solution(&sol)?;
        let f_inf_err = match (&fine, reference) {
            (_, Reference::Exact) => Some((sol.final_energy() - ExactMultipeakon.energy(t_final)).abs()),
            (Some(f), _) => f
                .iter()
                .find(|(t, _)| *t == t_final)
                .map(|(_, r)| (sol.final_energy() - r.f_inf()).abs()),
            _ => None,
        };
        let (mut time_minimal, mut time_full) = (None, None);
        if config.timing {
            let secs = outcome.elapsed.as_secs_f64();
            let other = run_single(
                data.as_ref(),
                &alpha,
                dx,
                t_final,
                &config.evolution_config(!config.minimal_steps),
                &[],
                &mut |_| Ok(()),
            )?;
            let other_secs = other.elapsed.as_secs_f64();
            if config.minimal_steps {
                time_minimal = Some(secs);
                time_full = Some(other_secs);
            } else {
                time_minimal = Some(other_secs);
                time_full = Some(secs);
            }
        }
        if let Some(dir) = out {
            let mut buf = Vec::new();
            write_energy_csv(&sol, &mut buf)?;
            write_file(&dir.join(format!("energy_dx{}.csv", label(dx))), &buf)?;
            for (t, bytes) in &dumps {
                write_file(
                    &dir.join(format!("nodes_dx{}_t{}.csv", label(dx), label(*t))),
                    bytes,
                )?;
            }
        }
        rows.push(ErrorRow {
            dx,
            sup_u_err: sup_u,
            f_inf_err,
            n: sol.partition.n_intervals(),
            iterations: sol.total_iterations(),
            time_minimal_s: time_minimal,
            time_full_s: time_full,
            dt: sol.dt,
            final_energy: sol.final_energy(),
            comparison_times: compared,
        });
    }
    let report = ErrorReport {
        reference: reference.to_string(),
        t_final,
        rows,
    };
    if let Some(dir) = out {
        emit_csv(&report, &dir.join("errors.csv"))?;
        let summary = serde_json::json!({ "config": config, "report": report });
        write_file(
            &dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?.as_bytes(),
        )?;
    }
    Ok(report)
}
