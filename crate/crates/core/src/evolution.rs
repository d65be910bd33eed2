//! Numerical solution operator: extraction of the time partition, closed-form
//! evolution of the cell derivatives, the fixed-point iteration for the
//! energy removed at breaking, and reconstruction of node values.

use crate::error::{Error, Result};
use crate::eulerian::{project, AlphaProfile, EulerianState, InitialData};
use crate::lagrangian::{
    breaking_times, to_eulerian, to_lagrangian, BreakingTimes, InvariantReport, LagrangianGrid,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    /// Extract minimal time steps; when off, every distinct breaking time is
    /// a partition point.
    pub minimal_steps: bool,
    /// Override for the time-step parameter; must not exceed the bound
    /// returned by [`compute_dt`].
    pub dt_cap: Option<f64>,
    pub max_iterations: usize,
    /// Run the structural checks at every partition point.
    pub check_invariants: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            minimal_steps: true,
            dt_cap: None,
            max_iterations: 3,
            check_invariants: false,
        }
    }
}

/// Largest time-step parameter for which one sweep of the iteration is a
/// contraction with factor at most `dx`.
pub fn compute_dt(dx: f64, alpha_lip: f64, g_inf: f64, t_final: f64) -> f64 {
    let k = alpha_lip * g_inf;
    if k > 0.0 {
        (8.0 * dx / k).sqrt()
    } else {
        t_final
    }
}

/// Termination threshold for the iteration.
pub fn iteration_tolerance(dx: f64, dt: f64, g_inf: f64) -> f64 {
    0.125 * g_inf * dt * dt * dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    pub taus: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    /// For each partition point, the number of distinct breaking times not
    /// exceeding it.
    counts: Vec<usize>,
}

impl TimePartition {
    /// Number of intervals.
    pub fn n_intervals(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn local_steps(&self) -> Vec<f64> {
        self.taus.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Range of indices into the distinct breaking times falling in
    /// `(taus[k], taus[k + 1]]`.
    pub fn breaking_range(&self, k: usize) -> std::ops::Range<usize> {
        self.counts[k]..self.counts[k + 1]
    }

    /// `N < 2 (T / dt + 1)` and `taus[k + 2] - taus[k] > dt` for `k <= N - 3`.
    pub fn satisfies_bounds(&self) -> bool {
        let n = self.n_intervals();
        let count_ok = (n as f64) < 2.0 * (self.t_final / self.dt + 1.0);
        let gap_ok = n < 3 || (0..=n - 3).all(|k| self.taus[k + 2] - self.taus[k] > self.dt);
        count_ok && gap_ok
    }

    fn from_points(taus: Vec<f64>, distinct: &[f64], dt: f64, t_final: f64) -> Self {
        let counts = taus
            .iter()
            .map(|&t| distinct.partition_point(|&s| s <= t))
            .collect();
        TimePartition {
            taus,
            dt,
            t_final,
            counts,
        }
    }
}

/// Minimal-step extraction from the sorted distinct breaking times
/// (`distinct[0] == 0`).
pub fn extract_partition(distinct: &[f64], dt: f64, t_final: f64) -> TimePartition {
    let hat = |i: usize| distinct.get(i).copied().unwrap_or(f64::INFINITY);
    let mut taus = vec![0.0];
    let mut m = 0;
    loop {
        let last = *taus.last().unwrap();
        if hat(m + 1) >= t_final {
            taus.push(t_final);
            break;
        }
        let h2 = hat(m + 2);
        if h2 - last <= dt && h2 < t_final {
            let cap = (last + dt).min(t_final);
            let mut l = m + 2;
            while hat(l + 1) <= cap {
                l += 1;
            }
            taus.push(hat(l));
            m = l;
            if hat(l) == t_final {
                break;
            }
        } else {
            taus.push(hat(m + 1));
            m += 1;
        }
    }
    TimePartition::from_points(taus, distinct, dt, t_final)
}

/// Partition with a point at every distinct breaking time below `t_final`.
pub fn every_breaking_time(distinct: &[f64], dt: f64, t_final: f64) -> TimePartition {
    let mut taus: Vec<f64> = distinct
        .iter()
        .copied()
        .filter(|&t| t < t_final)
        .collect();
    if taus.is_empty() {
        taus.push(0.0);
    }
    taus.push(t_final);
    TimePartition::from_points(taus, distinct, dt, t_final)
}

/// Derivatives of `(y, U, V)` with respect to the Lagrangian label on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dy: f64,
    pub du: f64,
    pub dv: f64,
}

/// Breaking of a cell inside the evolution window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breaking {
    /// Time from the start of the window to the breaking time.
    pub after: f64,
    /// Fraction of the cell energy removed.
    pub removal: f64,
}

#[inline]
fn advance_cell(dy: f64, du: f64, dv: f64, h: f64) -> (f64, f64) {
    let du1 = du + 0.5 * dv * h;
    // equal to dy + du h + dv h^2 / 4 whenever dy dv = du^2, and keeps that
    // relation exact up to rounding close to breaking
    let dy1 = if dv > 0.0 { du1 * du1 / dv } else { dy + du * h };
    (dy1, du1)
}

#[inline]
fn restart_cell(dv: f64, beta: f64, s: f64) -> (f64, f64, f64) {
    let dv1 = (1.0 - beta) * dv;
    (0.25 * dv1 * s * s, 0.5 * dv1 * s, dv1)
}

/// Exact evolution of one cell over a window of length `h`.
pub fn evolve_cell(c: Cell, h: f64, breaking: Option<Breaking>) -> Result<Cell> {
    if !(h >= 0.0) {
        return Err(Error::InvalidInput(format!("negative time step {h}")));
    }
    match breaking {
        Some(b) if b.after <= h => {
            if !(0.0..1.0).contains(&b.removal) {
                return Err(Error::InvalidInput(format!(
                    "removal fraction {} outside [0, 1)",
                    b.removal
                )));
            }
            let (dy, du, dv) = restart_cell(c.dv, b.removal, h - b.after);
            Ok(Cell { dy, du, dv })
        }
        _ => {
            let (dy, du) = advance_cell(c.dy, c.du, c.dv, h);
            Ok(Cell { dy, du, dv: c.dv })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// No cell breaks in the interval.
    Smooth,
    /// All breaking happens at the right end; energy is removed exactly.
    Endpoint,
    /// Breaking inside the interval; the removal fractions are iterated.
    Iterated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub t_start: f64,
    pub t_end: f64,
    pub mode: StepMode,
    pub breaking_cells: usize,
    pub iterations: usize,
    /// Sup differences between consecutive iterates of `y` at `t_end`.
    pub iterate_diffs: Vec<f64>,
}

/// Lagrangian state at a requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub grid: LagrangianGrid,
}

impl Snapshot {
    pub fn eulerian(&self) -> Result<EulerianState> {
        to_eulerian(&self.grid)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub dx: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub t_final: f64,
    pub n_cells: usize,
    pub breaking: BreakingTimes,
    pub partition: TimePartition,
    pub intervals: Vec<IntervalReport>,
    /// Total energy `V_inf` at each partition point.
    pub energy: Vec<(f64, f64)>,
    pub snapshots: Vec<Snapshot>,
    /// Worst structural defects over the partition points, when requested.
    pub invariants: Option<InvariantReport>,
}

impl Solution {
    pub fn total_iterations(&self) -> usize {
        self.intervals.iter().map(|r| r.iterations).sum()
    }

    pub fn energy_nonincreasing(&self) -> bool {
        self.energy.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    pub fn final_energy(&self) -> f64 {
        self.energy.last().unwrap().1
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

/// Cell derivatives and left-asymptote values at one time.
#[derive(Debug, Clone)]
struct Frame {
    t: f64,
    dy: Vec<f64>,
    du: Vec<f64>,
    dv: Vec<f64>,
    y0: f64,
    u0: f64,
    v_inf: f64,
}

struct Stepper<'a> {
    grid: &'a LagrangianGrid,
    w: Vec<f64>,
    tau: &'a [f64],
}

impl<'a> Stepper<'a> {
    /// Left-asymptote corrections and removed energy from cells broken in
    /// `(f.t, t]`.
    fn broken_sums(&self, f: &Frame, t: f64, cells: &[usize], beta: &[f64]) -> (f64, f64, f64) {
        let (mut s1, mut s2, mut e) = (0.0, 0.0, 0.0);
        for &j in cells {
            let tj = self.tau[j];
            if tj <= t {
                let m = beta[j] * f.dv[j] * self.w[j];
                let s = t - tj;
                s1 += m * s;
                s2 += m * s * s;
                e += m;
            }
        }
        (s1, s2, e)
    }

    fn anchors(&self, f: &Frame, t: f64, cells: &[usize], beta: &[f64]) -> (f64, f64, f64) {
        let h = t - f.t;
        let (s1, s2, e) = self.broken_sums(f, t, cells, beta);
        let u0 = f.u0 - 0.25 * f.v_inf * h + 0.25 * s1;
        let y0 = f.y0 + f.u0 * h - 0.125 * f.v_inf * h * h + 0.125 * s2;
        (y0, u0, f.v_inf - e)
    }

    #[inline]
    fn cell_at(&self, f: &Frame, j: usize, t: f64, beta: &[f64]) -> (f64, f64, f64) {
        let tj = self.tau[j];
        if tj > f.t && tj <= t {
            restart_cell(f.dv[j], beta[j], t - tj)
        } else {
            let (dy, du) = advance_cell(f.dy[j], f.du[j], f.dv[j], t - f.t);
            (dy, du, f.dv[j])
        }
    }

    /// Node positions `y_j(t)`.
    fn y_nodes(&self, f: &Frame, t: f64, cells: &[usize], beta: &[f64], out: &mut Vec<f64>) {
        let (y0, _, _) = self.anchors(f, t, cells, beta);
        out.clear();
        out.push(y0);
        let mut y = y0;
        for j in 0..self.w.len() {
            let (dy, _, _) = self.cell_at(f, j, t, beta);
            y += dy * self.w[j];
            out.push(y);
        }
    }

    fn advance(&self, f: &Frame, t: f64, cells: &[usize], beta: &[f64]) -> Frame {
        let (y0, u0, v_inf) = self.anchors(f, t, cells, beta);
        let n = self.w.len();
        let mut g = Frame {
            t,
            dy: Vec::with_capacity(n),
            du: Vec::with_capacity(n),
            dv: Vec::with_capacity(n),
            y0,
            u0,
            v_inf,
        };
        for j in 0..n {
            let (dy, du, dv) = self.cell_at(f, j, t, beta);
            g.dy.push(dy);
            g.du.push(du);
            g.dv.push(dv);
        }
        g
    }

    fn grid(&self, f: &Frame) -> LagrangianGrid {
        let n = self.w.len();
        let mut y = Vec::with_capacity(n + 1);
        let mut u = Vec::with_capacity(n + 1);
        let mut v = Vec::with_capacity(n + 1);
        let (mut ya, mut ua, mut va) = (f.y0, f.u0, 0.0);
        y.push(ya);
        u.push(ua);
        v.push(va);
        for j in 0..n {
            ya += f.dy[j] * self.w[j];
            ua += f.du[j] * self.w[j];
            va += f.dv[j] * self.w[j];
            y.push(ya);
            u.push(ua);
            v.push(va);
        }
        LagrangianGrid {
            xi: self.grid.xi.clone(),
            y,
            u,
            v,
            h: self.grid.h.clone(),
            dy: f.dy.clone(),
            du: f.du.clone(),
            dv: f.dv.clone(),
            dh: self.grid.dh.clone(),
            tau: self.tau.to_vec(),
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn check_times(query_times: &[f64], t_final: f64) -> Result<Vec<f64>> {
    let mut q = query_times.to_vec();
    if let Some(t) = q.iter().find(|t| !(0.0..=t_final).contains(*t)) {
        return Err(Error::Configuration(format!(
            "query time {t} outside [0, {t_final}]"
        )));
    }
    q.sort_by(f64::total_cmp);
    q.dedup();
    Ok(q)
}

/// Time-step parameter, iteration tolerance, breaking times and partition
/// of a run, available before any evolution takes place.
#[derive(Debug, Clone)]
pub struct Plan {
    pub dt: f64,
    pub epsilon: f64,
    pub breaking: BreakingTimes,
    pub partition: TimePartition,
}

pub fn plan(
    grid: &LagrangianGrid,
    alpha: &AlphaProfile,
    dx: f64,
    t_final: f64,
    config: &EvolutionConfig,
) -> Result<Plan> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Configuration(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::Configuration(format!("dx must be positive, got {dx}")));
    }
    if config.max_iterations < 2 {
        return Err(Error::Configuration("at least two iterations are required".into()));
    }
    let g_inf = grid.h_inf();
    let lip = alpha.lipschitz();
    let bound = compute_dt(dx, lip, g_inf, t_final);
    let dt = match config.dt_cap {
        None => bound,
        Some(c) if c > 0.0 && (lip * g_inf == 0.0 || c <= bound * (1.0 + 1e-12)) => c,
        Some(c) => {
            return Err(Error::Configuration(format!(
                "time-step cap {c} exceeds the admissible bound {bound}"
            )))
        }
    };
    if config.minimal_steps {
        let gamma = 0.125 * lip * g_inf * dt * dt;
        if gamma > dx * (1.0 + 1e-12) {
            return Err(Error::Configuration(format!(
                "iteration is not a contraction: factor {gamma} exceeds dx = {dx}"
            )));
        }
    }
    let epsilon = iteration_tolerance(dx, dt, g_inf);

    let breaking = breaking_times(grid, t_final);
    let partition = if config.minimal_steps {
        extract_partition(&breaking.distinct, dt, t_final)
    } else {
        every_breaking_time(&breaking.distinct, dt, t_final)
    };
    Ok(Plan {
        dt,
        epsilon,
        breaking,
        partition,
    })
}

/// Projects the data, maps it to Lagrangian coordinates and evolves it.
pub fn solve<D: InitialData + ?Sized>(
    data: &D,
    alpha: &AlphaProfile,
    dx: f64,
    t_final: f64,
    config: &EvolutionConfig,
    query_times: &[f64],
) -> Result<Solution> {
    let projected = project(data, dx)?;
    let grid = to_lagrangian(&projected)?;
    evolve(&grid, alpha, dx, t_final, config, query_times)
}

/// Evolves a Lagrangian grid, collecting snapshots at the query times.
pub fn evolve(
    grid: &LagrangianGrid,
    alpha: &AlphaProfile,
    dx: f64,
    t_final: f64,
    config: &EvolutionConfig,
    query_times: &[f64],
) -> Result<Solution> {
    let mut snaps = Vec::new();
    let mut sol = evolve_with(grid, alpha, dx, t_final, config, query_times, &mut |s| {
        snaps.push(s);
        Ok(())
    })?;
    sol.snapshots = snaps;
    Ok(sol)
}

/// Like [`evolve`], but hands each snapshot to `sink` instead of storing it.
pub fn evolve_with(
    grid: &LagrangianGrid,
    alpha: &AlphaProfile,
    dx: f64,
    t_final: f64,
    config: &EvolutionConfig,
    query_times: &[f64],
    sink: &mut dyn FnMut(Snapshot) -> Result<()>,
) -> Result<Solution> {
    let Plan {
        dt,
        epsilon,
        breaking: bt,
        partition,
    } = plan(grid, alpha, dx, t_final, config)?;
    let queries = check_times(query_times, t_final)?;

    let stepper = Stepper {
        grid,
        w: grid.widths(),
        tau: &bt.per_cell,
    };
    let n = grid.n_cells();
    let v_inf0 = (0..n).fold(0.0, |s, j| s + grid.dv[j] * stepper.w[j]);
    let mut frame = Frame {
        t: 0.0,
        dy: grid.dy.clone(),
        du: grid.du.clone(),
        dv: grid.dv.clone(),
        y0: grid.y[0],
        u0: grid.u[0],
        v_inf: v_inf0,
    };

    let mut invariants = if config.check_invariants {
        Some(stepper.grid(&frame).check_invariants(Some(&grid.h)))
    } else {
        None
    };
    let mut energy = vec![(0.0, frame.v_inf)];
    let mut intervals = Vec::with_capacity(partition.n_intervals());
    let mut beta = vec![0.0; n];
    let mut y_prev = Vec::with_capacity(n + 1);
    let mut y_next = Vec::with_capacity(n + 1);
    let mut qi = 0;
    while qi < queries.len() && queries[qi] == 0.0 {
        sink(Snapshot {
            t: 0.0,
            grid: stepper.grid(&frame),
        })?;
        qi += 1;
    }

    for k in 0..partition.n_intervals() {
        let (t0, t1) = (partition.taus[k], partition.taus[k + 1]);
        let range = partition.breaking_range(k);
        let cells = bt.cells_in(range.start, range.end);
        let mut report = IntervalReport {
            t_start: t0,
            t_end: t1,
            mode: StepMode::Smooth,
            breaking_cells: cells.len(),
            iterations: 1,
            iterate_diffs: Vec::new(),
        };
        let set_beta = |beta: &mut [f64], y: &[f64]| {
            for &j in cells {
                beta[j] = alpha.eval(y[j]);
            }
        };

        let next = if cells.is_empty() {
            stepper.advance(&frame, t1, cells, &beta)
        } else if range.len() == 1 && bt.distinct[range.start] == t1 {
            report.mode = StepMode::Endpoint;
            report.iterations = 2;
            stepper.y_nodes(&frame, t1, cells, &beta, &mut y_prev);
            set_beta(&mut beta, &y_prev);
            stepper.advance(&frame, t1, cells, &beta)
        } else {
            report.mode = StepMode::Iterated;
            stepper.y_nodes(&frame, t1, cells, &beta, &mut y_prev);
            let mut m = 1;
            loop {
                set_beta(&mut beta, &y_prev);
                m += 1;
                stepper.y_nodes(&frame, t1, cells, &beta, &mut y_next);
                let d = sup_diff(&y_next, &y_prev);
                report.iterate_diffs.push(d);
                std::mem::swap(&mut y_prev, &mut y_next);
                if d <= epsilon || m >= config.max_iterations {
                    break;
                }
            }
            report.iterations = m;
            // the iterate reported last defines the removal fractions
            stepper.advance(&frame, t1, cells, &beta)
        };
        while qi < queries.len() && queries[qi] < t1 {
            let q = queries[qi];
            if q > t0 {
                let f = stepper.advance(&frame, q, cells, &beta);
                sink(Snapshot {
                    t: q,
                    grid: stepper.grid(&f),
                })?;
            }
            qi += 1;
        }
        if next.v_inf > frame.v_inf {
            return Err(Error::InvariantViolation(format!(
                "energy increased from {} to {} at t = {t1}",
                frame.v_inf, next.v_inf
            )));
        }
        frame = next;
        for &j in cells {
            beta[j] = 0.0;
        }
        energy.push((t1, frame.v_inf));
        if let Some(r) = invariants.as_mut() {
            r.merge(&stepper.grid(&frame).check_invariants(Some(&grid.h)));
        }
        while qi < queries.len() && queries[qi] == t1 {
            sink(Snapshot {
                t: t1,
                grid: stepper.grid(&frame),
            })?;
            qi += 1;
        }
        intervals.push(report);
    }

    Ok(Solution {
        dx,
        dt,
        epsilon,
        t_final,
        n_cells: n,
        breaking: bt,
        partition,
        intervals,
        energy,
        snapshots: Vec::new(),
        invariants,
    })
}
