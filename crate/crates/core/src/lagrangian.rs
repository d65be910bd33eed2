//! Lagrangian grids, the maps between Eulerian and Lagrangian coordinates,
//! and per-cell breaking times.

use crate::error::{Error, Result};
use crate::eulerian::EulerianState;
use crate::piecewise::{merge_knots, MonotoneStep, PiecewiseLinear, Sweep};

/// Piecewise-linear Lagrangian state on the nodes `xi`.
///
/// Node arrays have `n + 1` entries and cell arrays `n`. Left of `xi[0]` the
/// state is `y = y[0] + (xi - xi[0])` with `U = u[0]`, `V = H = 0`; right of
/// the last node `y` again has slope one and `U`, `V`, `H` are constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianGrid {
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub dy: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dh: Vec<f64>,
    /// Breaking time of each cell; `f64::INFINITY` if the cell never breaks.
    pub tau: Vec<f64>,
}

/// Breaking time of a cell with derivatives `dy`, `du`.
pub fn cell_breaking_time(dy: f64, du: f64) -> f64 {
    if dy == 0.0 && du == 0.0 {
        0.0
    } else if du < 0.0 {
        -2.0 * dy / du
    } else {
        f64::INFINITY
    }
}

impl LagrangianGrid {
    pub fn n_cells(&self) -> usize {
        self.dy.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.xi.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn v_inf(&self) -> f64 {
        self.v[self.v.len() - 1]
    }

    pub fn h_inf(&self) -> f64 {
        self.h[self.h.len() - 1]
    }

    /// `y - xi` as a bounded piecewise-linear function of `xi`.
    pub fn y_offset(&self) -> Result<PiecewiseLinear> {
        let off = self.y.iter().zip(&self.xi).map(|(y, x)| y - x).collect();
        PiecewiseLinear::new(self.xi.clone(), off)
    }

    pub fn u_function(&self) -> Result<PiecewiseLinear> {
        PiecewiseLinear::new(self.xi.clone(), self.u.clone())
    }

    /// Structural checks; `h_ref` is compared bit for bit when given.
    pub fn check_invariants(&self, h_ref: Option<&[f64]>) -> InvariantReport {
        let mut r = InvariantReport {
            y_monotone: true,
            h_unchanged: true,
            ..InvariantReport::default()
        };
        let scale = self.h_inf().max(1.0);
        let span = self.xi.last().unwrap() - self.xi[0] + 1.0;
        for j in 0..self.n_cells() {
            let (dy, du, dv, dh) = (self.dy[j], self.du[j], self.dv[j], self.dh[j]);
            r.min_dy = r.min_dy.min(dy);
            r.min_dv = r.min_dv.min(dv);
            r.max_dv_excess = r.max_dv_excess.max(dv - dh);
            let lhs = dy * dv;
            let rhs = du * du;
            // dy dv <= ((dy + dv) / 2)^2, a scale that stays bounded as cells collapse
            let denom = 0.25 * (dy + dv) * (dy + dv);
            if denom > 0.0 {
                r.max_relation_defect = r.max_relation_defect.max((lhs - rhs).abs() / denom);
            }
            let w = self.xi[j + 1] - self.xi[j];
            let pairs = [
                (self.y[j + 1] - self.y[j], dy * w, span),
                (self.u[j + 1] - self.u[j], du * w, scale),
                (self.v[j + 1] - self.v[j], dv * w, scale),
                (self.h[j + 1] - self.h[j], dh * w, scale),
            ];
            for (a, b, s) in pairs {
                r.max_prefix_defect = r.max_prefix_defect.max((a - b).abs() / s);
            }
            if self.y[j + 1] < self.y[j] {
                r.y_monotone = false;
            }
        }
        r.max_v_over_h = self
            .v
            .iter()
            .zip(&self.h)
            .map(|(v, h)| v - h)
            .fold(f64::NEG_INFINITY, f64::max);
        if let Some(h0) = h_ref {
            r.h_unchanged = h0.len() == self.h.len()
                && h0.iter().zip(&self.h).all(|(a, b)| a.to_bits() == b.to_bits());
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    /// Largest `|y_xi V_xi - U_xi^2| / max(y_xi V_xi, U_xi^2)`.
    pub max_relation_defect: f64,
    pub min_dy: f64,
    pub min_dv: f64,
    /// Largest `V_xi - H_xi`.
    pub max_dv_excess: f64,
    /// Largest `V - H` over nodes.
    pub max_v_over_h: f64,
    /// Largest mismatch between node differences and derivatives, scaled.
    pub max_prefix_defect: f64,
    pub y_monotone: bool,
    pub h_unchanged: bool,
}

impl Default for InvariantReport {
    fn default() -> Self {
        InvariantReport {
            max_relation_defect: 0.0,
            min_dy: f64::INFINITY,
            min_dv: f64::INFINITY,
            max_dv_excess: f64::NEG_INFINITY,
            max_v_over_h: f64::NEG_INFINITY,
            max_prefix_defect: 0.0,
            y_monotone: true,
            h_unchanged: true,
        }
    }
}

impl InvariantReport {
    pub const RELATION_TOL: f64 = 1e-9;
    pub const PREFIX_TOL: f64 = 1e-9;

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_relation_defect > Self::RELATION_TOL {
            out.push(format!(
                "y_xi V_xi = U_xi^2 defect {:e}",
                self.max_relation_defect
            ));
        }
        if self.min_dy < 0.0 {
            out.push(format!("negative y_xi {:e}", self.min_dy));
        }
        if self.min_dv < 0.0 {
            out.push(format!("negative V_xi {:e}", self.min_dv));
        }
        if self.max_dv_excess > 1e-12 {
            out.push(format!("V_xi exceeds H_xi by {:e}", self.max_dv_excess));
        }
        if self.max_v_over_h > 1e-9 {
            out.push(format!("V exceeds H by {:e}", self.max_v_over_h));
        }
        if self.max_prefix_defect > Self::PREFIX_TOL {
            out.push(format!("prefix defect {:e}", self.max_prefix_defect));
        }
        if !self.y_monotone {
            out.push("y is not monotone".into());
        }
        if !self.h_unchanged {
            out.push("H changed in time".into());
        }
        out
    }

    pub fn is_ok(&self) -> bool {
        self.violations().is_empty()
    }

    /// Worst-case combination of two reports.
    pub fn merge(&mut self, o: &InvariantReport) {
        self.max_relation_defect = self.max_relation_defect.max(o.max_relation_defect);
        self.min_dy = self.min_dy.min(o.min_dy);
        self.min_dv = self.min_dv.min(o.min_dv);
        self.max_dv_excess = self.max_dv_excess.max(o.max_dv_excess);
        self.max_v_over_h = self.max_v_over_h.max(o.max_v_over_h);
        self.max_prefix_defect = self.max_prefix_defect.max(o.max_prefix_defect);
        self.y_monotone &= o.y_monotone;
        self.h_unchanged &= o.h_unchanged;
    }
}

/// Lagrangian coordinates of initial data with `nu = mu`.
///
/// Each Eulerian node `x` maps to `x + G(x)`; where `G` jumps a second node
/// `x + G(x+)` is added and the cell in between is a plateau with
/// `y_xi = U_xi = 0`, `V_xi = H_xi = 1`. On a segment where `u` has slope `s`
/// the cell has `y_xi = 1 / (1 + s^2)`, `U_xi = s y_xi`, `V_xi = H_xi = s^2 y_xi`.
pub fn to_lagrangian(state: &EulerianState) -> Result<LagrangianGrid> {
    state
        .validate_initial()
        .map_err(|v| Error::DataInconsistency(v.to_string()))?;
    let f = state.f();
    let knots = merge_knots(state.u.nodes(), state.g.nodes());
    let n = knots.len();
    let mut grid = LagrangianGrid {
        xi: Vec::with_capacity(2 * n),
        y: Vec::with_capacity(2 * n),
        u: Vec::with_capacity(2 * n),
        v: Vec::with_capacity(2 * n),
        h: Vec::with_capacity(2 * n),
        dy: Vec::with_capacity(2 * n),
        du: Vec::with_capacity(2 * n),
        dv: Vec::with_capacity(2 * n),
        dh: Vec::with_capacity(2 * n),
        tau: Vec::with_capacity(2 * n),
    };
    let mut su = Sweep::new(&state.u);
    let mut sf = Sweep::new(&f);
    let mut sg = Sweep::new(&state.g);
    let uvals: Vec<f64> = knots.iter().map(|&x| su.at(x).0).collect();

    let push_cell = |g: &mut LagrangianGrid, dy: f64, du: f64, dv: f64| {
        g.dy.push(dy);
        g.du.push(du);
        g.dv.push(dv);
        g.dh.push(dv);
        g.tau.push(cell_breaking_time(dy, du));
    };

    for i in 0..n {
        let x = knots[i];
        let (fl, fr) = sf.at(x);
        let (gl, gr) = sg.at(x);
        grid.xi.push(x + gl);
        grid.y.push(x);
        grid.u.push(uvals[i]);
        grid.v.push(fl);
        grid.h.push(gl);
        if gr > gl {
            push_cell(&mut grid, 0.0, 0.0, 1.0);
            grid.xi.push(x + gr);
            grid.y.push(x);
            grid.u.push(uvals[i]);
            grid.v.push(fr);
            grid.h.push(gr);
        }
        if i + 1 < n {
            let s = (uvals[i + 1] - uvals[i]) / (knots[i + 1] - x);
            let dy = 1.0 / (1.0 + s * s);
            push_cell(&mut grid, dy, s * dy, s * s * dy);
        }
    }
    if let Some(j) = grid.xi.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::DataInconsistency(format!(
            "Lagrangian nodes {j} and {} coincide",
            j + 1
        )));
    }
    Ok(grid)
}

/// Pushes a Lagrangian state forward to Eulerian coordinates.
///
/// Nodes sharing the same `y` are merged; `u` takes the value of the leftmost
/// one, and the energy jumps by the difference of `V` (resp. `H`) across the
/// merged run.
pub fn to_eulerian(grid: &LagrangianGrid) -> Result<EulerianState> {
    let n = grid.y.len();
    let mut xs = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let (mut fl, mut fr, mut gl, mut gr) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let mut j = 0;
    while j < n {
        let start = j;
        while j + 1 < n && grid.y[j + 1] <= grid.y[start] {
            j += 1;
        }
        xs.push(grid.y[start]);
        us.push(grid.u[start]);
        fl.push(grid.v[start]);
        fr.push(grid.v[j]);
        gl.push(grid.h[start]);
        gr.push(grid.h[j]);
        j += 1;
    }
    let u = PiecewiseLinear::new(xs.clone(), us)?;
    let f = MonotoneStep::new(xs.clone(), fl, fr)?;
    let g = MonotoneStep::new(xs, gl, gr)?;
    Ok(EulerianState {
        u,
        f_ac: f.continuous_part(),
        f_sing: f.jump_part(),
        g,
    })
}

/// Sorted distinct breaking times with the cells breaking at each.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakingTimes {
    /// Breaking time of each cell after merging near-equal values.
    pub per_cell: Vec<f64>,
    /// Distinct finite breaking times; always starts with `0`.
    pub distinct: Vec<f64>,
    bucket_start: Vec<usize>,
    bucket_cells: Vec<usize>,
}

impl BreakingTimes {
    /// Cells breaking at `distinct[i]`.
    pub fn cells_at(&self, i: usize) -> &[usize] {
        &self.bucket_cells[self.bucket_start[i]..self.bucket_start[i + 1]]
    }

    /// Cells breaking at `distinct[i]` for `i` in `lo..hi`.
    pub fn cells_in(&self, lo: usize, hi: usize) -> &[usize] {
        &self.bucket_cells[self.bucket_start[lo]..self.bucket_start[hi]]
    }

    /// Number of distinct times `<= t`.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.distinct.partition_point(|&s| s <= t)
    }
}

/// Groups per-cell breaking times. Times closer than `1e-12 max(1, t_scale)`
/// to the smallest member of their group are merged onto it.
pub fn breaking_times(grid: &LagrangianGrid, t_scale: f64) -> BreakingTimes {
    let tol = 1e-12 * t_scale.max(1.0);
    let mut order: Vec<usize> = (0..grid.n_cells())
        .filter(|&j| grid.tau[j].is_finite())
        .collect();
    order.sort_by(|&a, &b| grid.tau[a].total_cmp(&grid.tau[b]).then(a.cmp(&b)));

    let mut per_cell = grid.tau.clone();
    let mut distinct = vec![0.0];
    for &j in &order {
        let rep = *distinct.last().unwrap();
        if grid.tau[j] - rep > tol {
            distinct.push(grid.tau[j]);
        }
        per_cell[j] = *distinct.last().unwrap();
    }
    let mut bucket_start = vec![0usize; distinct.len() + 1];
    let mut g = 0;
    for (pos, &j) in order.iter().enumerate() {
        while per_cell[j] != distinct[g] {
            g += 1;
            bucket_start[g] = pos;
        }
    }
    for b in bucket_start.iter_mut().skip(g + 1) {
        *b = order.len();
    }
    BreakingTimes {
        per_cell,
        distinct,
        bucket_start,
        bucket_cells: order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::{sup_norm_diff, MonotoneStep, PiecewiseLinear};

    fn grid_from_cells(dy: &[f64], du: &[f64]) -> LagrangianGrid {
        let n = dy.len();
        let tau = dy
            .iter()
            .zip(du)
            .map(|(&a, &b)| cell_breaking_time(a, b))
            .collect();
        LagrangianGrid {
            xi: (0..=n).map(|i| i as f64).collect(),
            y: vec![0.0; n + 1],
            u: vec![0.0; n + 1],
            v: vec![0.0; n + 1],
            h: vec![0.0; n + 1],
            dy: dy.to_vec(),
            du: du.to_vec(),
            dv: vec![0.0; n],
            dh: vec![0.0; n],
            tau,
        }
    }

    #[test]
    fn breaking_time_rules() {
        assert_eq!(cell_breaking_time(0.0, 0.0), 0.0);
        assert_eq!(cell_breaking_time(0.5, -0.5), 2.0);
        assert_eq!(cell_breaking_time(0.5, 0.0), f64::INFINITY);
        assert_eq!(cell_breaking_time(0.5, 0.25), f64::INFINITY);
    }

    #[test]
    fn distinct_times_are_grouped() {
        let g = grid_from_cells(
            &[0.5, 0.0, 0.5, 0.5, 1.0, 0.5],
            &[-0.5, 0.0, -0.25, -0.5 * (1.0 + 1e-14), 0.5, -0.5],
        );
        let b = breaking_times(&g, 1.0);
        assert_eq!(b.distinct.len(), 3);
        assert_eq!(b.distinct[0], 0.0);
        assert_eq!(b.distinct[2], 4.0);
        assert_eq!(b.cells_at(0), &[1]);
        assert_eq!(b.cells_at(1).len(), 3);
        assert_eq!(b.cells_at(2), &[2]);
        assert_eq!(b.per_cell[4], f64::INFINITY);
        assert_eq!(b.per_cell[3], b.per_cell[0]);
        assert_eq!(b.count_up_to(2.5), 2);
        assert_eq!(b.cells_in(1, 3).len(), 4);
    }

    #[test]
    fn no_breaking_gives_only_zero() {
        let g = grid_from_cells(&[1.0, 0.5], &[0.0, 0.5]);
        let b = breaking_times(&g, 3.0);
        assert_eq!(b.distinct, vec![0.0]);
        assert!(b.cells_at(0).is_empty());
    }

    #[test]
    fn plateau_for_point_mass() {
        let u = PiecewiseLinear::constant(1.0);
        let fs = MonotoneStep::new(vec![0.0], vec![0.0], vec![2.0]).unwrap();
        let s = EulerianState::initial(u, MonotoneStep::zero(), fs);
        let g = to_lagrangian(&s).unwrap();
        assert_eq!(g.xi, vec![0.0, 2.0]);
        assert_eq!(g.dy, vec![0.0]);
        assert_eq!(g.dv, vec![1.0]);
        assert_eq!(g.tau, vec![0.0]);
        let back = to_eulerian(&g).unwrap();
        assert_eq!(back.f_sing.total(), 2.0);
        assert_eq!(back.u.eval(3.0), 1.0);
    }

    #[test]
    fn round_trip_of_a_ramp() {
        let u = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).unwrap();
        let f = MonotoneStep::continuous(vec![0.0, 1.0, 2.0], vec![0.0, 4.0, 5.0]).unwrap();
        let s = EulerianState::initial(u, f, MonotoneStep::zero());
        let g = to_lagrangian(&s).unwrap();
        assert!(g.check_invariants(None).is_ok());
        assert_eq!(g.xi, vec![0.0, 5.0, 7.0]);
        assert_eq!(g.dy, vec![0.2, 0.5]);
        assert_eq!(g.tau, vec![f64::INFINITY, 2.0]);
        let back = to_eulerian(&g).unwrap();
        assert_eq!(back.u, s.u);
        assert_eq!(sup_norm_diff(&back.f(), &s.f()), 0.0);
        assert_eq!(sup_norm_diff(&back.g, &s.g), 0.0);
    }
}
