//! Stability metric `d`, its simplified form `d_s` for pairs that share
//! breaking times, and the constants of the convergence estimates.
//!
//! Grids are viewed as functions on the whole line: left of the first node
//! and right of the last node `y` has slope one and `U`, `V`, `H` are
//! constant. All norms are computed exactly, segment by segment, on a common
//! refinement of both node sets.

use crate::error::{Error, Result};
use crate::eulerian::AlphaProfile;
use crate::lagrangian::LagrangianGrid;
use crate::piecewise::{affine_l2_sq, merge_knots};

pub const D_TERMS: [&str; 10] = [
    "sup_y",
    "sup_u",
    "l1_h_xi",
    "l2_u_h_xi",
    "l2_y_xi",
    "l2_u_xi",
    "l2_g1_y_xi",
    "l2_h_xi",
    "l2_g2",
    "l2_g3",
];

pub const DS_TERMS: [&str; 5] = ["sup_y", "sup_u", "l2_y_xi", "l2_u_xi", "l2_g"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricBreakdown {
    pub labels: &'static [&'static str],
    pub parts: Vec<f64>,
    pub total: f64,
}

impl MetricBreakdown {
    fn new(labels: &'static [&'static str], parts: Vec<f64>) -> Self {
        let total = parts.iter().sum();
        MetricBreakdown {
            labels,
            parts,
            total,
        }
    }

    pub fn part(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .map(|i| self.parts[i])
    }
}

/// `(1 - alpha(y)) V_xi` at both ends of each cell if `U_xi < 0`, else `V_xi`.
pub fn g1(grid: &LagrangianGrid, alpha: &AlphaProfile) -> Vec<(f64, f64)> {
    (0..grid.n_cells())
        .map(|j| {
            let dv = grid.dv[j];
            if grid.du[j] < 0.0 {
                (
                    (1.0 - alpha.eval(grid.y[j])) * dv,
                    (1.0 - alpha.eval(grid.y[j + 1])) * dv,
                )
            } else {
                (dv, dv)
            }
        })
        .collect()
}

/// `|alpha'| H_inf U_xi` on cells with `U_xi < 0`, else zero.
pub fn g2(grid: &LagrangianGrid, alpha: &AlphaProfile) -> Vec<f64> {
    let k = alpha.lipschitz() * grid.h_inf();
    grid.du.iter().map(|&du| if du < 0.0 { k * du } else { 0.0 }).collect()
}

/// `|alpha'| U U_xi` at both ends of each cell with `U_xi < 0`, else zero.
pub fn g3(grid: &LagrangianGrid, alpha: &AlphaProfile) -> Vec<(f64, f64)> {
    let k = alpha.lipschitz();
    (0..grid.n_cells())
        .map(|j| {
            let du = grid.du[j];
            if du < 0.0 {
                (k * grid.u[j] * du, k * grid.u[j + 1] * du)
            } else {
                (0.0, 0.0)
            }
        })
        .collect()
}

/// Values of one grid on a segment lying inside a single cell or tail.
#[derive(Debug, Clone, Copy)]
struct Seg {
    y: (f64, f64),
    u: (f64, f64),
    dy: f64,
    du: f64,
    dv: f64,
    dh: f64,
}

/// Forward cursor over the cells of a grid.
struct View<'a> {
    g: &'a LagrangianGrid,
    j: usize,
}

impl<'a> View<'a> {
    fn new(g: &'a LagrangianGrid) -> Self {
        View { g, j: 0 }
    }

    fn seg(&mut self, a: f64, b: f64) -> Seg {
        let g = self.g;
        let n = g.xi.len() - 1;
        let mid = 0.5 * (a + b);
        if n == 0 || mid <= g.xi[0] {
            let (y0, x0) = (g.y[0], g.xi[0]);
            return Seg {
                y: (y0 + (a - x0), y0 + (b - x0)),
                u: (g.u[0], g.u[0]),
                dy: 1.0,
                du: 0.0,
                dv: 0.0,
                dh: 0.0,
            };
        }
        if mid >= g.xi[n] {
            let (yn, xn) = (g.y[n], g.xi[n]);
            return Seg {
                y: (yn + (a - xn), yn + (b - xn)),
                u: (g.u[n], g.u[n]),
                dy: 1.0,
                du: 0.0,
                dv: 0.0,
                dh: 0.0,
            };
        }
        while self.j + 1 < n && g.xi[self.j + 1] <= mid {
            self.j += 1;
        }
        let j = self.j;
        let (x0, x1) = (g.xi[j], g.xi[j + 1]);
        let w = x1 - x0;
        let lerp = |p: &[f64], x: f64| {
            if x == x0 {
                p[j]
            } else if x == x1 {
                p[j + 1]
            } else {
                p[j] + (x - x0) / w * (p[j + 1] - p[j])
            }
        };
        Seg {
            y: (lerp(&g.y, a), lerp(&g.y, b)),
            u: (lerp(&g.u, a), lerp(&g.u, b)),
            dy: g.dy[j],
            du: g.du[j],
            dv: g.dv[j],
            dh: g.dh[j],
        }
    }
}

/// Labels at which `y` takes the value of an `alpha` node.
fn alpha_preimages(g: &LagrangianGrid, alpha: &AlphaProfile) -> Vec<f64> {
    let n = g.xi.len() - 1;
    let mut out = Vec::new();
    for &a in alpha.as_piecewise().nodes() {
        let k = g.y.partition_point(|&y| y < a);
        if k == 0 {
            out.push(g.xi[0] - (g.y[0] - a));
        } else if k > n {
            out.push(g.xi[n] + (a - g.y[n]));
        } else if g.y[k] != a {
            let s = (a - g.y[k - 1]) / (g.y[k] - g.y[k - 1]);
            out.push(g.xi[k - 1] + s * (g.xi[k] - g.xi[k - 1]));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn g1_ends(s: &Seg, alpha: &AlphaProfile) -> (f64, f64) {
    if s.du < 0.0 {
        (
            (1.0 - alpha.eval(s.y.0)) * s.dv,
            (1.0 - alpha.eval(s.y.1)) * s.dv,
        )
    } else {
        (s.dv, s.dv)
    }
}

/// The ten-term metric `d`, with `alpha` shared by both grids.
pub fn metric_d(a: &LagrangianGrid, b: &LagrangianGrid, alpha: &AlphaProfile) -> MetricBreakdown {
    let lip = alpha.lipschitz();
    let mut knots = merge_knots(&a.xi, &b.xi);
    knots = merge_knots(&knots, &alpha_preimages(a, alpha));
    knots = merge_knots(&knots, &alpha_preimages(b, alpha));
    let (ha, hb) = (a.h_inf(), b.h_inf());
    let mut p = [0.0_f64; 10];
    let sup_at = |p: &mut [f64; 10], sa: &Seg, sb: &Seg| {
        for (ya, yb, ua, ub) in [(sa.y.0, sb.y.0, sa.u.0, sb.u.0), (sa.y.1, sb.y.1, sa.u.1, sb.u.1)] {
            p[0] = p[0].max((ya - yb).abs());
            p[1] = p[1].max((ua - ub).abs());
        }
    };
    let (mut va, mut vb) = (View::new(a), View::new(b));
    if knots.len() == 1 {
        let x = knots[0];
        sup_at(&mut p, &va.seg(x, x), &vb.seg(x, x));
    }
    for w in knots.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let h = x1 - x0;
        let sa = va.seg(x0, x1);
        let sb = vb.seg(x0, x1);
        sup_at(&mut p, &sa, &sb);
        p[2] += (sa.dh - sb.dh).abs() * h;
        p[3] += affine_l2_sq(
            sa.u.0 * sa.dh - sb.u.0 * sb.dh,
            sa.u.1 * sa.dh - sb.u.1 * sb.dh,
            h,
        );
        p[4] += (sa.dy - sb.dy).powi(2) * h;
        p[5] += (sa.du - sb.du).powi(2) * h;
        let (ga, gb) = (g1_ends(&sa, alpha), g1_ends(&sb, alpha));
        p[6] += affine_l2_sq(
            (ga.0 - gb.0) + (sa.dy - sb.dy),
            (ga.1 - gb.1) + (sa.dy - sb.dy),
            h,
        );
        p[7] += (sa.dh - sb.dh).powi(2) * h;
        let g2a = if sa.du < 0.0 { lip * ha * sa.du } else { 0.0 };
        let g2b = if sb.du < 0.0 { lip * hb * sb.du } else { 0.0 };
        p[8] += (g2a - g2b).powi(2) * h;
        let g3 = |s: &Seg, u: f64| if s.du < 0.0 { lip * u * s.du } else { 0.0 };
        p[9] += affine_l2_sq(g3(&sa, sa.u.0) - g3(&sb, sb.u.0), g3(&sa, sa.u.1) - g3(&sb, sb.u.1), h);
    }
    for i in 3..10 {
        p[i] = p[i].sqrt();
    }
    p[3] *= lip;
    MetricBreakdown::new(&D_TERMS, p.to_vec())
}

/// The five-term function `d_s` for grids on the same labels with the same
/// breaking function. A cell counts as breaking if `U_xi < 0` in either grid.
pub fn metric_ds(
    a: &LagrangianGrid,
    b: &LagrangianGrid,
    alpha: &AlphaProfile,
) -> Result<MetricBreakdown> {
    if a.xi != b.xi {
        return Err(Error::DomainMismatch("grids have different labels".into()));
    }
    if a.tau != b.tau {
        return Err(Error::DomainMismatch(
            "grids have different breaking functions".into(),
        ));
    }
    let lip = alpha.lipschitz();
    let mut p = [0.0_f64; 5];
    for k in 0..a.xi.len() {
        p[0] = p[0].max((a.y[k] - b.y[k]).abs());
        p[1] = p[1].max((a.u[k] - b.u[k]).abs());
    }
    for j in 0..a.n_cells() {
        let w = a.xi[j + 1] - a.xi[j];
        p[2] += (a.dy[j] - b.dy[j]).powi(2) * w;
        p[3] += (a.du[j] - b.du[j]).powi(2) * w;
        let base = (a.dv[j] - b.dv[j]).abs();
        if !(a.du[j] < 0.0 || b.du[j] < 0.0) {
            p[4] += base * base * w;
            continue;
        }
        let m = lip * a.dv[j].min(b.dv[j]);
        let ey = (a.y[j] - b.y[j], a.y[j + 1] - b.y[j + 1]);
        let eu = (a.u[j] - b.u[j], a.u[j + 1] - b.u[j + 1]);
        // split where either difference changes sign so |ey| + |eu| is affine
        let mut s = vec![0.0, 1.0];
        for e in [ey, eu] {
            if e.0 * e.1 < 0.0 {
                s.push(e.0 / (e.0 - e.1));
            }
        }
        s.sort_by(f64::total_cmp);
        let at = |e: (f64, f64), t: f64| (e.0 + t * (e.1 - e.0)).abs();
        let g = |t: f64| base + m * (at(ey, t) + at(eu, t));
        for k in 0..s.len() - 1 {
            p[4] += affine_l2_sq(g(s[k]), g(s[k + 1]), (s[k + 1] - s[k]) * w);
        }
    }
    for v in &mut p[2..] {
        *v = v.sqrt();
    }
    Ok(MetricBreakdown::new(&DS_TERMS, p.to_vec()))
}

/// `(C(t), D(t))` in the Lipschitz estimate
/// `d(S_t X, S_t Y) <= C(t) exp(D(t) t) d(X, Y)` for `H_inf <= m`.
pub fn stability_constants(t: f64, m: f64, alpha_lip: f64) -> (f64, f64) {
    let (t2, t3) = (t * t, t * t * t);
    let sm = m.sqrt();
    let c = 3.0 + 1.5 * t + 0.5 * t2 + 3.0 / 16.0 * t3
        + sm * (1.0 + 0.25 * t + 0.25 * t2 + t3 / 16.0)
        + alpha_lip * sm * (5.0 + 2.0 * t + t2 + 0.375 * t3)
        + alpha_lip * m * (3.0 + 1.25 * t + 0.5 * t2 + 0.125 * t3);
    let d = 2.0
        + alpha_lip * sm
        + sm * (0.5 + 0.125 * t + t2 / 16.0)
        + alpha_lip * m * (1.0 + 0.25 * t + 0.125 * t2);
    (c, d)
}

/// Constant with `d <= C_s d_s` for the exact and numerical evolution of the
/// same projected data.
pub fn cs_constant(u_inf: f64, g_inf: f64, t_final: f64, alpha_lip: f64) -> f64 {
    let sg = g_inf.sqrt();
    2.0 + alpha_lip
        * (u_inf
            + (2.0 + 2f64.sqrt() + (0.25 * t_final).exp()) * sg
            + (1.0 + 0.25 * t_final) * g_inf)
}

/// Growth rate of `d_s` between partition points.
pub fn lambda_constant(g_inf: f64, t_final: f64, alpha_lip: f64) -> f64 {
    1.0 + (1.0 + alpha_lip + 0.5 * t_final) * g_inf.sqrt()
        + alpha_lip * (1.0 + 0.5 * t_final) * g_inf
}

pub fn cs_tilde(u_inf: f64, g_inf: f64, t_final: f64, alpha_lip: f64) -> f64 {
    alpha_lip * (u_inf + (1.0 + 2f64.sqrt()) * g_inf.sqrt() + 0.25 * g_inf * t_final)
}

/// Bound on `d_s` between the exact and numerical evolution over one
/// partition interval of length `dt_k <= dt`, where `meas_b` is the measure
/// of the labels breaking inside the interval.
pub fn local_error_bound(
    u_inf: f64,
    g_inf: f64,
    t_final: f64,
    alpha_lip: f64,
    dt: f64,
    dt_k: f64,
    meas_b: f64,
) -> f64 {
    let ct = cs_tilde(u_inf, g_inf, t_final, alpha_lip);
    let q = (1.0 + t_final).powi(2);
    (1.0 + ct) * q * (1.0 + alpha_lip * g_inf.sqrt()) * g_inf * dt * dt_k
        + 2.0 * ct * q * meas_b.sqrt() * dt_k
}
