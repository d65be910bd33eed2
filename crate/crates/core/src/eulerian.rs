//! Eulerian states, the dissipation profile, and the projection onto the
//! staggered grid.

use crate::error::{Error, Result};
use crate::piecewise::{merge_knots, Breakpoints, MonotoneStep, PiecewiseLinear, Sweep};
use thiserror::Error;

/// Energy-dissipation profile: piecewise linear with values in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaProfile {
    f: PiecewiseLinear,
    lipschitz: f64,
}

impl AlphaProfile {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "dissipation profile must take values in [0, 1)".into(),
            ));
        }
        let f = PiecewiseLinear::new(nodes, values)?;
        let lipschitz = f.max_abs_slope();
        Ok(AlphaProfile { f, lipschitz })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    /// Sup norm of the derivative.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn as_piecewise(&self) -> &PiecewiseLinear {
        &self.f
    }
}

/// Point samples of initial data; lets the projection act on data that is not
/// itself piecewise linear.
pub trait InitialData {
    fn u(&self, x: f64) -> f64;
    /// Absolutely continuous energy on `(-inf, x)`.
    fn f_ac(&self, x: f64) -> f64;
    /// Singular energy on `(-inf, x)`.
    fn f_sing(&self, x: f64) -> f64;
    /// Interval outside which `u` and the energy are constant.
    fn support(&self) -> (f64, f64);
}

/// Eulerian triplet `(u, mu, nu)` with `mu` split into its absolutely
/// continuous and singular parts and `nu` given by its distribution `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianState {
    pub u: PiecewiseLinear,
    pub f_ac: MonotoneStep,
    pub f_sing: MonotoneStep,
    pub g: MonotoneStep,
}

impl EulerianState {
    /// Initial data with `nu = mu`.
    pub fn initial(u: PiecewiseLinear, f_ac: MonotoneStep, f_sing: MonotoneStep) -> Self {
        let g = MonotoneStep::sum(&f_ac, &f_sing);
        EulerianState { u, f_ac, f_sing, g }
    }

    pub fn f(&self) -> MonotoneStep {
        MonotoneStep::sum(&self.f_ac, &self.f_sing)
    }

    pub fn f_inf(&self) -> f64 {
        self.f_ac.total() + self.f_sing.total()
    }

    pub fn g_inf(&self) -> f64 {
        self.g.total()
    }

    /// Checks membership in the admissible set; see [`Violation`].
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        let eps = f64::EPSILON;
        let f_scale = self.g_inf().max(self.f_inf()).max(1.0);
        let tol = 1e-12 * f_scale;

        if let Some(i) = self.f_ac.jumps().iter().position(|j| j.abs() > tol) {
            return Err(Violation::AcJump {
                x: self.f_ac.nodes()[i],
            });
        }
        let fs = &self.f_sing;
        for i in 0..fs.nodes().len().saturating_sub(1) {
            if (fs.left_values()[i + 1] - fs.right_values()[i]).abs() > tol {
                return Err(Violation::SingularSlope {
                    x: fs.nodes()[i],
                });
            }
        }

        let f = self.f();
        let knots = merge_knots(f.knots(), self.g.knots());
        let mut sf = Sweep::new(&f);
        let mut sg = Sweep::new(&self.g);
        let mut prev_gap = (0.0, 0.0);
        for &x in &knots {
            let (fl, fr) = sf.at(x);
            let (gl, gr) = sg.at(x);
            let (dl, dr) = (gl - fl, gr - fr);
            if dl < -tol || dr < -tol {
                return Err(Violation::EnergyExceedsBound { x });
            }
            // nu - mu must be a nonnegative measure
            if dl < prev_gap.1 - tol || dr < dl - tol {
                return Err(Violation::DissipatedNotMonotone { x });
            }
            prev_gap = (dl, dr);
        }

        let u_scale = self.u.sup_abs().max(1.0);
        let knots = merge_knots(self.u.nodes(), self.f_ac.nodes());
        let mut su = Sweep::new(&self.u);
        let mut sa = Sweep::new(&self.f_ac);
        let mut prev: Option<(f64, f64, f64)> = None;
        for &x in &knots {
            let uv = su.at(x).0;
            let fv = sa.at(x).0;
            if let Some((x0, u0, f0)) = prev {
                let h = x - x0;
                let du = uv - u0;
                let a = fv - f0;
                let b = du * du / h;
                let x_mag = x.abs().max(x0.abs());
                let allowance = 1e-12 * a.max(b)
                    + 64.0 * eps * (f_scale + du.abs() * u_scale / h + b * x_mag / h);
                if (a - b).abs() > allowance {
                    return Err(Violation::AcEnergyMismatch {
                        x0,
                        x1: x,
                        energy: a,
                        expected: b,
                    });
                }
            }
            prev = Some((x, uv, fv));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), and additionally requires `nu = mu`.
    pub fn validate_initial(&self) -> std::result::Result<(), Violation> {
        self.validate()?;
        let f = self.f();
        let d = crate::piecewise::sup_norm_diff(&f, &self.g);
        if d > 1e-12 * self.g_inf().max(1.0) {
            return Err(Violation::NotInitial { sup_diff: d });
        }
        Ok(())
    }
}

impl InitialData for EulerianState {
    fn u(&self, x: f64) -> f64 {
        self.u.eval(x)
    }

    fn f_ac(&self, x: f64) -> f64 {
        self.f_ac.eval(x)
    }

    fn f_sing(&self, x: f64) -> f64 {
        self.f_sing.eval(x)
    }

    fn support(&self) -> (f64, f64) {
        let ends = [
            self.u.nodes(),
            self.f_ac.nodes(),
            self.f_sing.nodes(),
            self.g.nodes(),
        ];
        let lo = ends.iter().map(|n| n[0]).fold(f64::INFINITY, f64::min);
        let hi = ends
            .iter()
            .map(|n| n[n.len() - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("absolutely continuous energy jumps at x = {x}")]
    AcJump { x: f64 },
    #[error("singular energy is not locally constant after x = {x}")]
    SingularSlope { x: f64 },
    #[error("mu exceeds nu at x = {x}")]
    EnergyExceedsBound { x: f64 },
    #[error("nu - mu is not a nonnegative measure near x = {x}")]
    DissipatedNotMonotone { x: f64 },
    #[error("on [{x0}, {x1}] the ac energy is {energy}, but u_x^2 integrates to {expected}")]
    AcEnergyMismatch {
        x0: f64,
        x1: f64,
        energy: f64,
        expected: f64,
    },
    #[error("initial data must have nu = mu (sup difference {sup_diff:e})")]
    NotInitial { sup_diff: f64 },
}

/// Sign `s` for the first subcell of a pair, whose slope is then `du - s q`
/// and the second `du + s q`. The choice minimises the mismatch with the
/// sampled midpoint value; ties go to `+1`.
pub fn select_sign(du: f64, dplus_u: f64, q: f64) -> f64 {
    let r_plus = (dplus_u - du + q).abs();
    let r_minus = (dplus_u - du - q).abs();
    if r_plus <= r_minus {
        1.0
    } else {
        -1.0
    }
}

const MAX_GRID_NODES: i64 = 200_000_000;

/// Projection onto the grid `x_j = j dx`.
///
/// On each pair cell `[x_2j, x_2j+2]` the result interpolates `u` at the even
/// nodes, preserves the absolutely continuous energy of the cell, keeps
/// `u_x^2 = (F_ac)_x`, and moves singular energy to the left even node.
pub fn project<D: InitialData + ?Sized>(data: &D, dx: f64) -> Result<EulerianState> {
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::InvalidInput(format!("dx must be positive, got {dx}")));
    }
    let (a, b) = data.support();
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidInput("support must be a finite interval".into()));
    }
    let pa = (a / (2.0 * dx)).floor() as i64 - 1;
    let pb = (b / (2.0 * dx)).ceil() as i64 + 1;
    let n_nodes = 2 * (pb - pa) + 1;
    if n_nodes > MAX_GRID_NODES {
        return Err(Error::InvalidInput(format!(
            "grid would have {n_nodes} nodes; dx is too small for this support"
        )));
    }
    let n = n_nodes as usize;
    let mut xs = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut fa = Vec::with_capacity(n);
    let even = (pb - pa + 1) as usize;
    let mut s_nodes = Vec::with_capacity(even);
    let mut s_left = Vec::with_capacity(even);
    let mut s_right = Vec::with_capacity(even);

    let xj = |j: i64| j as f64 * dx;
    let mut x0 = xj(2 * pa);
    let mut u0 = data.u(x0);
    let mut f0 = data.f_ac(x0);
    let mut fs0 = data.f_sing(x0);
    for p in pa..pb {
        let x1 = xj(2 * p + 1);
        let x2 = xj(2 * p + 2);
        let u1 = data.u(x1);
        let u2 = data.u(x2);
        let f2 = data.f_ac(x2);
        let fs2 = data.f_sing(x2);

        let du = (u2 - u0) / (2.0 * dx);
        let dplus = (u1 - u0) / dx;
        let dfa = (f2 - f0) / (2.0 * dx);
        let mut rad = dfa - du * du;
        if rad < 0.0 {
            // rounding of the sampled values, amplified by the division by dx
            let eps = f64::EPSILON;
            let noise = eps * ((f0.abs() + f2.abs()) + 2.0 * du.abs() * (u0.abs() + u2.abs()))
                / (2.0 * dx);
            if rad < -1e-12 * dfa.max(du * du) - 16.0 * noise {
                return Err(Error::DataInconsistency(format!(
                    "energy on [{x0}, {x2}] is smaller than the integral of u_x^2 (radicand {rad:e})"
                )));
            }
            rad = 0.0;
        }
        let q = rad.sqrt();
        let s = select_sign(du, dplus, q);
        let slope1 = du - s * q;

        xs.push(x0);
        us.push(u0);
        fa.push(f0);
        xs.push(x1);
        us.push(u0 + slope1 * dx);
        fa.push(f0 + slope1 * slope1 * dx);

        s_nodes.push(x0);
        s_left.push(fs0);
        s_right.push(fs2);

        x0 = x2;
        u0 = u2;
        f0 = f2;
        fs0 = fs2;
    }
    xs.push(x0);
    us.push(u0);
    fa.push(f0);
    s_nodes.push(x0);
    s_left.push(fs0);
    s_right.push(fs0);

    let u = PiecewiseLinear::new(xs.clone(), us)?;
    let f_ac = MonotoneStep::continuous(xs, fa)?;
    let f_sing = MonotoneStep::new(s_nodes, s_left, s_right)?;
    Ok(EulerianState::initial(u, f_ac, f_sing))
}
