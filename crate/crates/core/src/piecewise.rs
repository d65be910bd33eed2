//! Piecewise-linear functions with constant tails, left-continuous monotone
//! functions with jumps, and exact norms of their differences.
//!
//! All norms are computed segment by segment on the merged node set, where
//! each function is affine, so no quadrature is involved.

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether two tails agree.
const TAIL_TOL: f64 = 1e-12;

/// Anything that is affine between sorted knots and constant beyond them,
/// possibly with jumps at the knots.
pub trait Breakpoints {
    fn knots(&self) -> &[f64];
    /// Left and right limits at knot `i`.
    fn knot_limits(&self, i: usize) -> (f64, f64);

    fn left_tail(&self) -> f64 {
        self.knot_limits(0).0
    }

    fn right_tail(&self) -> f64 {
        self.knot_limits(self.knots().len() - 1).1
    }
}

/// Forward-only evaluation cursor. Queries must be nondecreasing in `x`.
pub struct Sweep<'a, F: Breakpoints + ?Sized> {
    f: &'a F,
    next: usize,
}

impl<'a, F: Breakpoints + ?Sized> Sweep<'a, F> {
    pub fn new(f: &'a F) -> Self {
        Sweep { f, next: 0 }
    }

    /// Left and right limits of the function at `x`.
    pub fn at(&mut self, x: f64) -> (f64, f64) {
        let k = self.f.knots();
        while self.next < k.len() && k[self.next] < x {
            self.next += 1;
        }
        let n = self.next;
        if n < k.len() && k[n] == x {
            return self.f.knot_limits(n);
        }
        if n == 0 {
            let v = self.f.knot_limits(0).0;
            return (v, v);
        }
        if n == k.len() {
            let v = self.f.knot_limits(n - 1).1;
            return (v, v);
        }
        let (x0, x1) = (k[n - 1], k[n]);
        let v0 = self.f.knot_limits(n - 1).1;
        let v1 = self.f.knot_limits(n).0;
        let v = v0 + (v1 - v0) * ((x - x0) / (x1 - x0));
        (v, v)
    }
}

fn check_knots(nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidInput("at least one node is required".into()));
    }
    if let Some(i) = nodes.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("node {i} is not finite")));
    }
    if let Some(i) = nodes.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "nodes must be strictly increasing (nodes {i} and {})",
            i + 1
        )));
    }
    Ok(())
}

/// Continuous piecewise-linear function, constant outside its node range.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_knots(&nodes)?;
        if nodes.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("values must be finite".into()));
        }
        Ok(PiecewiseLinear { nodes, values })
    }

    pub fn constant(c: f64) -> Self {
        PiecewiseLinear {
            nodes: vec![0.0],
            values: vec![c],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&p| p < x);
        if i == 0 {
            return self.values[0];
        }
        if i == n {
            return self.values[n - 1];
        }
        if self.nodes[i] == x {
            return self.values[i];
        }
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * ((x - x0) / (x1 - x0))
    }

    /// Slope on each of the `len() - 1` interior segments.
    pub fn slopes(&self) -> Vec<f64> {
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes().into_iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Breakpoints for PiecewiseLinear {
    fn knots(&self) -> &[f64] {
        &self.nodes
    }

    fn knot_limits(&self, i: usize) -> (f64, f64) {
        (self.values[i], self.values[i])
    }
}

/// Left-continuous nondecreasing function, affine between nodes, with
/// possible upward jumps at nodes. It vanishes at minus infinity and is
/// constant beyond the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneStep {
    nodes: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl MonotoneStep {
    /// `left[i]` is the value at `nodes[i]`, `right[i]` the limit from the right.
    pub fn new(nodes: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        check_knots(&nodes)?;
        if left.len() != nodes.len() || right.len() != nodes.len() {
            return Err(Error::InvalidInput(
                "node and value arrays differ in length".into(),
            ));
        }
        if left.iter().chain(&right).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("values must be finite".into()));
        }
        let scale = right
            .iter()
            .chain(&left)
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = TAIL_TOL * scale;
        if left[0].abs() > tol {
            return Err(Error::InvalidInput(format!(
                "monotone function must vanish at minus infinity, got {}",
                left[0]
            )));
        }
        for i in 0..nodes.len() {
            if right[i] < left[i] - tol {
                return Err(Error::InvalidInput(format!("negative jump at node {i}")));
            }
            if i + 1 < nodes.len() && left[i + 1] < right[i] - tol {
                return Err(Error::InvalidInput(format!(
                    "decreasing between nodes {i} and {}",
                    i + 1
                )));
            }
        }
        Ok(MonotoneStep { nodes, left, right })
    }

    /// Continuous monotone function through the given node values.
    pub fn continuous(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let right = values.clone();
        Self::new(nodes, values, right)
    }

    pub fn zero() -> Self {
        MonotoneStep {
            nodes: vec![0.0],
            left: vec![0.0],
            right: vec![0.0],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    pub fn jumps(&self) -> Vec<f64> {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| r - l)
            .collect()
    }

    /// Value at `x` (left-continuous).
    pub fn eval(&self, x: f64) -> f64 {
        self.limits(x).0
    }

    /// Limit from the right at `x`.
    pub fn eval_right(&self, x: f64) -> f64 {
        self.limits(x).1
    }

    pub fn limits(&self, x: f64) -> (f64, f64) {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&p| p < x);
        if i < n && self.nodes[i] == x {
            return (self.left[i], self.right[i]);
        }
        if i == 0 {
            return (self.left[0], self.left[0]);
        }
        if i == n {
            return (self.right[n - 1], self.right[n - 1]);
        }
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (v0, v1) = (self.right[i - 1], self.left[i]);
        let v = v0 + (v1 - v0) * ((x - x0) / (x1 - x0));
        (v, v)
    }

    pub fn total(&self) -> f64 {
        self.right[self.right.len() - 1]
    }

    /// The function with all jumps removed.
    pub fn continuous_part(&self) -> MonotoneStep {
        let mut acc = 0.0;
        let mut vals = Vec::with_capacity(self.nodes.len());
        for i in 0..self.nodes.len() {
            vals.push(self.left[i] - acc);
            acc += self.right[i] - self.left[i];
        }
        MonotoneStep {
            nodes: self.nodes.clone(),
            left: vals.clone(),
            right: vals,
        }
    }

    /// The pure-jump part: zero slopes, same jumps.
    pub fn jump_part(&self) -> MonotoneStep {
        let mut acc = 0.0;
        let mut left = Vec::with_capacity(self.nodes.len());
        let mut right = Vec::with_capacity(self.nodes.len());
        for i in 0..self.nodes.len() {
            left.push(acc);
            acc += self.right[i] - self.left[i];
            right.push(acc);
        }
        MonotoneStep {
            nodes: self.nodes.clone(),
            left,
            right,
        }
    }

    /// Pointwise sum on the merged node set.
    pub fn sum(a: &MonotoneStep, b: &MonotoneStep) -> MonotoneStep {
        let knots = merge_knots(&a.nodes, &b.nodes);
        let mut sa = Sweep::new(a);
        let mut sb = Sweep::new(b);
        let mut left = Vec::with_capacity(knots.len());
        let mut right = Vec::with_capacity(knots.len());
        for &x in &knots {
            let (al, ar) = sa.at(x);
            let (bl, br) = sb.at(x);
            left.push(al + bl);
            right.push(ar + br);
        }
        MonotoneStep {
            nodes: knots,
            left,
            right,
        }
    }
}

impl Breakpoints for MonotoneStep {
    fn knots(&self) -> &[f64] {
        &self.nodes
    }

    fn knot_limits(&self, i: usize) -> (f64, f64) {
        (self.left[i], self.right[i])
    }
}

/// Sorted union of two strictly increasing sequences.
pub fn merge_knots(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j == b.len() || (i < a.len() && a[i] < b[j]) {
            i += 1;
            a[i - 1]
        } else if i == a.len() || b[j] < a[i] {
            j += 1;
            b[j - 1]
        } else {
            i += 1;
            j += 1;
            a[i - 1]
        };
        out.push(next);
    }
    out
}

/// L1 norm of the affine function going from `a` to `b` over length `h`.
pub fn affine_l1(a: f64, b: f64, h: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (a.abs() + b.abs())
    } else {
        0.5 * h * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// Squared L2 norm of the affine function going from `a` to `b` over length `h`.
pub fn affine_l2_sq(a: f64, b: f64, h: f64) -> f64 {
    h * (a * a + a * b + b * b) / 3.0
}

pub fn sup_norm_diff<A, B>(f: &A, g: &B) -> f64
where
    A: Breakpoints + ?Sized,
    B: Breakpoints + ?Sized,
{
    let knots = merge_knots(f.knots(), g.knots());
    let mut sf = Sweep::new(f);
    let mut sg = Sweep::new(g);
    let mut m = 0.0_f64;
    for &x in &knots {
        let (fl, fr) = sf.at(x);
        let (gl, gr) = sg.at(x);
        m = m.max((fl - gl).abs()).max((fr - gr).abs());
    }
    m
}

fn integrate_diff<A, B>(f: &A, g: &B, kernel: fn(f64, f64, f64) -> f64) -> Result<f64>
where
    A: Breakpoints + ?Sized,
    B: Breakpoints + ?Sized,
{
    let ld = f.left_tail() - g.left_tail();
    let rd = f.right_tail() - g.right_tail();
    let scale = [f.left_tail(), g.left_tail(), f.right_tail(), g.right_tail()]
        .iter()
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    if ld.abs() > TAIL_TOL * scale || rd.abs() > TAIL_TOL * scale {
        return Err(Error::UnboundedNorm {
            left_diff: ld,
            right_diff: rd,
        });
    }
    let knots = merge_knots(f.knots(), g.knots());
    let mut sf = Sweep::new(f);
    let mut sg = Sweep::new(g);
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &knots {
        let (fl, fr) = sf.at(x);
        let (gl, gr) = sg.at(x);
        if let Some((x0, d0)) = prev {
            total += kernel(d0, fl - gl, x - x0);
        }
        prev = Some((x, fr - gr));
    }
    Ok(total)
}

pub fn l1_norm_diff<A, B>(f: &A, g: &B) -> Result<f64>
where
    A: Breakpoints + ?Sized,
    B: Breakpoints + ?Sized,
{
    integrate_diff(f, g, affine_l1)
}

pub fn l2_norm_diff<A, B>(f: &A, g: &B) -> Result<f64>
where
    A: Breakpoints + ?Sized,
    B: Breakpoints + ?Sized,
{
    integrate_diff(f, g, affine_l2_sq).map(f64::sqrt)
}

/// A function of the form `xi + offset(xi)` with a bounded piecewise-linear
/// offset; this is how the generalized inverse is represented, since it grows
/// like the identity in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPlus {
    pub offset: PiecewiseLinear,
}

impl IdentityPlus {
    pub fn eval(&self, xi: f64) -> f64 {
        xi + self.offset.eval(xi)
    }
}

/// `y(xi) = sup { x : x + g(x) < xi }`.
///
/// Jumps of `g` turn into plateaus of `y`; a segment where `g` has slope `s`
/// maps to a segment of slope `1 / (1 + s)`.
pub fn generalized_inverse(g: &MonotoneStep) -> Result<IdentityPlus> {
    let mut nodes = Vec::with_capacity(2 * g.nodes.len());
    let mut offs = Vec::with_capacity(2 * g.nodes.len());
    for i in 0..g.nodes.len() {
        let x = g.nodes[i];
        let a = x + g.left[i];
        let b = x + g.right[i];
        nodes.push(a);
        offs.push(x - a);
        if b > a {
            nodes.push(b);
            offs.push(x - b);
        }
    }
    Ok(IdentityPlus {
        offset: PiecewiseLinear::new(nodes, offs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(n: &[f64], v: &[f64]) -> PiecewiseLinear {
        PiecewiseLinear::new(n.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn eval_interpolates_and_clamps() {
        let f = pl(&[0.0, 1.0, 3.0], &[1.0, 3.0, -1.0]);
        assert_eq!(f.eval(-5.0), 1.0);
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(1.0), 3.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(10.0), -1.0);
        assert_eq!(f.slopes(), vec![2.0, -2.0]);
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(PiecewiseLinear::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(PiecewiseLinear::new(vec![], vec![]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneStep::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.5, 1.0]).is_ok());
        assert!(MonotoneStep::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.5]).is_err());
        assert!(MonotoneStep::new(vec![0.0], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn monotone_limits_and_parts() {
        let f = MonotoneStep::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0], vec![0.5, 2.0, 3.0])
            .unwrap();
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval_right(1.0), 2.0);
        assert_eq!(f.eval(0.5), 0.75);
        assert_eq!(f.total(), 3.0);
        let c = f.continuous_part();
        let j = f.jump_part();
        assert_eq!(c.left_values(), &[0.0, 0.5, 1.5]);
        assert_eq!(j.right_values(), &[0.5, 1.5, 1.5]);
        let s = MonotoneStep::sum(&c, &j);
        assert_eq!(sup_norm_diff(&s, &f), 0.0);
    }

    #[test]
    fn norms_of_simple_differences() {
        // hat of height 1 on [0, 2]
        let f = pl(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let z = PiecewiseLinear::constant(0.0);
        assert_eq!(sup_norm_diff(&f, &z), 1.0);
        assert!((l1_norm_diff(&f, &z).unwrap() - 1.0).abs() < 1e-15);
        assert!((l2_norm_diff(&f, &z).unwrap() - (2.0_f64 / 3.0).sqrt()).abs() < 1e-15);
        // sign change inside a segment: integral of |x| over [-1, 1]
        let g = pl(&[-1.0, 1.0], &[-1.0, 1.0]);
        let h = pl(&[-1.0, 1.0], &[-1.0, -1.0]);
        assert!(l1_norm_diff(&g, &pl(&[-1.0, 1.0], &[0.0, 0.0])).is_err());
        assert!((l1_norm_diff(&g, &g).unwrap()).abs() < 1e-15);
        assert!(l1_norm_diff(&g, &h).is_err());
    }

    #[test]
    fn jump_difference_norms() {
        let a = MonotoneStep::new(vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let b = MonotoneStep::new(vec![0.5], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(sup_norm_diff(&a, &b), 1.0);
        assert!((l1_norm_diff(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((l2_norm_diff(&a, &b).unwrap() - 0.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_zero_is_identity() {
        let y = generalized_inverse(&MonotoneStep::zero()).unwrap();
        for xi in [-3.0, 0.0, 0.25, 7.0] {
            assert_eq!(y.eval(xi), xi);
        }
    }

    #[test]
    fn inverse_of_unit_jump_at_origin() {
        let g = MonotoneStep::new(vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let y = generalized_inverse(&g).unwrap();
        assert_eq!(y.eval(-1.0), -1.0);
        assert_eq!(y.eval(0.3), 0.0);
        assert_eq!(y.eval(1.0), 0.0);
        assert_eq!(y.eval(2.5), 1.5);
    }

    #[test]
    fn inverse_of_ramp() {
        // g = x on [0, 1], so y(xi) = xi / 2 on [0, 2]
        let g = MonotoneStep::continuous(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let y = generalized_inverse(&g).unwrap();
        assert_eq!(y.eval(1.0), 0.5);
        assert_eq!(y.eval(2.0), 1.0);
        assert_eq!(y.eval(3.0), 2.0);
    }

    #[test]
    fn merge_keeps_each_knot_once() {
        assert_eq!(
            merge_knots(&[0.0, 1.0, 3.0], &[1.0, 2.0]),
            vec![0.0, 1.0, 2.0, 3.0]
        );
    }
}
