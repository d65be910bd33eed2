#![allow(dead_code)]

use alphahs::eulerian::EulerianState;
use alphahs::piecewise::{MonotoneStep, PiecewiseLinear};
use rand::Rng;

/// Random piecewise-linear `u` on `[-2, 2]` with the matching absolutely
/// continuous energy and a few point masses.
pub fn random_state<R: Rng>(rng: &mut R, n: usize, masses: usize) -> EulerianState {
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    x.sort_by(f64::total_cmp);
    x.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let u: Vec<f64> = x.iter().map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut f = vec![0.0];
    for k in 1..x.len() {
        let s = (u[k] - u[k - 1]) / (x[k] - x[k - 1]);
        f.push(f[k - 1] + s * s * (x[k] - x[k - 1]));
    }
    let f_ac = MonotoneStep::continuous(x.clone(), f).unwrap();
    let mut jumps: Vec<(f64, f64)> = (0..masses)
        .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(0.05..1.0)))
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    jumps.dedup_by(|a, b| a.0 == b.0);
    let f_sing = if jumps.is_empty() {
        MonotoneStep::zero()
    } else {
        let (mut l, mut r) = (vec![], vec![]);
        let mut acc = 0.0;
        for (_, m) in &jumps {
            l.push(acc);
            acc += m;
            r.push(acc);
        }
        MonotoneStep::new(jumps.iter().map(|j| j.0).collect(), l, r).unwrap()
    };
    let u = PiecewiseLinear::new(x, u).unwrap();
    EulerianState::initial(u, f_ac, f_sing)
}
