//! Reference solutions: the exact multipeakon solution, the cusp initial
//! data, and a cached fine-grid reference run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::eulerian::{project, AlphaProfile, EulerianState, InitialData};
use crate::evolution::{evolve_with, EvolutionConfig};
use crate::lagrangian::{cell_breaking_time, to_lagrangian, LagrangianGrid};
use crate::piecewise::{MonotoneStep, PiecewiseLinear};

/// Exact rational constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Q(pub i64, pub i64);

impl Q {
    pub fn f(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

const fn q(n: i64, d: i64) -> Q {
    Q(n, d)
}

/// Lagrangian labels of the multipeakon nodes.
const XI: [Q; 6] = [
    q(0, 1),
    q(2, 1),
    q(761, 361),
    q(1522, 361),
    q(362, 81),
    q(181, 27),
];

/// `H` at the nodes; constant in time.
const H: [Q; 6] = [q(0, 1), q(1, 1), q(1, 1), q(2, 1), q(2, 1), q(3, 1)];

struct Regime {
    start: Q,
    /// `y_i(t) = c0 + c1 t + c2 t^2` at each node.
    y: [(Q, Q, Q); 6],
    v: [Q; 6],
}

const REGIMES: [Regime; 4] = [
    Regime {
        start: q(0, 1),
        y: [
            (q(0, 1), q(3, 1), q(-3, 8)),
            (q(1, 1), q(2, 1), q(-1, 8)),
            (q(400, 361), q(2, 1), q(-1, 8)),
            (q(800, 361), q(18, 19), q(1, 8)),
            (q(200, 81), q(18, 19), q(1, 8)),
            (q(100, 27), q(-28, 171), q(3, 8)),
        ],
        v: [q(0, 1), q(1, 1), q(1, 1), q(2, 1), q(2, 1), q(3, 1)],
    },
    Regime {
        start: q(2, 1),
        y: [
            (q(1, 4), q(11, 4), q(-5, 16)),
            (q(3, 4), q(9, 4), q(-3, 16)),
            (q(1239, 1444), q(9, 4), q(-3, 16)),
            (q(2839, 1444), q(91, 76), q(1, 16)),
            (q(719, 324), q(91, 76), q(1, 16)),
            (q(373, 108), q(59, 684), q(5, 16)),
        ],
        v: [q(0, 1), q(1, 2), q(1, 2), q(3, 2), q(3, 2), q(5, 2)],
    },
    Regime {
        start: q(40, 19),
        y: [
            (q(961, 1444), q(179, 76), q(-7, 32)),
            (q(1683, 1444), q(141, 76), q(-3, 32)),
            (q(1839, 1444), q(141, 76), q(-3, 32)),
            (q(2239, 1444), q(121, 76), q(-1, 32)),
            (q(210959, 116964), q(121, 76), q(-1, 32)),
            (q(118453, 38988), q(329, 684), q(7, 32)),
        ],
        v: [q(0, 1), q(1, 2), q(1, 2), q(3, 4), q(3, 4), q(7, 4)],
    },
    Regime {
        start: q(20, 9),
        y: [
            (q(135601, 116964), q(1307, 684), q(-19, 160)),
            (q(194083, 116964), q(965, 684), q(1, 160)),
            (q(206719, 116964), q(965, 684), q(1, 160)),
            (q(239119, 116964), q(785, 684), q(11, 160)),
            (q(89573, 38988), q(785, 684), q(11, 160)),
            (q(297599, 116964), q(211, 228), q(19, 160)),
        ],
        v: [q(0, 1), q(1, 2), q(1, 2), q(3, 4), q(3, 4), q(19, 20)],
    },
];

/// Breaking times of the five multipeakon cells.
const CELL_TAU: [Option<Q>; 5] = [Some(q(2, 1)), None, Some(q(40, 19)), None, Some(q(20, 9))];

/// Closed-form solution for the three-ramp initial data with a piecewise
/// linear dissipation profile. Regime boundaries belong to the later regime.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMultipeakon;

impl ExactMultipeakon {
    pub fn initial_state(&self) -> EulerianState {
        let x = [
            q(0, 1),
            q(1, 1),
            q(400, 361),
            q(800, 361),
            q(200, 81),
            q(100, 27),
        ];
        let u = [
            q(3, 1),
            q(2, 1),
            q(2, 1),
            q(18, 19),
            q(18, 19),
            q(-28, 171),
        ];
        let xs: Vec<f64> = x.iter().map(|v| v.f()).collect();
        let f: Vec<f64> = H.iter().map(|v| v.f()).collect();
        let u = PiecewiseLinear::new(xs.clone(), u.iter().map(|v| v.f()).collect())
            .expect("static data");
        let f_ac = MonotoneStep::continuous(xs, f).expect("static data");
        EulerianState::initial(u, f_ac, MonotoneStep::zero())
    }

    pub fn alpha(&self) -> AlphaProfile {
        // 0 up to 1434/361, then slope 361/381 up to 6879/1444, then slope
        // 361/1705 up to 5, constant 4/5 beyond
        AlphaProfile::new(
            vec![q(1434, 361).f(), q(6879, 1444).f(), 5.0],
            vec![0.0, 0.75, 0.8],
        )
        .expect("static data")
    }

    fn regime(&self, t: f64) -> &'static Regime {
        REGIMES.iter().rev().find(|r| t >= r.start.f()).unwrap_or(&REGIMES[0])
    }

    /// Total energy at time `t`.
    pub fn energy(&self, t: f64) -> f64 {
        self.regime(t).v[5].f()
    }

    pub fn lagrangian(&self, t: f64) -> LagrangianGrid {
        let r = self.regime(t);
        let xi: Vec<f64> = XI.iter().map(|v| v.f()).collect();
        let y: Vec<f64> = r
            .y
            .iter()
            .map(|(a, b, c)| a.f() + b.f() * t + c.f() * t * t)
            .collect();
        let u: Vec<f64> = r.y.iter().map(|(_, b, c)| b.f() + 2.0 * c.f() * t).collect();
        let v: Vec<f64> = r.v.iter().map(|v| v.f()).collect();
        let h: Vec<f64> = H.iter().map(|v| v.f()).collect();
        let d = |a: &[f64], j: usize| (a[j + 1] - a[j]) / (xi[j + 1] - xi[j]);
        LagrangianGrid {
            dy: (0..5).map(|j| d(&y, j)).collect(),
            du: (0..5).map(|j| d(&u, j)).collect(),
            dv: (0..5).map(|j| d(&v, j)).collect(),
            dh: (0..5).map(|j| d(&h, j)).collect(),
            tau: CELL_TAU
                .iter()
                .map(|t| t.map_or(f64::INFINITY, Q::f))
                .collect(),
            xi,
            y,
            u,
            v,
            h,
        }
    }

    /// `(u, F)` at `(t, x)`, with `F` left-continuous in `x`.
    pub fn eval(&self, t: f64, x: f64) -> (f64, f64) {
        let g = self.lagrangian(t);
        let i = g.y.partition_point(|&p| p < x);
        if i == 0 {
            return (g.u[0], 0.0);
        }
        if i == g.y.len() {
            return (g.u[i - 1], g.v[i - 1]);
        }
        if g.y[i] == x {
            return (g.u[i], g.v[i]);
        }
        let s = (x - g.y[i - 1]) / (g.y[i] - g.y[i - 1]);
        (
            g.u[i - 1] + s * (g.u[i] - g.u[i - 1]),
            g.v[i - 1] + s * (g.v[i] - g.v[i - 1]),
        )
    }

    /// Eulerian state at time `t`; coinciding characteristics are merged.
    pub fn eulerian(&self, t: f64) -> EulerianState {
        let g = self.lagrangian(t);
        let (mut xs, mut us, mut fl, mut fr) = (vec![], vec![], vec![], vec![]);
        let mut i = 0;
        while i < 6 {
            let mut k = i;
            while k + 1 < 6 && g.y[k + 1] <= g.y[i] {
                k += 1;
            }
            xs.push(g.y[i]);
            us.push(g.u[i]);
            fl.push(g.v[i]);
            fr.push(g.v[k]);
            i = k + 1;
        }
        let u = PiecewiseLinear::new(xs.clone(), us).expect("ordered nodes");
        let f = MonotoneStep::new(xs, fl, fr).expect("monotone energy");
        let h: Vec<f64> = H.iter().map(|v| v.f()).collect();
        let gx: Vec<f64> = g.y.clone();
        let mut gn = vec![];
        let (mut gl, mut gr) = (vec![], vec![]);
        let mut i = 0;
        while i < 6 {
            let mut k = i;
            while k + 1 < 6 && gx[k + 1] <= gx[i] {
                k += 1;
            }
            gn.push(gx[i]);
            gl.push(h[i]);
            gr.push(h[k]);
            i = k + 1;
        }
        EulerianState {
            u,
            f_ac: f.continuous_part(),
            f_sing: f.jump_part(),
            g: MonotoneStep::new(gn, gl, gr).expect("monotone"),
        }
    }
}

/// `(time, location, fraction of energy removed)` for each breaking event.
pub fn exact_breaking_locations() -> Vec<(f64, f64, f64)> {
    vec![
        (2.0, 4.5, 0.5),
        (q(40, 19).f(), q(6879, 1444).f(), 0.75),
        (q(20, 9).f(), q(6005, 1026).f() - q(961, 1444).f(), 0.8),
    ]
}

/// `u = |x|^(2/3)` on `[-1, 1]`, equal to one outside, with the matching
/// absolutely continuous energy and no singular part.
#[derive(Debug, Clone, Copy)]
pub struct Cusp {
    /// Dissipation strength: `alpha = beta |x|` on `[-1, 0]`.
    pub beta: f64,
}

impl Cusp {
    pub fn alpha(&self) -> Result<AlphaProfile> {
        AlphaProfile::new(vec![-1.0, 0.0], vec![self.beta, 0.0])
    }

    pub fn total_energy(&self) -> f64 {
        8.0 / 3.0
    }
}

impl InitialData for Cusp {
    fn u(&self, x: f64) -> f64 {
        if x.abs() <= 1.0 {
            x.abs().powf(2.0 / 3.0)
        } else {
            1.0
        }
    }

    fn f_ac(&self, x: f64) -> f64 {
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            8.0 / 3.0
        } else {
            4.0 / 3.0 * (1.0 + x.signum() * x.abs().cbrt())
        }
    }

    fn f_sing(&self, _x: f64) -> f64 {
        0.0
    }

    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
}

pub const REFERENCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredState {
    t: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    f_left: Vec<f64>,
    f_right: Vec<f64>,
    g_left: Vec<f64>,
    g_right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReferenceFile {
    format_version: u32,
    dx_ref: f64,
    t_final: f64,
    input_hash: String,
    states: Vec<StoredState>,
}

impl StoredState {
    fn from_state(t: f64, s: &EulerianState) -> Result<Self> {
        let f = s.f();
        // put u, F and G on a common node set
        let x = crate::piecewise::merge_knots(s.u.nodes(), f.nodes());
        let x = crate::piecewise::merge_knots(&x, s.g.nodes());
        let u = x.iter().map(|&p| s.u.eval(p)).collect();
        let (f_left, f_right) = x.iter().map(|&p| f.limits(p)).unzip();
        let (g_left, g_right) = x.iter().map(|&p| s.g.limits(p)).unzip();
        Ok(StoredState {
            t,
            x,
            u,
            f_left,
            f_right,
            g_left,
            g_right,
        })
    }

    fn to_state(&self) -> Result<EulerianState> {
        let u = PiecewiseLinear::new(self.x.clone(), self.u.clone())?;
        let f = MonotoneStep::new(self.x.clone(), self.f_left.clone(), self.f_right.clone())?;
        let g = MonotoneStep::new(self.x.clone(), self.g_left.clone(), self.g_right.clone())?;
        Ok(EulerianState {
            u,
            f_ac: f.continuous_part(),
            f_sing: f.jump_part(),
            g,
        })
    }
}

fn input_hash(
    projected: &EulerianState,
    alpha: &AlphaProfile,
    dx_ref: f64,
    t_final: f64,
    times: &[f64],
) -> String {
    let mut h = Sha256::new();
    let mut put = |label: &str, xs: &[f64]| {
        h.update(label.as_bytes());
        h.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            h.update(x.to_bits().to_le_bytes());
        }
    };
    put("version", &[REFERENCE_FORMAT_VERSION as f64]);
    put("dx", &[dx_ref]);
    put("T", &[t_final]);
    put("times", times);
    put("alpha.x", alpha.as_piecewise().nodes());
    put("alpha.v", alpha.as_piecewise().values());
    put("u.x", projected.u.nodes());
    put("u.v", projected.u.values());
    let g = &projected.g;
    put("g.x", g.nodes());
    put("g.l", g.left_values());
    put("g.r", g.right_values());
    let fs = &projected.f_sing;
    put("fs.x", fs.nodes());
    put("fs.l", fs.left_values());
    put("fs.r", fs.right_values());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("reference-{}.json", &hash[..16]))
}

fn read_cache(path: &Path, hash: &str, dx_ref: f64, t_final: f64) -> Option<ReferenceFile> {
    let text = fs::read_to_string(path).ok()?;
    let file: ReferenceFile = serde_json::from_str(&text).ok()?;
    let ok = file.format_version == REFERENCE_FORMAT_VERSION
        && file.input_hash == hash
        && file.dx_ref == dx_ref
        && file.t_final == t_final;
    ok.then_some(file)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().unwrap().to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Solution at `dx_ref` evaluated at `query_times`, using minimal time steps.
/// With a cache directory, results are stored there keyed by a hash of all
/// inputs and reused on later calls.
pub fn fine_reference<D: InitialData + ?Sized>(
    data: &D,
    alpha: &AlphaProfile,
    dx_ref: f64,
    t_final: f64,
    query_times: &[f64],
    cache_dir: Option<&Path>,
) -> Result<Vec<(f64, EulerianState)>> {
    let projected = project(data, dx_ref)?;
    let mut times = query_times.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let hash = input_hash(&projected, alpha, dx_ref, t_final, &times);
    if let Some(dir) = cache_dir {
        if let Some(file) = read_cache(&cache_path(dir, &hash), &hash, dx_ref, t_final) {
            return file
                .states
                .iter()
                .map(|s| Ok((s.t, s.to_state()?)))
                .collect();
        }
    }
    let grid = to_lagrangian(&projected)?;
    let mut out = Vec::with_capacity(times.len());
    evolve_with(
        &grid,
        alpha,
        dx_ref,
        t_final,
        &EvolutionConfig::default(),
        &times,
        &mut |s| {
            out.push((s.t, s.eulerian()?));
            Ok(())
        },
    )?;
    if let Some(dir) = cache_dir {
        let file = ReferenceFile {
            format_version: REFERENCE_FORMAT_VERSION,
            dx_ref,
            t_final,
            input_hash: hash.clone(),
            states: out
                .iter()
                .map(|(t, s)| StoredState::from_state(*t, s))
                .collect::<Result<_>>()?,
        };
        let bytes = serde_json::to_vec(&file)?;
        write_atomic(&cache_path(dir, &hash), &bytes)?;
    }
    Ok(out)
}

/// `(u, F)` of the exact multipeakon solution at `(t, x)`.
pub fn exact_multipeakon(t: f64, x: f64) -> (f64, f64) {
    ExactMultipeakon.eval(t, x)
}

/// Breaking time of every cell of the exact grid, recomputed from its
/// derivatives at `t = 0`.
pub fn multipeakon_cell_breaking_times() -> Vec<f64> {
    let g = ExactMultipeakon.lagrangian(0.0);
    (0..g.n_cells())
        .map(|j| cell_breaking_time(g.dy[j], g.du[j]))
        .collect()
}
