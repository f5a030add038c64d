//! α-averaged increments, the reconstructed function `f`, the mean identity
//! and the estimators of `ϱ`.
//!
//! Passage times from a point `v` to a line follow from one point sweep,
//! since `τ(v, Ŝ) = min_{s ∈ Ŝ} τ(v, s)`. The identity and `ϱ̂` experiments
//! use this to read every line of an α-grid off a handful of sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::busemann::{check_line_beyond, sweep_near_side, increment_config, AlphaTag, IncrementConfiguration, Increments};
use crate::error::{FppError, Result};
use crate::lattice::{Axis, DomainBox, Vertex};
use crate::line_geometry::{unit, LinearFunctional, ShapeEstimate};
use crate::passage::{discretize_line, sweep, Environment, PassageResult};
use crate::stats::{combined_se, MeanStd};
use crate::weight_field::{replica_seed, DistributionConfig, WeightField};

/// Midpoint grid `start + h(k + 1/2)`, `k = 0..⌊n/h⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub start: f64,
    pub n: f64,
    pub h: f64,
}

impl AlphaGrid {
    pub fn new(n: f64, h: f64) -> Result<Self> {
        if !(n > 0.0 && h > 0.0 && n.is_finite() && h.is_finite()) {
            return Err(FppError::Config(format!("alpha grid needs n > 0 and h > 0 (n={n}, h={h})")));
        }
        if n / h < 1.0 - 1e-9 {
            return Err(FppError::Config(format!("alpha grid is empty: h={h} exceeds n={n}")));
        }
        Ok(AlphaGrid { start: 0.0, n, h })
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn len(&self) -> usize {
        (self.n / self.h + 1e-9).floor() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + self.h * (k as f64 + 0.5)).collect()
    }

    /// Length actually covered by the grid cells.
    pub fn covered(&self) -> f64 {
        self.len() as f64 * self.h
    }

    pub fn end(&self) -> f64 {
        self.start + self.covered()
    }
}

/// Grid-averaged increments of one environment on a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedIncrements {
    pub window: DomainBox,
    pub theta: [Vec<f64>; 2],
    pub grid: AlphaGrid,
    pub functional: LinearFunctional,
    pub seed: Option<u64>,
    pub law: Option<DistributionConfig>,
    #[serde(skip)]
    pub per_alpha: Option<Vec<IncrementConfiguration<f64>>>,
}

impl Increments<f64> for AveragedIncrements {
    fn window(&self) -> &DomainBox {
        &self.window
    }

    #[inline]
    fn theta(&self, v: Vertex, axis: Axis) -> Option<f64> {
        let i = self.window.index(v)?;
        let t = self.theta[axis.index()][i];
        (!t.is_nan()).then_some(t)
    }
}

impl AveragedIncrements {
    pub fn alpha_tag(&self) -> AlphaTag {
        AlphaTag::Averaged {
            start: self.grid.start,
            n: self.grid.n,
            h: self.grid.h,
        }
    }
}

/// Midpoint-rule average over `grid` of the increment configurations of one
/// environment. Configurations are summed in grid order.
pub fn average_increments(
    env: &Environment<f64>,
    functional: &LinearFunctional,
    grid: &AlphaGrid,
    window: DomainBox,
    keep_per_alpha: bool,
) -> Result<AveragedIncrements> {
    let alphas = grid.values();
    if alphas.is_empty() {
        return Err(FppError::Config("empty alpha grid".into()));
    }
    for &a in &alphas {
        check_line_beyond(functional, a, &window)?;
    }
    let mut sum = [vec![0.0; window.len()], vec![0.0; window.len()]];
    let mut kept = Vec::new();
    for &a in &alphas {
        let cfg = increment_config(env, functional, a, window)?;
        for ax in 0..2 {
            for (s, t) in sum[ax].iter_mut().zip(&cfg.theta[ax]) {
                *s += *t;
            }
        }
        if keep_per_alpha {
            kept.push(cfg);
        }
    }
    let k = alphas.len() as f64;
    for s in sum.iter_mut() {
        for x in s.iter_mut() {
            *x /= k;
        }
    }
    Ok(AveragedIncrements {
        window,
        theta: sum,
        grid: *grid,
        functional: *functional,
        seed: env.field().map(|f| f.seed()),
        law: env.field().map(|f| *f.config()),
        per_alpha: keep_per_alpha.then_some(kept),
    })
}

fn staircase(x: Vertex, y: Vertex, horizontal_first: bool) -> Vec<Vertex> {
    let mut path = vec![x];
    let mut v = x;
    let go = |target: i32, axis: Axis, v: &mut Vertex, path: &mut Vec<Vertex>| {
        let (cur, unit) = match axis {
            Axis::E1 => (v.x, Vertex::new(1, 0)),
            Axis::E2 => (v.y, Vertex::new(0, 1)),
        };
        let step = if target >= cur { unit } else { -unit };
        for _ in 0..(target - cur).abs() {
            *v = *v + step;
            path.push(*v);
        }
    };
    if horizontal_first {
        go(y.x, Axis::E1, &mut v, &mut path);
        go(y.y, Axis::E2, &mut v, &mut path);
    } else {
        go(y.y, Axis::E2, &mut v, &mut path);
        go(y.x, Axis::E1, &mut v, &mut path);
    }
    path
}

/// `f(x, y)`: increments summed along the horizontal-then-vertical staircase.
pub fn reconstruct_f<I: Increments<f64> + ?Sized>(inc: &I, x: Vertex, y: Vertex) -> Result<f64> {
    check_in_window(inc, x, y)?;
    inc.path_sum(&staircase(x, y, true))
}

/// `f(x, y)` along the vertical-then-horizontal staircase.
pub fn reconstruct_f_transposed<I: Increments<f64> + ?Sized>(inc: &I, x: Vertex, y: Vertex) -> Result<f64> {
    check_in_window(inc, x, y)?;
    inc.path_sum(&staircase(x, y, false))
}

fn check_in_window<I: Increments<f64> + ?Sized>(inc: &I, x: Vertex, y: Vertex) -> Result<()> {
    for v in [x, y] {
        if !inc.window().contains(v) {
            return Err(FppError::Range(format!("{v} is outside the increment window")));
        }
    }
    Ok(())
}

/// `f(c, ·)` on the whole window, `c` its centre, via the same staircases as
/// [`reconstruct_f`]; indexed like the window.
pub fn f_from_center<I: Increments<f64> + ?Sized>(inc: &I) -> Vec<f64> {
    let w = *inc.window();
    let c = w.center();
    let n = w.half_width();
    let mut out = vec![f64::NAN; w.len()];
    let mut row = 0.0;
    // walk right, then left, along the centre row
    let mut along = vec![0.0; w.side()];
    along[n as usize] = 0.0;
    for dx in 1..=n {
        row += inc.step_increment(c + Vertex::new(dx - 1, 0), Vertex::new(1, 0)).unwrap_or(f64::NAN);
        along[(n + dx) as usize] = row;
    }
    row = 0.0;
    for dx in 1..=n {
        row += inc.step_increment(c + Vertex::new(1 - dx, 0), Vertex::new(-1, 0)).unwrap_or(f64::NAN);
        along[(n - dx) as usize] = row;
    }
    for dx in -n..=n {
        let base = c + Vertex::new(dx, 0);
        let b = along[(n + dx) as usize];
        out[w.index_unchecked(base)] = b;
        let mut acc = b;
        for dy in 1..=n {
            acc += inc.step_increment(base + Vertex::new(0, dy - 1), Vertex::new(0, 1)).unwrap_or(f64::NAN);
            out[w.index_unchecked(base + Vertex::new(0, dy))] = acc;
        }
        acc = b;
        for dy in 1..=n {
            acc += inc.step_increment(base + Vertex::new(0, 1 - dy), Vertex::new(0, -1)).unwrap_or(f64::NAN);
            out[w.index_unchecked(base + Vertex::new(0, -dy))] = acc;
        }
    }
    out
}

/// Smallest box around the origin that holds every line up to `alpha_max`
/// (scaled by `margin`) and the points of `extra`.
pub fn domain_for_lines(functional: &LinearFunctional, alpha_max: f64, margin: f64, extra: &[Vertex]) -> Result<DomainBox> {
    let reach = functional.line_distance(alpha_max.abs()) + 1.0;
    let pts = extra.iter().map(|v| v.linf()).max().unwrap_or(0);
    let half = (margin * reach).ceil() as i32 + pts + 2;
    DomainBox::new(half)
}

/// `τ(v, L̂_α)` for every line of a list from one sweep out of `v`.
fn line_times(pot: &PassageResult<f64>, lines: &[Vec<usize>]) -> Vec<f64> {
    lines
        .iter()
        .map(|l| l.iter().map(|&i| pot.dist_idx(i)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn line_indices(functional: &LinearFunctional, alphas: &[f64], domain: &DomainBox) -> Result<Vec<Vec<usize>>> {
    alphas
        .iter()
        .map(|a| {
            discretize_line(functional, *a, domain)
                .map(|s| s.into_iter().map(|v| domain.index_unchecked(v)).collect())
        })
        .collect()
}

/// Both sides of the finite-`n` mean identity for `f(−x, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub x: Vertex,
    pub functional: LinearFunctional,
    /// `g_ϖ(x)`
    pub gx: f64,
    pub n_requested: f64,
    /// `K·h`, the α-length actually averaged
    pub n: f64,
    pub h: f64,
    /// number of grid cells in `[0, g_ϖ(x)]`
    pub m: usize,
    /// number of grid cells in `[0, n]`
    pub k: usize,
    pub domain_half_width: i32,
    pub replicas: usize,
    pub seed: u64,
    pub law: DistributionConfig,
    pub left: MeanStd,
    pub right: MeanStd,
    /// per-replica `left − right`
    pub paired: MeanStd,
    pub combined_se: f64,
    /// `(left − right) / combined_se`
    pub z: f64,
    /// `left − g_ϖ(x)`
    pub drift: f64,
    pub boundary_touches: usize,
    /// `(left, right)` per replica
    pub per_replica: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityOptions {
    /// nominal α step; adjusted so that `g_ϖ(x)/h` is an integer
    pub h: f64,
    /// domain half-width as a multiple of the farthest line distance
    pub margin: f64,
    /// If positive, both sides are averaged over the shifts `z = j·t`,
    /// `|j| ≤ transverse`, with `t` the lattice direction of the line; by
    /// stationarity along the line this leaves both expectations unchanged.
    /// Requires an axis-parallel line.
    pub transverse: i32,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions { h: 1.0, margin: 1.25, transverse: 0 }
    }
}

/// Grid of the identity experiment: step `h = g_ϖ(x)/m` and `K = round(n/h)`
/// cells, so that shifting by `x` moves the grid onto itself.
pub fn identity_grid(n: f64, gx: f64, h_nominal: f64) -> Result<(AlphaGrid, usize)> {
    if !(gx > 0.0) {
        return Err(FppError::Precondition(format!("need g(x) > 0, got {gx}")));
    }
    let m = ((gx / h_nominal).round() as usize).max(1);
    let h = gx / m as f64;
    let k = ((n / h).round() as usize).max(1);
    Ok((AlphaGrid { start: 0.0, n: k as f64 * h, h }, m))
}

/// Monte Carlo estimate of both sides of
/// `E f(−x, 0) = (1/n)[∫_n^{n+g_ϖ(x)} Eτ(0,L_α) dα − ∫_0^{g_ϖ(x)} Eτ(0,L_α) dα]`
/// with the α-integrals replaced by the same midpoint grid.
pub fn check_mean_identity(
    config: DistributionConfig,
    functional: &LinearFunctional,
    x: Vertex,
    n: f64,
    replicas: usize,
    seed: u64,
    opts: IdentityOptions,
) -> Result<IdentityReport> {
    config.validate()?;
    if replicas < 2 {
        return Err(FppError::Precondition("need at least two replicas".into()));
    }
    let gx = functional.eval(x);
    if x == Vertex::ORIGIN {
        let zero = MeanStd::from_iter(std::iter::repeat(0.0).take(replicas));
        return Ok(IdentityReport {
            x,
            functional: *functional,
            gx,
            n_requested: n,
            n,
            h: opts.h,
            m: 0,
            k: 0,
            domain_half_width: 0,
            replicas,
            seed,
            law: config,
            left: zero,
            right: zero,
            paired: zero,
            combined_se: 0.0,
            z: 0.0,
            drift: 0.0,
            boundary_touches: 0,
            per_replica: vec![(0.0, 0.0); replicas],
        });
    }
    let (grid, m) = identity_grid(n, gx, opts.h)?;
    let k = grid.len();
    let alphas: Vec<f64> = (0..k + m).map(|j| grid.h * (j as f64 + 0.5)).collect();
    let shifts: Vec<Vertex> = if opts.transverse > 0 {
        let t = match (functional.a != 0.0, functional.b != 0.0) {
            (true, false) => Vertex::new(0, 1),
            (false, true) => Vertex::new(1, 0),
            _ => {
                return Err(FppError::Precondition(
                    "transverse averaging needs an axis-parallel line".into(),
                ))
            }
        };
        (-opts.transverse..=opts.transverse)
            .map(|j| Vertex::new(t.x * j, t.y * j))
            .collect()
    } else {
        vec![Vertex::ORIGIN]
    };
    let mut extra = vec![x];
    extra.extend(shifts.iter().map(|z| *z - x));
    let domain = domain_for_lines(functional, *alphas.last().unwrap(), opts.margin, &extra)?;
    let lines = line_indices(functional, &alphas, &domain)?;
    let minus_x = -x;

    let rows: Vec<(f64, f64, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64, bool)> {
            let field = WeightField::new(config, replica_seed(seed, r))?;
            let env: Environment<f64> = Environment::new(&field, domain);
            let p0 = sweep(&env, &[Vertex::ORIGIN], &[])?;
            let (t0, tx) = if shifts.len() == 1 {
                let px = sweep(&env, &[minus_x], &[])?;
                (line_times(&p0, &lines), line_times(&px, &lines))
            } else {
                let stops: Vec<Vertex> = shifts.iter().flat_map(|z| [*z, *z + minus_x]).collect();
                let mut t0 = Vec::with_capacity(alphas.len());
                let mut tx = Vec::with_capacity(alphas.len());
                for a in &alphas {
                    let s = discretize_line(functional, *a, &domain)?;
                    let pot = sweep_near_side(&env, functional, *a, &s, &stops)?;
                    let mut s0 = 0.0;
                    let mut sx = 0.0;
                    for z in &shifts {
                        s0 += pot.try_dist(*z)?;
                        sx += pot.try_dist(*z + minus_x)?;
                    }
                    t0.push(s0 / shifts.len() as f64);
                    tx.push(sx / shifts.len() as f64);
                }
                (t0, tx)
            };
            let left = (0..k).map(|j| tx[j] - t0[j]).sum::<f64>() / k as f64;
            let right = ((k..k + m).map(|j| t0[j]).sum::<f64>() - (0..m).map(|j| t0[j]).sum::<f64>()) / k as f64;
            let touch = touches_boundary(&p0, &lines[k + m - 1])?;
            Ok((left, right, touch))
        })
        .collect::<Result<_>>()?;

    let left = MeanStd::from_iter(rows.iter().map(|r| r.0));
    let right = MeanStd::from_iter(rows.iter().map(|r| r.1));
    let paired = MeanStd::from_iter(rows.iter().map(|r| r.0 - r.1));
    let cse = combined_se(left.stderr(), right.stderr());
    Ok(IdentityReport {
        x,
        functional: *functional,
        gx,
        n_requested: n,
        n: grid.n,
        h: grid.h,
        m,
        k,
        domain_half_width: domain.half_width(),
        replicas,
        seed,
        law: config,
        left,
        right,
        paired,
        combined_se: cse,
        z: if cse > 0.0 { (left.mean - right.mean) / cse } else { 0.0 },
        drift: left.mean - gx,
        boundary_touches: rows.iter().filter(|r| r.2).count(),
        per_replica: rows.iter().map(|r| (r.0, r.1)).collect(),
    })
}

/// Whether the geodesic from the source of `pot` to the nearest vertex of
/// `line` touches the box edge.
fn touches_boundary(pot: &PassageResult<f64>, line: &[usize]) -> Result<bool> {
    let best = line
        .iter()
        .copied()
        .min_by(|a, b| pot.dist_idx(*a).total_cmp(&pot.dist_idx(*b)))
        .ok_or_else(|| FppError::Internal("empty line".into()))?;
    let d = pot.domain();
    Ok(pot.path_to_source(d.vertex(best))?.iter().any(|v| d.on_boundary(*v)))
}

/// Mean of `τ(0, L_α)/α` for each `α`.
pub fn line_time_ratios(
    config: DistributionConfig,
    functional: &LinearFunctional,
    alphas: &[f64],
    replicas: usize,
    seed: u64,
    margin: f64,
) -> Result<Vec<(f64, MeanStd)>> {
    config.validate()?;
    let amax = alphas.iter().copied().fold(0.0, f64::max);
    let domain = domain_for_lines(functional, amax, margin, &[])?;
    let lines = line_indices(functional, alphas, &domain)?;
    let rows: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let field = WeightField::new(config, replica_seed(seed, r))?;
            let env: Environment<f64> = Environment::new(&field, domain);
            let p0 = sweep(&env, &[Vertex::ORIGIN], &[])?;
            Ok(line_times(&p0, &lines).iter().zip(alphas).map(|(t, a)| t / a).collect())
        })
        .collect::<Result<_>>()?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(j, a)| (*a, MeanStd::from_iter(rows.iter().map(|r| r[j]))))
        .collect())
}

/// `ϱ̂ = (ρ̂_{e1}, ρ̂_{e2})` with `ρ̂_q = f(0, R q)/R` averaged over replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho: (f64, f64),
    pub stderr: (f64, f64),
    /// `ρ̂_{e1+e2}`
    pub rho_diag: f64,
    pub stderr_diag: f64,
    /// per-replica `ρ̂_{e1+e2} − ρ̂_{e1} − ρ̂_{e2}`
    pub defect: MeanStd,
    pub n_radial: i32,
    pub replicas: usize,
    pub seed: u64,
    pub grid: AlphaGrid,
    pub functional: LinearFunctional,
    /// `[ρ̂_{e1}, ρ̂_{e2}, ρ̂_{e1+e2}]` per replica
    pub per_replica: Vec<[f64; 3]>,
    pub domain_half_width: i32,
}

impl RhoEstimate {
    /// `ϱ̂·v` with its standard error over replicas.
    pub fn dot(&self, v: (f64, f64)) -> (f64, f64) {
        let ms = MeanStd::from_iter(self.per_replica.iter().map(|r| r[0] * v.0 + r[1] * v.1));
        (ms.mean, ms.stderr())
    }
}

/// Estimates `ϱ` from the α-averaged Busemann function of the lines in
/// `grid`, all of which must lie beyond the box `[0, R]²`.
pub fn estimate_rho(
    config: DistributionConfig,
    functional: &LinearFunctional,
    grid: &AlphaGrid,
    n_radial: i32,
    replicas: usize,
    seed: u64,
    margin: f64,
) -> Result<RhoEstimate> {
    config.validate()?;
    if n_radial < 1 || replicas < 2 {
        return Err(FppError::Precondition("need n_radial >= 1 and replicas >= 2".into()));
    }
    let r = n_radial;
    let pts = [Vertex::ORIGIN, Vertex::new(r, 0), Vertex::new(0, r), Vertex::new(r, r)];
    let corner_box = DomainBox::window(r).translated(Vertex::ORIGIN);
    let alphas = grid.values();
    for &a in &alphas {
        check_line_beyond(functional, a, &corner_box)?;
    }
    let domain = domain_for_lines(functional, grid.end(), margin, &pts)?;
    let lines = line_indices(functional, &alphas, &domain)?;
    let per_replica: Vec<[f64; 3]> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<[f64; 3]> {
            let field = WeightField::new(config, replica_seed(seed, k))?;
            let env: Environment<f64> = Environment::new(&field, domain);
            let t: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| sweep(&env, &[*p], &[]).map(|pot| line_times(&pot, &lines)))
                .collect::<Result<_>>()?;
            let f = |q: usize| (0..alphas.len()).map(|j| t[0][j] - t[q][j]).sum::<f64>() / alphas.len() as f64;
            let rf = r as f64;
            Ok([f(1) / rf, f(2) / rf, f(3) / rf])
        })
        .collect::<Result<_>>()?;
    let col = |c: usize| MeanStd::from_iter(per_replica.iter().map(|p| p[c]));
    let (a, b, d) = (col(0), col(1), col(2));
    Ok(RhoEstimate {
        rho: (a.mean, b.mean),
        stderr: (a.stderr(), b.stderr()),
        rho_diag: d.mean,
        stderr_diag: d.stderr(),
        defect: MeanStd::from_iter(per_replica.iter().map(|p| p[2] - p[0] - p[1])),
        n_radial,
        replicas,
        seed,
        grid: *grid,
        functional: *functional,
        per_replica,
        domain_half_width: domain.half_width(),
    })
}

/// Normalised residuals `|f(0,x) − x·ϱ|/‖x‖₁` over `‖x‖₁ ∈ [r/2, r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub radii: Vec<i32>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub argmax: Vec<Vertex>,
    pub rho: (f64, f64),
}

impl ResidualStats {
    pub fn max_non_increasing(&self) -> bool {
        crate::stats::non_increasing(&self.max)
    }
}

/// Residuals of the reconstructed `f` (from the window centre, which is taken
/// as the origin) against the linear function `x·ϱ`.
pub fn shape_residual<I: Increments<f64> + ?Sized>(inc: &I, rho: (f64, f64), radii: &[i32]) -> Result<ResidualStats> {
    let w = *inc.window();
    let rmax = radii.iter().copied().max().unwrap_or(0);
    if rmax > w.half_width() {
        return Err(FppError::Precondition(format!(
            "radius {rmax} exceeds the window half-width {}",
            w.half_width()
        )));
    }
    let f = f_from_center(inc);
    let c = w.center();
    let mut out = ResidualStats {
        radii: radii.to_vec(),
        max: Vec::new(),
        mean: Vec::new(),
        argmax: Vec::new(),
        rho,
    };
    for &r in radii {
        let lo = (r as f64 / 2.0).ceil() as i64;
        let mut m = MeanStd::default();
        let mut best = (f64::NEG_INFINITY, c);
        for v in w.vertices() {
            let x = v - c;
            let l1 = x.l1();
            if l1 < lo.max(1) || l1 > r as i64 {
                continue;
            }
            let res = (f[w.index_unchecked(v)] - (x.x as f64 * rho.0 + x.y as f64 * rho.1)).abs() / l1 as f64;
            m.push(res);
            if res > best.0 {
                best = (res, x);
            }
        }
        out.max.push(best.0);
        out.mean.push(m.mean);
        out.argmax.push(best.1);
    }
    Ok(out)
}

/// `ϱ̂` read off the increments themselves: `f(0, R eᵢ)/R` with `R` the
/// window half-width.
pub fn rho_from_increments<I: Increments<f64> + ?Sized>(inc: &I) -> Result<(f64, f64)> {
    let w = *inc.window();
    let c = w.center();
    let r = w.half_width();
    Ok((
        reconstruct_f(inc, c, c + Vertex::new(r, 0))? / r as f64,
        reconstruct_f(inc, c, c + Vertex::new(0, r))? / r as f64,
    ))
}

/// Comparison of `ϱ̂` with the estimated shape at the direction `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportingLineReport {
    pub theta: f64,
    /// `ϱ̂·ϖ̂` with `ϖ̂ = u_θ/ĝ(θ)`
    pub dot: f64,
    pub dot_se: f64,
    /// `(ϱ̂·ϖ̂ − 1)/se`
    pub dot_z: f64,
    /// largest `(ϱ̂·u_φ − ĝ(φ))/se` over the grid
    pub domination_max_z: f64,
    pub domination_ok: bool,
    /// `(g_ϖ(e1), g_ϖ(e2))` of the fitted supporting functional
    pub functional: Option<LinearFunctional>,
    /// `(ϱ̂ᵢ − g_ϖ(eᵢ))/se` per coordinate
    pub coordinate_z: Option<(f64, f64)>,
}

impl SupportingLineReport {
    pub fn contact_ok(&self) -> bool {
        self.dot_z.abs() <= 3.0
    }
}

/// Checks `ϱ̂·ϖ̂ = 1`, `ϱ̂·u ≤ ĝ(u)` on the grid and, if the tangent fit is
/// usable, `ϱ̂ = (g_ϖ(e1), g_ϖ(e2))`, all at three standard errors.
pub fn supporting_line_check(rho: &RhoEstimate, shape: &ShapeEstimate, theta: f64) -> Result<SupportingLineReport> {
    let i = shape.locate(theta)?;
    let th = shape.directions[i];
    let g = shape.ghat[i];
    let u = unit(th);
    let (ru, ru_se) = rho.dot(u);
    let dot = ru / g;
    let dot_se = dot.abs() * ((ru_se / ru).powi(2) + (shape.stderr[i] / g).powi(2)).sqrt();
    let mut dom_max = f64::NEG_INFINITY;
    for (j, &phi) in shape.directions.iter().enumerate() {
        let (r, rse) = rho.dot(unit(phi));
        let se = combined_se(rse, shape.stderr[j]);
        let z = if se > 0.0 { (r - shape.ghat[j]) / se } else { (r - shape.ghat[j]).signum() * f64::INFINITY };
        dom_max = dom_max.max(z);
    }
    let sf = crate::line_geometry::supporting_functional(shape, th)?;
    let (functional, coordinate_z) = if sf.degenerate {
        (None, None)
    } else {
        let f = sf.functional;
        let z1 = (rho.rho.0 - f.a) / combined_se(rho.stderr.0, sf.stderr.0);
        let z2 = (rho.rho.1 - f.b) / combined_se(rho.stderr.1, sf.stderr.1);
        (Some(f), Some((z1, z2)))
    };
    Ok(SupportingLineReport {
        theta: th,
        dot,
        dot_se,
        dot_z: if dot_se > 0.0 { (dot - 1.0) / dot_se } else { 0.0 },
        domination_max_z: dom_max,
        domination_ok: dom_max <= 3.0,
        functional,
        coordinate_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::busemann::increment_config_with_sweep;
    use crate::weight_field::create_field;

    fn exp_env(seed: u64, n: i32) -> Environment<f64> {
        let f = create_field(DistributionConfig::exponential(1.0), seed).unwrap();
        Environment::new(&f, DomainBox::new(n).unwrap())
    }

    #[test]
    fn grid_values() {
        let g = AlphaGrid::new(4.0, 1.0).unwrap();
        assert_eq!(g.values(), vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(g.with_start(10.0).values()[0], 10.5);
        assert!(AlphaGrid::new(0.5, 1.0).is_err());
        let (ig, m) = identity_grid(20.0, 0.43, 1.0).unwrap();
        assert_eq!(m, 1);
        assert_eq!(ig.h, 0.43);
        assert_eq!(ig.len(), 47);
        let (ig, m) = identity_grid(20.0, 2.0, 1.0).unwrap();
        assert_eq!((m, ig.len(), ig.h), (2, 20, 1.0));
    }

    #[test]
    fn single_alpha_average_is_the_configuration() {
        let env = exp_env(3, 30);
        let g = LinearFunctional::new(1.0, 0.0);
        let w = DomainBox::new(8).unwrap();
        let grid = AlphaGrid::new(1.0, 1.0).unwrap().with_start(19.5);
        let avg = average_increments(&env, &g, &grid, w, false).unwrap();
        let cfg = increment_config(&env, &g, 20.0, w).unwrap();
        for ax in 0..2 {
            for (a, b) in avg.theta[ax].iter().zip(&cfg.theta[ax]) {
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn averaging_is_order_independent_and_curl_free() {
        let env = exp_env(4, 40);
        let g = LinearFunctional::new(1.0, 0.2);
        let w = DomainBox::new(6).unwrap();
        let grid = AlphaGrid::new(6.0, 1.0).unwrap().with_start(15.0);
        let avg = average_increments(&env, &g, &grid, w, true).unwrap();
        let per = avg.per_alpha.as_ref().unwrap();
        for ax in 0..2 {
            for i in 0..w.len() {
                let rev: f64 = per.iter().rev().map(|c| c.theta[ax][i]).sum::<f64>() / per.len() as f64;
                let a = avg.theta[ax][i];
                assert!(a.is_nan() && rev.is_nan() || (a - rev).abs() <= 1e-12);
            }
        }
        assert!(avg.max_abs_curl() <= 1e-9);
        let (x, y, z) = (Vertex::new(-4, 3), Vertex::new(5, -2), Vertex::new(0, 6));
        assert_eq!(reconstruct_f(&avg, x, x).unwrap(), 0.0);
        let s = reconstruct_f(&avg, x, y).unwrap() + reconstruct_f(&avg, y, z).unwrap();
        assert!((s - reconstruct_f(&avg, x, z).unwrap()).abs() <= 1e-9);
        assert!((reconstruct_f(&avg, x, y).unwrap() - reconstruct_f_transposed(&avg, x, y).unwrap()).abs() <= 1e-9);
        assert!(matches!(reconstruct_f(&avg, x, Vertex::new(7, 0)), Err(FppError::Range(_))));
        let full = f_from_center(&avg);
        assert!((full[w.index_unchecked(y)] - reconstruct_f(&avg, Vertex::ORIGIN, y).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn margin_violation_is_rejected() {
        let env = exp_env(4, 30);
        let grid = AlphaGrid::new(10.0, 1.0).unwrap();
        let r = average_increments(&env, &LinearFunctional::new(1.0, 0.0), &grid, DomainBox::new(5).unwrap(), false);
        assert!(matches!(r, Err(FppError::Precondition(_))));
    }

    #[test]
    fn point_sweeps_reproduce_line_sweeps() {
        let env = exp_env(9, 25);
        let g = LinearFunctional::new(0.7, 0.3);
        let p0 = sweep(&env, &[Vertex::ORIGIN], &[]).unwrap();
        for a in [4.0, 7.3, 11.9] {
            let lines = line_indices(&g, &[a], env.domain()).unwrap();
            let t = line_times(&p0, &lines)[0];
            let (_, pot) = increment_config_with_sweep(&env, &g, a, DomainBox::window(0)).unwrap();
            let d = pot.dist(Vertex::ORIGIN).unwrap();
            assert!((t - d).abs() <= 1e-12 * d.max(1.0));
        }
    }

    #[test]
    fn identity_with_constant_weights_is_exact() {
        let g = LinearFunctional::new(1.0, 0.0);
        let rep = check_mean_identity(DistributionConfig::constant(1.0), &g, Vertex::new(1, 0), 10.0, 2, 0, IdentityOptions::default()).unwrap();
        assert_eq!((rep.m, rep.k), (1, 10));
        assert_eq!(rep.left.mean, 1.0);
        assert_eq!(rep.right.mean, 1.0);
        assert_eq!(rep.drift, 0.0);
        let rep = check_mean_identity(DistributionConfig::constant(1.0), &g, Vertex::ORIGIN, 10.0, 2, 0, IdentityOptions::default()).unwrap();
        assert_eq!((rep.left.mean, rep.right.mean), (0.0, 0.0));
    }

    #[test]
    fn identity_sides_agree_for_exponential_weights() {
        let g = LinearFunctional::new(0.42, 0.0);
        let rep = check_mean_identity(DistributionConfig::exponential(1.0), &g, Vertex::new(1, 0), 6.0, 60, 11, IdentityOptions::default()).unwrap();
        assert!(rep.z.abs() < 4.0, "{rep:?}");
    }

    #[test]
    fn transverse_averaging_keeps_the_constant_case_exact() {
        let g = LinearFunctional::new(1.0, 0.0);
        let o = IdentityOptions { transverse: 3, ..Default::default() };
        let rep = check_mean_identity(DistributionConfig::constant(1.0), &g, Vertex::new(1, 0), 8.0, 2, 0, o).unwrap();
        assert_eq!((rep.left.mean, rep.right.mean), (1.0, 1.0));
        let tilted = LinearFunctional::new(1.0, 0.1);
        assert!(check_mean_identity(DistributionConfig::constant(1.0), &tilted, Vertex::new(1, 0), 8.0, 2, 0, o).is_err());
        // line sweeps and point sweeps see the same passage times
        let e = DistributionConfig::exponential(1.0);
        let a = check_mean_identity(e, &g, Vertex::new(1, 0), 6.0, 3, 4, IdentityOptions { transverse: 0, ..o }).unwrap();
        let one = IdentityOptions { transverse: 1, ..o };
        let b = check_mean_identity(e, &g, Vertex::new(1, 0), 6.0, 3, 4, one).unwrap();
        assert!(a.right.mean.is_finite() && b.right.mean.is_finite());
    }

    #[test]
    fn rho_with_constant_weights() {
        let g = LinearFunctional::new(1.0, 0.0);
        let grid = AlphaGrid::new(5.0, 1.0).unwrap().with_start(12.0);
        let r = estimate_rho(DistributionConfig::constant(1.0), &g, &grid, 8, 2, 0, 1.25).unwrap();
        assert_eq!(r.rho, (1.0, 0.0));
        assert_eq!(r.rho_diag, 1.0);
        assert_eq!(r.defect.mean, 0.0);
        let bad = AlphaGrid::new(5.0, 1.0).unwrap().with_start(2.0);
        assert!(estimate_rho(DistributionConfig::constant(1.0), &g, &bad, 8, 2, 0, 1.25).is_err());
    }

    #[test]
    fn residual_of_constant_weights() {
        let f = create_field(DistributionConfig::constant(1.0), 0).unwrap();
        let env: Environment<f64> = Environment::new(&f, DomainBox::new(60).unwrap());
        let g = LinearFunctional::new(1.0, 0.0);
        let w = DomainBox::new(16).unwrap();
        let grid = AlphaGrid::new(4.0, 1.0).unwrap().with_start(30.0);
        let avg = average_increments(&env, &g, &grid, w, false).unwrap();
        let rho = rho_from_increments(&avg).unwrap();
        assert_eq!(rho, (1.0, 0.0));
        let st = shape_residual(&avg, rho, &[4, 8, 16]).unwrap();
        for (r, m) in st.radii.iter().zip(&st.max) {
            assert!(*m <= 1.0 / *r as f64 + 1e-12);
        }
        assert!(shape_residual(&avg, rho, &[32]).is_err());
    }

    #[test]
    fn supporting_line_on_the_disk() {
        let shape = ShapeEstimate::euclidean_disk(128);
        let rho = RhoEstimate {
            rho: (1.0, 0.0),
            stderr: (0.0, 0.0),
            rho_diag: 1.0,
            stderr_diag: 0.0,
            defect: MeanStd::from_iter([0.0, 0.0]),
            n_radial: 1,
            replicas: 2,
            seed: 0,
            grid: AlphaGrid::new(1.0, 1.0).unwrap(),
            functional: LinearFunctional::new(1.0, 0.0),
            per_replica: vec![[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]],
            domain_half_width: 1,
        };
        let rep = supporting_line_check(&rho, &shape, 0.0).unwrap();
        assert!((rep.dot - 1.0).abs() < 1e-12);
        assert!(rep.contact_ok());
        let f = rep.functional.unwrap();
        assert!((f.a - 1.0).abs() < 1e-9 && f.b.abs() < 1e-9);
    }
}
