//! Limit-shape estimation, supporting functionals and contact sectors.
//!
//! The shape is handled in polar form: for each grid angle `φ` we hold an
//! estimate `ĝ(φ)` of the norm at the unit vector `u_φ`, so the boundary of
//! the unit ball is the curve `φ ↦ u_φ / ĝ(φ)`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::lattice::{DomainBox, Vertex};
use crate::passage::{sweep, Environment};
use crate::stats::MeanStd;
use crate::weight_field::{replica_seed, DistributionConfig, WeightField};

/// The linear map `x ↦ a·x₁ + b·x₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub a: f64,
    pub b: f64,
}

impl LinearFunctional {
    pub const fn new(a: f64, b: f64) -> Self {
        LinearFunctional { a, b }
    }

    #[inline]
    pub fn eval(&self, v: Vertex) -> f64 {
        self.a * v.x as f64 + self.b * v.y as f64
    }

    #[inline]
    pub fn eval_point(&self, p: (f64, f64)) -> f64 {
        self.a * p.0 + self.b * p.1
    }

    /// Euclidean distance from the origin to the level line `{self = alpha}`.
    pub fn line_distance(&self, alpha: f64) -> f64 {
        alpha.abs() / self.a.hypot(self.b)
    }

    /// Maximum of the functional over the box.
    pub fn max_over(&self, domain: &DomainBox) -> f64 {
        let c = domain.center();
        let n = domain.half_width() as f64;
        self.eval(c) + (self.a.abs() + self.b.abs()) * n
    }

    pub fn min_over(&self, domain: &DomainBox) -> f64 {
        let c = domain.center();
        let n = domain.half_width() as f64;
        self.eval(c) - (self.a.abs() + self.b.abs()) * n
    }
}

impl fmt::Display for LinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*x1{:+}*x2", self.a, self.b)
    }
}

#[inline]
pub fn unit(theta: f64) -> (f64, f64) {
    (theta.cos(), theta.sin())
}

/// Angle normalised to `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Distance on the circle of angles.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (wrap_angle(a) - wrap_angle(b)).abs();
    d.min(TAU - d)
}

/// `k` equally spaced angles `2πj/k`.
pub fn uniform_angle_grid(k: usize) -> Vec<f64> {
    (0..k).map(|j| TAU * j as f64 / k as f64).collect()
}

/// Arc of angles from `lo` counter-clockwise to `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngleInterval {
    pub fn point(theta: f64) -> Self {
        let t = wrap_angle(theta);
        AngleInterval { lo: t, hi: t }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo).rem_euclid(TAU)
    }

    pub fn contains(&self, theta: f64, slack: f64) -> bool {
        let off = (wrap_angle(theta) - self.lo).rem_euclid(TAU);
        off <= self.width() + slack || TAU - off <= slack
    }

    pub fn is_point(&self, slack: f64) -> bool {
        self.width() <= slack
    }
}

/// Radial estimate of the norm `g` on a grid of directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeEstimate {
    /// Sorted angles in `[0, 2π)`.
    pub directions: Vec<f64>,
    pub ghat: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Lattice point whose passage time produced each entry (none for fixtures).
    pub targets: Vec<Option<Vertex>>,
    pub n_used: usize,
    pub replicas: usize,
    pub seed: u64,
    pub law: Option<DistributionConfig>,
    /// Replica/direction pairs whose geodesic touched the domain boundary.
    pub boundary_touches: usize,
}

impl ShapeEstimate {
    /// Noise-free fixture from an analytic norm, e.g. `|(x, y)| x.hypot(y)`.
    pub fn from_norm(directions: &[f64], norm: impl Fn(f64, f64) -> f64) -> Self {
        let mut dirs: Vec<f64> = directions.iter().map(|t| wrap_angle(*t)).collect();
        dirs.sort_by(f64::total_cmp);
        dirs.dedup();
        let ghat = dirs
            .iter()
            .map(|t| {
                let (c, s) = unit(*t);
                norm(c, s)
            })
            .collect();
        ShapeEstimate {
            stderr: vec![0.0; dirs.len()],
            targets: vec![None; dirs.len()],
            directions: dirs,
            ghat,
            n_used: 0,
            replicas: 0,
            seed: 0,
            law: None,
            boundary_touches: 0,
        }
    }

    pub fn euclidean_disk(k: usize) -> Self {
        Self::from_norm(&uniform_angle_grid(k), |x, y| x.hypot(y))
    }

    pub fn l1_ball(k: usize) -> Self {
        Self::from_norm(&uniform_angle_grid(k), |x, y| x.abs() + y.abs())
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Boundary point `u_φ / ĝ(φ)` of the estimated unit ball.
    pub fn boundary_point(&self, i: usize) -> (f64, f64) {
        let (c, s) = unit(self.directions[i]);
        (c / self.ghat[i], s / self.ghat[i])
    }

    fn nearest_index(&self, theta: f64) -> Option<usize> {
        (0..self.len()).min_by(|&i, &j| {
            angle_dist(self.directions[i], theta).total_cmp(&angle_dist(self.directions[j], theta))
        })
    }

    fn max_gap(&self) -> f64 {
        if self.len() < 2 {
            return TAU;
        }
        let mut g: f64 = 0.0;
        for w in self.directions.windows(2) {
            g = g.max(w[1] - w[0]);
        }
        g
    }

    /// Whether the grid closes up around the circle.
    pub fn wraps(&self) -> bool {
        if self.len() < 3 {
            return false;
        }
        let closing = self.directions[0] + TAU - self.directions[self.len() - 1];
        closing <= 1.5 * self.max_gap()
    }

    fn step(&self, i: usize, forward: bool) -> Option<usize> {
        let n = self.len();
        match (forward, i) {
            (true, i) if i + 1 < n => Some(i + 1),
            (true, _) => self.wraps().then_some(0),
            (false, 0) => self.wraps().then_some(n - 1),
            (false, i) => Some(i - 1),
        }
    }

    /// Grid index for `θ`, if `θ` lies within half a grid gap of a grid angle.
    pub fn locate(&self, theta: f64) -> Result<usize> {
        let i = self
            .nearest_index(theta)
            .ok_or_else(|| FppError::Range("empty shape estimate".into()))?;
        let tol = 0.5 * self.max_gap() + 1e-12;
        if angle_dist(self.directions[i], theta) > tol {
            return Err(FppError::Range(format!(
                "angle {theta} is outside the estimated grid"
            )));
        }
        Ok(i)
    }

    /// ĝ entries paired with their images under rotation by π/2, as
    /// `(i, j, z)` with `z = |ĝ_i − ĝ_j| / combined s.e.` (`inf` when the
    /// pair differs but has zero error).
    pub fn rotation_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let j = match self.targets[i] {
                Some(t) => {
                    let rot = Vertex::new(-t.y, t.x);
                    self.targets.iter().position(|u| *u == Some(rot))
                }
                None => self
                    .nearest_index(self.directions[i] + PI / 2.0)
                    .filter(|&j| {
                        angle_dist(self.directions[j], self.directions[i] + PI / 2.0) < 1e-9
                    }),
            };
            if let Some(j) = j {
                let d = (self.ghat[i] - self.ghat[j]).abs();
                let se = self.stderr[i].hypot(self.stderr[j]);
                let z = if se > 0.0 {
                    d / se
                } else if d <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                out.push((i, j, z));
            }
        }
        out
    }

    /// Constants with `C₁‖x‖₂ ≤ ĝ(x) ≤ C₂‖x‖₂` on the grid.
    pub fn norm_bounds(&self) -> (f64, f64) {
        let lo = self.ghat.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.ghat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Grid points whose boundary point falls strictly inside the chord of
    /// its two neighbours by more than three standard errors.
    pub fn convexity_violations(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let (Some(p), Some(q)) = (self.step(i, false), self.step(i, true)) else {
                continue;
            };
            let a = self.boundary_point(p);
            let b = self.boundary_point(q);
            let c = self.boundary_point(i);
            // outward normal of chord a→b (counter-clockwise curve)
            let n = (b.1 - a.1, a.0 - b.0);
            let len = n.0.hypot(n.1);
            if len == 0.0 {
                continue;
            }
            let defect = ((c.0 - a.0) * n.0 + (c.1 - a.1) * n.1) / len;
            let se_r = self.stderr[i] / (self.ghat[i] * self.ghat[i]);
            if defect < -3.0 * se_r - 1e-12 {
                out.push(i);
            }
        }
        out
    }

    /// Default contact tolerance: two standard errors of ĝ at grid index `i`,
    /// expressed relative to ĝ.
    pub fn default_contact_tol(&self, i: usize) -> f64 {
        2.0 * self.stderr[i] / self.ghat[i]
    }
}

/// Monte Carlo estimate of `g` in the requested directions:
/// `ĝ(φ) = mean τ(0, p)/‖p‖₂` with `p = round(n u_θ)` and `φ = arg p`.
pub fn estimate_g(
    config: DistributionConfig,
    directions: &[f64],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<ShapeEstimate> {
    if n < 8 {
        return Err(FppError::Precondition(format!("n must be >= 8, got {n}")));
    }
    if replicas < 2 {
        return Err(FppError::Precondition(format!(
            "replicas must be >= 2, got {replicas}"
        )));
    }
    config.validate()?;
    let mut targets: Vec<Vertex> = directions
        .iter()
        .map(|t| {
            let (c, s) = unit(*t);
            Vertex::new(
                (n as f64 * c).round() as i32,
                (n as f64 * s).round() as i32,
            )
        })
        .filter(|v| *v != Vertex::ORIGIN)
        .collect();
    targets.sort_by(|a, b| angle_of(*a).total_cmp(&angle_of(*b)).then(a.cmp(b)));
    targets.dedup();
    let half = (n + n / 2 + 2) as i32;
    let domain = DomainBox::new(half)?;

    let per_replica: Vec<(Vec<f64>, usize)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, usize)> {
            let field = WeightField::new(config, replica_seed(seed, r))?;
            let env: Environment<f64> = Environment::new(&field, domain);
            let res = sweep(&env, &[Vertex::ORIGIN], &targets)?;
            let mut touches = 0;
            let mut vals = Vec::with_capacity(targets.len());
            for t in &targets {
                let path = res.path_to_source(*t)?;
                if path.iter().any(|v| domain.on_boundary(*v)) {
                    touches += 1;
                }
                vals.push(res.try_dist(*t)? / t.l2());
            }
            Ok((vals, touches))
        })
        .collect::<Result<_>>()?;

    let mut ghat = Vec::with_capacity(targets.len());
    let mut stderr = Vec::with_capacity(targets.len());
    for k in 0..targets.len() {
        let ms = MeanStd::from_iter(per_replica.iter().map(|(v, _)| v[k]));
        ghat.push(ms.mean);
        stderr.push(ms.stderr());
    }
    Ok(ShapeEstimate {
        directions: targets.iter().map(|t| angle_of(*t)).collect(),
        ghat,
        stderr,
        targets: targets.into_iter().map(Some).collect(),
        n_used: n,
        replicas,
        seed,
        law: Some(config),
        boundary_touches: per_replica.iter().map(|(_, t)| t).sum(),
    })
}

fn angle_of(v: Vertex) -> f64 {
    wrap_angle((v.y as f64).atan2(v.x as f64))
}

/// A supporting functional of the estimated shape at a grid direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportingFunctional {
    pub theta: f64,
    pub index: usize,
    pub functional: LinearFunctional,
    /// The point `ϖ = u_θ / ĝ(θ)` with `functional(ϖ) = 1`.
    pub boundary_point: (f64, f64),
    /// True if the tangent fit failed and the radial fallback was used.
    pub degenerate: bool,
    /// Turning angle between the backward and forward secants at `ϖ`.
    pub kink: f64,
    /// Delta-method standard errors of `(a, b)` from the ĝ standard errors.
    pub stderr: (f64, f64),
}

fn tangent_normal(p: (f64, f64), q: (f64, f64), c: (f64, f64)) -> Option<LinearFunctional> {
    let t = (q.0 - p.0, q.1 - p.1);
    let mut nv = (t.1, -t.0);
    let mut s = nv.0 * c.0 + nv.1 * c.1;
    if s < 0.0 {
        nv = (-nv.0, -nv.1);
        s = -s;
    }
    let scale = nv.0.hypot(nv.1) * c.0.hypot(c.1);
    if !(s.is_finite() && scale > 0.0 && s > 1e-9 * scale) {
        return None;
    }
    Some(LinearFunctional::new(nv.0 / s, nv.1 / s))
}

/// Supporting functional at the grid point nearest `θ`: the normal of the
/// central secant through the two neighbouring boundary points, scaled so
/// that it equals 1 at `ϖ`. Falls back to `x ↦ ĝ(θ) (x·u_θ)` (flagged) when
/// the secant is degenerate.
pub fn supporting_functional(shape: &ShapeEstimate, theta: f64) -> Result<SupportingFunctional> {
    let i = shape.locate(theta)?;
    let (Some(p), Some(q)) = (shape.step(i, false), shape.step(i, true)) else {
        return Err(FppError::Range(format!(
            "angle {theta} has no grid neighbours on both sides"
        )));
    };
    let fit = |g: &[f64]| -> Option<LinearFunctional> {
        let pt = |k: usize| {
            let (c, s) = unit(shape.directions[k]);
            (c / g[k], s / g[k])
        };
        tangent_normal(pt(p), pt(q), pt(i))
    };
    let c = shape.boundary_point(i);
    let (cu, su) = unit(shape.directions[i]);
    let fallback = LinearFunctional::new(shape.ghat[i] * cu, shape.ghat[i] * su);
    let fitted = fit(&shape.ghat);
    let degenerate = fitted.is_none();
    let functional = fitted.unwrap_or(fallback);

    let mut var = (0.0, 0.0);
    if !degenerate {
        for k in [p, i, q] {
            let se = shape.stderr[k];
            if se <= 0.0 {
                continue;
            }
            let h = 1e-6 * shape.ghat[k];
            let mut g = shape.ghat.clone();
            g[k] += h;
            if let Some(f) = fit(&g) {
                let da = (f.a - functional.a) / h * se;
                let db = (f.b - functional.b) / h * se;
                var.0 += da * da;
                var.1 += db * db;
            }
        }
    }

    let a = shape.boundary_point(p);
    let b = shape.boundary_point(q);
    let back = (c.1 - a.1).atan2(c.0 - a.0);
    let fwd = (b.1 - c.1).atan2(b.0 - c.0);
    let kink = angle_dist(fwd, back);

    Ok(SupportingFunctional {
        theta: shape.directions[i],
        index: i,
        functional,
        boundary_point: c,
        degenerate,
        kink,
        stderr: (var.0.sqrt(), var.1.sqrt()),
    })
}

/// Maximal run of grid angles around index `i` whose boundary points satisfy
/// `|functional(ϖ') − 1| ≤ tol`.
pub fn contact_sector(
    shape: &ShapeEstimate,
    functional: &LinearFunctional,
    i: usize,
    tol: f64,
) -> AngleInterval {
    let touches = |k: usize| (functional.eval_point(shape.boundary_point(k)) - 1.0).abs() <= tol;
    let n = shape.len();
    let mut hi = i;
    let mut steps = 0;
    while let Some(k) = shape.step(hi, true) {
        if steps >= n || k == i || !touches(k) {
            break;
        }
        hi = k;
        steps += 1;
    }
    let mut lo = i;
    let mut steps = 0;
    while let Some(k) = shape.step(lo, false) {
        if steps >= n || k == hi || !touches(k) {
            break;
        }
        lo = k;
        steps += 1;
    }
    AngleInterval {
        lo: shape.directions[lo],
        hi: shape.directions[hi],
    }
}

/// The contact sector of the supporting line at `θ`: the directions whose
/// boundary points lie on that line within `tol`.
pub fn sector_i_theta(shape: &ShapeEstimate, theta: f64, tol: f64) -> Result<AngleInterval> {
    let sf = supporting_functional(shape, theta)?;
    Ok(contact_sector(shape, &sf.functional, sf.index, tol))
}

/// Contact sector of the line `{x·ϱ = 1}` with the estimated shape, around
/// the grid direction where `x·ϱ` is largest on the boundary.
pub fn rho_sector(shape: &ShapeEstimate, rho: (f64, f64), tol: f64) -> Result<AngleInterval> {
    let f = LinearFunctional::new(rho.0, rho.1);
    let i = (0..shape.len())
        .max_by(|&a, &b| {
            f.eval_point(shape.boundary_point(a))
                .total_cmp(&f.eval_point(shape.boundary_point(b)))
        })
        .ok_or_else(|| FppError::Range("empty shape estimate".into()))?;
    Ok(contact_sector(shape, &f, i, tol))
}

/// Largest excess `g_ϖ(u_φ) − ĝ(φ) − 3 s.e.` over the grid (≤ 0 means the
/// functional is dominated by the norm everywhere).
pub fn domination_excess(shape: &ShapeEstimate, functional: &LinearFunctional) -> f64 {
    (0..shape.len())
        .map(|k| {
            functional.eval_point(unit(shape.directions[k])) - shape.ghat[k] - 3.0 * shape.stderr[k]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
