//! Busemann functions `B_S(x, y) = τ(x, S) − τ(y, S)` and per-line
//! increment configurations.
//!
//! Every value here is a difference of one potential `τ(·, S)` produced by a
//! single multi-source sweep, so additivity holds by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::lattice::{Axis, DomainBox, Vertex};
use crate::line_geometry::LinearFunctional;
use crate::passage::{discretize_line, sweep, sweep_within, tau_point, Environment, PassageResult};
use crate::scalar::{rel_close, Scalar};
use crate::weight_field::{DistributionConfig, WeightField};

/// `B_S(x, y)` read off a sweep from `S`.
pub fn busemann_from<T: Scalar>(potential: &PassageResult<T>, x: Vertex, y: Vertex) -> Result<T> {
    Ok(potential.try_dist(x)? - potential.try_dist(y)?)
}

/// `B_S(x, y)` from one sweep of the box.
pub fn busemann<T: Scalar>(
    env: &Environment<T>,
    targets: &[Vertex],
    x: Vertex,
    y: Vertex,
) -> Result<T> {
    let res = sweep(env, targets, &[x, y])?;
    busemann_from(&res, x, y)
}

/// Which line(s) an increment configuration comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaTag {
    Single { alpha: f64 },
    Averaged { start: f64, n: f64, h: f64 },
}

/// Read access to a field of increments `θ₁(v), θ₂(v)` on a window.
pub trait Increments<T: Scalar> {
    fn window(&self) -> &DomainBox;

    /// `θ_axis(v)`, defined when both `v` and `v + e_axis` lie in the window.
    fn theta(&self, v: Vertex, axis: Axis) -> Option<T>;

    /// Increment for the step `v → v + step`, `step` a unit vector.
    fn step_increment(&self, v: Vertex, step: Vertex) -> Option<T> {
        match (step.x, step.y) {
            (1, 0) => self.theta(v, Axis::E1),
            (0, 1) => self.theta(v, Axis::E2),
            (-1, 0) => self.theta(v - Axis::E1.unit(), Axis::E1).map(|t| -t),
            (0, -1) => self.theta(v - Axis::E2.unit(), Axis::E2).map(|t| -t),
            _ => None,
        }
    }

    /// Sum of increments along a lattice path.
    fn path_sum(&self, path: &[Vertex]) -> Result<T> {
        let mut s = T::zero();
        for w in path.windows(2) {
            s = s + self.step_increment(w[0], w[1] - w[0]).ok_or_else(|| {
                FppError::Range(format!("step {} -> {} leaves the window", w[0], w[1]))
            })?;
        }
        Ok(s)
    }

    /// Circuit sum around the unit square with lower-left corner `v`.
    fn curl(&self, v: Vertex) -> Option<T> {
        let e1 = Axis::E1.unit();
        let e2 = Axis::E2.unit();
        Some(
            self.theta(v, Axis::E1)? + self.theta(v + e1, Axis::E2)?
                - self.theta(v + e2, Axis::E1)?
                - self.theta(v, Axis::E2)?,
        )
    }

    /// Largest `|curl|` over all unit squares of the window.
    fn max_abs_curl(&self) -> T {
        let w = *self.window();
        let mut m = T::zero();
        for v in w.vertices() {
            if let Some(c) = self.curl(v) {
                m = m.max(c.abs());
            }
        }
        m
    }
}

/// Busemann increments `θᵢ(v) = B(v, v + eᵢ)` on a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementConfiguration<T> {
    pub window: DomainBox,
    /// `theta[axis][window index]`; NaN where `v + e_axis` leaves the window.
    pub theta: [Vec<T>; 2],
    pub alpha: AlphaTag,
    pub functional: LinearFunctional,
    pub seed: Option<u64>,
    pub law: Option<DistributionConfig>,
}

impl<T: Scalar> Increments<T> for IncrementConfiguration<T> {
    fn window(&self) -> &DomainBox {
        &self.window
    }

    #[inline]
    fn theta(&self, v: Vertex, axis: Axis) -> Option<T> {
        let i = self.window.index(v)?;
        let t = self.theta[axis.index()][i];
        (!t.is_nan()).then_some(t)
    }
}

impl<T: Scalar> IncrementConfiguration<T> {
    /// Increments of an arbitrary potential restricted to `window`.
    pub fn from_potential(
        window: DomainBox,
        potential: impl Fn(Vertex) -> Option<T>,
        alpha: AlphaTag,
        functional: LinearFunctional,
    ) -> Result<Self> {
        let mut theta = [vec![T::nan(); window.len()], vec![T::nan(); window.len()]];
        for (i, v) in window.vertices().enumerate() {
            let here = potential(v)
                .ok_or_else(|| FppError::Internal(format!("potential undefined at {v}")))?;
            for axis in Axis::BOTH {
                let w = v + axis.unit();
                if window.contains(w) {
                    let there = potential(w)
                        .ok_or_else(|| FppError::Internal(format!("potential undefined at {w}")))?;
                    theta[axis.index()][i] = here - there;
                }
            }
        }
        Ok(IncrementConfiguration {
            window,
            theta,
            alpha,
            functional,
            seed: None,
            law: None,
        })
    }
}

/// Checks that the line `{functional = alpha}` and its discretisation stay
/// strictly beyond `window`.
pub fn check_line_beyond(
    functional: &LinearFunctional,
    alpha: f64,
    window: &DomainBox,
) -> Result<()> {
    let reach = functional.max_over(window) + 0.5 * (functional.a.abs() + functional.b.abs());
    if reach < alpha {
        Ok(())
    } else {
        Err(FppError::Precondition(format!(
            "line {functional} = {alpha} meets the window of half-width {} (window reaches {reach})",
            window.half_width()
        )))
    }
}

/// Sweep from the discretised line `targets` of `{functional = alpha}` that
/// never enters the far side of the line. The discretised line separates the
/// lattice, so distances on the near side are those of the full box.
pub fn sweep_near_side<T: Scalar>(
    env: &Environment<T>,
    functional: &LinearFunctional,
    alpha: f64,
    targets: &[Vertex],
    stop_at: &[Vertex],
) -> Result<PassageResult<T>> {
    let d = *env.domain();
    let reach = alpha + 0.5 * (functional.a.abs() + functional.b.abs());
    sweep_within(env, targets, stop_at, |i| functional.eval(d.vertex(i)) <= reach)
}

/// Increment configuration of the line `{functional = alpha}` on `window`,
/// together with the sweep it was read from.
pub fn increment_config_with_sweep<T: Scalar>(
    env: &Environment<T>,
    functional: &LinearFunctional,
    alpha: f64,
    window: DomainBox,
) -> Result<(IncrementConfiguration<T>, PassageResult<T>)> {
    if !env.domain().contains_box(&window) {
        return Err(FppError::Precondition("window must lie inside the domain".into()));
    }
    check_line_beyond(functional, alpha, &window)?;
    let targets = discretize_line(functional, alpha, env.domain())?;
    let stop: Vec<Vertex> = window.vertices().collect();
    let res = sweep_near_side(env, functional, alpha, &targets, &stop)?;
    let mut cfg = IncrementConfiguration::from_potential(
        window,
        |v| res.dist(v),
        AlphaTag::Single { alpha },
        *functional,
    )?;
    if let Some(f) = env.field() {
        cfg.seed = Some(f.seed());
        cfg.law = Some(*f.config());
    }
    Ok((cfg, res))
}

pub fn increment_config<T: Scalar>(
    env: &Environment<T>,
    functional: &LinearFunctional,
    alpha: f64,
    window: DomainBox,
) -> Result<IncrementConfiguration<T>> {
    increment_config_with_sweep(env, functional, alpha, window).map(|(c, _)| c)
}

/// Worst observed deviations for the Busemann property suite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub alphas: Vec<f64>,
    pub samples: usize,
    /// max `|B(x,y) + B(y,z) − B(x,z)| / max(|τ(·,S)|, 1)`
    pub additivity_max_rel: f64,
    /// max `|B(x,y)| − τ(x,y)`
    pub bound_max_excess: f64,
    /// max relative gap between `B(x,y)` and `τ(x,y)` for `y` on the geodesic from `x`
    pub restriction_max_rel: f64,
    /// max `|B on T_v ω − B on shifted arguments|`
    pub translation_max_abs: f64,
    pub hard_violations: usize,
    pub messages: Vec<String>,
}

pub const ADDITIVITY_REL_TOL: f64 = 1e-9;
pub const BOUND_ABS_SLACK: f64 = 1e-12;
pub const RESTRICTION_REL_TOL: f64 = 1e-9;

impl PropertyReport {
    pub fn merge(&mut self, other: PropertyReport) {
        self.samples += other.samples;
        self.additivity_max_rel = self.additivity_max_rel.max(other.additivity_max_rel);
        self.bound_max_excess = self.bound_max_excess.max(other.bound_max_excess);
        self.restriction_max_rel = self.restriction_max_rel.max(other.restriction_max_rel);
        self.translation_max_abs = self.translation_max_abs.max(other.translation_max_abs);
        self.hard_violations += other.hard_violations;
        self.messages.extend(other.messages);
        for a in other.alphas {
            if !self.alphas.contains(&a) {
                self.alphas.push(a);
            }
        }
    }
}

fn random_vertex(rng: &mut ChaCha8Rng, window: &DomainBox) -> Vertex {
    let n = window.half_width();
    let c = window.center();
    Vertex::new(c.x + rng.gen_range(-n..=n), c.y + rng.gen_range(-n..=n))
}

/// Checks additivity, `|B| ≤ τ`, geodesic restriction and translation
/// covariance on one field for each line `{functional = α}`. Sample points
/// are drawn from the central half of the domain.
pub fn verify_busemann_properties(
    field: &WeightField,
    functional: &LinearFunctional,
    alphas: &[f64],
    domain: DomainBox,
    sample_size: usize,
    sample_seed: u64,
) -> Result<PropertyReport> {
    let env: Environment<f64> = Environment::new(field, domain);
    let shift = Axis::E1.unit();
    let shifted_env: Environment<f64> =
        Environment::new(&field.shifted_view(shift), domain.translated(shift));
    let inner = DomainBox::centered_at(domain.center(), (domain.half_width() / 2).max(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut report = PropertyReport {
        alphas: alphas.to_vec(),
        ..Default::default()
    };

    // point-to-point times do not depend on the line; compute them once
    let pairs: Vec<(Vertex, Vertex, Vertex)> = (0..sample_size)
        .map(|_| {
            (
                random_vertex(&mut rng, &inner),
                random_vertex(&mut rng, &inner),
                random_vertex(&mut rng, &inner),
            )
        })
        .collect();
    let taus: Vec<f64> = pairs
        .iter()
        .map(|(x, y, _)| tau_point(&env, *x, *y).map(|r| r.0))
        .collect::<Result<_>>()?;

    for &alpha in alphas {
        let targets = discretize_line(functional, alpha, &domain)?;
        let pot = sweep(&env, &targets, &[])?;
        let shifted_targets: Vec<Vertex> = targets.iter().map(|t| *t + shift).collect();
        let shifted_pot = sweep(&shifted_env, &shifted_targets, &[])?;

        for (k, &(x, y, z)) in pairs.iter().enumerate() {
            let bxy = busemann_from(&pot, x, y)?;
            let byz = busemann_from(&pot, y, z)?;
            let bxz = busemann_from(&pot, x, z)?;
            let scale = pot.try_dist(x)?.abs().max(pot.try_dist(y)?.abs()).max(pot.try_dist(z)?.abs()).max(1.0);
            let add = (bxy + byz - bxz).abs() / scale;
            report.additivity_max_rel = report.additivity_max_rel.max(add);
            if add > ADDITIVITY_REL_TOL {
                report.hard_violations += 1;
                report.messages.push(format!("additivity at alpha={alpha}: {x},{y},{z} rel {add:e}"));
            }

            let excess = bxy.abs() - taus[k];
            report.bound_max_excess = report.bound_max_excess.max(excess);
            if excess > BOUND_ABS_SLACK {
                report.hard_violations += 1;
                report.messages.push(format!("|B| > tau at alpha={alpha}: {x},{y} excess {excess:e}"));
            }

            let bs = busemann_from(&shifted_pot, x + shift, y + shift)?;
            let dt = (bs - bxy).abs();
            report.translation_max_abs = report.translation_max_abs.max(dt);
            if dt != 0.0 {
                report.hard_violations += 1;
                report.messages.push(format!("translation covariance at alpha={alpha}: {x},{y} diff {dt:e}"));
            }
        }

        // geodesic restriction on a subsample
        for &(x, _, _) in pairs.iter().take(sample_size.div_ceil(5)) {
            let path = pot.path_to_source(x)?;
            let y = path[rng.gen_range(0..path.len())];
            let b = busemann_from(&pot, x, y)?;
            let (t, _) = tau_point(&env, x, y)?;
            let ok = rel_close(b, t, RESTRICTION_REL_TOL);
            let rel = (b - t).abs() / t.abs().max(1.0);
            report.restriction_max_rel = report.restriction_max_rel.max(rel);
            if !ok {
                report.hard_violations += 1;
                report.messages.push(format!("restriction at alpha={alpha}: {x}->{y} B={b} tau={t}"));
            }
        }
    }
    report.samples = pairs.len() * alphas.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight_field::create_field;

    fn setup(seed: u64, n: i32) -> Environment<f64> {
        let f = create_field(DistributionConfig::exponential(1.0), seed).unwrap();
        Environment::new(&f, DomainBox::new(n).unwrap())
    }

    #[test]
    fn busemann_basics() {
        let env = setup(4, 15);
        let line = discretize_line(&LinearFunctional::new(1.0, 0.0), 10.0, env.domain()).unwrap();
        let x = Vertex::new(-3, 2);
        let y = Vertex::new(4, -6);
        let z = Vertex::new(0, 9);
        assert_eq!(busemann(&env, &line, x, x).unwrap(), 0.0);
        let pot = sweep(&env, &line, &[]).unwrap();
        let lhs = busemann_from(&pot, x, y).unwrap() + busemann_from(&pot, y, z).unwrap();
        let rhs = busemann_from(&pot, x, z).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * pot.dist(x).unwrap());
        let (t, _) = tau_point(&env, x, y).unwrap();
        assert!(busemann_from(&pot, x, y).unwrap().abs() <= t + BOUND_ABS_SLACK);
    }

    #[test]
    fn constant_weights_axis_line() {
        let f = create_field(DistributionConfig::constant(1.0), 0).unwrap();
        let env: Environment<f64> = Environment::new(&f, DomainBox::new(10).unwrap());
        let g = LinearFunctional::new(1.0, 0.0);
        let line = discretize_line(&g, 5.0, env.domain()).unwrap();
        assert_eq!(busemann(&env, &line, Vertex::ORIGIN, Vertex::new(1, 0)).unwrap(), 1.0);
        assert_eq!(busemann(&env, &line, Vertex::new(1, 0), Vertex::ORIGIN).unwrap(), -1.0);
    }

    #[test]
    fn increments_match_geodesic_edges_and_are_curl_free() {
        let env = setup(8, 30);
        let g = LinearFunctional::new(1.0, 0.0);
        let window = DomainBox::new(10).unwrap();
        let (cfg, pot) = increment_config_with_sweep(&env, &g, 20.0, window).unwrap();
        assert!(cfg.max_abs_curl() <= 1e-12);
        let mut geodesic_edges = 0;
        for v in window.vertices() {
            for axis in Axis::BOTH {
                let w = v + axis.unit();
                let Some(th) = cfg.theta(v, axis) else { continue };
                let (t, _) = tau_point(&env, v, w).unwrap();
                assert!(th.abs() <= t + BOUND_ABS_SLACK);
                if pot.parent(v) == Some(w) {
                    geodesic_edges += 1;
                    let we = env.weight_between(v, w).unwrap();
                    assert!((th - we).abs() <= 4.0 * f64::EPSILON * pot.dist(v).unwrap());
                }
            }
        }
        assert!(geodesic_edges > 0);
    }

    #[test]
    fn near_side_sweep_matches_full_sweep() {
        let env = setup(12, 25);
        for (g, a) in [(LinearFunctional::new(1.0, 0.0), 9.0), (LinearFunctional::new(0.6, -0.35), 7.7)] {
            let s = discretize_line(&g, a, env.domain()).unwrap();
            let full = sweep(&env, &s, &[]).unwrap();
            let near = sweep_near_side(&env, &g, a, &s, &[]).unwrap();
            for v in env.domain().vertices() {
                if g.eval(v) < a {
                    assert_eq!(full.dist(v), near.dist(v), "{v}");
                }
            }
        }
    }

    #[test]
    fn line_inside_window_is_rejected() {
        let env = setup(1, 20);
        let g = LinearFunctional::new(1.0, 0.0);
        let err = increment_config(&env, &g, 5.0, DomainBox::new(5).unwrap()).unwrap_err();
        assert!(matches!(err, FppError::Precondition(_)));
        assert!(increment_config(&env, &g, 6.0, DomainBox::new(5).unwrap()).is_ok());
    }

    #[test]
    fn property_suite_on_a_small_box() {
        let f = create_field(DistributionConfig::exponential(1.0), 21).unwrap();
        let rep = verify_busemann_properties(
            &f,
            &LinearFunctional::new(1.0, 0.0),
            &[10.0, 20.0],
            DomainBox::new(30).unwrap(),
            20,
            5,
        )
        .unwrap();
        assert_eq!(rep.hard_violations, 0, "{:?}", rep.messages);
        assert_eq!(rep.translation_max_abs, 0.0);
    }
}
