//! `fpp verify`: hard-invariant suites at CI scale. Every check names the
//! invariant it tests; any failure makes the process exit nonzero.

use fpp_core::busemann::{increment_config, Increments, ADDITIVITY_REL_TOL, BOUND_ABS_SLACK, RESTRICTION_REL_TOL};
use fpp_core::geodesic_graph::build_graph_from;
use fpp_core::line_geometry::{estimate_g, uniform_angle_grid};
use fpp_core::mu_estimator::{average_increments, check_mean_identity, reconstruct_f, reconstruct_f_transposed, AlphaGrid, IdentityOptions};
use fpp_core::passage::{bellman_violations, brute_force_tau, discretize_line, sweep, tau_point, tau_to_set};
use fpp_core::scans::busemann_suite;
use fpp_core::weight_field::replica_seed;
use fpp_core::{DistributionConfig, DomainBox, Environment, LinearFunctional, Vertex, WeightField};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::IoResult;

pub const SUITES: [&str; 5] = ["oracle", "busemann", "graph", "curl", "closed-forms"];

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub invariant: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(suite: &str, invariant: &str, passed: bool, detail: String) -> Check {
    Check {
        suite: suite.into(),
        invariant: invariant.into(),
        passed,
        detail,
    }
}

pub fn run(cfg: &ExperimentConfig) -> IoResult<VerifyReport> {
    let v = cfg.verify.clone().unwrap_or_default();
    let suites = v.suites.clone().unwrap_or_else(|| SUITES.iter().map(|s| s.to_string()).collect());
    if let Some(bad) = suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(Box::new(ConfigError(format!("verify.suites: unknown suite `{bad}`; known: {}", SUITES.join(", ")))));
    }
    let law = cfg.law();
    let seed = cfg.seed();
    let mut checks = Vec::new();
    for s in &suites {
        match s.as_str() {
            "oracle" => checks.extend(oracle(law, cfg.replicas(20), seed)?),
            "busemann" => checks.extend(busemann(law, cfg.replicas(3), seed)?),
            "graph" => checks.extend(graph(law, cfg.replicas(3), seed, v.corrupt_dist.as_ref().map(|c| (Vertex::new(c.vertex[0], c.vertex[1]), c.delta)))?),
            "curl" => checks.extend(curl(law, cfg.replicas(3), seed)?),
            "closed-forms" => checks.extend(closed_forms()?),
            _ => unreachable!(),
        }
    }
    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn oracle(law: DistributionConfig, reps: usize, seed: u64) -> IoResult<Vec<Check>> {
    let mut bad = 0;
    let mut pairs = 0;
    for i in 0..reps {
        let field = WeightField::new(law, replica_seed(seed, i as u64))?;
        let env: Environment<f64> = Environment::new(&field, DomainBox::new(2)?);
        for x in env.domain().vertices() {
            for y in env.domain().vertices() {
                pairs += 1;
                if brute_force_tau(&env, x, y)?.to_bits() != tau_point(&env, x, y)?.0.to_bits() {
                    bad += 1;
                }
            }
        }
    }
    Ok(vec![check("oracle", "sweep-equals-brute-force", bad == 0, format!("{bad} of {pairs} pairs differ on 5x5 boxes"))])
}

fn busemann(law: DistributionConfig, reps: usize, seed: u64) -> IoResult<Vec<Check>> {
    let per = busemann_suite(law, &LinearFunctional::new(1.0, 0.0), &[22.5, 28.25, 34.75], DomainBox::new(40)?, 50, reps, seed)?;
    let mut m = fpp_core::busemann::PropertyReport::default();
    for r in per {
        m.merge(r);
    }
    Ok(vec![
        check("busemann", "additivity", m.additivity_max_rel <= ADDITIVITY_REL_TOL, format!("max relative defect {:.2e}", m.additivity_max_rel)),
        check("busemann", "busemann-bound", m.bound_max_excess <= BOUND_ABS_SLACK, format!("max |B| - tau {:.2e}", m.bound_max_excess)),
        check("busemann", "geodesic-restriction", m.restriction_max_rel <= RESTRICTION_REL_TOL, format!("max relative gap {:.2e}", m.restriction_max_rel)),
        check("busemann", "translation-covariance", m.translation_max_abs == 0.0, format!("max difference {:.2e}", m.translation_max_abs)),
        check("busemann", "hard-violations", m.hard_violations == 0, format!("{} hard violations", m.hard_violations)),
    ])
}

fn graph(law: DistributionConfig, reps: usize, seed: u64, corrupt: Option<(Vertex, f64)>) -> IoResult<Vec<Check>> {
    let domain = DomainBox::new(40)?;
    let targets = discretize_line(&LinearFunctional::new(1.0, 0.0), 20.0, &domain)?;
    let (mut bellman, mut out_deg, mut circuits, mut paths) = (0usize, 0usize, 0usize, 0usize);
    let mut first_bad = None;
    for i in 0..reps {
        let s = replica_seed(seed, i as u64);
        let field = WeightField::new(law, s)?;
        let env: Environment<f64> = Environment::new(&field, domain);
        let mut pot = sweep(&env, &targets, &[])?;
        if let (0, Some((v, delta))) = (i, corrupt) {
            let idx = domain
                .index(v)
                .ok_or_else(|| ConfigError(format!("verify.corrupt_dist.vertex: {v} is outside the box of half-width 40")))?;
            pot.dist_slice_mut()[idx] += delta;
        }
        let bad = bellman_violations(&env, &pot, 1e-12);
        if first_bad.is_none() {
            first_bad = bad.first().copied();
        }
        bellman += bad.len();
        let g = build_graph_from(&env, &pot)?;
        let rep = g.structure_report(&env, 200, s)?;
        out_deg += rep.out_degree_violations;
        circuits += rep.circuits;
        paths += rep.geodesic_violations;
    }
    Ok(vec![
        check(
            "graph",
            "potential-optimality",
            bellman == 0,
            match first_bad {
                Some(v) => format!("{bellman} vertices violate d(u) = min_v d(v) + w(u,v), first at {v}"),
                None => "all vertices satisfy the Bellman equation".into(),
            },
        ),
        check("graph", "out-degree-one", out_deg == 0, format!("{out_deg} vertices off the line without exactly one out-edge")),
        check("graph", "no-undirected-circuits", circuits == 0, format!("{circuits} circuits")),
        check("graph", "directed-paths-are-geodesics", paths == 0, format!("{paths} sampled paths fail the potential telescoping")),
    ])
}

fn curl(law: DistributionConfig, reps: usize, seed: u64) -> IoResult<Vec<Check>> {
    let g = LinearFunctional::new(1.0, 0.0);
    let window = DomainBox::window(10);
    let grid = AlphaGrid::new(6.0, 1.0)?.with_start(16.0);
    let (mut single, mut avg, mut stair) = (0f64, 0f64, 0f64);
    for i in 0..reps {
        let field = WeightField::new(law, replica_seed(seed, i as u64))?;
        let env: Environment<f64> = Environment::new(&field, DomainBox::new(30)?);
        single = single.max(increment_config(&env, &g, 18.5, window)?.max_abs_curl());
        let inc = average_increments(&env, &g, &grid, window, false)?;
        avg = avg.max(inc.max_abs_curl());
        for x in window.vertices() {
            stair = stair.max((reconstruct_f(&inc, Vertex::ORIGIN, x)? - reconstruct_f_transposed(&inc, Vertex::ORIGIN, x)?).abs());
        }
    }
    Ok(vec![
        check("curl", "curl-free-single-line", single <= 1e-12, format!("max |curl| {single:.2e}")),
        check("curl", "curl-free-averaged", avg <= 1e-9, format!("max |curl| {avg:.2e}")),
        check("curl", "staircase-agreement", stair <= 1e-9, format!("max gap {stair:.2e}")),
    ])
}

fn closed_forms() -> IoResult<Vec<Check>> {
    let one = DistributionConfig::constant(1.0);
    let shape = estimate_g(one, &uniform_angle_grid(16), 20, 2, 0)?;
    let shape_ok = shape
        .targets
        .iter()
        .zip(&shape.ghat)
        .all(|(t, g)| t.is_some_and(|t| *g == t.l1() as f64 / t.l2()));
    let field = WeightField::new(one, 0)?;
    let env: Environment<f64> = Environment::new(&field, DomainBox::new(20)?);
    let axis = LinearFunctional::new(1.0, 0.0);
    let mut line_ok = true;
    for alpha in [0.3, 1.7, 2.49, 2.51, 5.2, 9.9, 12.01] {
        let s = discretize_line(&axis, alpha, env.domain())?;
        line_ok &= tau_to_set(&env, Vertex::ORIGIN, &s)?.0 == (alpha - 0.5f64).ceil();
    }
    let rep = check_mean_identity(one, &axis, Vertex::new(1, 0), 10.0, 2, 0, IdentityOptions::default())?;
    Ok(vec![
        check("closed-forms", "constant-shape-is-l1", shape_ok, "g-hat against |x|_1 on 16 directions".into()),
        check("closed-forms", "constant-line-time", line_ok, "tau(0, L_a) against ceil(a - 1/2)".into()),
        check(
            "closed-forms",
            "constant-identity",
            rep.left.mean == 1.0 && rep.right.mean == 1.0,
            format!("left {} right {}", rep.left.mean, rep.right.mean),
        ),
    ])
}
