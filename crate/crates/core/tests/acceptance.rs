//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so that every line is printed
//! even when a criterion fails. The exit status is 0 unless a criterion
//! errors out, or `FPP_ACCEPTANCE_STRICT=1` is set and some criterion fails.
//!
//!     cargo test --release -p fpp-core --test acceptance

use std::time::Instant;

use fpp_core::busemann::{
    increment_config, Increments, PropertyReport, ADDITIVITY_REL_TOL, BOUND_ABS_SLACK, RESTRICTION_REL_TOL,
};
use fpp_core::line_geometry::{estimate_g, uniform_angle_grid};
use fpp_core::mu_estimator::{
    average_increments, check_mean_identity, estimate_rho, reconstruct_f, reconstruct_f_transposed,
    supporting_line_check, AlphaGrid, IdentityOptions,
};
use fpp_core::passage::{brute_force_tau, discretize_line, tau_point, tau_to_set};
use fpp_core::scans::{
    amn_scan, busemann_suite, cluster_scan, coalescence_scan, encounter_scan, graph_structure_suite,
    shape_residual_scan, ResidualPlan, ScanGeometry,
};
use fpp_core::stats::{non_decreasing, strictly_decreasing};
use fpp_core::{
    DistributionConfig, DomainBox, Environment, LinearFunctional, Result, ShapeEstimate, Vertex, WeightField,
};

const EXP: DistributionConfig = DistributionConfig::Exponential { rate: 1.0 };

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn z_within(diff: f64, se: f64, k: f64) -> bool {
    if se > 0.0 {
        (diff / se).abs() <= k
    } else {
        diff == 0.0
    }
}

/// Shared calibration: ĝ at n = 400 over 16 directions, and the axis
/// functional `x ↦ ĝ(e1)·x1` normalising `g_ϖ(ϖ) = 1` at `ϖ = e1/ĝ(e1)`.
struct Calibration {
    shape: ShapeEstimate,
    functional: LinearFunctional,
}

fn calibrate() -> Result<Calibration> {
    let shape = estimate_g(EXP, &uniform_angle_grid(16), 400, 40, 0xCA11)?;
    let i = shape.locate(0.0)?;
    Ok(Calibration {
        functional: LinearFunctional::new(shape.ghat[i], 0.0),
        shape,
    })
}

fn oracle() -> Result<Outcome> {
    let t = Instant::now();
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for seed in 0..100 {
        let field = WeightField::new(EXP, seed)?;
        let env: Environment<f64> = Environment::new(&field, DomainBox::new(2)?);
        for x in env.domain().vertices() {
            for y in env.domain().vertices() {
                let bf = brute_force_tau(&env, x, y)?;
                let (tp, _) = tau_point(&env, x, y)?;
                pairs += 1;
                if bf.to_bits() != tp.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 30.0,
        format!("{pairs} ordered pairs, {mismatches} mismatches, {secs:.1}s (limit 30s)"),
    )
}

fn busemann() -> Result<Outcome> {
    let reps = busemann_suite(EXP, &LinearFunctional::new(1.0, 0.0), &[55.5, 70.25, 85.75], DomainBox::new(100)?, 100, 20, 0xB5)?;
    let mut all = PropertyReport::default();
    for r in reps {
        all.merge(r);
    }
    let pass = all.hard_violations == 0
        && all.additivity_max_rel <= ADDITIVITY_REL_TOL
        && all.bound_max_excess <= BOUND_ABS_SLACK
        && all.restriction_max_rel <= RESTRICTION_REL_TOL
        && all.translation_max_abs == 0.0;
    outcome(
        pass,
        format!(
            "20 seeds x 3 lines, {} samples: additivity {:.1e}, |B|-tau {:.1e}, restriction {:.1e}, translation {:.1e}, hard violations {}",
            all.samples, all.additivity_max_rel, all.bound_max_excess, all.restriction_max_rel, all.translation_max_abs, all.hard_violations
        ),
    )
}

fn structure() -> Result<Outcome> {
    let geom = ScanGeometry::axis(1.0, 0.5, 1.0);
    let reps = graph_structure_suite(EXP, &geom, 100, 200, 20, 0x57)?;
    let sum = |f: &dyn Fn(&fpp_core::geodesic_graph::StructureReport) -> usize| reps.iter().map(f).sum::<usize>();
    let violations = sum(&|r| r.violations());
    outcome(
        violations == 0,
        format!(
            "20 seeds, 201x201: out-degree violations {}, circuits {}, sampled paths {} with {} non-geodesic, ties {}",
            sum(&|r| r.out_degree_violations),
            sum(&|r| r.circuits),
            sum(&|r| r.paths_sampled),
            sum(&|r| r.geodesic_violations),
            sum(&|r| r.ties)
        ),
    )
}

fn curl_free() -> Result<Outcome> {
    let g = LinearFunctional::new(1.0, 0.0);
    let window = DomainBox::window(20);
    let grid = AlphaGrid::new(10.0, 1.0)?.with_start(30.0);
    let (mut single, mut averaged, mut stair) = (0f64, 0f64, 0f64);
    for seed in 0..5 {
        let field = WeightField::new(EXP, 0xC0 + seed)?;
        let env: Environment<f64> = Environment::new(&field, DomainBox::new(60)?);
        single = single.max(increment_config(&env, &g, 35.5, window)?.max_abs_curl());
        let inc = average_increments(&env, &g, &grid, window, false)?;
        averaged = averaged.max(inc.max_abs_curl());
        for x in window.vertices() {
            let a = reconstruct_f(&inc, Vertex::ORIGIN, x)?;
            let b = reconstruct_f_transposed(&inc, Vertex::ORIGIN, x)?;
            stair = stair.max((a - b).abs());
        }
    }
    outcome(
        single <= 1e-12 && averaged <= 1e-9 && stair <= 1e-9,
        format!("5 seeds, 41x41 window: single-line curl {single:.1e} (<=1e-12), averaged curl {averaged:.1e} (<=1e-9), staircase gap {stair:.1e} (<=1e-9)"),
    )
}

fn mean_identity(cal: &Calibration) -> Result<Outcome> {
    let t = Instant::now();
    let opts = IdentityOptions { transverse: 30, ..Default::default() };
    let gx = cal.functional.a;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut dist = Vec::new();
    for n in [20.0, 40.0] {
        let r = check_mean_identity(EXP, &cal.functional, Vertex::new(1, 0), n, 500, 0x1D, opts)?;
        pass &= r.z.abs() <= 3.0;
        dist.push((r.left.mean - gx).abs());
        parts.push(format!(
            "n={:.2}: left {:.4}±{:.4} right {:.4}±{:.4} z {:.2}",
            r.n, r.left.mean, r.left.stderr(), r.right.mean, r.right.stderr(), r.z
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= dist[1] < dist[0] && secs < 1200.0;
    outcome(
        pass,
        format!(
            "500 replicas, g_w(e1)={gx:.4}; {}; |left-g_w(e1)| {:.4} -> {:.4}; {secs:.0}s on {} thread(s)",
            parts.join("; "),
            dist[0],
            dist[1],
            rayon::current_num_threads()
        ),
    )
}

fn rho_calibration(cal: &Calibration) -> Result<Outcome> {
    let grid = AlphaGrid::new(40.0, 1.0)?.with_start(50.0);
    let rho = estimate_rho(EXP, &cal.functional, &grid, 64, 40, 0x20, 1.25)?;
    let sl = supporting_line_check(&rho, &cal.shape, 0.0)?;
    let linear = z_within(rho.defect.mean, rho.defect.stderr(), 3.0);
    let transverse = z_within(rho.rho.1, rho.stderr.1, 3.0);
    outcome(
        sl.contact_ok() && linear && transverse,
        format!(
            "rho=({:.4}±{:.4}, {:.4}±{:.4}); rho.w={:.4}±{:.4} (z {:.2}); linearity defect {:.4}±{:.4}; transverse z {:.2}",
            rho.rho.0,
            rho.stderr.0,
            rho.rho.1,
            rho.stderr.1,
            sl.dot,
            sl.dot_se,
            sl.dot_z,
            rho.defect.mean,
            rho.defect.stderr(),
            rho.rho.1 / rho.stderr.1
        ),
    )
}

fn shape_trend(cal: &Calibration) -> Result<Outcome> {
    let plan = ResidualPlan {
        functional: cal.functional,
        window: 64,
        gap: 32,
        n: 40.0,
        h: 1.0,
        margin: 1.25,
    };
    let res = shape_residual_scan(EXP, &plan, &[16, 32, 64], 20, 0x5A)?;
    let ok = res.iter().filter(|r| r.max_non_increasing()).count();
    outcome(ok >= 16, format!("max residual non-increasing over r=16,32,64 in {ok}/20 seeds (need 16)"))
}

fn coalescence(cal: &Calibration) -> Result<Outcome> {
    let geom = ScanGeometry { functional: cal.functional, alpha_per_n: 1.0, box_at: 3.0 };
    let pts = coalescence_scan(EXP, &geom, &[20, 40, 80], 5, 200, 0xC0A1)?;
    let f: Vec<f64> = pts.iter().map(|p| p.fraction.mean).collect();
    outcome(
        non_decreasing(&f) && f[2] >= 0.9,
        format!("merge fraction in [-5,5]^2 at n=20,40,80: {:.4}, {:.4}, {:.4} (need non-decreasing, >=0.9 at 80)", f[0], f[1], f[2]),
    )
}

fn amn(cal: &Calibration) -> Result<Outcome> {
    let geom = ScanGeometry { functional: cal.functional, alpha_per_n: 1.0, box_at: 3.0 };
    let pts = amn_scan(EXP, &geom, 3, &[10, 20, 40], 200, 0xA3)?;
    let p: Vec<f64> = pts.iter().map(|q| q.probability()).collect();
    let c4 = pts[2].failure_rate(3);
    outcome(
        non_decreasing(&p) && p[2] >= 0.95 && c4 <= 0.05,
        format!(
            "P(A_3,n) at n=10,20,40: {:.3}, {:.3}, {:.3} (need non-decreasing, >=0.95 at 40); failures of conditions 1-4 at n=40: {:?}; condition-4 rate {:.3} (need <=0.05)",
            p[0], p[1], p[2], pts[2].failures, c4
        ),
    )
}

fn clusters() -> Result<Outcome> {
    let geom = ScanGeometry::axis(1.0, 0.5, 1.0);
    let pts = cluster_scan(EXP, &geom, &[50, 100, 200], usize::MAX, 200, 0xC1)?;
    let f: Vec<f64> = pts.iter().map(|p| p.touch_fraction()).collect();
    outcome(
        strictly_decreasing(&f),
        format!("fraction of 200 seeds with C_0 at the box edge, N=50,100,200: {:.3}, {:.3}, {:.3}", f[0], f[1], f[2]),
    )
}

fn encounters(cal: &Calibration) -> Result<Outcome> {
    let geom = ScanGeometry { functional: cal.functional, alpha_per_n: 1.0, box_at: 3.0 };
    let pts = encounter_scan(EXP, &geom, &[10, 20, 40], 200, 0xE4)?;
    let pass = pts.iter().all(|p| p.max_count <= p.bound);
    let d: Vec<String> = pts.iter().map(|p| format!("M={}: max {} of {}", p.m, p.max_count, p.bound)).collect();
    outcome(pass, format!("200 seeds; {}", d.join(", ")))
}

fn closed_forms() -> Result<Outcome> {
    let one = DistributionConfig::constant(1.0);
    let shape = estimate_g(one, &uniform_angle_grid(16), 20, 2, 0)?;
    let mut shape_ok = true;
    for (k, t) in shape.targets.iter().enumerate() {
        let t = t.expect("estimated shapes record targets");
        shape_ok &= shape.ghat[k] == t.l1() as f64 / t.l2();
    }

    let field = WeightField::new(one, 0)?;
    let env: Environment<f64> = Environment::new(&field, DomainBox::new(20)?);
    let axis = LinearFunctional::new(1.0, 0.0);
    let mut line_ok = true;
    for alpha in [0.3, 1.7, 2.49, 2.51, 5.2, 9.9, 12.01] {
        let s = discretize_line(&axis, alpha, env.domain())?;
        let (t, _) = tau_to_set(&env, Vertex::ORIGIN, &s)?;
        line_ok &= t == (alpha - 0.5f64).ceil();
    }

    let rep = check_mean_identity(one, &axis, Vertex::new(1, 0), 10.0, 2, 0, IdentityOptions::default())?;
    let id_ok = rep.left.mean == 1.0 && rep.right.mean == 1.0 && rep.left.std() == 0.0;
    outcome(
        shape_ok && line_ok && id_ok,
        format!("g-hat = l1 norm on 16 directions: {shape_ok}; tau(0,L_a) = ceil(a-1/2): {line_ok}; identity sides = 1: {id_ok}"),
    )
}

fn main() {
    let strict = std::env::var("FPP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let cal = calibrate();
    if let Ok(c) = &cal {
        println!(
            "calibration: g-hat(e1) at n=400 = {:.5} ± {:.5} ({:.0}s)",
            c.functional.a,
            c.shape.stderr[c.shape.locate(0.0).unwrap()],
            start.elapsed().as_secs_f64()
        );
    }
    let with_cal = |f: fn(&Calibration) -> Result<Outcome>| match &cal {
        Ok(c) => f(c),
        Err(e) => Err(e.clone()),
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome>>)> = vec![
        ("oracle equivalence", Box::new(oracle)),
        ("busemann suite", Box::new(busemann)),
        ("geodesic-graph structure", Box::new(structure)),
        ("curl-free reconstruction", Box::new(curl_free)),
        ("mean identity", Box::new(|| with_cal(mean_identity))),
        ("rho calibration", Box::new(|| with_cal(rho_calibration))),
        ("shape theorem trend", Box::new(|| with_cal(shape_trend))),
        ("coalescence trend", Box::new(|| with_cal(coalescence))),
        ("A_m,n scan", Box::new(|| with_cal(amn))),
        ("backward clusters", Box::new(clusters)),
        ("encounter-point bound", Box::new(|| with_cal(encounters))),
        ("deterministic closed forms", Box::new(closed_forms)),
    ];

    let (mut failed, mut errored) = (0, 0);
    for (name, run) in &criteria {
        let t = Instant::now();
        match run() {
            Ok(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!(
                    "{} {name}: {} [{:.1}s]",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.detail,
                    t.elapsed().as_secs_f64()
                );
            }
            Err(e) => {
                errored += 1;
                println!("FAIL {name}: error: {e}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed, {} errored, {:.0}s",
        criteria.len() - failed - errored,
        failed,
        errored,
        start.elapsed().as_secs_f64()
    );
    if errored > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
