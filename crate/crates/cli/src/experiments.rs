//! One function per subcommand. Each writes its data files and returns the
//! counts that go into the manifest.

use std::f64::consts::FRAC_PI_2;

use fpp_core::busemann::{check_line_beyond, PropertyReport};
use fpp_core::line_geometry::{estimate_g, supporting_functional, uniform_angle_grid, wrap_angle};
use fpp_core::mu_estimator::{
    average_increments, check_mean_identity, domain_for_lines, estimate_rho, f_from_center, rho_from_increments,
    shape_residual, supporting_line_check, AlphaGrid, IdentityOptions,
};
use fpp_core::scans::{
    amn_records, busemann_suite, cluster_scan, coalescence_scan, encounter_scan, summarize_amn, ScanGeometry,
};
use fpp_core::busemann::Increments;
use fpp_core::{DistributionConfig, DomainBox, Environment, FppError, LinearFunctional, ShapeEstimate, Vertex, WeightField};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{IoResult, Meta, OutputDir};

pub struct Summary {
    pub boundary_flags: usize,
    pub extra: Vec<(String, String)>,
    /// Set when a hard invariant failed; the process exits nonzero.
    pub failure: Option<String>,
}

impl Summary {
    fn ok(boundary_flags: usize) -> Self {
        Summary {
            boundary_flags,
            extra: Vec::new(),
            failure: None,
        }
    }
}

pub fn law_label(law: &DistributionConfig) -> String {
    serde_json::to_string(law).unwrap_or_else(|_| format!("{law:?}"))
}

fn meta(cfg: &ExperimentConfig, experiment: &str, replicas: usize) -> Meta {
    Meta {
        experiment: experiment.to_string(),
        law: law_label(&cfg.law()),
        seed: cfg.seed(),
        replicas,
        ..Default::default()
    }
}

fn list(xs: &[impl ToString]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn ints(cfg: &ExperimentConfig, default: &[i32]) -> Vec<i32> {
    cfg.schedule
        .ns
        .as_ref()
        .map(|v| v.iter().map(|x| x.round() as i32).collect())
        .unwrap_or_else(|| default.to_vec())
}

fn sizing(field: &str, e: FppError, hint: String) -> Box<dyn std::error::Error> {
    Box::new(ConfigError(format!("{field}: {e}; suggestion: {hint}")))
}

fn calibration_shape(cfg: &ExperimentConfig) -> IoResult<ShapeEstimate> {
    Ok(estimate_g(
        cfg.law(),
        &uniform_angle_grid(cfg.options.directions.unwrap_or(16)),
        cfg.options.shape_n.unwrap_or(200),
        cfg.options.shape_replicas.unwrap_or(20),
        cfg.seed() ^ 0x5EED,
    )?)
}

/// The supporting functional of `shape` at `θ`. On the axes the transverse
/// coefficient is set to 0, as reflection symmetry requires.
fn functional_from_shape(shape: &ShapeEstimate, theta: f64) -> IoResult<(LinearFunctional, f64)> {
    let sf = supporting_functional(shape, theta)?;
    let mut f = sf.functional;
    let q = wrap_angle(sf.theta) / FRAC_PI_2;
    if (q - q.round()).abs() < 1e-9 {
        if f.a.abs() >= f.b.abs() {
            f.b = 0.0;
        } else {
            f.a = 0.0;
        }
    }
    Ok((f, sf.theta))
}

fn functional_or_calibrated(cfg: &ExperimentConfig, theta: f64, extra: &mut Vec<(String, String)>) -> IoResult<LinearFunctional> {
    match cfg.functional() {
        Some(f) => Ok(f),
        None => {
            let (f, th) = functional_from_shape(&calibration_shape(cfg)?, theta)?;
            extra.push(("calibrated_functional".into(), format!("{},{} at theta={th}", f.a, f.b)));
            Ok(f)
        }
    }
}

#[derive(Serialize)]
struct ShapeRow {
    theta: f64,
    target_x: i32,
    target_y: i32,
    ghat: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct ShapeSummary {
    norm_bounds: (f64, f64),
    convexity_violations: Vec<usize>,
    max_rotation_z: f64,
    supporting: Option<fpp_core::line_geometry::SupportingFunctional>,
}

pub fn shape(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let n = cfg.geometry.n.unwrap_or(100) as usize;
    let reps = cfg.replicas(20);
    let dirs = uniform_angle_grid(cfg.options.directions.unwrap_or(32));
    let est = estimate_g(cfg.law(), &dirs, n, reps, cfg.seed())?;
    let rows: Vec<ShapeRow> = (0..est.len())
        .map(|i| {
            let t = est.targets[i].unwrap_or(Vertex::ORIGIN);
            ShapeRow {
                theta: est.directions[i],
                target_x: t.x,
                target_y: t.y,
                ghat: est.ghat[i],
                stderr: est.stderr[i],
            }
        })
        .collect();
    let mut m = meta(cfg, "shape", reps);
    m.n = Some(n.to_string());
    out.write_csv("shape.csv", &m, &rows)?;
    let supporting = match cfg.geometry.theta {
        Some(th) => Some(supporting_functional(&est, th)?),
        None => None,
    };
    let summary = ShapeSummary {
        norm_bounds: est.norm_bounds(),
        convexity_violations: est.convexity_violations(),
        max_rotation_z: est.rotation_pairs().iter().map(|p| p.2).fold(0.0, f64::max),
        supporting,
    };
    out.write_json("shape_summary.json", &m, &summary)?;
    Ok(Summary::ok(est.boundary_touches))
}

#[derive(Serialize)]
struct BusemannOut {
    merged: PropertyReport,
    per_replica: Vec<PropertyReport>,
}

pub fn busemann_verify(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let n = cfg.geometry.n.unwrap_or(100);
    let reps = cfg.replicas(20);
    let f = cfg.functional().unwrap_or(LinearFunctional::new(1.0, 0.0));
    let alphas = cfg.schedule.alphas.clone().unwrap_or_else(|| {
        let s = f.a.hypot(f.b) * n as f64;
        vec![0.555 * s, 0.7025 * s, 0.8575 * s]
    });
    let domain = DomainBox::new(n)?;
    let per = busemann_suite(cfg.law(), &f, &alphas, domain, cfg.options.samples.unwrap_or(100), reps, cfg.seed())?;
    let mut merged = PropertyReport::default();
    for r in &per {
        merged.merge(r.clone());
    }
    let mut m = meta(cfg, "busemann-verify", reps);
    m.n = Some(n.to_string());
    m.functional = Some([f.a, f.b]);
    let hard = merged.hard_violations;
    out.write_json("busemann.json", &m, &BusemannOut { merged, per_replica: per })?;
    let mut s = Summary::ok(0);
    s.extra.push(("hard_violations".into(), hard.to_string()));
    if hard > 0 {
        s.failure = Some(format!("busemann-properties: {hard} hard violations"));
    }
    Ok(s)
}

#[derive(Serialize)]
struct CoalescenceRow {
    n: i32,
    alpha: f64,
    replicas: usize,
    fraction: f64,
    stderr: f64,
    all_merged: usize,
    exits: usize,
}

#[derive(Serialize)]
struct ForestRow {
    x: i32,
    y: i32,
    next_x: i32,
    next_y: i32,
    root_x: i32,
    root_y: i32,
}

#[derive(Serialize)]
struct ClusterRow {
    n: i32,
    replicas: usize,
    touch_fraction: f64,
    capped: usize,
    mean_size: f64,
}

#[derive(Serialize)]
struct EncounterRow {
    m: i32,
    replicas: usize,
    max_count: usize,
    mean_count: f64,
    bound: usize,
}

fn scan_geometry(cfg: &ExperimentConfig) -> ScanGeometry {
    ScanGeometry {
        functional: cfg.functional().unwrap_or(LinearFunctional::new(1.0, 0.0)),
        alpha_per_n: cfg.geometry.alpha_per_n.unwrap_or(1.0),
        box_at: cfg.geometry.box_at.unwrap_or(2.0),
    }
}

fn check_box(geom: &ScanGeometry, ns: &[i32]) -> IoResult<()> {
    let f = geom.functional;
    // line at lattice distance alpha_per_n·n/|f| along its normal
    let needed = geom.alpha_per_n / f.a.hypot(f.b);
    if geom.box_at <= needed {
        return Err(Box::new(ConfigError(format!(
            "geometry.box_at: {} puts the line outside the box for n in {ns:?}; suggestion: box_at >= {:.3}",
            geom.box_at,
            needed * 1.25
        ))));
    }
    Ok(())
}

pub fn graph_coalescence(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let reps = cfg.replicas(200);
    let ns = ints(cfg, &[20, 40, 80]);
    let geom = scan_geometry(cfg);
    check_box(&geom, &ns)?;
    let pts = coalescence_scan(cfg.law(), &geom, &ns, cfg.options.pair_box.unwrap_or(5), reps, cfg.seed())?;
    let mut m = meta(cfg, "graph-coalescence", reps);
    m.n = Some(list(&ns));
    m.functional = Some([geom.functional.a, geom.functional.b]);
    let rows: Vec<CoalescenceRow> = pts
        .iter()
        .map(|p| CoalescenceRow {
            n: p.n,
            alpha: p.alpha,
            replicas: p.replicas,
            fraction: p.fraction.mean,
            stderr: p.fraction.stderr(),
            all_merged: p.all_merged,
            exits: p.exits,
        })
        .collect();
    out.write_csv("coalescence.csv", &m, &rows)?;
    let exits: usize = pts.iter().map(|p| p.exits).sum();

    if cfg.options.export_edges.unwrap_or(false) {
        let n = *ns.last().expect("nonempty n list");
        let (_, g) = geom.graph(cfg.law(), n, fpp_core::weight_field::replica_seed(cfg.seed(), 0))?;
        let w = DomainBox::window(cfg.geometry.window.unwrap_or(20).min(g.domain().half_width()));
        let mut rows = Vec::new();
        for v in w.vertices() {
            let Some(next) = g.successor(v) else { continue };
            let root = g.forward_path(v)?.end();
            rows.push(ForestRow {
                x: v.x,
                y: v.y,
                next_x: next.x,
                next_y: next.y,
                root_x: root.x,
                root_y: root.y,
            });
        }
        let mut fm = m.clone();
        fm.n = Some(n.to_string());
        fm.window = Some(w.half_width());
        out.write_csv("forest.csv", &fm, &rows)?;
    }
    if let Some(cns) = &cfg.options.cluster_ns {
        let cl = cluster_scan(cfg.law(), &geom, cns, usize::MAX, reps, cfg.seed())?;
        let rows: Vec<ClusterRow> = cl
            .iter()
            .map(|c| ClusterRow {
                n: c.n,
                replicas: c.replicas,
                touch_fraction: c.touch_fraction(),
                capped: c.capped,
                mean_size: c.size.mean,
            })
            .collect();
        let mut cm = m.clone();
        cm.n = Some(list(cns));
        out.write_csv("clusters.csv", &cm, &rows)?;
    }
    let mut failure = None;
    if let Some(ems) = &cfg.options.encounter_ms {
        let en = encounter_scan(cfg.law(), &geom, ems, reps, cfg.seed())?;
        if let Some(p) = en.iter().find(|p| p.max_count > p.bound) {
            failure = Some(format!("encounter-bound: {} encounter points in [-{m},{m}]^2 exceed {}", p.max_count, p.bound, m = p.m));
        }
        let rows: Vec<EncounterRow> = en
            .iter()
            .map(|p| EncounterRow {
                m: p.m,
                replicas: p.replicas,
                max_count: p.max_count,
                mean_count: p.mean_count,
                bound: p.bound,
            })
            .collect();
        let mut em = m.clone();
        em.n = Some(list(ems));
        out.write_csv("encounters.csv", &em, &rows)?;
    }
    Ok(Summary {
        boundary_flags: exits,
        extra: Vec::new(),
        failure,
    })
}

#[derive(Serialize)]
struct AmnRow {
    m: i32,
    n: i32,
    alpha: f64,
    replicas: usize,
    probability: f64,
    fail_out_degree: usize,
    fail_circuit: usize,
    fail_coalesce: usize,
    fail_backflow: usize,
}

pub fn amn_scan(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let reps = cfg.replicas(200);
    let ns = ints(cfg, &[10, 20, 40]);
    let m_box = cfg.options.m.unwrap_or(3);
    let geom = ScanGeometry {
        box_at: cfg.geometry.box_at.unwrap_or(3.0),
        ..scan_geometry(cfg)
    };
    check_box(&geom, &ns)?;
    if let Some(n) = ns.iter().find(|n| **n < m_box) {
        return Err(Box::new(ConfigError(format!("schedule.ns: n = {n} is smaller than options.m = {m_box}"))));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for &n in &ns {
        let rec = amn_records(cfg.law(), &geom, m_box, n, reps, cfg.seed())?;
        let p = summarize_amn(m_box, n, geom.alpha(n), &rec);
        rows.push(AmnRow {
            m: p.m,
            n: p.n,
            alpha: p.alpha,
            replicas: p.replicas,
            probability: p.probability(),
            fail_out_degree: p.failures[0],
            fail_circuit: p.failures[1],
            fail_coalesce: p.failures[2],
            fail_backflow: p.failures[3],
        });
        records.extend(rec);
    }
    let mut m = meta(cfg, "amn-scan", reps);
    m.n = Some(list(&ns));
    m.window = Some(m_box);
    m.functional = Some([geom.functional.a, geom.functional.b]);
    out.write_json("amn.json", &m, &records)?;
    out.write_csv("amn.csv", &m, &rows)?;
    Ok(Summary::ok(0))
}

#[derive(Serialize)]
struct FieldRow {
    x: i32,
    y: i32,
    theta1: f64,
    theta2: f64,
    f: f64,
}

#[derive(Serialize)]
struct ResidualRow {
    replica: usize,
    r: i32,
    max: f64,
    mean: f64,
    argmax_x: i32,
    argmax_y: i32,
    rho1: f64,
    rho2: f64,
}

fn residual_rows(replica: usize, r: &fpp_core::mu_estimator::ResidualStats) -> Vec<ResidualRow> {
    (0..r.radii.len())
        .map(|k| ResidualRow {
            replica,
            r: r.radii[k],
            max: r.max[k],
            mean: r.mean[k],
            argmax_x: r.argmax[k].x,
            argmax_y: r.argmax[k].y,
            rho1: r.rho.0,
            rho2: r.rho.1,
        })
        .collect()
}

pub fn mu_average(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let reps = cfg.schedule.replicas.unwrap_or(4);
    let f = cfg.functional().unwrap_or(LinearFunctional::new(1.0, 0.0));
    let wh = cfg.geometry.window.unwrap_or(16);
    let window = DomainBox::window(wh);
    let n = cfg.schedule.ns.as_ref().and_then(|v| v.first().copied()).unwrap_or(20.0);
    let h = cfg.schedule.h.unwrap_or(1.0);
    let min_start = f.max_over(&window) + 0.5 * (f.a.abs() + f.b.abs());
    let start = cfg.schedule.alpha_start.unwrap_or(min_start + f.a.hypot(f.b) * (wh as f64 / 2.0));
    let grid = AlphaGrid::new(n, h)?.with_start(start);
    for a in grid.values() {
        check_line_beyond(&f, a, &window).map_err(|e| {
            sizing("schedule.alpha_start", e, format!("alpha_start > {min_start:.4} for a window of half-width {wh}"))
        })?;
    }
    let margin = cfg.geometry.margin.unwrap_or(1.25);
    let domain = domain_for_lines(&f, grid.end(), margin, &[Vertex::new(wh, wh), Vertex::new(-wh, -wh)])?;
    let radii = cfg.options.radii.clone().unwrap_or_else(|| vec![(wh / 4).max(1), (wh / 2).max(1), wh]);
    if let Some(r) = radii.iter().find(|r| **r > wh || **r < 1) {
        return Err(Box::new(ConfigError(format!("options.radii: {r} must lie in 1..={wh}"))));
    }
    let mut m = meta(cfg, "mu-average", reps);
    m.n = Some(n.to_string());
    m.h = Some(h);
    m.window = Some(wh);
    m.functional = Some([f.a, f.b]);
    let mut residuals = Vec::new();
    for i in 0..reps {
        let seed = fpp_core::weight_field::replica_seed(cfg.seed(), i as u64);
        let field = WeightField::new(cfg.law(), seed)?;
        let env: Environment<f64> = Environment::new(&field, domain);
        let inc = average_increments(&env, &f, &grid, window, false)?;
        let fv = f_from_center(&inc);
        let rows: Vec<FieldRow> = window
            .vertices()
            .enumerate()
            .map(|(k, v)| FieldRow {
                x: v.x,
                y: v.y,
                theta1: inc.theta(v, fpp_core::Axis::E1).unwrap_or(f64::NAN),
                theta2: inc.theta(v, fpp_core::Axis::E2).unwrap_or(f64::NAN),
                f: fv[k],
            })
            .collect();
        let mut rm = m.clone();
        rm.seed = seed;
        rm.replicas = 1;
        out.write_csv(&format!("fbar_{i:03}.csv"), &rm, &rows)?;
        let rho = rho_from_increments(&inc)?;
        residuals.extend(residual_rows(i, &shape_residual(&inc, rho, &radii)?));
    }
    out.write_csv("residuals.csv", &m, &residuals)?;
    let mut s = Summary::ok(0);
    s.extra.push(("domain_half_width".into(), domain.half_width().to_string()));
    Ok(s)
}

#[derive(Serialize)]
struct RhoOut {
    rho: fpp_core::RhoEstimate,
    supporting_line: Option<fpp_core::mu_estimator::SupportingLineReport>,
}

pub fn rho_shape(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let reps = cfg.replicas(40);
    let theta = cfg.geometry.theta.unwrap_or(0.0);
    let r = cfg.geometry.window.unwrap_or(32);
    let mut extra = Vec::new();
    let shape = calibration_shape(cfg)?;
    let f = match cfg.functional() {
        Some(f) => f,
        None => {
            let (f, th) = functional_from_shape(&shape, theta)?;
            extra.push(("calibrated_functional".into(), format!("{},{} at theta={th}", f.a, f.b)));
            f
        }
    };
    let corner = DomainBox::window(r).translated(Vertex::ORIGIN);
    let min_start = f.max_over(&corner) + 0.5 * (f.a.abs() + f.b.abs());
    let start = cfg.schedule.alpha_start.unwrap_or(min_start + f.a.hypot(f.b) * (r as f64 / 2.0));
    let n = cfg.schedule.ns.as_ref().and_then(|v| v.first().copied()).unwrap_or(40.0);
    let h = cfg.schedule.h.unwrap_or(1.0);
    let grid = AlphaGrid::new(n, h)?.with_start(start);
    let rho = estimate_rho(cfg.law(), &f, &grid, r, reps, cfg.seed(), cfg.geometry.margin.unwrap_or(1.25))
        .map_err(|e| match e {
            FppError::Precondition(_) => sizing("schedule.alpha_start", e, format!("alpha_start > {min_start:.4} for radius {r}")),
            e => Box::new(e),
        })?;
    let supporting_line = supporting_line_check(&rho, &shape, theta).ok();
    let mut m = meta(cfg, "rho-shape", reps);
    m.n = Some(n.to_string());
    m.h = Some(h);
    m.window = Some(r);
    m.functional = Some([f.a, f.b]);
    if let Some(sl) = &supporting_line {
        extra.push(("rho_dot_w".into(), format!("{:.6} +- {:.6}", sl.dot, sl.dot_se)));
    }
    out.write_json("rho.json", &m, &RhoOut { rho, supporting_line })?;
    Ok(Summary {
        boundary_flags: shape.boundary_touches,
        extra,
        failure: None,
    })
}

#[derive(Serialize)]
struct IdentityRow {
    n: f64,
    h: f64,
    m: usize,
    k: usize,
    left: f64,
    left_se: f64,
    right: f64,
    right_se: f64,
    z: f64,
    drift: f64,
    boundary_touches: usize,
}

pub fn mean_identity(cfg: &ExperimentConfig, out: &mut OutputDir) -> IoResult<Summary> {
    let reps = cfg.replicas(100);
    let ns = cfg.schedule.ns.clone().unwrap_or_else(|| vec![20.0, 40.0]);
    let x = cfg.x();
    let mut extra = Vec::new();
    let theta = (x.y as f64).atan2(x.x as f64);
    let f = functional_or_calibrated(cfg, if x == Vertex::ORIGIN { 0.0 } else { theta }, &mut extra)?;
    let opts = IdentityOptions {
        h: cfg.schedule.h.unwrap_or(1.0),
        margin: cfg.geometry.margin.unwrap_or(1.25),
        transverse: cfg.options.transverse.unwrap_or(0),
    };
    let mut reports = Vec::new();
    for &n in &ns {
        reports.push(check_mean_identity(cfg.law(), &f, x, n, reps, cfg.seed(), opts)?);
    }
    let rows: Vec<IdentityRow> = reports
        .iter()
        .map(|r| IdentityRow {
            n: r.n,
            h: r.h,
            m: r.m,
            k: r.k,
            left: r.left.mean,
            left_se: r.left.stderr(),
            right: r.right.mean,
            right_se: r.right.stderr(),
            z: r.z,
            drift: r.drift,
            boundary_touches: r.boundary_touches,
        })
        .collect();
    let mut m = meta(cfg, "mean-identity", reps);
    m.n = Some(list(&ns));
    m.h = Some(opts.h);
    m.functional = Some([f.a, f.b]);
    out.write_csv("identity.csv", &m, &rows)?;
    out.write_json("identity.json", &m, &reports)?;
    Ok(Summary {
        boundary_flags: reports.iter().map(|r| r.boundary_touches).sum(),
        extra,
        failure: None,
    })
}
