//! Monte Carlo drivers: one environment per replica seed `replica_seed(base, i)`,
//! replicas run in parallel and are collected in replica order.
//!
//! The target is the discretised line `{functional = α}` with `α = alpha_per_n · n`;
//! with the functional normalised by `ĝ(e1)` this puts the line at passage-time
//! distance about `alpha_per_n · n` from the origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::busemann::{verify_busemann_properties, PropertyReport};
use crate::error::{FppError, Result};
use crate::geodesic_graph::{build_graph, graph_symmetric_difference, GeodesicGraph, StructureReport};
use crate::lattice::{DomainBox, Vertex};
use crate::line_geometry::LinearFunctional;
use crate::mu_estimator::{average_increments, rho_from_increments, shape_residual, AlphaGrid, ResidualStats};
use crate::passage::{discretize_line, Environment};
use crate::stats::MeanStd;
use crate::weight_field::{replica_seed, DistributionConfig, WeightField};

/// Placement of the line and the box relative to a scale `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub functional: LinearFunctional,
    pub alpha_per_n: f64,
    /// box half-width `box_at · n`
    pub box_at: f64,
}

impl ScanGeometry {
    /// Line `{a·x1 = α}`.
    pub fn axis(a: f64, alpha_per_n: f64, box_at: f64) -> Self {
        ScanGeometry {
            functional: LinearFunctional::new(a, 0.0),
            alpha_per_n,
            box_at,
        }
    }

    pub fn alpha(&self, n: i32) -> f64 {
        self.alpha_per_n * n as f64
    }

    pub fn domain(&self, n: i32) -> Result<DomainBox> {
        DomainBox::new((self.box_at * n as f64).ceil() as i32)
    }

    /// Graph of the line for scale `n` in replica `r`.
    pub fn graph(&self, config: DistributionConfig, n: i32, seed: u64) -> Result<(Environment<f64>, GeodesicGraph<f64>)> {
        let field = WeightField::new(config, seed)?;
        let env = Environment::new(&field, self.domain(n)?);
        let s = discretize_line(&self.functional, self.alpha(n), env.domain())?;
        let g = build_graph(&env, &s)?;
        Ok((env, g))
    }
}

fn replicas_map<R: Send>(replicas: usize, seed: u64, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| f(replica_seed(seed, i)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalescencePoint {
    pub n: i32,
    pub alpha: f64,
    pub replicas: usize,
    /// per replica, the fraction of pairs in the pair box whose forward paths meet
    pub fraction: MeanStd,
    /// replicas in which every pair met
    pub all_merged: usize,
    /// forward paths that stopped before reaching the line
    pub exits: usize,
}

/// Pair-coalescence fractions over all pairs of distinct vertices of
/// `[−pair_box, pair_box]²`, for each scale in `ns`.
pub fn coalescence_scan(
    config: DistributionConfig,
    geom: &ScanGeometry,
    ns: &[i32],
    pair_box: i32,
    replicas: usize,
    seed: u64,
) -> Result<Vec<CoalescencePoint>> {
    let pts: Vec<Vertex> = DomainBox::window(pair_box).vertices().collect();
    let total_pairs = (pts.len() * (pts.len() - 1) / 2) as f64;
    ns.iter()
        .map(|&n| {
            let rows = replicas_map(replicas, seed, |s| {
                let (_, g) = geom.graph(config, n, s)?;
                let mut ends = Vec::with_capacity(pts.len());
                let mut exits = 0;
                for p in &pts {
                    let path = g.forward_path(*p)?;
                    if !g.is_target(path.end()) {
                        exits += 1;
                    }
                    ends.push(path.end());
                }
                // in a forest two forward paths meet iff they end at the same root
                ends.sort();
                let mut merged = 0usize;
                let mut i = 0;
                while i < ends.len() {
                    let j = ends[i..].iter().take_while(|e| **e == ends[i]).count();
                    merged += j * (j - 1) / 2;
                    i += j;
                }
                Ok((merged as f64 / total_pairs, exits))
            })?;
            Ok(CoalescencePoint {
                n,
                alpha: geom.alpha(n),
                replicas,
                fraction: MeanStd::from_iter(rows.iter().map(|r| r.0)),
                all_merged: rows.iter().filter(|r| r.0 == 1.0).count(),
                exits: rows.iter().map(|r| r.1).sum(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmnPoint {
    pub m: i32,
    pub n: i32,
    pub alpha: f64,
    pub replicas: usize,
    pub holds: usize,
    /// failures of conditions 1 to 4
    pub failures: [usize; 4],
}

impl AmnPoint {
    pub fn probability(&self) -> f64 {
        self.holds as f64 / self.replicas as f64
    }

    pub fn failure_rate(&self, condition: usize) -> f64 {
        self.failures[condition] as f64 / self.replicas as f64
    }
}

/// One replica's A_{m,n} evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmnRecord {
    pub m: i32,
    pub n: i32,
    pub replica: usize,
    pub seed: u64,
    pub alpha: f64,
    pub out_degree_ok: bool,
    pub no_circuit_ok: bool,
    pub coalesce_ok: bool,
    pub no_boundary_backflow_ok: bool,
}

impl AmnRecord {
    pub fn conditions(&self) -> [bool; 4] {
        [self.out_degree_ok, self.no_circuit_ok, self.coalesce_ok, self.no_boundary_backflow_ok]
    }

    pub fn holds(&self) -> bool {
        self.conditions().iter().all(|c| *c)
    }
}

pub fn amn_records(
    config: DistributionConfig,
    geom: &ScanGeometry,
    m: i32,
    n: i32,
    replicas: usize,
    seed: u64,
) -> Result<Vec<AmnRecord>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let s = replica_seed(seed, i as u64);
            let (_, g) = geom.graph(config, n, s)?;
            let r = g.check_amn(m, n)?;
            Ok(AmnRecord {
                m,
                n,
                replica: i,
                seed: s,
                alpha: geom.alpha(n),
                out_degree_ok: r.out_degree_ok,
                no_circuit_ok: r.no_circuit_ok,
                coalesce_ok: r.coalesce_ok,
                no_boundary_backflow_ok: r.no_boundary_backflow_ok,
            })
        })
        .collect()
}

pub fn summarize_amn(m: i32, n: i32, alpha: f64, records: &[AmnRecord]) -> AmnPoint {
    let mut failures = [0; 4];
    for r in records {
        for (k, ok) in r.conditions().into_iter().enumerate() {
            if !ok {
                failures[k] += 1;
            }
        }
    }
    AmnPoint {
        m,
        n,
        alpha,
        replicas: records.len(),
        holds: records.iter().filter(|r| r.holds()).count(),
        failures,
    }
}

pub fn amn_scan(
    config: DistributionConfig,
    geom: &ScanGeometry,
    m: i32,
    ns: &[i32],
    replicas: usize,
    seed: u64,
) -> Result<Vec<AmnPoint>> {
    ns.iter()
        .map(|&n| Ok(summarize_amn(m, n, geom.alpha(n), &amn_records(config, geom, m, n, replicas, seed)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub n: i32,
    pub replicas: usize,
    /// replicas in which `C_0` reaches the edge of the box
    pub touching: usize,
    pub capped: usize,
    pub size: MeanStd,
}

impl ClusterPoint {
    pub fn touch_fraction(&self) -> f64 {
        self.touching as f64 / self.replicas as f64
    }
}

/// Backward cluster of the origin for boxes of half-width `box_at · n`.
pub fn cluster_scan(
    config: DistributionConfig,
    geom: &ScanGeometry,
    ns: &[i32],
    cap: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ClusterPoint>> {
    ns.iter()
        .map(|&n| {
            let rows = replicas_map(replicas, seed, |s| {
                let (_, g) = geom.graph(config, n, s)?;
                g.backward_cluster(Vertex::ORIGIN, cap)
            })?;
            Ok(ClusterPoint {
                n,
                replicas,
                touching: rows.iter().filter(|c| c.touches_boundary).count(),
                capped: rows.iter().filter(|c| c.capped).count(),
                size: MeanStd::from_iter(rows.iter().map(|c| c.len() as f64)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncounterPoint {
    pub m: i32,
    pub replicas: usize,
    pub max_count: usize,
    pub mean_count: f64,
    /// `8M`
    pub bound: usize,
}

/// Encounter points in `[−M, M]²` of the graph at scale `M`.
pub fn encounter_scan(
    config: DistributionConfig,
    geom: &ScanGeometry,
    ms: &[i32],
    replicas: usize,
    seed: u64,
) -> Result<Vec<EncounterPoint>> {
    ms.iter()
        .map(|&m| {
            let counts = replicas_map(replicas, seed, |s| {
                let (_, g) = geom.graph(config, m, s)?;
                Ok(g.encounter_points(&DomainBox::window(m))?.len())
            })?;
            Ok(EncounterPoint {
                m,
                replicas,
                max_count: counts.iter().copied().max().unwrap_or(0),
                mean_count: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
                bound: 8 * m as usize,
            })
        })
        .collect()
}

/// Directed-edge symmetric differences in `window` between the graphs of
/// `α` and `α + delta` for one environment.
pub fn symmetric_difference_scan(
    config: DistributionConfig,
    functional: &LinearFunctional,
    alphas: &[f64],
    delta: f64,
    window: DomainBox,
    domain: DomainBox,
    seed: u64,
) -> Result<Vec<(f64, usize)>> {
    let field = WeightField::new(config, seed)?;
    let env: Environment<f64> = Environment::new(&field, domain);
    alphas
        .iter()
        .map(|&a| {
            let g1 = build_graph(&env, &discretize_line(functional, a, &domain)?)?;
            let g2 = build_graph(&env, &discretize_line(functional, a + delta, &domain)?)?;
            Ok((a, graph_symmetric_difference(&g1, &g2, &window)?))
        })
        .collect()
}

/// Structure checks of the graph over `replicas` environments.
pub fn graph_structure_suite(
    config: DistributionConfig,
    geom: &ScanGeometry,
    n: i32,
    samples: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<StructureReport>> {
    replicas_map(replicas, seed, |s| {
        let (env, g) = geom.graph(config, n, s)?;
        g.structure_report(&env, samples, s)
    })
}

/// [`verify_busemann_properties`] for each replica seed.
pub fn busemann_suite(
    config: DistributionConfig,
    functional: &LinearFunctional,
    alphas: &[f64],
    domain: DomainBox,
    samples: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<PropertyReport>> {
    replicas_map(replicas, seed, |s| {
        let field = WeightField::new(config, s)?;
        verify_busemann_properties(&field, functional, alphas, domain, samples, s)
    })
}

/// Sizing of the shape-residual experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPlan {
    pub functional: LinearFunctional,
    /// window half-width, also the calibration radius of `ϱ̂`
    pub window: i32,
    /// first line at lattice distance `window + gap`
    pub gap: i32,
    /// α-length averaged over
    pub n: f64,
    pub h: f64,
    pub margin: f64,
}

impl ResidualPlan {
    pub fn grid(&self) -> Result<AlphaGrid> {
        let f = self.functional;
        let start = (self.window + self.gap) as f64 * f.a.hypot(f.b) + 0.5 * (f.a.abs() + f.b.abs());
        Ok(AlphaGrid::new(self.n, self.h)?.with_start(start))
    }

    pub fn domain(&self) -> Result<DomainBox> {
        let g = self.grid()?;
        crate::mu_estimator::domain_for_lines(&self.functional, g.end(), self.margin, &[Vertex::new(self.window, self.window)])
    }
}

/// Per replica: α-averaged increments on the window, `ϱ̂` from the window
/// radius along the axes, and the annulus residuals for `radii`.
pub fn shape_residual_scan(
    config: DistributionConfig,
    plan: &ResidualPlan,
    radii: &[i32],
    replicas: usize,
    seed: u64,
) -> Result<Vec<ResidualStats>> {
    let grid = plan.grid()?;
    let domain = plan.domain()?;
    let window = DomainBox::window(plan.window);
    if radii.iter().any(|r| *r > plan.window) {
        return Err(FppError::Precondition("radii must fit in the window".into()));
    }
    replicas_map(replicas, seed, |s| {
        let field = WeightField::new(config, s)?;
        let env: Environment<f64> = Environment::new(&field, domain);
        let inc = average_increments(&env, &plan.functional, &grid, window, false)?;
        let rho = rho_from_increments(&inc)?;
        shape_residual(&inc, rho, radii)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXP: DistributionConfig = DistributionConfig::Exponential { rate: 1.0 };

    #[test]
    fn scans_are_reproducible_and_sane() {
        let geom = ScanGeometry::axis(1.0, 1.0, 2.0);
        let a = coalescence_scan(EXP, &geom, &[10], 2, 4, 3).unwrap();
        let b = coalescence_scan(EXP, &geom, &[10], 2, 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a[0].fraction.mean > 0.0 && a[0].fraction.mean <= 1.0);
        assert_eq!(a[0].exits, 0);

        let amn = amn_scan(EXP, &ScanGeometry::axis(1.0, 2.0, 3.0), 1, &[4, 8], 4, 1).unwrap();
        assert!(amn.iter().all(|p| p.failures[0] == 0 && p.failures[1] == 0));

        let cl = cluster_scan(EXP, &geom, &[10], 10_000, 4, 2).unwrap();
        assert!(cl[0].size.mean >= 1.0);

        let enc = encounter_scan(EXP, &geom, &[5], 4, 2).unwrap();
        assert!(enc[0].max_count <= enc[0].bound);
    }

    #[test]
    fn constant_weights_coalesce_only_along_rows() {
        // every vertex flows straight to the line along its row
        let geom = ScanGeometry::axis(1.0, 1.0, 2.0);
        let r = coalescence_scan(DistributionConfig::constant(1.0), &geom, &[6], 1, 2, 0).unwrap();
        // pairs sharing a row: 3 rows with 3 pairs each, out of 36 pairs
        assert!((r[0].fraction.mean - 9.0 / 36.0).abs() < 1e-12);
    }

    #[test]
    fn suites_report_no_violations_on_small_boxes() {
        let geom = ScanGeometry::axis(1.0, 1.0, 1.5);
        let reps = graph_structure_suite(EXP, &geom, 20, 20, 3, 9).unwrap();
        assert!(reps.iter().all(|r| r.violations() == 0));
        let bus = busemann_suite(EXP, &LinearFunctional::new(1.0, 0.0), &[8.0, 12.0], DomainBox::new(16).unwrap(), 10, 2, 4).unwrap();
        assert!(bus.iter().all(|r| r.hard_violations == 0));
        let sd = symmetric_difference_scan(EXP, &LinearFunctional::new(1.0, 0.0), &[10.0], 1.0, DomainBox::window(4), DomainBox::new(20).unwrap(), 1).unwrap();
        assert_eq!(sd.len(), 1);
    }

    #[test]
    fn residual_scan_runs() {
        let plan = ResidualPlan {
            functional: LinearFunctional::new(1.0, 0.0),
            window: 8,
            gap: 4,
            n: 3.0,
            h: 1.0,
            margin: 1.25,
        };
        let res = shape_residual_scan(EXP, &plan, &[4, 8], 2, 5).unwrap();
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|r| r.max.iter().all(|m| m.is_finite())));
    }
}
