//! Cross-module properties on random environments.

use fpp_core::busemann::{busemann_from, increment_config, Increments};
use fpp_core::geodesic_graph::build_graph;
use fpp_core::mu_estimator::reconstruct_f;
use fpp_core::passage::{brute_force_tau, discretize_line, sweep, tau_point};
use fpp_core::scans::{coalescence_scan, ScanGeometry};
use fpp_core::{DistributionConfig, DomainBox, Environment, LinearFunctional, Vertex, WeightField};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = DistributionConfig> {
    prop_oneof![
        (0.5f64..3.0).prop_map(DistributionConfig::exponential),
        (0.0f64..1.0, 1.0f64..3.0).prop_map(|(lo, w)| DistributionConfig::uniform(lo, lo + w)),
    ]
}

fn env(law: DistributionConfig, seed: u64, n: i32) -> Environment<f64> {
    Environment::new(&WeightField::new(law, seed).unwrap(), DomainBox::new(n).unwrap())
}

fn vertex(n: i32) -> impl Strategy<Value = Vertex> {
    (-n..=n, -n..=n).prop_map(|(x, y)| Vertex::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sweep_matches_the_oracle(law in law(), seed in any::<u64>(), x in vertex(2), y in vertex(2)) {
        let e = env(law, seed, 2);
        prop_assert_eq!(tau_point(&e, x, y).unwrap().0.to_bits(), brute_force_tau(&e, x, y).unwrap().to_bits());
    }

    #[test]
    fn passage_time_is_a_metric(law in law(), seed in any::<u64>(), x in vertex(6), y in vertex(6), z in vertex(6)) {
        let e = env(law, seed, 8);
        let t = |a, b| tau_point(&e, a, b).unwrap().0;
        prop_assert_eq!(t(x, y), t(y, x));
        prop_assert!(t(x, z) <= t(x, y) + t(y, z) + 1e-12);
    }

    #[test]
    fn busemann_is_additive_and_bounded(seed in any::<u64>(), x in vertex(5), y in vertex(5), z in vertex(5), alpha in 9.0f64..14.0) {
        let e = env(DistributionConfig::exponential(1.0), seed, 16);
        let s = discretize_line(&LinearFunctional::new(1.0, 0.0), alpha, e.domain()).unwrap();
        let pot = sweep(&e, &s, &[]).unwrap();
        let b = |u, v| busemann_from(&pot, u, v).unwrap();
        prop_assert!((b(x, y) + b(y, z) - b(x, z)).abs() <= 1e-9 * pot.dist(x).unwrap().max(1.0));
        prop_assert!(b(x, y).abs() <= tau_point(&e, x, y).unwrap().0 + 1e-12);
    }

    #[test]
    fn forward_paths_are_geodesic_suffixes(seed in any::<u64>(), x in vertex(8), y in vertex(8)) {
        let e = env(DistributionConfig::exponential(1.0), seed, 12);
        let s = discretize_line(&LinearFunctional::new(1.0, 0.0), 10.0, e.domain()).unwrap();
        let g = build_graph(&e, &s).unwrap();
        let px = g.forward_path(x).unwrap();
        prop_assert_eq!(px.total_time, g.dist(x).unwrap());
        prop_assert!(g.is_target(px.end()));
        let mid = px.vertices[px.vertices.len() / 2];
        prop_assert_eq!(&g.forward_path(mid).unwrap().vertices[..], &px.vertices[px.vertices.len() / 2..]);
        let a = g.coalescence(x, y).unwrap();
        let b = g.coalescence(y, x).unwrap();
        prop_assert_eq!(a.merged, b.merged);
        prop_assert_eq!(a.merge_vertex, b.merge_vertex);
    }

    #[test]
    fn single_line_reconstruction_is_the_busemann_function(seed in any::<u64>(), x in vertex(6)) {
        let e = env(DistributionConfig::exponential(1.0), seed, 20);
        let g = LinearFunctional::new(1.0, 0.0);
        let inc = increment_config(&e, &g, 12.5, DomainBox::window(6)).unwrap();
        let s = discretize_line(&g, 12.5, e.domain()).unwrap();
        let pot = sweep(&e, &s, &[]).unwrap();
        let f = reconstruct_f(&inc, Vertex::ORIGIN, x).unwrap();
        let b = busemann_from(&pot, Vertex::ORIGIN, x).unwrap();
        prop_assert!((f - b).abs() <= 1e-9 * pot.dist(Vertex::ORIGIN).unwrap().max(1.0));
        prop_assert!(inc.max_abs_curl() <= 1e-12);
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let geom = ScanGeometry::axis(1.0, 1.0, 2.0);
    let law = DistributionConfig::exponential(1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| coalescence_scan(law, &geom, &[8, 12], 2, 7, 99).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn f32_and_f64_sweeps_agree_to_single_precision() {
    let field = WeightField::new(DistributionConfig::exponential(1.0), 17).unwrap();
    let d = DomainBox::new(10).unwrap();
    let e32: Environment<f32> = Environment::new(&field, d);
    let e64: Environment<f64> = Environment::new(&field, d);
    let p32 = sweep(&e32, &[Vertex::ORIGIN], &[]).unwrap();
    let p64 = sweep(&e64, &[Vertex::ORIGIN], &[]).unwrap();
    for v in d.vertices() {
        let (a, b) = (p32.dist(v).unwrap() as f64, p64.dist(v).unwrap());
        assert!((a - b).abs() <= 1e-5 * b.max(1.0), "{v}: {a} vs {b}");
    }
}
