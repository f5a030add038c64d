use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fpp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpp"))
        .args(args)
        .current_dir(dir)
        .env_remove("FPP_THREADS")
        .output()
        .expect("run fpp")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV output, header lines dropped.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constant_law_shape_is_the_l1_ball() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.toml",
        "[law]\nlaw = \"uniform\"\nlo = 1.0\nhi = 1.0\n[geometry]\nn = 20\n[schedule]\nreplicas = 2\n[options]\ndirections = 8\n",
    );
    let o = fpp(&["shape", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&d.path().join("o/shape.csv"));
    assert_eq!(rows.len(), 8);
    for r in rows {
        let (x, y): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let g: f64 = r[3].parse().unwrap();
        assert_eq!(g, (x.abs() + y.abs()) / x.hypot(y));
    }
    let manifest = fs::read_to_string(d.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("schema_version = 1"));
    assert!(manifest.contains("[config]"));
}

#[test]
fn reruns_and_thread_counts_give_identical_data() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[geometry]\nn = 16\n[schedule]\nreplicas = 6\nseed = 42\n[options]\ndirections = 8\n");
    for (out, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let o = fpp(&["shape", "--config", &cfg, "--out", out, "--threads", threads], d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["shape.csv", "shape_summary.json"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(d.path().join("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[geometry]\nn = 12\n[schedule]\nreplicas = 3\nseed = 1\n[options]\ndirections = 4\n");
    assert!(fpp(&["shape", "--config", &cfg, "--out", "a"], d.path()).status.success());
    assert!(fpp(&["shape", "--config", &cfg, "--out", "b", "--seed", "2"], d.path()).status.success());
    let a = fs::read_to_string(d.path().join("a/shape.csv")).unwrap();
    let b = fs::read_to_string(d.path().join("b/shape.csv")).unwrap();
    assert!(b.contains("# seed=2"));
    assert_ne!(a, b);
}

#[test]
fn busemann_verify_reports_no_hard_violations() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[geometry]\nn = 30\n[schedule]\nreplicas = 2\n[options]\nsamples = 20\n");
    let o = fpp(&["busemann-verify", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(d.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("hard_violations = 0"), "{manifest}");
    let doc = json(&d.path().join("o/busemann.json"));
    assert_eq!(doc["data"]["per_replica"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_oracle_passes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[verify]\nsuites = [\"oracle\", \"closed-forms\"]\n[schedule]\nreplicas = 5\n");
    let o = fpp(&["verify", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = json(&d.path().join("o/verify.json"));
    assert_eq!(doc["data"]["passed"], true);
}

#[test]
fn corrupted_potential_fails_with_the_invariant_named() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.toml",
        "[verify]\nsuites = [\"graph\"]\ncorrupt_dist = { vertex = [-3, 4], delta = 0.75 }\n[schedule]\nreplicas = 2\n",
    );
    let o = fpp(&["verify", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("FAILED invariant potential-optimality"), "{err}");
    let doc = json(&d.path().join("o/verify.json"));
    assert_eq!(doc["data"]["passed"], false);
    let failed: Vec<&str> = doc["data"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["invariant"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"potential-optimality"));
}

#[test]
fn config_errors_carry_position_and_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[schedule]\nreplicas = 4\nsed = 3\n");
    let o = fpp(&["shape", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("sed"), "{err}");

    let cfg = write(d.path(), "d.toml", "experiment = \"shape\"\n");
    let o = fpp(&["amn-scan", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment"));
}

#[test]
fn margin_violation_suggests_a_size() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[geometry]\nwindow = 8\n[schedule]\nalpha_start = 5.0\nns = [4.0]\nreplicas = 2\n");
    let o = fpp(&["mu-average", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("suggestion") && err.contains("alpha_start"), "{err}");
}

#[test]
fn amn_records_have_four_conditions() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[schedule]\nns = [4.0, 8.0]\nreplicas = 3\n[options]\nm = 1\n");
    let o = fpp(&["amn-scan", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = json(&d.path().join("o/amn.json"));
    let recs = doc["data"].as_array().unwrap();
    assert_eq!(recs.len(), 6);
    for k in ["out_degree_ok", "no_circuit_ok", "coalesce_ok", "no_boundary_backflow_ok", "seed", "alpha"] {
        assert!(recs[0].get(k).is_some(), "{k}");
    }
    assert_eq!(csv_rows(&d.path().join("o/amn.csv")).len(), 2);
}

#[test]
fn coalescence_with_forest_export() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.toml",
        "[geometry]\nwindow = 5\n[schedule]\nns = [6.0, 12.0]\nreplicas = 3\n[options]\npair_box = 2\nexport_edges = true\ncluster_ns = [6]\nencounter_ms = [4]\n",
    );
    let o = fpp(&["graph-coalescence", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&d.path().join("o/coalescence.csv")).len(), 2);
    assert!(!csv_rows(&d.path().join("o/forest.csv")).is_empty());
    assert_eq!(csv_rows(&d.path().join("o/clusters.csv")).len(), 1);
    assert_eq!(csv_rows(&d.path().join("o/encounters.csv")).len(), 1);
}

#[test]
fn mean_identity_with_constant_weights() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "c.toml",
        "[law]\nlaw = \"uniform\"\nlo = 1.0\nhi = 1.0\n[geometry]\nfunctional = [1.0, 0.0]\n[schedule]\nns = [6.0]\nreplicas = 2\n",
    );
    let o = fpp(&["mean-identity", "--config", &cfg, "--out", "o"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&d.path().join("o/identity.csv"));
    assert_eq!(rows[0][4], "1.0");
    assert_eq!(rows[0][6], "1.0");
}

#[test]
fn mu_average_and_rho_shape_write_their_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.toml", "[geometry]\nwindow = 6\nfunctional = [0.42, 0.0]\n[schedule]\nns = [4.0]\nreplicas = 2\n");
    let o = fpp(&["mu-average", "--config", &cfg, "--out", "mu"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&d.path().join("mu/fbar_000.csv")).len(), 13 * 13);
    assert_eq!(csv_rows(&d.path().join("mu/residuals.csv")).len(), 2 * 3);

    let cfg = write(
        d.path(),
        "r.toml",
        "[geometry]\nwindow = 6\nfunctional = [0.42, 0.0]\n[schedule]\nns = [4.0]\nreplicas = 3\n[options]\nshape_n = 16\nshape_replicas = 3\ndirections = 8\n",
    );
    let o = fpp(&["rho-shape", "--config", &cfg, "--out", "rho"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = json(&d.path().join("rho/rho.json"));
    assert!(doc["data"]["rho"]["rho"].is_array());
    assert!(doc["meta"]["functional"].is_array());
}
