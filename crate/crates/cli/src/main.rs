//! `fpp`: experiment runner for first-passage percolation on Z².
//!
//! Exit codes: 0 success, 1 a hard invariant failed, 2 configuration or
//! sizing error, 3 runtime error.

mod config;
mod experiments;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use output::{Manifest, Meta, OutputDir};

#[derive(Parser)]
#[command(name = "fpp", version, about = "First-passage percolation experiments on Z^2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides schedule.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, env = "FPP_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides `out` in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Radial estimate of the limit shape
    Shape(Common),
    /// Busemann-function property suite
    BusemannVerify(Common),
    /// Pair-coalescence fractions, optionally clusters, encounters and a forest export
    GraphCoalescence(Common),
    /// A_{m,n} cylinder-event scan
    AmnScan(Common),
    /// alpha-averaged increments, reconstructed f and residuals
    MuAverage(Common),
    /// rho estimate and supporting-line check
    RhoShape(Common),
    /// Finite-n mean identity
    MeanIdentity(Common),
    /// Hard-invariant suites; exit 1 on any failure
    Verify(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Shape(c) => ("shape", c),
            Command::BusemannVerify(c) => ("busemann-verify", c),
            Command::GraphCoalescence(c) => ("graph-coalescence", c),
            Command::AmnScan(c) => ("amn-scan", c),
            Command::MuAverage(c) => ("mu-average", c),
            Command::RhoShape(c) => ("rho-shape", c),
            Command::MeanIdentity(c) => ("mean-identity", c),
            Command::Verify(c) => ("verify", c),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = cli.command.parts();
    match run(name, common) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fpp {name}: {e}");
            if e.is::<ConfigError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(name: &str, common: &Common) -> output::IoResult<ExitCode> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.schedule.seed = Some(s);
    }
    cfg.validate(name)?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Box::new(ConfigError("--threads: must be >= 1".into())));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("fpp-out/{name}")));
    let mut out = OutputDir::create(&out_dir)?;
    let start = Instant::now();

    let summary = match name {
        "shape" => experiments::shape(&cfg, &mut out)?,
        "busemann-verify" => experiments::busemann_verify(&cfg, &mut out)?,
        "graph-coalescence" => experiments::graph_coalescence(&cfg, &mut out)?,
        "amn-scan" => experiments::amn_scan(&cfg, &mut out)?,
        "mu-average" => experiments::mu_average(&cfg, &mut out)?,
        "rho-shape" => experiments::rho_shape(&cfg, &mut out)?,
        "mean-identity" => experiments::mean_identity(&cfg, &mut out)?,
        "verify" => {
            let report = verify::run(&cfg)?;
            let meta = Meta {
                experiment: "verify".into(),
                law: experiments::law_label(&cfg.law()),
                seed: cfg.seed(),
                replicas: 0,
                ..Default::default()
            };
            out.write_json("verify.json", &meta, &report)?;
            let failed: Vec<_> = report.failures().collect();
            for c in &failed {
                eprintln!("FAILED invariant {} ({}): {}", c.invariant, c.suite, c.detail);
            }
            experiments::Summary {
                boundary_flags: 0,
                extra: vec![("checks".into(), format!("{} run, {} failed", report.checks.len(), failed.len()))],
                failure: (!failed.is_empty()).then(|| {
                    failed.iter().map(|c| c.invariant.as_str()).collect::<Vec<_>>().join(", ")
                }),
            }
        }
        _ => unreachable!("clap restricts subcommands"),
    };

    let mut extra = summary.extra;
    if let Some(f) = &summary.failure {
        extra.push(("failed".into(), f.clone()));
    }
    out.write_manifest(&Manifest {
        experiment: name.into(),
        seed: cfg.seed(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        boundary_flags: summary.boundary_flags,
        extra,
        config_echo: toml::to_string(&cfg)?,
    })?;
    Ok(match summary.failure {
        Some(f) => {
            eprintln!("fpp {name}: failed: {f}");
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    })
}
