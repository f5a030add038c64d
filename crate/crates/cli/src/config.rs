//! Experiment configuration read from TOML.
//!
//! Every table is optional; missing values fall back to per-experiment
//! defaults, and the resolved values are echoed into the manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use fpp_core::{DistributionConfig, LinearFunctional, Vertex};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// If present, must name the subcommand being run.
    pub experiment: Option<String>,
    pub law: Option<DistributionConfig>,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub options: Options,
    pub verify: Option<VerifyConfig>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// scale: shape radius, box half-width or graph scale depending on the experiment
    pub n: Option<i32>,
    pub window: Option<i32>,
    pub theta: Option<f64>,
    /// `[a, b]` for `x ↦ a·x1 + b·x2`
    pub functional: Option<[f64; 2]>,
    pub alpha_per_n: Option<f64>,
    pub box_at: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub ns: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub alpha_start: Option<f64>,
    pub h: Option<f64>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub directions: Option<usize>,
    pub samples: Option<usize>,
    pub pair_box: Option<i32>,
    pub m: Option<i32>,
    pub transverse: Option<i32>,
    pub radii: Option<Vec<i32>>,
    pub x: Option<[i32; 2]>,
    pub shape_n: Option<usize>,
    pub shape_replicas: Option<usize>,
    pub export_edges: Option<bool>,
    pub cluster_ns: Option<Vec<i32>>,
    pub encounter_ms: Option<Vec<i32>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub suites: Option<Vec<String>>,
    /// Perturbs one entry of the potential before the graph suite builds its graph.
    pub corrupt_dist: Option<CorruptDist>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptDist {
    pub vertex: [i32; 2],
    pub delta: f64,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_err(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// toml reports the line, column and offending key of syntax and
    /// schema errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn law(&self) -> DistributionConfig {
        self.law.unwrap_or(DistributionConfig::exponential(1.0))
    }

    pub fn seed(&self) -> u64 {
        self.schedule.seed.unwrap_or(1)
    }

    pub fn replicas(&self, default: usize) -> usize {
        self.schedule.replicas.unwrap_or(default)
    }

    pub fn functional(&self) -> Option<LinearFunctional> {
        self.geometry.functional.map(|[a, b]| LinearFunctional::new(a, b))
    }

    pub fn x(&self) -> Vertex {
        let [a, b] = self.options.x.unwrap_or([1, 0]);
        Vertex::new(a, b)
    }

    /// Checks that do not depend on the experiment kind.
    pub fn validate(&self, command: &str) -> Result<(), ConfigError> {
        if let Some(e) = &self.experiment {
            if e != command {
                return Err(field_err("experiment", format!("config is for `{e}`, not `{command}`")));
            }
        }
        self.law().validate().map_err(|e| field_err("law", e))?;
        if let Some(r) = self.schedule.replicas {
            if r < 2 {
                return Err(field_err("schedule.replicas", "must be >= 2"));
            }
        }
        if let Some(n) = self.geometry.n {
            if n < 1 {
                return Err(field_err("geometry.n", "must be >= 1"));
            }
        }
        if let Some(w) = self.geometry.window {
            if w < 1 {
                return Err(field_err("geometry.window", "must be >= 1"));
            }
        }
        if let Some([a, b]) = self.geometry.functional {
            if !(a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
                return Err(field_err("geometry.functional", "must be finite and nonzero"));
            }
        }
        if let Some(h) = self.schedule.h {
            if !(h > 0.0) {
                return Err(field_err("schedule.h", "must be > 0"));
            }
        }
        if let Some(m) = self.geometry.margin {
            if !(m >= 1.0) {
                return Err(field_err("geometry.margin", "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let c = ExperimentConfig::parse(
            r#"
            experiment = "shape"
            [law]
            law = "exponential"
            rate = 2.0
            [geometry]
            n = 50
            functional = [0.4, 0.0]
            [schedule]
            replicas = 4
            seed = 9
            "#,
        )
        .unwrap();
        assert_eq!(c.law(), DistributionConfig::exponential(2.0));
        assert_eq!(c.seed(), 9);
        assert!(c.validate("shape").is_ok());
        assert!(c.validate("amn-scan").is_err());
    }

    #[test]
    fn unknown_fields_are_reported_with_position() {
        let e = ExperimentConfig::parse("[schedule]\nreplica = 3\n").unwrap_err();
        assert!(e.0.contains("replica"), "{e}");
        assert!(e.0.contains("line 2"), "{e}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let c = ExperimentConfig::parse("[law]\nlaw = \"uniform\"\nlo = 2.0\nhi = 1.0\n").unwrap();
        assert!(c.validate("shape").unwrap_err().0.starts_with("law"));
        let c = ExperimentConfig::parse("[schedule]\nreplicas = 1\n").unwrap();
        assert!(c.validate("shape").unwrap_err().0.starts_with("schedule.replicas"));
    }
}
