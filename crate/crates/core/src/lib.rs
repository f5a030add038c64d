//! First-passage percolation on Z² with i.i.d. edge weights.
//!
//! The crate computes passage times and geodesics to vertex sets and to
//! discretised lines, Busemann functions and their increment configurations,
//! the directed geodesic graph of a line, α-averaged increments with the
//! reconstructed Busemann function `f`, and the Monte Carlo scans that check
//! the structural properties of these objects at finite scale.
//!
//! Passage-time code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the `f64` instantiation used by the experiment layer.

pub mod busemann;
pub mod error;
pub mod geodesic_graph;
pub mod lattice;
pub mod line_geometry;
pub mod mu_estimator;
pub mod passage;
pub mod scalar;
pub mod scans;
pub mod stats;
pub mod weight_field;

pub use error::{FppError, Result};
pub use lattice::{Axis, Direction, DomainBox, EdgeId, Vertex};
pub use line_geometry::{LinearFunctional, ShapeEstimate};
pub use mu_estimator::{AlphaGrid, IdentityOptions, IdentityReport, RhoEstimate};
pub use passage::{Environment, GeodesicPath, PassageResult};
pub use scalar::Scalar;
pub use weight_field::{create_field, DistributionConfig, WeightField};

/// Default real type for passage times.
pub type Real = f64;

pub type Environment64 = passage::Environment<Real>;
pub type PassageResult64 = passage::PassageResult<Real>;
pub type GeodesicPath64 = passage::GeodesicPath<Real>;
pub type GeodesicGraph64 = geodesic_graph::GeodesicGraph<Real>;
pub type IncrementConfiguration64 = busemann::IncrementConfiguration<Real>;
