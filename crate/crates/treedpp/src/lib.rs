//! Dyadic tree discretization of determinantal point processes on
//! continuous domains.
//!
//! The library builds nested binary partitions of an interval or square
//! window, equips them with measure-weighted Haar bases, compresses a
//! continuous determinantal kernel to a finite Hermitian matrix in that
//! basis, samples the resulting discrete process exactly, and lifts the
//! sampled tree indices back to marked point configurations on the
//! original domain. A verification harness checks the correlation and
//! orthogonality identities that make the construction consistent
//! across levels.

pub mod basis;
pub mod config;
pub mod dpp;
pub mod error;
pub mod geom;
pub mod kernel;
pub mod lift;
pub mod measure;
pub mod partition;
pub mod project;
pub mod quad;
pub mod special;
pub mod stream;
pub mod verify;

pub use basis::BasisFunction;
pub use config::RunConfig;
pub use dpp::DiscreteDpp;
pub use error::{Error, Result};
pub use geom::{CellGeometry, Point, Window};
pub use kernel::{eval_airy, eval_bessel, eval_ginibre, eval_sine, ContinuousKernel};
pub use lift::{LiftSampler, LiftedSample, PointConfiguration};
pub use measure::ReferenceMeasure;
pub use partition::{BitPath, PartitionCell, Root, TreeIndex, TreeSpace};
pub use project::{project_kernel, ProjectedKernel, ProjectionConfig};
pub use special::{airy_ai, airy_ai_prime, bessel_j, bessel_j_prime, gamma, ln_gamma};
pub use verify::VerificationReport;
