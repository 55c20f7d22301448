//! Discretized Schrödinger problem on a truncated interval of the real line.
//!
//! The numerics are generic over [`Scalar`] (`f32`/`f64`); the aliases at the
//! bottom of this file fix `f64`, which is what every tolerance is tuned for.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod duality;
pub mod error;
pub mod grid;
pub mod inequalities;
pub mod linalg;
pub mod marginals;
pub mod meanfield;
pub mod oracle;
pub mod reference;
pub mod scalar;
pub mod shorttime;
mod sinkhorn;
pub mod tcalculus;

pub use bridge::{sinkhorn_solve, solve_bridge, BridgeSolution, SchrodingerPair, SolverConfig};
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, MDensity};
pub use marginals::GaussianMixture;
pub use meanfield::{mfsp_solve, InteractionPotential, MeanFieldSolution, MfConfig};
pub use reference::{Backend, Potential, ReferenceProcess};
pub use scalar::Scalar;

pub type Grid64 = Grid<f64>;
pub type MDensity64 = MDensity<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type Reference64 = ReferenceProcess<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type Interaction64 = InteractionPotential<f64>;
pub type MfConfig64 = MfConfig<f64>;

/// Crate version, recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
