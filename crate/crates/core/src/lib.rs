//! Potential theory of one-dimensional subordinate Brownian motion killed
//! outside intervals and at the origin.
//!
//! The crate evaluates the Laplace exponent and its Lévy density, the jump
//! kernel, the compensated resolvent kernel `h`, free Green functions of the
//! killed and reflected processes, discretizes the killed generators on
//! intervals, and cross-checks everything by path simulation.

pub mod bernstein;
pub mod error;
pub mod interval_solver;
pub mod kernels;
pub mod montecarlo;
pub mod quadrature;
pub mod verify;

pub use bernstein::{PhiSpec, ScalingReport, ScalingTarget};
pub use error::{Error, Result};
pub use interval_solver::{
    BoundaryData, GeneratorMatrix, GreenMatrix, Grid, ProcessKind, PoissonTable,
};
pub use kernels::KernelSet;
pub use montecarlo::{ExitSample, ExitSide, ExitStats, PathConfig};
pub use quadrature::{QuadResult, QuadSpec};
pub use verify::{CheckReport, CheckResult, RunConfig};
