//! Reconstruction of spatially varying diffusion coefficients in 2D
//! stationary elliptic equations from boundary Cauchy data.
//!
//! The crate provides:
//! - [`mesh`]: triangulations of disks and squares with subregion partitions;
//! - [`fem`]: exact P1 assembly and direct sparse solves (real and complex);
//! - [`forward`]: the complex-Robin state, baseline Dirichlet/Neumann states,
//!   the adjoint, synthetic data generation, and the noise model;
//! - [`objectives`]: the four cost functionals and their adjoint gradients;
//! - [`inversion`]: the Sobolev-gradient descent driver with optional
//!   pick-a-point restriction to piecewise-constant coefficients.

pub mod error;
pub mod fem;
pub mod field;
pub mod forward;
pub mod inversion;
pub mod mesh;
pub mod mesh_io;
pub mod objectives;

pub use error::{Error, Result};
pub use fem::{Advection, Norms, Reaction};
pub use field::{CoefficientField, ComplexNodalField, RealNodalField};
pub use forward::{CauchyData, ScalarData, StateBundle};
pub use inversion::{
    DescentConfig, IterationRecord, RhoSchedule, RunResult, StepRule, TikhonovSign, UpdateRule,
};
pub use mesh::{BoundaryGeometry, PartitionKind, PartitionSpec, TriMesh};
pub use objectives::{CostBreakdown, ErrorMetrics, GradientDensity, Method, Weights};
