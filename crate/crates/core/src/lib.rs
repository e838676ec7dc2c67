//! Solver toolkit for box-constrained optimal control with an L1 sparsity
//! penalty on the control.
//!
//! The toolkit discretizes control problems of the form
//!
//! ```text
//!     min  1/2 ||y - y_d||^2 + alpha/2 ||u||^2 + beta ||u||_1
//!     s.t. L y = Mbar u + f,    a <= u <= b,
//! ```
//!
//! and solves the nonsmooth first-order optimality system with a globalized
//! inexact semismooth Newton method. Each Newton step requires one
//! saddle-point solve; the [`linsys`] module offers an augmented symmetric
//! formulation and a condensed two-field formulation, both handled by the
//! in-house Krylov solvers in [`krylov`] together with the active-set
//! Schur-complement preconditioners in [`precond`]. The [`spectral`] module
//! provides dense eigenvalue diagnostics that certify the preconditioner
//! clustering bounds on small instances.
//!
//! Module map:
//!
//! * [`sparse`] - CSR matrices, sparse LU/LDL^T factorization, Matrix Market I/O
//! * [`problems`] - finite-difference Poisson and convection-diffusion instances
//! * [`optimality`] - residual, merit function, and active-set classification
//! * [`linsys`] - Newton saddle-point systems (full/augmented/reduced)
//! * [`krylov`] - preconditioned GMRES and MINRES with true-residual stopping
//! * [`precond`] - block-diagonal and indefinite Schur-complement preconditioners
//! * [`newton`] - the globalized inexact Newton driver and its run reports
//! * [`spectral`] - dense eigenvalue diagnostics for the preconditioned systems

pub mod dense;
pub mod error;
pub mod krylov;
pub mod linsys;
pub mod newton;
pub mod optimality;
pub mod precond;
pub mod problems;
pub mod sparse;
pub mod spectral;
pub(crate) mod vecops;

pub use error::{Result, SolverError};
pub use krylov::{gmres, minres, KrylovStats};
pub use linsys::{
    assemble_augmented, assemble_full, assemble_reduced, residual_equivalence_check, Formulation,
    SaddleSystem, StepVector,
};
pub use newton::{
    feasible_start, solve, solve_with_observer, sparsity_percent, Forcing, IterationContext,
    IterationRecord, NewtonOptions, NewtonReport, PrecondChoice,
};
pub use optimality::{ActiveSetPartition, IterateState, ResidualBlocks, SetLabel};
pub use precond::{build_schur_approx, PrecondKind, Preconditioner, SchurApprox};
pub use problems::{
    make_convection_diffusion, make_convection_diffusion_with_bounds, make_poisson,
    make_poisson_with_bounds, CDConfig, GridSpec, ProblemInstance, Wind,
};
pub use sparse::{FactorKind, Factorization, SparseMatrix};
pub use spectral::{compute_zeta, eig_pencil_s, eig_preconditioned, BoundReport};

