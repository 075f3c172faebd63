//! Circuit netlists to port-Hamiltonian DAEs: normal-tree construction,
//! signature-method structural analysis, consistent initialization, index-1
//! BDF integration, reduction to an explicit ODE, and LTI eigenanalysis.
//!
//! The pipeline, end to end:
//!
//! 1. [`netlist`] parses a circuit description (with a small expression
//!    language for sources and one-variable nonlinear laws).
//! 2. [`graph`] builds the incidence matrix, checks well-posedness, and
//!    constructs a normal spanning tree together with its Kron matrix `F`.
//! 3. [`model`] attaches constitutive laws: storage gradients/Hessians, the
//!    mixed dissipator form, and the Hamiltonian.
//! 4. [`dae`] assembles the residual of the circuit DAE in control
//!    input-output form (Model 2 by default, Model 1 for implicit
//!    dissipators).
//! 5. [`sigma`] runs the signature-method structural analysis: signature
//!    matrix, offsets, system Jacobian, degrees of freedom, structural index.
//! 6. [`solver`] finds consistent initial conditions, integrates with
//!    BDF1/BDF2, audits the energy balance, and can reduce the DAE to an
//!    explicit ODE in the free states.
//! 7. [`lti`] assembles the matrix pencil of a linear time-invariant circuit
//!    and computes its finite eigenvalues.
//!
//! The `phcirc` binary in this crate exposes the pipeline as CLI subcommands;
//! see the repository README.

// indexed loops mirror the block-matrix formulas; iterator rewrites obscure them
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dae;
pub mod error;
pub mod expr;
pub mod graph;
pub mod linalg;
pub mod lti;
pub mod model;
pub mod netlist;
pub mod sigma;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
