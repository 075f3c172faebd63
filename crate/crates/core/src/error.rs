//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    // ----- linear algebra -----
    #[error("matrix entry left {{-1,0,+1}} during exact elimination; input is not an incidence-like (totally unimodular) matrix")]
    NonUnimodular,
    #[error("matrix is singular to tolerance {0:e}")]
    Singular(f64),
    #[error("eigenvalue iteration failed to converge for row {0}")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // ----- expression / netlist parsing -----
    #[error("syntax error at line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("variable `{found}` not allowed here (expected `{allowed}`)")]
    ForbiddenVariable { allowed: String, found: String },
    #[error("expression evaluation left the real domain: {0}")]
    Domain(String),
    #[error("circuit graph is not connected")]
    DisconnectedGraph,
    #[error("element `{0}` is a self-loop (from == to)")]
    SelfLoop(String),
    #[error("duplicate element name `{0}`")]
    DuplicateName(String),
    #[error("vertex ids must be contiguous 1..n; missing vertex {0}")]
    NonContiguousVertices(usize),

    // ----- well-posedness -----
    #[error("circuit has a cycle of voltage sources (A1 violated)")]
    VoltageCycle,
    #[error("circuit has a cutset of current sources (A2 violated)")]
    CurrentCutset,
    #[error("graph is disconnected")]
    Disconnected,

    // ----- trees -----
    #[error("proposed edge set is not a spanning tree")]
    NotATree,
    #[error("tree is not normal: {0}")]
    NotNormal(String),

    // ----- structural analysis -----
    #[error("no finite transversal exists; DAE is structurally ill-posed")]
    StructurallyIllPosed,
    #[error("offsets failed validation: {0}")]
    InvalidOffsets(String),

    // ----- solver -----
    #[error("Newton iteration diverged after {iters} steps (last |f| = {last_norm:e})")]
    NewtonDiverged { iters: usize, last_norm: f64 },
    #[error("sub-Jacobian of the fixed-variable choice is singular; try another choice")]
    SingularSubJacobian,
    #[error("step size control failed at t = {0} (h below floor)")]
    StepFailure(f64),
    #[error("selected reduction columns became singular")]
    SingularSelection,

    // ----- LTI -----
    #[error("circuit has nonlinear laws; operation requires linear time-invariant elements")]
    NotLti,
    #[error("matrix pencil is irregular (det(A - lambda B) vanishes identically)")]
    IrregularPencil,
    #[error("eigenvector matrix is rank-deficient; spectrum is defective")]
    DefectiveSpectrum,

    // ----- misc -----
    #[error("random generation failed after {0} retries")]
    GenerationFailed(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
