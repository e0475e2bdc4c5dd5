//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong when constructing states or running
/// protocols on the discretized model.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian: max |A - A†| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary: max |U†U - 1| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("state is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("state trace is {trace:.12} instead of 1")]
    TraceNotOne { trace: f64 },

    #[error("normalization is {norm:.12} instead of 1")]
    NotNormalized { norm: f64 },

    #[error("grid size {n} is not a power of two")]
    GridSizeNotPowerOfTwo { n: usize },

    #[error("grid spacing {spacing} must be positive")]
    InvalidGridSpacing { spacing: f64 },

    #[error("system energy {energy} is not an integer multiple of the grid spacing {spacing}")]
    Commensurability { energy: f64, spacing: f64 },

    #[error("probability mass {mass:.3e} within the guard band near the grid edge (limit {limit:.1e})")]
    GuardBandViolation { mass: f64, limit: f64 },

    #[error("wave packet leaves the usable grid: centre {center}, width {width}, usable half-width {usable}")]
    PacketOffGrid { center: f64, width: f64, usable: f64 },

    #[error("packet width {sigma} is below the resolvable minimum {min}")]
    PacketTooNarrow { sigma: f64, min: f64 },

    #[error("characteristic-function denominator below {floor:.1e} on {masked} of {total} samples")]
    DegenerateDenominator { masked: usize, total: usize, floor: f64 },

    #[error("grouped quasi-distribution weights have imaginary residue {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("work value {w} outside the admissible range [{lo}, {hi}]")]
    WorkOutOfRange { w: f64, lo: f64, hi: f64 },

    #[error("control-marginal state is degenerate (|1 - 2p| = {gap:.3e}); phase-space parametrization unavailable")]
    DegenerateSigma { gap: f64 },

    #[error("argument outside the domain: {what}")]
    Domain { what: String },

    #[error("optimizer failed to reach the boundary: best {best:.6e} exceeds target {target:.6e} by more than {tol:.1e}")]
    ConvergenceFailure { best: f64, target: f64, tol: f64 },

    #[error("guard band violated at iteration step {step}")]
    GuardBandAtStep { step: usize },
}
