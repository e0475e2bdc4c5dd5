//! Numerical toolkit for work extraction with an explicit quantum work
//! reservoir (the "weight").
//!
//! The library models a finite-dimensional system coupled to a
//! continuous-spectrum energy storage discretized on a commensurate grid.
//! Energy-conserving, translation-invariant protocols decompose as
//! `U = S† V_S S`, where `S` shifts the weight by the system energy and
//! `V_S` acts on the system alone. On that model the crate computes
//!
//! * the three work distributions (work-operator, two-point measurement,
//!   and the convolution quasi-distribution) with moments and cumulants,
//! * closed forms for the weight's energy gain and variance change,
//!   cross-checked against brute-force composite evolution,
//! * fluctuation-decoherence bounds for the weight's energy dispersion,
//! * the exactly solved qubit work-variance phase space.
//!
//! Units: ħ = 1 and the reference gap ω = 1 throughout; energies and times
//! are dimensionless multiples of ω and 1/ω.

pub mod bounds;
pub mod error;
pub mod hilbert;
pub mod protocol;
pub mod qubit_phase;
pub mod sampling;
pub mod verify;
pub mod weight;
pub mod workdist;

pub use bounds::BoundReport;
pub use error::{Error, Result};
pub use hilbert::{SystemObservable, SystemState, SystemUnitary};
pub use protocol::{CompositeState, OracleStats, ProtocolContext, ProtocolReport};
pub use qubit_phase::{PhaseSpacePoint, QubitPhaseSpace};
pub use weight::{EnergyGrid, WeightState, WeightWavefunction, WignerFunction};
pub use workdist::{CharacteristicFunction, DistributionKind, WorkDistribution};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
