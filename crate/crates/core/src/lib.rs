//! Polaron transport in a one-dimensional molecular chain with simultaneous
//! diagonal and off-diagonal exciton–phonon coupling.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`solver`] finds the self-consistent transformation coefficients A_k^q.
//! 2. [`band`] builds the renormalized polaron band and group velocities.
//! 3. [`correlation`] evaluates the thermal correlators of the residual
//!    interaction, ⟨V V(t)⟩.
//! 4. [`transport`] integrates those correlators into scattering and hopping
//!    rates, the diffusion coefficient and the mobility.
//!
//! [`fock`] is an exact-diagonalization oracle for small lattices that checks
//! the θ-operator averages against a truncated phonon Fock space.

pub mod band;
pub mod correlation;
pub mod error;
pub mod expm;
pub mod fock;
pub mod lattice;
pub mod propagators;
pub mod series;
pub mod solver;
pub mod transport;

pub use band::{group_velocity, renormalized_transfer, thermal_avg, PolaronBand};
pub use correlation::{CorrelationContext, CorrelationEngine, EngineReport, EngineSettings, TupleComponents};
pub use error::{PolaronError, Result};
pub use expm::matrix_exp;
pub use num_complex::Complex64;
pub use fock::{constant_field_report, field_report, FockOracle, OracleQuantity, OracleReport, TruncatedSpace};
pub use lattice::{bare_band, bose_factor, coupling, make_grid, BandConvention, ModelParams, MomentumGrid};
pub use propagators::{p_factor, PhononPropagators};
pub use solver::{
    build_e, extract_scaling, solve, solve_with, theta_avg, update_a, AMatrix, ScalingFields, Solution,
    SolverReport, SolverSettings, TriadicE,
};
pub use transport::{
    diffusion, hopping_rate, scattering_rate, sweep, w_rate, HopSum, Quadrature, RateNorm, SweepRecord, TransportPoint,
    TransportSettings, WTensor,
};
