//! Single-qubit dynamics in a non-Markovian Ohmic reservoir under continuous
//! weak σz measurement and Hamiltonian feedback.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`] – adaptive Gauss–Kronrod integration used by the kernels.
//! * [`kernels`] – spectral density, reservoir kernels and the time-dependent
//!   diffusion/damping rates Δ(t), γ(t), tabulated in a [`CoefficientTable`].
//! * [`qubit`] – Bloch/matrix state representations, superoperators and the
//!   stochastic Bloch drift/diffusion.
//! * [`sde`] – seeded Euler–Maruyama trajectories with measurement records.
//! * [`control`] – forward–backward sweep for the optimality system and the
//!   resulting state-feedback policy.
//! * [`ensemble`] – reproducible parallel ensembles and the figure presets.

pub mod control;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod qubit;
pub mod sde;

pub use control::{
    forward_backward_sweep, gradient_check, ControlTrajectory, CostateTrajectory, FeedbackPolicy,
    OCConfig, OCResult,
};
pub use ensemble::{compare_modes, run_ensemble, temperature_scan, EnsembleStats, ModeComparison};
pub use error::{Error, Result};
pub use kernels::{build_coefficient_table, CoefficientTable, ReservoirParams, TableConfig};
pub use qubit::{BlochState, ControlInput, DensityMatrix2, Mat2, ModeFlag};
pub use sde::{simulate, ClampPolicy, ControlLaw, IntegratorConfig, TrajectoryRecord, ZeroControl};
