//! Effective (quantum) action: stationary Euclidean paths, the global fit to transition
//! amplitudes, consistency conditions and the Riccati/SUSY relations at large time.

pub mod bvp;
pub mod conditions;
pub mod fit;
pub mod riccati;
pub mod susy;

pub use bvp::{BvpSolver, EuclideanTrajectory, ExtrapolatedPath, TrajectorySample};
pub use conditions::{stencil_points, verify_energy_balance, verify_momentum_condition, ConditionReport};
pub use fit::{fit_error, fit_quantum_action, reference_log_norm, FitDataset, FitOptions, FitResult, FitUncertainty, SamplingBox};
pub use riccati::{fitted_quantum_potential, relative_rms_difference, riccati_quantum_potential, riccati_residual, MaskedField};
pub use susy::{ground_state_1d, susy_partner_1d, Samples1D, SusyPartner};
