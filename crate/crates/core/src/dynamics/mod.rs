//! Real-time Hamiltonian flow of a classical or fitted quantum action.

pub mod integrator;
pub mod lyapunov;
pub mod section;
pub mod shell;

pub use integrator::{integrate, Yoshida4, ESCAPE_BOUND};
pub use lyapunov::{
    lyapunov_finite_time, lyapunov_two_trajectory, run_ensemble, EnsembleFailure, EnsembleSpec, LyapunovEnsemble,
    LyapunovOptions, LyapunovRecord, SystemKind, TracePoint,
};
pub use section::{poincare_section, SectionAxis, SectionPoint, SectionResult, SectionSpec};
pub use shell::{sample_energy_shell, sample_rng, ShellSampler};
