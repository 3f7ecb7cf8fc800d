//! Quantum action and classical/quantum chaos in 2-D polynomial potentials.
//!
//! - [`schrodinger`]: imaginary-time propagation, ground states and transition amplitudes.
//! - [`qaction`]: stationary Euclidean paths, the quantum-action fit and its consistency checks.
//! - [`dynamics`]: real-time flow, Poincaré sections and Lyapunov exponents.
//! - [`chaostats`]: histograms, chaotic fractions and fits over Lyapunov ensembles.

pub mod chaostats;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod lsq;
pub mod model;
pub mod qaction;
pub mod schrodinger;

pub use error::{Error, Result};
pub use grid::{Grid2D, ScalarField2D};
pub use model::{ActionParams, PhaseState, PotentialCoeffs, COEFF_NAMES};
pub use chaostats::{ChaosSummary, LambdaHistogram};
pub use dynamics::{LyapunovEnsemble, LyapunovRecord, SystemKind};
pub use schrodinger::TransitionRecord;
