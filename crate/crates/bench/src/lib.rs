//! Shared fixtures for the criterion benchmarks.

use qchaos_core::{ActionParams, Grid2D, PhaseState, ScalarField2D};

/// The strongly coupled classical action used throughout.
pub fn action() -> ActionParams {
    ActionParams::classical(0.25)
}

/// Square grid with `n` nodes per side on `[-5, 5]²`.
pub fn grid(n: usize) -> Grid2D {
    Grid2D::square(5.0, n).unwrap_or_else(|e| panic!("{e}"))
}

/// Normalized Gaussian packet centred off-axis.
pub fn packet(grid: Grid2D) -> ScalarField2D {
    ScalarField2D::from_fn(grid, |x, y| (-((x - 0.4).powi(2) + (y + 0.3).powi(2))).exp())
}

/// A point on the `E = 2` shell inside the chaotic layer.
pub fn chaotic_state(action: &ActionParams) -> PhaseState {
    let (x, y, px) = (0.4, -0.9, 0.6);
    let py = (2.0 * action.mass * (2.0 - action.potential(x, y)) - px * px).sqrt();
    PhaseState::new(x, y, px, py)
}
