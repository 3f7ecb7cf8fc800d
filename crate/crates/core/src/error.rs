use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("field magnitude left the representable range ({0}); renormalize and track the log scale")]
    OutOfRange(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ground-state iteration produced a sign-changing state; check grid extent and time step")]
    SignChange,

    #[error("point ({x}, {y}) lies outside the grid interior")]
    OutsideGrid { x: f64, y: f64 },

    #[error("non-positive amplitude {amplitude:e} for pair {index}")]
    NonPositiveAmplitude { index: usize, amplitude: f64 },

    #[error("boundary value problem failed for pair {index}: {source}")]
    PairFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory escaped the bounding box |x|,|y| <= {bound} at t = {t}")]
    Escaped { bound: f64, t: f64 },

    #[error("energy-shell rejection sampling failed after {0} attempts")]
    SamplingFailed(usize),

    #[error("tangent vector left the representable range between renormalizations; reduce renorm_every")]
    TangentOverflow,

    #[error("every node of the evaluation region is masked")]
    AllMasked,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}
