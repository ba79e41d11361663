use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation at (or numerically at) a nodal point of the wavefunction.
    #[error("too close to a nodal point: reduced density {density:e} <= floor {floor:e}")]
    NodeProximity { density: f64, floor: f64 },

    #[error("nodal velocity unavailable: {0}")]
    TrackUnavailable(String),

    #[error("step size underflow at t={t} (h={h:e}, min density seen {min_g_seen:e}, last state {x:?})")]
    StepUnderflow {
        t: f64,
        h: f64,
        x: [f64; 3],
        min_g_seen: f64,
    },

    #[error("maximum number of steps ({steps}) reached at t={t}")]
    MaxSteps { steps: u64, t: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("no integral surface for C={c} (minimum C0={c0})")]
    NoSurface { c: f64, c0: f64 },

    #[error("point is off the surface (residual {residual:e})")]
    OffSurface { residual: f64 },

    #[error("coordinate {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("indeterminate: {0}")]
    Indeterminate(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("lost track of the nodal point at t={t}")]
    LostTrack { t: f64 },

    #[error("Newton iteration diverged at t={t}")]
    NewtonDiverged { t: f64 },

    #[error("time span mismatch: {0}")]
    SpanMismatch(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate fixed point (eigenvalue product {product:e})")]
    Degenerate { product: f64 },

    #[error("small divisor in {what}: {value:e}")]
    SmallDivisor { what: String, value: f64 },

    #[error("secular term at frequency combination {harmonics:?}")]
    SecularTerm { harmonics: [i32; 2] },

    #[error("cannot eliminate the cosine variables (determinant {det:e})")]
    EliminationFailed { det: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to invalid inputs).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidInput(_) | Error::Unsupported(_))
    }
}
