use thiserror::Error;

/// Failures reported by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("equilibrium is degenerate at alpha = {alpha} (cluster state merges with the in-phase state)")]
    DegenerateEquilibrium { alpha: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("spectrum does not split 2/2 into stable and unstable parts (real parts {real_parts:?})")]
    SpectralSplitFailure { real_parts: Vec<f64> },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("converged orbit has eta1 drop {drop:.6}, expected {expected:.6}")]
    WrongWindingNumber { drop: f64, expected: f64 },

    #[error("matching system is singular (condition number {condition:e})")]
    SingularLinearSystem { condition: f64 },

    #[error("no sign change over [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("trajectory escaped the basin of the target equilibrium (distance {distance})")]
    EscapedBasin { distance: f64 },

    #[error("orbit does not return transversally to the section")]
    DegenerateSection,

    #[error("periodic orbit lost during continuation at alpha = {alpha}")]
    LostOrbit { alpha: f64 },

    #[error("no multiplier crossing found over [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("grid payload does not match the requested operation")]
    WrongPayload,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
