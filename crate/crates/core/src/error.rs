use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("equilibrium solve did not converge after {iterations} iterations (force residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ions {0} and {1} sit at the same position")]
    CoincidentIons(usize, usize),

    #[error("mode {mode} is anti-trapped by the tweezers (eigenvalue {eigenvalue:e} in units of the axial frequency squared)")]
    UnstableMode { mode: usize, eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("factor index {index} out of range ({len} factors of that kind)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step size underflow at t = {time:e} (step {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("step budget of {max_steps} exhausted at t = {time:e}")]
    TooManySteps { max_steps: usize, time: f64 },

    #[error("detuning {detuning:e} rad/s is resonant with the shifted COM frequency {shift:e} rad/s")]
    Resonance { detuning: f64, shift: f64 },

    #[error("thermal weight {tail:e} beyond the cutoff of mode {mode} exceeds {limit:e}; increase the cutoff")]
    CutoffTooSmall { mode: usize, tail: f64, limit: f64 },

    #[error("gate is not diagonal (off-diagonal mass {0:e})")]
    NotDiagonal(f64),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("root not bracketed: f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("cutoffs not converged: raising every cutoff by {raise} changed the fidelity by {change:e} (limit {limit:e})")]
    NotConverged { raise: usize, change: f64, limit: f64 },

    #[error("state space of dimension {dim} exceeds the budget of {budget} amplitudes")]
    SpaceTooLarge { dim: usize, budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
