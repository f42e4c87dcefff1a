use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate field pair: alpha x beta = 0 (classical Kowalevski case)")]
    DegenerateFieldPair,

    #[error("reality violation: max imaginary residual {max_imag:.3e} exceeds tolerance {tol:.3e} ({context})")]
    RealityViolation {
        context: &'static str,
        max_imag: f64,
        tol: f64,
    },

    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),

    #[error("square-root branch cut: {0}")]
    BranchCut(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible separated state: {0}")]
    Inadmissible(String),

    #[error(
        "branch inconsistency: residual {residual:.3e} exceeds tolerance {tol:.3e} ({context})"
    )]
    BranchInconsistency {
        context: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("double root of radicand at {coordinate} = {value:.12e}: periodic-orbit boundary, integration stopped")]
    DoubleRoot {
        coordinate: &'static str,
        value: f64,
    },

    #[error("separated flow singularity: {0}")]
    FlowSingularity(String),
}
