use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("condition (1) cannot hold: kappa*T = {kappa_t} <= T* = {tstar}")]
    HorizonTooShort { kappa_t: f64, tstar: f64 },

    #[error("no beta <= {cap} satisfies the weight conditions (last failure: {reason})")]
    BetaSearchFailed { cap: f64, reason: String },

    #[error("cut-off plateau Q(c1+delta) has no grid nodes (delta = {delta})")]
    EmptyPlateau { delta: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("solution blew up at step {step}: norm {norm:.3e} exceeds cap {cap:.1e}")]
    BlowUp { step: usize, norm: f64, cap: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}
