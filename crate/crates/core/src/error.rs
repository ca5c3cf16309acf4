use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("tilt {theta} lies outside the finiteness interval ({lo}, {hi})")]
    OutsideFiniteness { theta: f64, lo: f64, hi: f64 },

    #[error("degenerate law at tilt {theta}: kappa''={kappa_double_prime} (kappa'={kappa_prime})")]
    Degenerate {
        theta: f64,
        kappa_prime: f64,
        kappa_double_prime: f64,
    },

    #[error("root finder did not converge after {iterations} iterations, last bracket [{lo}, {hi}]")]
    NumericalFailure { iterations: usize, lo: f64, hi: f64 },

    #[error("no sign change of the critical equation on [{lo}, {hi}]")]
    AbsentRoot { lo: f64, hi: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("regime classification is inconsistent: {0}")]
    Inconsistent(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("memory budget of {budget} particles exceeded at generation {generation} ({population} particles)")]
    Budget {
        budget: usize,
        generation: usize,
        population: usize,
    },

    #[error("population went extinct at generation {0}")]
    Extinction(usize),

    #[error("martingale requested on a pruned snapshot")]
    MartingaleBias,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("budget exhausted after {trials} trials with {accepted} accepted (rate estimate {rate})")]
    PartialResult {
        trials: u64,
        accepted: usize,
        rate: f64,
    },

    #[error("coverage error: test function sees {phi_cutoff} but samples are only complete above {window_edge}")]
    Coverage { phi_cutoff: f64, window_edge: f64 },

    #[error("fit is ambiguous: {0}")]
    FitAmbiguity(String),

    #[error("insufficient tail mass: {have} samples above the lower edge, need {need}")]
    InsufficientTail { have: usize, need: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
