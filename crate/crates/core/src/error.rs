use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Every variant maps onto a stable, machine-readable category through
/// [`Error::category`], which the command-line front-end prints on failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {what} lies outside the exponential-moment domain (bound {bound})")]
    DomainViolation { what: String, bound: f64 },

    #[error("time {t} outside the admissible horizon [0, {horizon}]")]
    HorizonViolation { t: f64, horizon: f64 },

    #[error("Riccati solution left the domain before t = {t}")]
    BlowUp { t: f64 },

    #[error("ODE step size collapsed to {step:e} at t = {t}")]
    StepUnderflow { t: f64, step: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("factor {index}: {source}")]
    Factor {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no convergence: {0}")]
    ConvergenceFailure(String),

    #[error("initial curve cannot be fitted: {0}")]
    InfeasibleCurve(String),

    #[error("discount ratios increase at index {index}: negative initial LIBOR rate")]
    NonMonotoneCurve { index: usize },

    #[error("index out of range: {0}")]
    IndexError(String),

    #[error("damping {damping} outside the admissible strip ({lower}, {upper})")]
    DampingOutOfStrip { damping: f64, lower: f64, upper: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("exercise function has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("price {price} violates the no-arbitrage bounds [{lower}, {upper}]")]
    OutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::DomainViolation { .. } => "domain_violation",
            Error::HorizonViolation { .. } => "horizon_violation",
            Error::BlowUp { .. } => "blow_up",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Factor { source, .. } => source.category(),
            Error::ConvergenceFailure(_) => "convergence_failure",
            Error::InfeasibleCurve(_) => "infeasible_curve",
            Error::NonMonotoneCurve { .. } => "non_monotone_curve",
            Error::IndexError(_) => "index_error",
            Error::DampingOutOfStrip { .. } => "damping_out_of_strip",
            Error::QuadratureFailure(_) => "quadrature_failure",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::Unsupported(_) => "unsupported",
        }
    }

    pub(crate) fn in_factor(self, index: usize) -> Error {
        Error::Factor {
            index,
            source: Box::new(self),
        }
    }

    /// Strips any factor wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::Factor { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
