use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("t = {t} s lies outside the generated telegraph span [0, {span}] s")]
    OutOfRange { t: f64, span: f64 },

    #[error("rate {rate} /s exceeds the declared bound {bound} /s at t = {t} s")]
    RateExceedsBound { t: f64, rate: f64, bound: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("step {dt} s does not resolve the fastest rate; need dt <= {max} s")]
    StepTooLarge { dt: f64, max: f64 },

    #[error(
        "density matrix left the physical set at t = {t} s \
         (trace {trace}, min eigenvalue {min_eigenvalue}, hermiticity error {hermiticity})"
    )]
    Unphysical {
        t: f64,
        trace: f64,
        min_eigenvalue: f64,
        hermiticity: f64,
    },

    #[error("no quasi-steady state within {duration} s; lengthen the window")]
    NoSteadyState { duration: f64 },

    #[error("reference at {frequency} Hz too weak: phase error {sigma} rad exceeds {limit} rad")]
    WeakReference {
        frequency: f64,
        sigma: f64,
        limit: f64,
    },

    #[error("singular Jacobian: parameter `{0}` is degenerate")]
    SingularJacobian(&'static str),

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
