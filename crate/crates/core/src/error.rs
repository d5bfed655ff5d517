use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Kernel evaluated at zero relative speed without a regularizing truncation.
    SingularEvaluation,
    /// Angular law is not integrable against `sin^{N-2} θ`.
    NoGradCutoff,
    /// Iterated `L[Δφ]` quadrature refused for a non-cutoff kernel.
    NotConvergent,
    /// A parameter or input violates its documented range.
    InvalidInput(String),
    /// Density field contains a negative or non-finite entry.
    InvalidField(String),
    /// Second-moment matrix is degenerate so the field cannot be normalized.
    CannotNormalize,
    /// Constraint Gram matrix of the conservative projection is singular.
    SingularProjection,
    /// Time step rejected repeatedly because positivity could not be restored.
    PositivityFailure { t: f64, retries: usize },
    /// Leakage through the grid boundary exceeded its tolerance.
    Leakage { ratio: f64 },
    /// Root finder found no root in the representable range.
    OutOfRange(String),
    /// Quadrature failed to reach its tolerance.
    Quadrature(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularEvaluation => f.write_str("singular evaluation at zero relative speed"),
            Error::NoGradCutoff => f.write_str("no Grad cutoff: angular law not integrable"),
            Error::NotConvergent => f.write_str(
                "integral not convergent without sin²θ gain beyond quadratic Δφ budget",
            ),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::InvalidField(m) => write!(f, "invalid field: {m}"),
            Error::CannotNormalize => f.write_str("cannot normalize: degenerate second moments"),
            Error::SingularProjection => f.write_str("singular constraint Gram matrix"),
            Error::PositivityFailure { t, retries } => {
                write!(f, "positivity failure at t = {t} after {retries} retries")
            }
            Error::Leakage { ratio } => write!(f, "grid leakage ratio {ratio:e} above tolerance"),
            Error::OutOfRange(m) => write!(f, "out of representable range: {m}"),
            Error::Quadrature(m) => write!(f, "quadrature failure: {m}"),
        }
    }
}

impl core::error::Error for Error {}
