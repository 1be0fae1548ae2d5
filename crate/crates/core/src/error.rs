use core::fmt;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    /// Quadrature stopped before reaching the requested tolerance.
    Accuracy { estimate: f64, error_bound: f64 },
    /// The requested combination of family, model and data is not implemented.
    Unsupported(&'static str),
    /// The prescribed-rate construction ran into the overflow guard.
    Infeasible { step: usize, reason: &'static str },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain {
                what,
                value,
                expected,
            } => write!(f, "{what} must lie in {expected} (got {value})"),
            Error::Accuracy {
                estimate,
                error_bound,
            } => write!(
                f,
                "quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}"
            ),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Infeasible { step, reason } => {
                write!(f, "construction infeasible at k = {step}: {reason}")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

/// A value that may have underflowed to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub underflow: bool,
}

impl Flagged {
    pub(crate) fn ok(value: f64) -> Self {
        Flagged {
            value,
            underflow: false,
        }
    }

    pub(crate) fn underflowed() -> Self {
        Flagged {
            value: 0.0,
            underflow: true,
        }
    }
}
