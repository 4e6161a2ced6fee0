use thiserror::Error;

/// Errors raised by the library.
///
/// `Domain` covers inputs outside an operation's precondition. `Numerical`
/// covers failures of an otherwise valid computation (integrator step
/// underflow, non-converging Newton solves and the like).
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The integrator could not continue; `state` is the last accepted state.
    #[error("integration failed at sigma = {sigma}: {reason}")]
    Integration {
        sigma: f64,
        state: Vec<f64>,
        reason: String,
    },

    /// A classification was requested too close to a bifurcation curve.
    #[error("parameters lie within {distance:e} of {curve}")]
    Boundary { curve: Curve, distance: f64 },

    #[error("I/O error: {0}")]
    Io(String),
}

/// Bifurcation curve on the (L, E) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Curve {
    /// Curve traced by the circular equatorial orbits.
    SigmaR,
    /// Curve associated with the escape channel along the symmetry axis.
    SigmaInf,
}

impl std::fmt::Display for Curve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Curve::SigmaR => write!(f, "Sigma_r"),
            Curve::SigmaInf => write!(f, "Sigma_inf"),
        }
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Boundary { .. } | Error::Io(_) => 2,
            Error::Numerical(_) | Error::Integration { .. } => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
