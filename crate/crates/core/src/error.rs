use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is singular")]
    Singular,

    #[error("matrix is ill-conditioned (condition estimate {estimate:.3e}){}", site_suffix(*.site))]
    IllConditioned { estimate: f64, site: Option<i64> },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("potential violates its bound at site {site}: norm {norm:.6} > {bound:.6}")]
    SpecViolation { site: i64, norm: f64, bound: f64 },

    #[error("solution overflow; last stable site {last_stable_site}")]
    Growth { last_stable_site: i64 },

    #[error("site {site} is outside the sampled range")]
    Range { site: i64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("map does not act on the Siegel half-space (min eigenvalue {min_eigenvalue:.3e})")]
    InvalidMap { min_eigenvalue: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Json(#[from] JsonError),
}

fn site_suffix(site: Option<i64>) -> String {
    match site {
        Some(s) => format!(" at site {s}"),
        None => String::new(),
    }
}

/// `serde_json::Error` is not `Clone`, so keep only its message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct JsonError(pub String);

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(JsonError(e.to_string()))
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach a lattice site to an ill-conditioning error.
    pub(crate) fn at_site(self, n: i64) -> Self {
        match self {
            Error::IllConditioned { estimate, .. } => Error::IllConditioned {
                estimate,
                site: Some(n),
            },
            Error::Singular => Error::IllConditioned {
                estimate: f64::INFINITY,
                site: Some(n),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
