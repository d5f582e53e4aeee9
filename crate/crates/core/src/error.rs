use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("1/sigma is not integrable for a = {a}, b = {b} (both exponents must be < 1)")]
    NonIntegrable { a: f64, b: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("potential at y = {y} has magnitude {value:e}, above the cap {cap:e}")]
    Singularity { y: f64, value: f64, cap: f64 },

    #[error("Monte Carlo estimate is degenerate: {0}")]
    McDegenerate(String),

    #[error(
        "moment-matched Beta needs var < E(1-E), got var = {variance} with E = {mean} \
         (E(1-E) = {limit})"
    )]
    BetaParameters {
        mean: f64,
        variance: f64,
        limit: f64,
    },

    #[error("normalization constant {0} is not positive and finite")]
    Normalization(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("incompatible grids: {0}")]
    GridMismatch(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            domain: domain.into(),
        }
    }
}
