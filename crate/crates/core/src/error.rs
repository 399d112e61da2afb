use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inverse temperature outside the region where the log-MGF is finite.
    #[error("beta = {beta} is outside the admissible range |beta| <= {bound} for this environment")]
    Domain { beta: f64, bound: f64 },

    /// The t-derivative of the interpolation carries a 1/sqrt(t) factor.
    #[error("t = {t} is below t_min = {t_min}, where d phi/dt is not evaluated")]
    BelowTMin { t: f64, t_min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("brute-force oracle refused: n = {n} exceeds the cap {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("divergent jump-measure integral: {0}")]
    Divergent(String),

    #[error("cannot parse environment spec: {0}")]
    Parse(String),

    #[error("fit refused: {0}")]
    Fit(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
