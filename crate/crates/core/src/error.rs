use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{function}: argument out of domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("{function}: pole at c = {c}")]
    Pole { function: &'static str, c: f64 },

    #[error("{what} did not converge after {iterations} iterations ({detail})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("sample `{0}` is empty")]
    EmptySample(String),

    #[error("sample `{0}` is degenerate: {1}")]
    DegenerateSample(String, String),

    #[error(
        "sample `{dataset}` is not overdispersed (index of dispersion {dispersion_index:.4} <= 1); use the Poisson model"
    )]
    Underdispersed {
        dataset: String,
        dispersion_index: f64,
    },

    #[error("non-finite log-likelihood: {0}")]
    NonFinite(String),

    #[error("survival underflows at age {age}; largest age with representable survival is {largest_valid}")]
    TailUnderflow { age: u64, largest_valid: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("line {line}, field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },

    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }

    /// True for failures caused by an iterative method running out of budget.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::TailUnderflow { .. })
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            line,
            field: String::from("<record>"),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Input(e.to_string())
    }
}
