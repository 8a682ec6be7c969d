use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A zero t-statistic leaves the implied pooled SD unbounded.
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("inconsistent summary statistics: {0}")]
    InconsistentSummary(String),

    #[error("singular design matrix: {0}")]
    SingularFit(String),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("positivity fraction undefined when both counts are zero")]
    UndefinedFraction,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("expected a degree-{expected} fit, got degree {got}")]
    WrongDegree { expected: usize, got: usize },

    #[error("{}", format_parse_errors(.0))]
    Parse(Vec<ParseIssue>),

    #[error("io error: {0}")]
    Io(String),
}

/// One rejected row or header problem in an input file. `line` is 1-based
/// and counts the header as line 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

fn format_parse_errors(issues: &[ParseIssue]) -> String {
    let mut out = format!("{} parse error(s)", issues.len());
    for issue in issues {
        out.push_str(&format!("\n  line {}: {}", issue.line, issue.message));
    }
    out
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, value })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
