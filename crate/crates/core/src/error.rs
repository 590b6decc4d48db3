use std::fmt;

/// Errors produced while loading inputs or computing explanations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape mismatch for {what}: expected {expected}, got {actual}")]
    InputShape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("input domain error: {0}")]
    InputDomain(String),

    #[error("parse error{}: {message}", location_suffix(*.line, *.column))]
    Parse {
        message: String,
        line: usize,
        column: usize,
    },

    #[error("unsupported model kind `{0}`")]
    UnsupportedModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid dag: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("refusing exact enumeration over {features} features (cap is {cap})")]
    BudgetRefused { features: usize, cap: usize },

    #[error("singular regression system: collinear columns {}", ColumnList(.columns))]
    SingularSystem { columns: Vec<usize> },

    #[error("cannot render: {0}")]
    RenderInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed inputs or configuration, as
    /// opposed to failures of the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InputShape { .. }
                | Error::InputDomain(_)
                | Error::Parse { .. }
                | Error::UnsupportedModel(_)
                | Error::InvalidModel(_)
                | Error::Structure(_)
                | Error::RenderInput(_)
                | Error::Io(_)
        )
    }

    pub(crate) fn parse(message: impl Into<String>) -> Self {
        Error::Parse {
            message: message.into(),
            line: 0,
            column: 0,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            return Error::Io(err.into());
        }
        Error::Parse {
            message: err.to_string(),
            line: err.line(),
            column: err.column(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let (line, column) = match err.position() {
            Some(pos) => (pos.line() as usize, 0),
            None => (0, 0),
        };
        if err.is_io_error() {
            if let csv::ErrorKind::Io(io) = err.into_kind() {
                return Error::Io(io);
            }
            return Error::parse("csv i/o failure");
        }
        Error::Parse {
            message: err.to_string(),
            line,
            column,
        }
    }
}

fn location_suffix(line: usize, column: usize) -> String {
    match (line, column) {
        (0, _) => String::new(),
        (l, 0) => format!(" at line {l}"),
        (l, c) => format!(" at line {l}, column {c}"),
    }
}

struct ColumnList<'a>(&'a [usize]);

impl fmt::Display for ColumnList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
