use serde::Serialize;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Numeric,
    Data,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Numeric => 2,
            ErrorKind::Data => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    pub row: Option<usize>,
}

/// Machine-readable error record written to standard error.
#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorKind,
    exit_code: i32,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: message.into(),
            row: None,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: message.into(),
            row: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorRecord {
            error: self.kind,
            exit_code: self.exit_code(),
            message: &self.message,
            row: self.row,
        })
        .expect("error record serializes")
    }
}

fn domain_row(e: &cwgp::Error) -> Option<usize> {
    match e {
        cwgp::Error::Domain { index, .. } => *index,
        cwgp::Error::AllStartsFailed { first, .. } => domain_row(first),
        cwgp::Error::Parse { row, .. } => Some(*row),
        _ => None,
    }
}

impl From<cwgp::Error> for CliError {
    fn from(e: cwgp::Error) -> Self {
        use cwgp::Error as E;
        let kind = match &e {
            _ if e.is_domain() => ErrorKind::Data,
            E::Parse { .. } | E::MissingColumn(_) | E::EmptyInput | E::Io(_) | E::InvalidSpec(_) | E::DimensionMismatch(_) => {
                ErrorKind::Data
            }
            E::InvalidParameter(_) | E::InvalidOrder(_) | E::UnsupportedVariant(_) => ErrorKind::Usage,
            _ => ErrorKind::Numeric,
        };
        CliError {
            kind,
            row: domain_row(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
