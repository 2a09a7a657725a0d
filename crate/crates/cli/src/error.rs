use std::fmt;

use geoses::catalog::CatalogError;
use geoses::index::IndexError;
use geoses::ingest::IngestError;
use geoses::linalg::EigenError;
use geoses::pca::PcaError;
use geoses::spatial::SpatialError;

/// Error class, which fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags or configuration. Exit code 2.
    Usage,
    /// An input file is missing, unreadable or malformed. Exit code 3.
    Input,
    /// Inputs parse but violate a data requirement (unit mismatch, constant
    /// column, out-of-range value). Exit code 4.
    Data,
    /// A numerical procedure failed (singular local design, undefined
    /// index). Exit code 5.
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            Self::Input => 3,
            Self::Data => 4,
            Self::Numerical => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    /// Prefixes the message with where the error happened.
    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        Self::input(e.to_string()).context("catalog")
    }
}

fn ingest_kind(e: &IngestError) -> ErrorKind {
    match e {
        IngestError::Csv(_) | IngestError::Io(_) | IngestError::InvalidRecord { .. } | IngestError::MissingColumn(_) => {
            ErrorKind::Input
        }
        IngestError::Config(_) => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::new(ingest_kind(&e), e.to_string()).context("ingest")
    }
}

fn pca_kind(e: &PcaError) -> ErrorKind {
    match e {
        PcaError::Eigen(EigenError::NoConvergence(_)) | PcaError::NotPositiveSemidefinite(_) | PcaError::NonFinite(_) => {
            ErrorKind::Numerical
        }
        _ => ErrorKind::Data,
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        let kind = match &e {
            IndexError::Config(_) => ErrorKind::Usage,
            IndexError::Table(inner) => ingest_kind(inner),
            IndexError::Pca { source, .. } => pca_kind(source),
            IndexError::ConstantScores => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string()).context("index")
    }
}

impl From<SpatialError> for CliError {
    fn from(e: SpatialError) -> Self {
        let kind = match &e {
            SpatialError::Parse { .. }
            | SpatialError::Io(_)
            | SpatialError::EmptyGeometry(_)
            | SpatialError::InvalidGeometry(_)
            | SpatialError::DuplicateUnit(_) => ErrorKind::Input,
            SpatialError::MissingSeed | SpatialError::InvalidConfig(_) => ErrorKind::Usage,
            SpatialError::SingularLocalDesign { .. } | SpatialError::TooFlexible { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string()).context("spatial")
    }
}
