use std::fmt;
use std::path::{Path, PathBuf};

use crate::container::ContainerError;
use crate::detect::DetectError;
use crate::exec::ExecError;
use crate::graph::analysis::GraphError;
use crate::perfmodel::PerfError;
use crate::planner::PlanError;
use crate::quant::QuantError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: file not found", .path.display())]
    NotFound { path: PathBuf },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// The file was read but its content violates the expected schema.
    #[error("{}: {message}", .path.display())]
    Schema { path: PathBuf, message: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(GraphErrors),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path: path.to_path_buf() }
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }

    /// Errors caused by unreadable or malformed input files, as opposed to
    /// errors in the domain computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::NotFound { .. } | Error::Io { .. } | Error::Schema { .. })
    }
}

/// Every violation found by [`crate::graph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphErrors(pub Vec<GraphError>);

impl fmt::Display for GraphErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn schema_error(path: &Path, err: impl fmt::Display) -> Error {
    Error::Schema { path: path.to_path_buf(), message: err.to_string() }
}
