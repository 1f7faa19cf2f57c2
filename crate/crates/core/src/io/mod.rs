//! On-disk formats: TREC runs and qrels, token statistics, fixed call traces,
//! the bundled results snapshot, and report output.

mod report;
mod stats;
mod table2;
mod trace;
mod trec;

use std::fmt;
use std::path::Path;

pub use report::{emit_report, parse_report, ReportFormat};
pub use stats::{TokenEntry, TokenStats};
pub use table2::{half_unit, Table2, Table2Row};
pub use trace::{emit_trace, parse_trace, parse_trace_str};
pub use trec::{parse_qrels, parse_qrels_str, parse_run, parse_run_str, Parsed};

use crate::error::{Error, Result};

/// A recoverable problem found while reading input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub line: Option<usize>,
    pub message: String,
}

impl Warning {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        Warning {
            line: Some(line),
            message: message.into(),
        }
    }

    pub(crate) fn new(message: impl Into<String>) -> Self {
        Warning {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| Error::Format {
        path: Some(path.to_path_buf()),
        msg: format!("not valid UTF-8 (byte {})", e.utf8_error().valid_up_to()),
    })
}
