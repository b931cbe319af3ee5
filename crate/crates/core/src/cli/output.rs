use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::channel::ChannelError;
use crate::data_io::DataError;
use crate::decoy::{DecoyError, PipelineError};
use crate::simulate::SimulationError;
use crate::timing::TimingError;

pub const EXIT_OK: i32 = 0;
/// Bad flags, unreadable or malformed input, unwritable output.
pub const EXIT_USAGE: i32 = 2;
/// Well-formed input that violates a parameter or table invariant.
pub const EXIT_INVALID: i32 = 3;
/// Valid input from which no bound (and so no key) can be extracted.
pub const EXIT_DEGENERATE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

fn decoy_code(e: &DecoyError) -> i32 {
    if e.is_degenerate() {
        EXIT_DEGENERATE
    } else {
        EXIT_INVALID
    }
}

impl From<DecoyError> for CliError {
    fn from(e: DecoyError) -> Self {
        Self {
            code: decoy_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: decoy_code(&e.source),
            message: e.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match &e {
            DataError::ReportInputs(inner) => decoy_code(inner),
            e if e.is_syntax() => EXIT_USAGE,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<TimingError> for CliError {
    fn from(e: TimingError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Channel(e) => e.into(),
            SimulationError::Input(e) => e.into(),
            SimulationError::Pipeline(e) => e.into(),
            SimulationError::Sweep(m) => Self::invalid(format!("invalid sweep: {m}")),
        }
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Output destination: a file path, or standard output when `None`.
pub struct Output {
    pub path: Option<PathBuf>,
    pub content: String,
}

/// Write every output, or none of them.
///
/// Each file is first written to a temporary file in its target directory;
/// all are renamed into place only once every write has succeeded.
pub fn commit(outputs: Vec<Output>) -> Result<(), CliError> {
    let mut staged = Vec::new();
    let mut stdout = String::new();
    for out in outputs {
        match out.path {
            None => stdout.push_str(&out.content),
            Some(path) => {
                let dir = match path.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                    _ => PathBuf::from("."),
                };
                let write_err = |e: std::io::Error| CliError::usage(format!("cannot write {}: {e}", path.display()));
                let mut tmp = NamedTempFile::new_in(&dir).map_err(write_err)?;
                tmp.write_all(out.content.as_bytes()).map_err(write_err)?;
                tmp.flush().map_err(write_err)?;
                staged.push((tmp, path));
            }
        }
    }
    for (tmp, path) in staged {
        tmp.persist(&path)
            .map_err(|e| CliError::usage(format!("cannot write {}: {}", path.display(), e.error)))?;
    }
    if !stdout.is_empty() {
        let mut lock = std::io::stdout().lock();
        lock.write_all(stdout.as_bytes())
            .and_then(|_| lock.flush())
            .map_err(|e| CliError::usage(format!("cannot write to standard output: {e}")))?;
    }
    Ok(())
}
