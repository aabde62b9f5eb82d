//! Error classification and guarded output files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or refused overwrite (exit 2).
    Usage(String),
    /// Simulation or I/O failure (exit 1).
    Runtime(String),
    /// No usable threshold could be fitted (exit 3).
    Calibration(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Calibration(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Calibration(m) => f.write_str(m),
        }
    }
}

impl From<tdle::Error> for CliError {
    fn from(e: tdle::Error) -> Self {
        use tdle::Error as E;
        match e {
            E::Config { .. } | E::InvalidParameter { .. } | E::Parse(_) => CliError::Usage(e.to_string()),
            E::Calibration(_) => CliError::Calibration(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output files checked up front so that nothing is written when any would be clobbered.
pub struct Outputs {
    files: Vec<PathBuf>,
}

impl Outputs {
    /// Files `names` inside directory `dir`, creating the directory.
    pub fn in_dir(dir: &Path, names: &[&str], force: bool) -> CliResult<Self> {
        if dir.exists() && !dir.is_dir() {
            return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
        }
        let files: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
        Self::check(&files, force)?;
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { files })
    }

    pub fn files(files: Vec<PathBuf>, force: bool) -> CliResult<Self> {
        Self::check(&files, force)?;
        for f in &files {
            if let Some(parent) = f.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
            }
        }
        Ok(Outputs { files })
    }

    fn check(files: &[PathBuf], force: bool) -> CliResult {
        match files.iter().find(|f| f.exists()) {
            Some(f) if !force => Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                f.display()
            ))),
            _ => Ok(()),
        }
    }

    pub fn write(&self, k: usize, contents: &str) -> CliResult {
        let path = &self.files[k];
        fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
