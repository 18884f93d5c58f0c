//! JSON record of a run: the command, the resolved configuration and what
//! was written. Replaying it regenerates the data files byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cli::Command;
use crate::pipeline::{GridRecord, RunError, Timing};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub command: Command,
    /// Canonical configuration text; absent for `reproduce`, which uses
    /// built-in parameters.
    pub config: Option<String>,
    pub threads: usize,
    pub out_dir: String,
    pub outputs: Vec<String>,
    pub grids: Vec<GridRecord>,
    pub timings: Vec<Timing>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            context: format!("cannot read {}", path.display()),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Usage(format!("{} is not a run manifest: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| RunError::Io {
            context: format!("cannot write {}", path.display()),
            source,
        })
    }
}
