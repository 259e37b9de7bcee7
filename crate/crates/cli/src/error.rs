use std::path::Path;
use std::process::ExitCode;

use serde_json::json;
use tensorprop_core::pipeline::StageError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("all {0} sweep runs failed")]
    AllCellsFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 1,
            CliError::Stage(_) => 2,
            CliError::AllCellsFailed(_) => 3,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config(message) => json!({ "kind": "config", "message": message }),
            CliError::Stage(e) => json!({
                "kind": "stage",
                "stage": e.stage,
                "message": e.source.to_string(),
            }),
            CliError::AllCellsFailed(n) => json!({
                "kind": "all-cells-failed",
                "runs": n,
                "message": self.to_string(),
            }),
        }
    }

    /// Best effort: the error record is a courtesy, the exit code is the
    /// contract.
    pub fn write_record(&self, dir: &Path) {
        let written = std::fs::create_dir_all(dir).and_then(|()| {
            let text = serde_json::to_string_pretty(&self.to_json()).expect("json value");
            std::fs::write(dir.join("error.json"), text + "\n")
        });
        if let Err(e) = written {
            log::warn!("could not write error.json to {}: {e}", dir.display());
        }
    }
}
