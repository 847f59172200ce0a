pub mod bound;
pub mod eval;
pub mod gradcheck;
pub mod oracle;
pub mod report;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::config::LabConfig;
use crate::error::Result;
use crate::output::CommandOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Gradcheck,
    Oracle,
    Bound,
    Train,
    Eval,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gradcheck => "gradcheck",
            Command::Oracle => "oracle",
            Command::Bound => "bound",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Report => "report",
        }
    }

    pub fn execute(self, config: &LabConfig) -> Result<CommandOutput> {
        match self {
            Command::Gradcheck => gradcheck::run(config),
            Command::Oracle => oracle::run(config),
            Command::Bound => bound::run(config),
            Command::Train => train::run(config),
            Command::Eval => eval::run(config),
            Command::Report => report::run(config),
        }
    }
}
