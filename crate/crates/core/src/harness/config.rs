//! Run configuration: sampler grid, cost constants, optimizer and learning
//! settings in one JSON document.

use super::io::{parse_doc, read_text, to_doc_string, write_text};
use crate::error::Result;
use crate::learning::LearnConfig;
use crate::planner::PlannerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the config used when none is given.
pub const CONFIG_ENV: &str = "JOINTPLAN_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub planner: PlannerConfig,
    pub learn: LearnConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.planner.grid.validate()?;
        self.learn.validate()
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<Config> {
    let c: Config = parse_doc(text, origin)?;
    c.validate()?;
    Ok(c)
}

pub fn save_config(path: &Path, c: &Config) -> Result<()> {
    write_text(path, &to_doc_string(c))
}

/// Reads `path`, else the file named by `JOINTPLAN_CONFIG`, else defaults.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    let chosen: Option<PathBuf> = path.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    match chosen {
        Some(p) => parse_config(&read_text(&p)?, &p.display().to_string()),
        None => Ok(Config::default()),
    }
}
