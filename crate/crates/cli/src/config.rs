//! Declarative experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tsfd_core::bench::BenchConfig;
use tsfd_core::policies::PipelineConfig;
use tsfd_core::Method;

use crate::{CliError, Result};

/// Default number of samples per table or sweep point.
pub const DEFAULT_SAMPLES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub bench: BenchConfig,
    pub pipeline: PipelineConfig,
    pub samples: usize,
    pub methods: Vec<Method>,
    /// Relevance bias `b` applied to black-lead movies.
    pub bias: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bench: BenchConfig::default(),
            pipeline: PipelineConfig::default(),
            samples: DEFAULT_SAMPLES,
            methods: Method::ALL.to_vec(),
            bias: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.bench.validate()?;
        if self.samples == 0 {
            return Err(CliError::Config("samples must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        if !(self.bias > -1.0) || !self.bias.is_finite() {
            return Err(CliError::Config(format!("bias {} must exceed -1", self.bias)));
        }
        for w in self.methods.iter().enumerate() {
            if self.methods[..w.0].contains(w.1) {
                return Err(CliError::Config(format!("method {} listed twice", w.1)));
            }
        }
        Ok(())
    }

    /// The resolved configuration as `#`-prefixed comment lines.
    pub fn comment_header(&self) -> String {
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        json.lines().map(|l| format!("# {l}\n")).collect()
    }
}
