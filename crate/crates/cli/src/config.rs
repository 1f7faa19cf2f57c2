use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::{EstimateArgs, EvaluateArgs, ReportArgs, SimulateArgs};

/// Defaults read from `--config`, one table per subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub estimate: EstimateArgs,
    #[serde(default)]
    pub simulate: SimulateArgs,
    #[serde(default)]
    pub evaluate: EvaluateArgs,
    #[serde(default)]
    pub report: ReportArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))
    }
}

macro_rules! fill {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $(
            if $dst.$field.is_none() {
                $dst.$field = $src.$field;
            }
        )*
    };
}

impl EstimateArgs {
    pub fn merge(mut self, file: EstimateArgs) -> Self {
        fill!(self, file; model, n_ctx, n_opt, trace, format);
        self.oracle_check |= file.oracle_check;
        self
    }
}

impl SimulateArgs {
    pub fn merge(mut self, file: SimulateArgs) -> Self {
        fill!(self, file; strategy, n_docs, model, stats, seed, window, step, repeats, top_k, trace, emit_trace, format);
        self
    }
}

impl EvaluateArgs {
    pub fn merge(mut self, file: EvaluateArgs) -> Self {
        fill!(self, file; run, qrels, model, strategy, stats, dataset, k, n_docs, window, step, repeats, top_k, trace, jobs, format, output);
        self
    }
}

impl ReportArgs {
    pub fn merge(mut self, file: ReportArgs) -> Self {
        if self.input.is_empty() {
            self.input = file.input;
        }
        fill!(self, file; against, format, output);
        self
    }
}
