use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ce_core::{
    Aggregator, ConsensusConfig, Estimator, GridConfig, Metric, PipelineConfig, TokenizeMode,
    DEFAULT_TEMPLATE,
};
use clap::Args;
use serde::Deserialize;

use crate::error::{EvalError, Result};

/// Settings shared by the scoring subcommands. Every field may also come from
/// a `--config` TOML file using the same names with underscores; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// edit | cosine
    #[arg(long)]
    pub metric: Option<String>,
    /// mean-distance | sum | max | mean
    #[arg(long)]
    pub aggregate: Option<String>,
    /// pairwise | grid
    #[arg(long)]
    pub estimator: Option<String>,
    /// Route to the expert when delta exceeds this.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Grid cells per axis for the grid estimator.
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Fixed kernel bandwidth for the grid estimator (default: Silverman).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Scale each kernel by its nearest-neighbour distance.
    #[arg(long)]
    #[serde(default)]
    pub adaptive_bandwidth: bool,
    /// word | char
    #[arg(long)]
    pub tokenize: Option<String>,
    /// Expert prompt template file. Must contain the {candidates} and {ensemble}
    /// placeholders; the candidate count placeholder is optional.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// TOML file with [[candidates]], [expert] and [embedding] backends.
    #[arg(long)]
    pub backend_config: Option<PathBuf>,
    /// Worker threads (default: logical CPUs, capped by backend limits).
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Report failed samples and carry on instead of stopping.
    #[arg(long)]
    #[serde(default)]
    pub keep_going: bool,
    /// Leave timing out of reports so runs can be compared byte for byte.
    #[arg(long)]
    #[serde(default)]
    pub no_timing: bool,
}

/// Settings after merging and parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub backend_config: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub keep_going: bool,
    pub no_timing: bool,
}

fn parse<T: FromStr>(value: &Option<String>, name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .as_deref()
        .map(|v| {
            v.parse()
                .map_err(|e| EvalError::Usage(format!("--{name}: {e}")))
        })
        .transpose()
}

impl Settings {
    /// Reads a config file, resolving its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(EvalError::io(path))?;
        let mut s: Settings = toml::from_str(&text)
            .map_err(|e| EvalError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [s.template.as_mut(), s.backend_config.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Fields set in `self` win over `file`.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            metric: self.metric.or(file.metric),
            aggregate: self.aggregate.or(file.aggregate),
            estimator: self.estimator.or(file.estimator),
            theta: self.theta.or(file.theta),
            grid_n: self.grid_n.or(file.grid_n),
            bandwidth: self.bandwidth.or(file.bandwidth),
            adaptive_bandwidth: self.adaptive_bandwidth || file.adaptive_bandwidth,
            tokenize: self.tokenize.or(file.tokenize),
            template: self.template.or(file.template),
            backend_config: self.backend_config.or(file.backend_config),
            concurrency: self.concurrency.or(file.concurrency),
            keep_going: self.keep_going || file.keep_going,
            no_timing: self.no_timing || file.no_timing,
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let metric = parse::<Metric>(&self.metric, "metric")?.unwrap_or_default();
        if metric == Metric::Euclidean {
            return Err(EvalError::Usage("--metric: expected edit or cosine".into()));
        }
        let defaults = GridConfig::default();
        let grid = GridConfig {
            grid_n: self.grid_n.unwrap_or(defaults.grid_n),
            bandwidth: self.bandwidth,
            adaptive: self.adaptive_bandwidth,
            ..defaults
        };
        if grid.grid_n < 2 {
            return Err(EvalError::Usage(format!(
                "--grid-n must be at least 2, got {}",
                grid.grid_n
            )));
        }
        if let Some(h) = grid.bandwidth.filter(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(EvalError::Usage(format!(
                "--bandwidth must be positive, got {h}"
            )));
        }
        let theta = self.theta.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&theta) {
            return Err(EvalError::Usage(format!(
                "--theta must lie in [0, 1], got {theta}"
            )));
        }
        if self.concurrency == Some(0) {
            return Err(EvalError::Usage("--concurrency must be at least 1".into()));
        }
        let template = match &self.template {
            Some(p) => fs::read_to_string(p).map_err(EvalError::io(p))?,
            None => DEFAULT_TEMPLATE.to_string(),
        };
        for key in ["{candidates}", "{ensemble}"] {
            if !template.contains(key) {
                return Err(EvalError::Usage(format!(
                    "expert template lacks the {key} placeholder"
                )));
            }
        }

        Ok(Resolved {
            pipeline: PipelineConfig {
                consensus: ConsensusConfig {
                    metric,
                    aggregator: parse::<Aggregator>(&self.aggregate, "aggregate")?
                        .unwrap_or_default(),
                    estimator: parse::<Estimator>(&self.estimator, "estimator")?
                        .unwrap_or_default(),
                    theta,
                    grid,
                },
                tokenize: parse::<TokenizeMode>(&self.tokenize, "tokenize")?.unwrap_or_default(),
                template,
            },
            backend_config: self.backend_config.clone(),
            concurrency: self.concurrency,
            keep_going: self.keep_going,
            no_timing: self.no_timing,
        })
    }
}
