use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use netfolio::metrics::MetricsConfig;
use netfolio::strategies::DEFAULT_SUPPORT_THRESHOLD;
use netfolio::{InputMode, LoadOptions, Strategy, StrategyConfig};

/// Every knob of a run. Serialized with resolved defaults as `config.json`,
/// which can be fed back through `--config` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub mode: InputMode,
    pub delimiter: char,
    pub strategies: Vec<Strategy>,
    pub benchmark: Strategy,
    pub in_sample_months: usize,
    pub step_months: usize,
    pub tail_q: f64,
    pub grid_size: usize,
    pub support_threshold: f64,
    pub epsilon: f64,
    pub risk_free: f64,
    pub annualization: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let strategy = StrategyConfig::default();
        let metrics = MetricsConfig::default();
        Self {
            input: None,
            mode: InputMode::Returns,
            delimiter: ',',
            strategies: Strategy::ALL.to_vec(),
            benchmark: Strategy::Gmv,
            in_sample_months: 24,
            step_months: 1,
            tail_q: strategy.tail_q,
            grid_size: strategy.grid_size,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
            epsilon: metrics.epsilon,
            risk_free: metrics.risk_free,
            annualization: metrics.annualization,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Flags shared by `backtest` and `snapshot`. Each one overrides the
/// matching field of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags and environment variables take precedence.
    #[arg(long, env = "NETFOLIO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Panel file: header `date,<asset>...`, one row per date.
    #[arg(long, env = "NETFOLIO_INPUT")]
    pub input: Option<PathBuf>,
    /// Whether cells hold prices or log returns.
    #[arg(long, env = "NETFOLIO_MODE")]
    pub mode: Option<InputMode>,
    #[arg(long, env = "NETFOLIO_DELIMITER")]
    pub delimiter: Option<char>,
    /// Comma-separated subset of gmv,pna,kna,tna,ew.
    #[arg(long, env = "NETFOLIO_STRATEGIES", value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    /// Benchmark for the information ratio.
    #[arg(long, env = "NETFOLIO_BENCHMARK")]
    pub benchmark: Option<Strategy>,
    #[arg(long, env = "NETFOLIO_IN_SAMPLE_MONTHS")]
    pub in_sample_months: Option<usize>,
    #[arg(long, env = "NETFOLIO_STEP_MONTHS")]
    pub step_months: Option<usize>,
    /// Tail level for the lower-tail dependence estimator.
    #[arg(long, env = "NETFOLIO_TAIL_Q")]
    pub tail_q: Option<f64>,
    /// Number of thresholds used to integrate clustering.
    #[arg(long, env = "NETFOLIO_GRID_SIZE")]
    pub grid_size: Option<usize>,
    #[arg(long, env = "NETFOLIO_SUPPORT_THRESHOLD")]
    pub support_threshold: Option<f64>,
    /// Omega threshold on daily returns.
    #[arg(long, env = "NETFOLIO_EPSILON")]
    pub epsilon: Option<f64>,
    /// Annual risk-free rate.
    #[arg(long, env = "NETFOLIO_RISK_FREE")]
    pub risk_free: Option<f64>,
    /// Periods per year.
    #[arg(long, env = "NETFOLIO_ANNUALIZATION")]
    pub annualization: Option<f64>,
    #[arg(long, env = "NETFOLIO_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        take!(
            mode,
            delimiter,
            strategies,
            benchmark,
            in_sample_months,
            step_months,
            tail_q,
            grid_size,
            support_threshold,
            epsilon,
            risk_free,
            annualization,
            out_dir
        );
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let mut problems = Vec::new();
        if self.input.is_none() {
            problems.push("input: no panel file given".to_string());
        }
        if self.strategies.is_empty() {
            problems.push("strategies: must not be empty".into());
        }
        if self.in_sample_months == 0 {
            problems.push("in_sample_months: must be at least 1".into());
        }
        if self.step_months == 0 {
            problems.push("step_months: must be at least 1".into());
        }
        if !(self.tail_q > 0.0 && self.tail_q < 0.5) {
            problems.push(format!("tail_q: must lie in (0, 0.5), got {}", self.tail_q));
        }
        if self.grid_size < 2 {
            problems.push(format!(
                "grid_size: must be at least 2, got {}",
                self.grid_size
            ));
        }
        if !(0.0..1.0).contains(&self.support_threshold) {
            problems.push(format!(
                "support_threshold: must lie in [0, 1), got {}",
                self.support_threshold
            ));
        }
        if !self.epsilon.is_finite() {
            problems.push("epsilon: must be finite".into());
        }
        if !self.risk_free.is_finite() {
            problems.push("risk_free: must be finite".into());
        }
        if !(self.annualization > 0.0 && self.annualization.is_finite()) {
            problems.push(format!(
                "annualization: must be positive, got {}",
                self.annualization
            ));
        }
        if !self.delimiter.is_ascii() {
            problems.push(format!(
                "delimiter: must be a single ASCII character, got {:?}",
                self.delimiter
            ));
        }
        if !problems.is_empty() {
            bail!("invalid configuration:\n  {}", problems.join("\n  "));
        }
        Ok(())
    }

    pub fn input(&self) -> &Path {
        self.input.as_deref().expect("validated")
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            mode: self.mode,
            delimiter: self.delimiter as u8,
        }
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            tail_q: self.tail_q,
            grid_size: self.grid_size,
            support_threshold: self.support_threshold,
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            epsilon: self.epsilon,
            risk_free: self.risk_free,
            annualization: self.annualization,
        }
    }

    /// Requested strategies, deduplicated in request order.
    pub fn strategy_list(&self) -> Vec<Strategy> {
        let mut out: Vec<Strategy> = Vec::new();
        for s in &self.strategies {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }
}
