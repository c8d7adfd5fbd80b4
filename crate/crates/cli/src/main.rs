mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use netfolio::backtest::{write_daily_series, write_window_metric, WindowMetric};
use netfolio::market_data::{save_panel, LoadedPanel};
use netfolio::netstructure::{write_edge_table, write_node_table};
use netfolio::strategies::network_portfolio;
use netfolio::synthetic::SyntheticLength;
use netfolio::{
    allocate, generate, load_panel, plan_windows, run_backtest, BacktestReport, DependenceKind,
    Strategy, SummaryTable, SyntheticSpec,
};

use config::{RunArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "netfolio",
    version,
    about = "Network-based portfolio selection and rolling backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rolling-window backtest of the selected strategies.
    Backtest(RunArgs),
    /// Node and edge tables of one window's dependence network.
    Snapshot(SnapshotArgs),
    /// Write a seeded block-correlated return panel.
    Synthetic(SyntheticArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WindowChoice {
    Index(usize),
    Last,
}

impl FromStr for WindowChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(Self::Last);
        }
        s.parse()
            .map(Self::Index)
            .map_err(|_| format!("expected a window index or \"last\", got {s:?}"))
    }
}

#[derive(Debug, Args)]
struct SnapshotArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Window index, counted from 0, or `last`.
    #[arg(long, env = "NETFOLIO_WINDOW", default_value = "last")]
    window: WindowChoice,
    /// Dependence measure for the edge weights and clustering column.
    #[arg(long, env = "NETFOLIO_KIND", default_value = "pearson")]
    kind: DependenceKind,
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    #[arg(long, env = "NETFOLIO_SEED")]
    seed: u64,
    /// Destination panel file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    block_size: usize,
    /// Pairwise correlation inside the block.
    #[arg(long, default_value_t = 0.9)]
    block_rho: f64,
    #[arg(long, default_value_t = 5)]
    independent: usize,
    /// Number of weekdays to generate.
    #[arg(long, default_value_t = 1000, conflicts_with = "months")]
    days: usize,
    /// Generate every weekday of this many calendar months instead.
    #[arg(long)]
    months: Option<u32>,
    #[arg(long, default_value_t = 0.01)]
    daily_vol: f64,
    #[arg(long, default_value_t = 2e-4)]
    daily_drift: f64,
    #[arg(long, default_value = "2001-01-01")]
    start: NaiveDate,
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Backtest(args) => args.resolve().and_then(|cfg| cmd_backtest(&cfg)),
        Command::Snapshot(args) => args
            .run
            .resolve()
            .and_then(|cfg| cmd_snapshot(&cfg, args.window, args.kind)),
        Command::Synthetic(args) => cmd_synthetic(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load(cfg: &RunConfig) -> anyhow::Result<LoadedPanel<f64>> {
    let loaded = load_panel::<f64>(cfg.input(), cfg.load_options())
        .with_context(|| format!("loading {}", cfg.input().display()))?;
    for asset in &loaded.dropped {
        eprintln!("dropped {asset}: missing observations");
    }
    Ok(loaded)
}

/// Files collected in memory and written only once every computation succeeded.
#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.0.push((name.into(), bytes));
    }

    fn add_json<S: Serialize>(&mut self, name: &str, value: &S) -> anyhow::Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.add(name, text);
        Ok(())
    }

    fn write_to(self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, bytes) in self.0 {
            let path = dir.join(&name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn cmd_backtest(cfg: &RunConfig) -> anyhow::Result<()> {
    let loaded = load(cfg)?;
    let panel = &loaded.panel;
    let plan = plan_windows(panel, cfg.in_sample_months, cfg.step_months)?;
    let requested = cfg.strategy_list();
    let mut to_run = requested.clone();
    if !to_run.contains(&cfg.benchmark) {
        to_run.push(cfg.benchmark);
    }
    let strategy_cfg = cfg.strategy_config();
    let reports = to_run
        .iter()
        .map(|&s| {
            run_backtest(panel, &plan, s, &strategy_cfg).with_context(|| format!("strategy {s}"))
        })
        .collect::<anyhow::Result<Vec<BacktestReport<f64>>>>()?;
    let benchmark = reports
        .iter()
        .find(|r| r.strategy == cfg.benchmark)
        .expect("benchmark was scheduled");
    let shown: Vec<&BacktestReport<f64>> = reports
        .iter()
        .filter(|r| requested.contains(&r.strategy))
        .collect();
    let summary = SummaryTable::build(&shown, benchmark, &cfg.metrics_config())?;

    let mut out = Outputs::default();
    out.add_json("config.json", cfg)?;
    if !loaded.dropped.is_empty() {
        out.add(
            "dropped_assets.txt",
            format!("{}\n", loaded.dropped.join("\n")).into_bytes(),
        );
    }
    for r in &shown {
        out.add(
            format!("report_{}.json", r.strategy.as_str()),
            format!("{}\n", r.to_json()?).into_bytes(),
        );
    }
    out.add_json("summary.json", &summary)?;
    let mut buf = Vec::new();
    summary.write_csv(&mut buf)?;
    out.add("summary.csv", buf);
    for (name, cumulative) in [("performance.csv", true), ("oos_returns.csv", false)] {
        let mut buf = Vec::new();
        write_daily_series(&shown, cumulative, &mut buf)?;
        out.add(name, buf);
    }
    for (name, metric) in [
        ("turnover.csv", WindowMetric::Turnover),
        ("herfindahl.csv", WindowMetric::Herfindahl),
        ("avg_clustering.csv", WindowMetric::AvgClustering),
        ("window_returns.csv", WindowMetric::OutOfSampleReturn),
    ] {
        let mut buf = Vec::new();
        write_window_metric(&shown, metric, &mut buf)?;
        out.add(name, buf);
    }
    out.write_to(&cfg.out_dir)?;
    eprintln!(
        "{} windows, {} strategies, outputs in {}",
        plan.len(),
        shown.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SnapshotEcho<'a> {
    config: &'a RunConfig,
    window_id: usize,
    kind: DependenceKind,
    in_sample_start: NaiveDate,
    in_sample_end: NaiveDate,
}

fn cmd_snapshot(cfg: &RunConfig, choice: WindowChoice, kind: DependenceKind) -> anyhow::Result<()> {
    let loaded = load(cfg)?;
    let panel = &loaded.panel;
    let plan = plan_windows(panel, cfg.in_sample_months, cfg.step_months)?;
    let window = match choice {
        WindowChoice::Last => plan.windows.last(),
        WindowChoice::Index(i) => plan.windows.get(i),
    };
    let Some(window) = window else {
        bail!(
            "window: index out of range, the plan has {} windows (0..{})",
            plan.len(),
            plan.len()
        );
    };
    let returns = panel.window_returns(window.in_sample.clone());
    let strategy_cfg = cfg.strategy_config();
    let net = network_portfolio(&returns, kind, window.id, &strategy_cfg)
        .with_context(|| format!("window {}", window.id))?;
    let mut weights = Vec::new();
    for s in cfg.strategy_list() {
        let w = if s == Strategy::for_kind(kind) {
            net.portfolio.weights.clone()
        } else {
            allocate(s, &returns, window.id, &strategy_cfg)
                .with_context(|| format!("window {} strategy {s}", window.id))?
                .portfolio
                .weights
        };
        weights.push((s.as_str().to_string(), w));
    }

    let mut out = Outputs::default();
    let dates = panel.dates();
    out.add_json(
        "snapshot.json",
        &SnapshotEcho {
            config: cfg,
            window_id: window.id,
            kind,
            in_sample_start: dates[window.in_sample.start],
            in_sample_end: dates[window.in_sample.end - 1],
        },
    )?;
    let mut nodes = Vec::new();
    write_node_table(
        &mut nodes,
        panel.assets(),
        &net.matrices.stdevs,
        &net.profile.per_asset,
        &weights,
    )?;
    out.add("nodes.csv", nodes);
    let mut edges = Vec::new();
    write_edge_table(&mut edges, panel.assets(), &net.dependence)?;
    out.add("edges.csv", edges);
    out.write_to(&cfg.out_dir)?;
    eprintln!(
        "window {} ({}) written to {}",
        window.id,
        kind.as_str(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_synthetic(args: &SyntheticArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        block_size: args.block_size,
        block_rho: args.block_rho,
        independent: args.independent,
        length: match args.months {
            Some(m) => SyntheticLength::Months(m),
            None => SyntheticLength::Days(args.days),
        },
        daily_vol: args.daily_vol,
        daily_drift: args.daily_drift,
        seed: args.seed,
        start: args.start,
    };
    let panel = generate::<f64>(&spec)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_panel(&panel, &args.output)?;
    eprintln!(
        "{} dates x {} assets written to {}",
        panel.n_dates(),
        panel.n_assets(),
        args.output.display()
    );
    Ok(())
}
