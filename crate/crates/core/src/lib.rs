//! Portfolio selection on dependence networks.
//!
//! Returns are turned into Pearson, Kendall or lower-tail dependence networks,
//! each asset's clustering is integrated over all thresholds, and the result
//! feeds a long-only quadratic program that trades variance against
//! interconnectedness. A rolling-window backtest compares the network
//! strategies with the global minimum variance and equal weight portfolios.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common case.
//!
//! ```
//! use netfolio::{generate, plan_windows, run_backtest, Strategy, StrategyConfig, SyntheticSpec};
//!
//! let panel = generate::<f64>(&SyntheticSpec::block(3, 0.9, 3, 0, 42).with_months(14))?;
//! let plan = plan_windows(&panel, 12, 1)?;
//! let report = run_backtest(&panel, &plan, Strategy::Pna, &StrategyConfig::default())?;
//! assert_eq!(report.per_window.len(), 2);
//! # Ok::<(), netfolio::Error>(())
//! ```

pub mod backtest;
pub mod dependence;
pub mod error;
pub mod linalg;
pub mod market_data;
pub mod metrics;
pub mod netstructure;
pub mod qp;
pub mod scalar;
pub mod stats;
pub mod strategies;
pub mod synthetic;

pub use backtest::{run_backtest, BacktestReport, WindowMetric, WindowRecord};
pub use dependence::{dependence_matrix, DependenceKind, DependenceMatrix};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use market_data::{
    load_panel, plan_windows, InputMode, LoadOptions, ReturnPanel, Window, WindowPlan,
};
pub use metrics::{MetricsConfig, PerformanceSummary, SummaryTable};
pub use netstructure::{
    integrated_clustering, ClusteringProfile, InterconnMatrices, ThresholdAdjacency,
};
pub use qp::{QpProblem, QpSolution, SolverOptions};
pub use scalar::Scalar;
pub use strategies::{allocate, Portfolio, Strategy, StrategyConfig};
pub use synthetic::{generate, SyntheticSpec};

pub type MatrixF64 = Matrix<f64>;
pub type ReturnPanelF64 = ReturnPanel<f64>;
pub type DependenceMatrixF64 = DependenceMatrix<f64>;
pub type ClusteringProfileF64 = ClusteringProfile<f64>;
pub type InterconnMatricesF64 = InterconnMatrices<f64>;
pub type QpProblemF64 = QpProblem<f64>;
pub type QpSolutionF64 = QpSolution<f64>;
pub type PortfolioF64 = Portfolio<f64>;
pub type BacktestReportF64 = BacktestReport<f64>;
pub type PerformanceSummaryF64 = PerformanceSummary<f64>;
