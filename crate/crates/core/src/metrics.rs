//! Out-of-sample performance statistics and the per-strategy summary table.

use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};

use crate::backtest::BacktestReport;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats;
use crate::strategies::Strategy;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Omega threshold ε on daily returns.
    pub epsilon: f64,
    /// Annual risk-free rate μ_f.
    pub risk_free: f64,
    /// Periods per year used to annualize mean and standard deviation.
    pub annualization: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            risk_free: 0.0,
            annualization: TRADING_DAYS,
        }
    }
}

fn zero_spread<T: Scalar>(xs: &[T], sd: T) -> bool {
    sd == T::zero() || stats::is_degenerate_spread(xs, sd)
}

/// (μ − μ_f)/σ on annualized quantities, from daily returns and a daily
/// risk-free rate. `None` when the mean excess return is not positive.
pub fn sharpe<T: Scalar>(returns: &[T], risk_free: T, annualization: f64) -> Result<Option<T>> {
    if returns.len() < 2 {
        return Err(Error::param(
            "returns",
            "Sharpe ratio needs at least 2 observations",
        ));
    }
    let sd = stats::sample_variance(returns).sqrt();
    if zero_spread(returns, sd) {
        return Err(Error::Undefined(
            "Sharpe ratio of a series with zero standard deviation",
        ));
    }
    let a = T::lit(annualization);
    let excess = a * stats::mean(returns) - a * risk_free;
    if excess <= T::zero() {
        return Ok(None);
    }
    Ok(Some(excess / (sd * a.sqrt())))
}

/// Why an information ratio could not be formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IrAbsence {
    /// Active returns are identically zero.
    MatchesBenchmark,
    /// Active returns are a positive constant.
    DominatesBenchmark,
    /// Active returns are a negative constant.
    TrailsBenchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoRatio<T> {
    Defined(T),
    Absent(IrAbsence),
}

impl<T: Copy> InfoRatio<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Self::Defined(v) => Some(*v),
            Self::Absent(_) => None,
        }
    }
}

/// mean(δ)/σ(δ) with δ = r − r_benchmark and population σ.
pub fn information_ratio<T: Scalar>(returns: &[T], benchmark: &[T]) -> Result<InfoRatio<T>> {
    if returns.len() != benchmark.len() {
        return Err(Error::LengthMismatch {
            left: returns.len(),
            right: benchmark.len(),
        });
    }
    if returns.is_empty() {
        return Err(Error::param("returns", "empty series"));
    }
    let delta: Vec<T> = returns
        .iter()
        .zip(benchmark)
        .map(|(&a, &b)| a - b)
        .collect();
    let mean = stats::mean(&delta);
    let sd = stats::population_stdev(&delta);
    if zero_spread(&delta, sd) {
        let reason = if delta.iter().all(|d| *d == T::zero()) {
            IrAbsence::MatchesBenchmark
        } else if mean > T::zero() {
            IrAbsence::DominatesBenchmark
        } else {
            IrAbsence::TrailsBenchmark
        };
        return Ok(InfoRatio::Absent(reason));
    }
    Ok(InfoRatio::Defined(mean / sd))
}

/// E(r − ε)⁺ / E(ε − r)⁺. Infinite when no return falls below ε.
pub fn omega<T: Scalar>(returns: &[T], epsilon: T) -> Result<T> {
    if returns.is_empty() {
        return Err(Error::param("returns", "Omega ratio of an empty series"));
    }
    let (mut gains, mut losses) = (T::zero(), T::zero());
    for &r in returns {
        gains += (r - epsilon).max(T::zero());
        losses += (epsilon - r).max(T::zero());
    }
    let n = T::from_count(returns.len());
    let (gains, losses) = (gains / n, losses / n);
    if losses == T::zero() {
        if gains == T::zero() {
            return Err(Error::Undefined(
                "Omega ratio of a series equal to the threshold",
            ));
        }
        return Ok(T::infinity());
    }
    Ok(gains / losses)
}

/// Population skewness m₃/m₂^{3/2}; `None` for a constant series.
pub fn skewness<T: Scalar>(returns: &[T]) -> Option<T> {
    let m2 = stats::central_moment(returns, 2);
    (m2 > T::zero()).then(|| stats::central_moment(returns, 3) / m2.powf(T::lit(1.5)))
}

/// Raw (non-excess) population kurtosis m₄/m₂²; `None` for a constant series.
pub fn kurtosis<T: Scalar>(returns: &[T]) -> Option<T> {
    let m2 = stats::central_moment(returns, 2);
    (m2 > T::zero()).then(|| stats::central_moment(returns, 4) / (m2 * m2))
}

fn serialize_extended<T: Scalar + Serialize, S: Serializer>(
    v: &Option<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str(if *x > T::zero() { "inf" } else { "-inf" }),
        Some(x) => x.serialize(s),
        None => s.serialize_none(),
    }
}

/// One summary row: annualized moments, shape statistics and the three ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceSummary<T: Scalar + Serialize> {
    pub strategy: Strategy,
    pub mean_annual: T,
    pub stdev_annual: T,
    pub skewness: Option<T>,
    pub kurtosis: Option<T>,
    pub sharpe: Option<T>,
    #[serde(serialize_with = "serialize_extended")]
    pub omega: Option<T>,
    pub information_ratio: Option<T>,
    pub information_ratio_absence: Option<IrAbsence>,
}

pub fn summarize<T: Scalar + Serialize>(
    report: &BacktestReport<T>,
    benchmark: &BacktestReport<T>,
    config: &MetricsConfig,
) -> Result<PerformanceSummary<T>> {
    if report.oos_dates != benchmark.oos_dates {
        return Err(Error::param(
            "benchmark",
            "reports do not share the same window plan",
        ));
    }
    let r = &report.oos_returns;
    if r.len() < 2 {
        return Err(Error::param(
            "returns",
            "need at least 2 out-of-sample observations",
        ));
    }
    let a = T::lit(config.annualization);
    let mean_annual = stats::mean(r) * a;
    let stdev_annual = stats::sample_variance(r).sqrt() * a.sqrt();
    let daily_rf = T::lit(config.risk_free / config.annualization);
    let sharpe = match sharpe(r, daily_rf, config.annualization) {
        Ok(v) => v,
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let omega = match omega(r, T::lit(config.epsilon)) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let ir = information_ratio(r, &benchmark.oos_returns)?;
    Ok(PerformanceSummary {
        strategy: report.strategy,
        mean_annual,
        stdev_annual,
        skewness: skewness(r),
        kurtosis: kurtosis(r),
        sharpe,
        omega,
        information_ratio: ir.value(),
        information_ratio_absence: match ir {
            InfoRatio::Absent(reason) => Some(reason),
            InfoRatio::Defined(_) => None,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentConventions {
    pub variance: &'static str,
    pub higher_moments: &'static str,
    pub kurtosis: &'static str,
    pub information_ratio: &'static str,
    pub annualization: f64,
    pub epsilon: f64,
    pub risk_free_annual: f64,
}

impl MomentConventions {
    pub fn new(config: &MetricsConfig) -> Self {
        Self {
            variance: "sample (1/(T-1))",
            higher_moments: "population (1/T)",
            kurtosis: "raw (non-excess)",
            information_ratio: "daily, population standard deviation of active returns",
            annualization: config.annualization,
            epsilon: config.epsilon,
            risk_free_annual: config.risk_free,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryTable<T: Scalar + Serialize> {
    pub conventions: MomentConventions,
    pub benchmark: Strategy,
    pub rows: Vec<PerformanceSummary<T>>,
}

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "strategy",
    "mean_annual",
    "stdev_annual",
    "skewness",
    "kurtosis",
    "sharpe",
    "omega",
    "information_ratio",
];

impl<T: Scalar + Serialize> SummaryTable<T> {
    pub fn build(
        reports: &[&BacktestReport<T>],
        benchmark: &BacktestReport<T>,
        config: &MetricsConfig,
    ) -> Result<Self> {
        let rows = reports
            .iter()
            .map(|r| summarize(r, benchmark, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            conventions: MomentConventions::new(config),
            benchmark: benchmark.strategy,
            rows,
        })
    }

    /// Delimited table, one row per strategy, empty cells for absent values.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let cell = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(SUMMARY_COLUMNS)?;
        for row in &self.rows {
            wtr.write_record([
                row.strategy.label().to_string(),
                row.mean_annual.to_string(),
                row.stdev_annual.to_string(),
                cell(row.skewness),
                cell(row.kurtosis),
                cell(row.sharpe),
                cell(row.omega),
                cell(row.information_ratio),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<summary writer>", e))?;
        Ok(())
    }
}
