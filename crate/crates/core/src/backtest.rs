//! Rolling-window backtest: estimate on each in-sample range, hold the
//! weights buy-and-hold through the following out-of-sample range.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market_data::{ReturnPanel, WindowPlan};
use crate::scalar::Scalar;
use crate::strategies::{self, Strategy, StrategyConfig};

/// Normalized Herfindahl index (xᵀx − 1/N)/(1 − 1/N), clamped to [0, 1].
///
/// Evaluated as Σ(x_i − 1/N)² / (1 − 1/N), which equals the textbook form on
/// the simplex and is exactly zero for equal weights.
pub fn herfindahl<T: Scalar>(weights: &[T]) -> Result<T> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::param(
            "weights",
            "Herfindahl index needs at least 2 assets",
        ));
    }
    let inv_n = T::one() / T::from_count(n);
    let dispersion = weights
        .iter()
        .fold(T::zero(), |acc, &w| acc + (w - inv_n) * (w - inv_n));
    Ok((dispersion / (T::one() - inv_n))
        .max(T::zero())
        .min(T::one()))
}

/// θ = Σ |x_i − x_i⁻|
pub fn turnover<T: Scalar>(current: &[T], previous: &[T]) -> Result<T> {
    if current.len() != previous.len() {
        return Err(Error::LengthMismatch {
            left: current.len(),
            right: previous.len(),
        });
    }
    Ok(current
        .iter()
        .zip(previous)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs()))
}

/// Daily log returns of a buy-and-hold position started with `weights`.
/// Member log returns become simple returns, are combined with the drifting
/// weights, and the result is converted back to a log return.
pub fn buy_and_hold<T: Scalar>(weights: &[T], returns: &Matrix<T>) -> Vec<T> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(returns.rows());
    for t in 0..returns.rows() {
        let simple: Vec<T> = returns.row(t).iter().map(|r| r.exp_m1()).collect();
        let port = w
            .iter()
            .zip(&simple)
            .fold(T::zero(), |acc, (&wi, &si)| acc + wi * si);
        out.push(port.ln_1p());
        let gross = T::one() + port;
        for (wi, &si) in w.iter_mut().zip(&simple) {
            *wi = *wi * (T::one() + si) / gross;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord<T> {
    pub window_id: usize,
    pub in_sample_start: NaiveDate,
    pub in_sample_end: NaiveDate,
    pub out_of_sample_start: NaiveDate,
    pub out_of_sample_end: NaiveDate,
    pub weights: Vec<T>,
    pub support_size: usize,
    pub herfindahl: T,
    /// Absent for the first window.
    pub turnover: Option<T>,
    /// Mean integrated clustering; network strategies only.
    pub avg_clustering: Option<T>,
    /// Sum of the window's daily out-of-sample log returns.
    pub out_of_sample_return: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport<T> {
    pub strategy: Strategy,
    pub assets: Vec<String>,
    pub config: StrategyConfig,
    pub per_window: Vec<WindowRecord<T>>,
    pub oos_dates: Vec<NaiveDate>,
    pub oos_returns: Vec<T>,
    /// Growth of one unit invested at the start of the first out-of-sample range.
    pub cumulative_value: Vec<T>,
}

impl<T: Scalar + Serialize> BacktestReport<T> {
    /// Mean turnover over windows that have a predecessor.
    pub fn mean_turnover(&self) -> Option<T> {
        let values: Vec<T> = self.per_window.iter().filter_map(|w| w.turnover).collect();
        (!values.is_empty()).then(|| crate::stats::mean(&values))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn name_assets(err: Error, assets: &[String]) -> Error {
    match err {
        Error::ZeroVariance { asset } => {
            let named = asset
                .strip_prefix("column ")
                .and_then(|c| c.parse::<usize>().ok())
                .and_then(|c| assets.get(c))
                .cloned()
                .unwrap_or(asset);
            Error::ZeroVariance { asset: named }
        }
        other => other,
    }
}

pub fn run_backtest<T: Scalar + Serialize>(
    panel: &ReturnPanel<T>,
    plan: &WindowPlan,
    strategy: Strategy,
    config: &StrategyConfig,
) -> Result<BacktestReport<T>> {
    if plan.is_empty() {
        return Err(Error::param("plan", "no windows"));
    }
    if let Some(w) = plan
        .windows
        .iter()
        .find(|w| w.out_of_sample.end > panel.n_dates())
    {
        return Err(Error::param(
            "plan",
            format!("window {} exceeds the panel", w.id),
        ));
    }
    let dates = panel.dates();
    let mut records: Vec<(WindowRecord<T>, Vec<T>)> = plan
        .windows
        .par_iter()
        .map(|w| {
            let in_sample = panel.window_returns(w.in_sample.clone());
            let alloc = strategies::allocate(strategy, &in_sample, w.id, config).map_err(|e| {
                Error::Window {
                    window_id: w.id,
                    source: Box::new(name_assets(e, panel.assets())),
                }
            })?;
            let weights = alloc.portfolio.weights;
            let daily = buy_and_hold(&weights, &panel.window_returns(w.out_of_sample.clone()));
            let record = WindowRecord {
                window_id: w.id,
                in_sample_start: dates[w.in_sample.start],
                in_sample_end: dates[w.in_sample.end - 1],
                out_of_sample_start: dates[w.out_of_sample.start],
                out_of_sample_end: dates[w.out_of_sample.end - 1],
                herfindahl: herfindahl(&weights)?,
                support_size: alloc.portfolio.support_size,
                weights,
                turnover: None,
                avg_clustering: alloc.profile.map(|p| p.average()),
                out_of_sample_return: daily.iter().fold(T::zero(), |a, &b| a + b),
            };
            Ok((record, daily))
        })
        .collect::<Result<Vec<_>>>()?;

    // turnover couples consecutive windows, so it runs after all weights exist
    for i in 1..records.len() {
        let theta = turnover(&records[i].0.weights, &records[i - 1].0.weights)?;
        records[i].0.turnover = Some(theta);
    }

    let mut oos_dates = Vec::with_capacity(plan.out_of_sample_len());
    let mut oos_returns = Vec::with_capacity(plan.out_of_sample_len());
    let mut per_window = Vec::with_capacity(records.len());
    for (w, (record, daily)) in plan.windows.iter().zip(records) {
        oos_dates.extend_from_slice(&dates[w.out_of_sample.clone()]);
        oos_returns.extend(daily);
        per_window.push(record);
    }
    let mut log_value = T::zero();
    let cumulative_value = oos_returns
        .iter()
        .map(|&r| {
            log_value += r;
            log_value.exp()
        })
        .collect();
    Ok(BacktestReport {
        strategy,
        assets: panel.assets().to_vec(),
        config: *config,
        per_window,
        oos_dates,
        oos_returns,
        cumulative_value,
    })
}

/// Per-window series available for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMetric {
    Turnover,
    Herfindahl,
    AvgClustering,
    OutOfSampleReturn,
}

impl WindowMetric {
    fn value<T: Scalar>(self, w: &WindowRecord<T>) -> Option<T> {
        match self {
            Self::Turnover => w.turnover,
            Self::Herfindahl => Some(w.herfindahl),
            Self::AvgClustering => w.avg_clustering,
            Self::OutOfSampleReturn => Some(w.out_of_sample_return),
        }
    }
}

fn check_aligned<T>(reports: &[&BacktestReport<T>]) -> Result<()> {
    let first = reports
        .first()
        .ok_or_else(|| Error::param("reports", "nothing to write"))?;
    for r in reports {
        if r.oos_dates != first.oos_dates || r.per_window.len() != first.per_window.len() {
            return Err(Error::param(
                "reports",
                "reports do not share a window plan",
            ));
        }
    }
    Ok(())
}

fn opt_cell<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `window_id,out_of_sample_start,<strategy>...` with empty cells for absent values.
pub fn write_window_metric<T: Scalar, W: Write>(
    reports: &[&BacktestReport<T>],
    metric: WindowMetric,
    writer: W,
) -> Result<()> {
    check_aligned(reports)?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["window_id".to_string(), "out_of_sample_start".into()];
    header.extend(reports.iter().map(|r| r.strategy.as_str().to_string()));
    wtr.write_record(&header)?;
    for (i, w) in reports[0].per_window.iter().enumerate() {
        let mut rec = vec![w.window_id.to_string(), w.out_of_sample_start.to_string()];
        rec.extend(
            reports
                .iter()
                .map(|r| opt_cell(metric.value(&r.per_window[i]))),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<series writer>", e))?;
    Ok(())
}

/// Daily series per strategy: either the log returns or the cumulative value.
pub fn write_daily_series<T: Scalar, W: Write>(
    reports: &[&BacktestReport<T>],
    cumulative: bool,
    writer: W,
) -> Result<()> {
    check_aligned(reports)?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(reports.iter().map(|r| r.strategy.as_str().to_string()));
    wtr.write_record(&header)?;
    for (t, date) in reports[0].oos_dates.iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(reports.iter().map(|r| {
            if cumulative {
                r.cumulative_value[t].to_string()
            } else {
                r.oos_returns[t].to_string()
            }
        }));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<series writer>", e))?;
    Ok(())
}
