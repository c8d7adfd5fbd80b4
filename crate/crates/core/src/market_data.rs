//! Return panels: ingestion from delimited text, export, and rolling window plans.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// How the numeric cells of an input file are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Price levels; converted to daily log returns.
    Prices,
    /// Daily log returns, used as-is.
    #[default]
    Returns,
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prices" => Ok(Self::Prices),
            "returns" => Ok(Self::Returns),
            other => Err(Error::param(
                "mode",
                format!("expected prices or returns, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub mode: InputMode,
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            mode: InputMode::Returns,
            delimiter: b',',
        }
    }
}

/// Date-indexed T×N matrix of daily log returns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnPanel<T> {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: Matrix<T>,
}

impl<T: Scalar> ReturnPanel<T> {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, returns: Matrix<T>) -> Result<Self> {
        if assets.len() < 2 {
            return Err(Error::TooFewAssets {
                remaining: assets.len(),
            });
        }
        if dates.len() < 2 {
            return Err(Error::InvalidPanel(format!(
                "need at least 2 dates, got {}",
                dates.len()
            )));
        }
        if returns.rows() != dates.len() || returns.cols() != assets.len() {
            return Err(Error::InvalidPanel(format!(
                "matrix is {}x{} but there are {} dates and {} assets",
                returns.rows(),
                returns.cols(),
                dates.len(),
                assets.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPanel(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if returns.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("non-finite return".into()));
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &Matrix<T> {
        &self.returns
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    /// Rows `range` of the return matrix.
    pub fn window_returns(&self, range: Range<usize>) -> Matrix<T> {
        self.returns.row_slice(range)
    }

    /// Panel with one observation replaced. Used for look-ahead mutation tests.
    pub fn with_value(&self, t: usize, asset: usize, value: T) -> Result<Self> {
        let mut returns = self.returns.clone();
        returns[(t, asset)] = value;
        Self::new(self.dates.clone(), self.assets.clone(), returns)
    }

    /// Panel restricted to (and reordered by) the given asset columns.
    pub fn select_assets(&self, columns: &[usize]) -> Result<Self> {
        Self::new(
            self.dates.clone(),
            columns.iter().map(|&c| self.assets[c].clone()).collect(),
            self.returns.select_columns(columns),
        )
    }
}

/// A loaded panel plus the assets removed because of missing observations.
#[derive(Debug, Clone)]
pub struct LoadedPanel<T> {
    pub panel: ReturnPanel<T>,
    pub dropped: Vec<String>,
}

pub fn load_panel<T: Scalar>(
    path: impl AsRef<Path>,
    options: LoadOptions,
) -> Result<LoadedPanel<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, options)
}

/// Parses a panel from delimited text: header `date,<asset>...`, ISO dates,
/// empty cells treated as missing.
pub fn read_panel<T: Scalar, R: Read>(reader: R, options: LoadOptions) -> Result<LoadedPanel<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::InvalidPanel(
            "header must be `date` followed by at least two asset columns".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();

    let mut rows: Vec<(NaiveDate, Vec<Option<T>>)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = idx + 2;
        let date =
            NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|e| Error::Parse {
                row: row_no,
                column: "date".into(),
                message: format!("{:?}: {e}", &record[0]),
            })?;
        let mut cells = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            let value: T = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: names[j].clone(),
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: names[j].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            cells.push(Some(value));
        }
        rows.push((date, cells));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidPanel(format!("duplicate date {}", w[0].0)));
    }

    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        (0..names.len()).partition(|&j| rows.iter().all(|(_, cells)| cells[j].is_some()));
    let dropped: Vec<String> = dropped.into_iter().map(|j| names[j].clone()).collect();
    if kept.len() < 2 {
        return Err(Error::TooFewAssets {
            remaining: kept.len(),
        });
    }
    let assets: Vec<String> = kept.iter().map(|&j| names[j].clone()).collect();
    let value = |t: usize, j: usize| rows[t].1[kept[j]].expect("complete column");

    let (dates, returns) = match options.mode {
        InputMode::Returns => {
            let dates = rows.iter().map(|(d, _)| *d).collect::<Vec<_>>();
            let m = Matrix::from_fn(rows.len(), kept.len(), value);
            (dates, m)
        }
        InputMode::Prices => {
            for (t, (date, _)) in rows.iter().enumerate() {
                for (j, asset) in assets.iter().enumerate() {
                    let p = value(t, j);
                    if p.is_nan() || p <= T::zero() {
                        return Err(Error::NonPositivePrice {
                            asset: asset.clone(),
                            date: date.to_string(),
                            value: p.as_f64(),
                        });
                    }
                }
            }
            if rows.len() < 2 {
                return Err(Error::InvalidPanel("need at least 2 prices".into()));
            }
            let dates = rows.iter().skip(1).map(|(d, _)| *d).collect::<Vec<_>>();
            let m = Matrix::from_fn(rows.len() - 1, kept.len(), |t, j| {
                (value(t + 1, j) / value(t, j)).ln()
            });
            (dates, m)
        }
    };
    let panel = ReturnPanel::new(dates, assets, returns)?;
    Ok(LoadedPanel { panel, dropped })
}

/// Writes the panel as returns-mode delimited text at full precision.
pub fn write_panel<T: Scalar, W: Write>(
    panel: &ReturnPanel<T>,
    writer: W,
    delimiter: u8,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets.iter().cloned());
    wtr.write_record(&header)?;
    for (t, date) in panel.dates.iter().enumerate() {
        let mut record = vec![date.format(DATE_FORMAT).to_string()];
        record.extend(panel.returns.row(t).iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}

pub fn save_panel<T: Scalar>(panel: &ReturnPanel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_panel(panel, file, b',')
}

/// One in-sample/out-of-sample pair of row ranges into the panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Window {
    pub id: usize,
    pub in_sample: Range<usize>,
    pub out_of_sample: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowPlan {
    pub in_sample_months: usize,
    pub step_months: usize,
    pub windows: Vec<Window>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Total number of out-of-sample observations across all windows.
    pub fn out_of_sample_len(&self) -> usize {
        self.windows.iter().map(|w| w.out_of_sample.len()).sum()
    }
}

/// Row indices where a new (year, month) begins. The first row always starts a month.
pub fn month_starts(dates: &[NaiveDate]) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut current = None;
    for (i, d) in dates.iter().enumerate() {
        let key = (d.year(), d.month());
        if current != Some(key) {
            starts.push(i);
            current = Some(key);
        }
    }
    starts
}

/// Rolling windows of `n_months` in-sample calendar months followed by
/// `h_months` out-of-sample months, advancing `h_months` at a time.
pub fn plan_windows<T: Scalar>(
    panel: &ReturnPanel<T>,
    n_months: usize,
    h_months: usize,
) -> Result<WindowPlan> {
    if n_months == 0 {
        return Err(Error::param("in_sample_months", "must be at least 1"));
    }
    if h_months == 0 {
        return Err(Error::param("step_months", "must be at least 1"));
    }
    let starts = month_starts(panel.dates());
    let months = starts.len();
    if months < n_months + h_months {
        return Err(Error::PanelTooShort {
            available: months,
            in_sample_months: n_months,
            step_months: h_months,
        });
    }
    let boundary = |m: usize| starts.get(m).copied().unwrap_or(panel.n_dates());
    let count = (months - n_months - h_months) / h_months + 1;
    let windows = (0..count)
        .map(|w| {
            let first = w * h_months;
            Window {
                id: w,
                in_sample: boundary(first)..boundary(first + n_months),
                out_of_sample: boundary(first + n_months)..boundary(first + n_months + h_months),
            }
        })
        .collect();
    Ok(WindowPlan {
        in_sample_months: n_months,
        step_months: h_months,
        windows,
    })
}
