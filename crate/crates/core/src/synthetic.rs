//! Seeded synthetic return panels: one equicorrelated block plus an
//! independent periphery, on a weekday calendar.

use chrono::{Datelike, Months, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market_data::ReturnPanel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticLength {
    /// Exactly this many weekdays.
    Days(usize),
    /// Every weekday in this many calendar months from the start date.
    Months(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub block_size: usize,
    /// Pairwise correlation inside the block, in [0, 1].
    pub block_rho: f64,
    pub independent: usize,
    pub length: SyntheticLength,
    pub daily_vol: f64,
    pub daily_drift: f64,
    pub seed: u64,
    pub start: NaiveDate,
}

impl SyntheticSpec {
    pub fn block(
        block_size: usize,
        block_rho: f64,
        independent: usize,
        days: usize,
        seed: u64,
    ) -> Self {
        Self {
            block_size,
            block_rho,
            independent,
            length: SyntheticLength::Days(days),
            daily_vol: 0.01,
            daily_drift: 2e-4,
            seed,
            start: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
        }
    }

    pub fn with_months(mut self, months: u32) -> Self {
        self.length = SyntheticLength::Months(months);
        self
    }

    pub fn n_assets(&self) -> usize {
        self.block_size + self.independent
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets() < 2 {
            return Err(Error::param("block", "need at least two assets in total"));
        }
        if !(0.0..=1.0).contains(&self.block_rho) {
            return Err(Error::param(
                "block_rho",
                format!("must lie in [0, 1], got {}", self.block_rho),
            ));
        }
        if !(self.daily_vol > 0.0 && self.daily_vol.is_finite()) {
            return Err(Error::param("daily_vol", "must be positive"));
        }
        if !self.daily_drift.is_finite() {
            return Err(Error::param("daily_drift", "must be finite"));
        }
        match self.length {
            SyntheticLength::Days(d) if d < 2 => {
                Err(Error::param("length", "need at least 2 days"))
            }
            SyntheticLength::Months(0) => Err(Error::param("length", "need at least 1 month")),
            _ => Ok(()),
        }
    }

    /// Asset ids: `B01..` for the block, `P01..` for the periphery.
    pub fn asset_names(&self) -> Vec<String> {
        (1..=self.block_size)
            .map(|i| format!("B{i:02}"))
            .chain((1..=self.independent).map(|i| format!("P{i:02}")))
            .collect()
    }

    fn dates(&self) -> Result<Vec<NaiveDate>> {
        let is_weekday = |d: &NaiveDate| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun);
        let days = self.start.iter_days().filter(is_weekday);
        let dates: Vec<NaiveDate> = match self.length {
            SyntheticLength::Days(n) => days.take(n).collect(),
            SyntheticLength::Months(m) => {
                let end = self
                    .start
                    .checked_add_months(Months::new(m))
                    .ok_or_else(|| Error::param("length", "month count overflows the calendar"))?;
                days.take_while(|d| *d < end).collect()
            }
        };
        Ok(dates)
    }
}

pub fn generate<T: Scalar>(spec: &SyntheticSpec) -> Result<ReturnPanel<T>> {
    spec.validate()?;
    let dates = spec.dates()?;
    let n = spec.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let load = spec.block_rho.sqrt();
    let idio = (1.0 - spec.block_rho).sqrt();
    let mut data = Vec::with_capacity(dates.len() * n);
    for _ in &dates {
        let factor: f64 = StandardNormal.sample(&mut rng);
        for j in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let z = if j < spec.block_size {
                load * factor + idio * eps
            } else {
                eps
            };
            data.push(T::lit(spec.daily_drift + spec.daily_vol * z));
        }
    }
    let returns = Matrix::from_row_major(dates.len(), n, data);
    ReturnPanel::new(dates, spec.asset_names(), returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::pearson_matrix;
    use crate::market_data::{month_starts, read_panel, write_panel, LoadOptions};

    #[test]
    fn block_correlation_recovered() {
        let panel = generate::<f64>(&SyntheticSpec::block(5, 0.9, 5, 1000, 1)).unwrap();
        let dep = pearson_matrix(panel.returns()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!((0.85..=0.95).contains(&dep.weight(i, j)));
                }
            }
            for j in 5..10 {
                assert!(dep.weight(i, j).abs() < 0.1);
            }
        }
    }

    #[test]
    fn independent_spec_is_uncorrelated() {
        let panel = generate::<f64>(&SyntheticSpec::block(0, 0.0, 6, 1000, 2)).unwrap();
        let dep = pearson_matrix(panel.returns()).unwrap();
        assert!(dep.weights().as_slice().iter().all(|w| w.abs() < 0.1));
    }

    #[test]
    fn same_seed_same_text() {
        let spec = SyntheticSpec::block(2, 0.5, 2, 50, 9);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_panel(&generate::<f64>(&spec).unwrap(), &mut a, b',').unwrap();
        write_panel(&generate::<f64>(&spec).unwrap(), &mut b, b',').unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn month_length_covers_calendar_months() {
        let panel =
            generate::<f64>(&SyntheticSpec::block(2, 0.5, 2, 0, 3).with_months(36)).unwrap();
        assert_eq!(month_starts(panel.dates()).len(), 36);
    }

    #[test]
    fn export_reload_is_bit_exact() {
        let panel = generate::<f64>(&SyntheticSpec::block(3, 0.3, 2, 120, 4)).unwrap();
        let mut text = Vec::new();
        write_panel(&panel, &mut text, b',').unwrap();
        let back = read_panel::<f64, _>(text.as_slice(), LoadOptions::default()).unwrap();
        assert_eq!(back.panel, panel);
        assert!(back.dropped.is_empty());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate::<f64>(&SyntheticSpec::block(1, 0.5, 0, 100, 0)).is_err());
        assert!(generate::<f64>(&SyntheticSpec::block(3, 1.5, 2, 100, 0)).is_err());
        assert!(generate::<f64>(&SyntheticSpec::block(3, 0.5, 2, 1, 0)).is_err());
    }
}
