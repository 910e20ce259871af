//! Price ingestion and return computation.
//!
//! Input is a long-format CSV (`date,ticker,adj_close`) of daily adjusted
//! close prices. The panel keeps only tickers with a price on every date in
//! the file's date range, so no prices are ever fabricated. Returns are
//! simple per-period returns ΔS/S.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One trading year in periods. The per-period year fraction defaults to
/// 1/252 and is configurable everywhere it matters.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Default per-period year fraction.
pub fn default_dt() -> f64 {
    1.0 / TRADING_DAYS_PER_YEAR
}

/// Rectangular date × ticker grid of adjusted close prices.
#[derive(Debug, Clone)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    /// n_dates × n_tickers, strictly positive.
    prices: DMatrix<f64>,
    benchmark: Option<usize>,
}

impl PricePanel {
    /// Build a panel from aligned parts, validating the invariants.
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        prices: DMatrix<f64>,
        benchmark_ticker: Option<&str>,
    ) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != tickers.len() {
            return Err(Error::Dimension(format!(
                "price matrix is {}x{} for {} dates and {} tickers",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        if dates.is_empty() || tickers.is_empty() {
            return Err(Error::EmptyPanel);
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Data(format!(
                    "dates not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for (idx, &p) in prices.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                let row = idx % prices.nrows();
                let col = idx / prices.nrows();
                return Err(Error::Data(format!(
                    "non-positive price {} for {} on {}",
                    p, tickers[col], dates[row]
                )));
            }
        }
        let benchmark = match benchmark_ticker {
            Some(b) => Some(
                tickers
                    .iter()
                    .position(|t| t == b)
                    .ok_or_else(|| Error::Data(format!("benchmark ticker {b} not in panel")))?,
            ),
            None => None,
        };
        Ok(Self {
            dates,
            tickers,
            prices,
            benchmark,
        })
    }

    /// Load a long-format CSV with header `date,ticker,adj_close`.
    ///
    /// Tickers missing any date in the file's date range are dropped.
    pub fn load_csv(path: impl AsRef<Path>, benchmark: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Data(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file, benchmark)
    }

    /// Same as [`PricePanel::load_csv`] but from any reader.
    pub fn from_csv_reader<R: Read>(reader: R, benchmark: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let headers = rdr.headers()?;
            let expected = ["date", "ticker", "adj_close"];
            if headers.len() < 3 || headers.iter().take(3).zip(expected).any(|(h, e)| h != e) {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header date,ticker,adj_close, got {:?}", headers),
                });
            }
        }

        let mut per_ticker: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
        let mut all_dates: BTreeSet<NaiveDate> = BTreeSet::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() < 3 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 3 fields, got {}", record.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
                Error::Parse {
                    line,
                    msg: format!("bad date {:?}: {e}", &record[0]),
                }
            })?;
            let ticker = record[1].trim().to_string();
            if ticker.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty ticker".into(),
                });
            }
            let price: f64 = record[2].trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad price {:?}: {e}", &record[2]),
            })?;
            if !(price > 0.0) || !price.is_finite() {
                return Err(Error::Data(format!(
                    "non-positive price {price} for {ticker} on {date} (line {line})"
                )));
            }
            all_dates.insert(date);
            if per_ticker
                .entry(ticker.clone())
                .or_default()
                .insert(date, price)
                .is_some()
            {
                return Err(Error::Data(format!(
                    "duplicate entry for {ticker} on {date} (line {line})"
                )));
            }
        }

        let dates: Vec<NaiveDate> = all_dates.into_iter().collect();
        if dates.is_empty() {
            return Err(Error::EmptyPanel);
        }
        // Full-history filter: keep only tickers covering every date.
        let tickers: Vec<String> = per_ticker
            .iter()
            .filter(|(_, m)| m.len() == dates.len())
            .map(|(t, _)| t.clone())
            .collect();
        if tickers.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let prices = DMatrix::from_fn(dates.len(), tickers.len(), |i, j| {
            per_ticker[&tickers[j]][&dates[i]]
        });
        Self::new(dates, tickers, prices, benchmark)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn benchmark_index(&self) -> Option<usize> {
        self.benchmark
    }

    pub fn benchmark_ticker(&self) -> Option<&str> {
        self.benchmark.map(|i| self.tickers[i].as_str())
    }

    /// Simple returns prices[t+1]/prices[t] - 1.
    pub fn to_returns(&self, dt: f64) -> Result<ReturnsPanel> {
        if self.n_dates() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.n_dates(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let n = self.n_dates() - 1;
        let returns = DMatrix::from_fn(n, self.n_tickers(), |t, i| {
            self.prices[(t + 1, i)] / self.prices[(t, i)] - 1.0
        });
        Ok(ReturnsPanel {
            dates: self.dates[1..].to_vec(),
            tickers: self.tickers.clone(),
            returns,
            dt,
            benchmark: self.benchmark,
        })
    }
}

/// Per-period simple returns aligned to the panel, minus its first date.
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    /// (n_dates - 1) × n_tickers.
    returns: DMatrix<f64>,
    dt: f64,
    benchmark: Option<usize>,
}

impl ReturnsPanel {
    pub fn from_parts(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        returns: DMatrix<f64>,
        dt: f64,
        benchmark: Option<usize>,
    ) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != tickers.len() {
            return Err(Error::Dimension(format!(
                "returns matrix is {}x{} for {} dates and {} tickers",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            dates,
            tickers,
            returns,
            dt,
            benchmark,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn benchmark_index(&self) -> Option<usize> {
        self.benchmark
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.returns.column(i).into_owned()
    }

    /// Contiguous row window [start, start + len).
    pub fn window(&self, start: usize, len: usize) -> Result<ReturnsPanel> {
        if start + len > self.n_periods() {
            return Err(Error::Dimension(format!(
                "window [{start}, {}) exceeds {} periods",
                start + len,
                self.n_periods()
            )));
        }
        Ok(ReturnsPanel {
            dates: self.dates[start..start + len].to_vec(),
            tickers: self.tickers.clone(),
            returns: self.returns.rows(start, len).into_owned(),
            dt: self.dt,
            benchmark: self.benchmark,
        })
    }

    /// Panel restricted to the given column indices (in the given order).
    pub fn select_columns(&self, idx: &[usize]) -> Result<ReturnsPanel> {
        for &i in idx {
            if i >= self.n_tickers() {
                return Err(Error::Dimension(format!(
                    "column {i} out of range ({} tickers)",
                    self.n_tickers()
                )));
            }
        }
        let tickers: Vec<String> = idx.iter().map(|&i| self.tickers[i].clone()).collect();
        let returns = DMatrix::from_fn(self.n_periods(), idx.len(), |t, j| {
            self.returns[(t, idx[j])]
        });
        let benchmark = self
            .benchmark
            .and_then(|b| idx.iter().position(|&i| i == b));
        Ok(ReturnsPanel {
            dates: self.dates.clone(),
            tickers,
            returns,
            dt: self.dt,
            benchmark,
        })
    }

    /// Column indices of everything except the benchmark.
    pub fn non_benchmark_columns(&self) -> Vec<usize> {
        (0..self.n_tickers())
            .filter(|&i| Some(i) != self.benchmark)
            .collect()
    }

    /// Wide CSV: first column `date`, one column per ticker.
    pub fn write_wide_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        wtr.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.to_string()];
            for i in 0..self.n_tickers() {
                row.push(self.returns[(t, i)].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Output of the survivorship-bias regression.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SurvivorshipFit {
    /// Spurious drift in per-year units; subtracted from stock returns.
    pub alpha_b: f64,
    /// Slope of the principal factor on the benchmark.
    pub beta_b: f64,
}

/// Regress the principal-eigenportfolio returns on the benchmark returns and
/// subtract the fitted drift α_b·Δt from every stock return cell. The
/// benchmark column itself, when present in the panel, is left untouched.
pub fn survivorship_adjust(
    returns: &ReturnsPanel,
    principal_factor_returns: &[f64],
    benchmark_returns: &[f64],
) -> Result<(ReturnsPanel, SurvivorshipFit)> {
    let n = returns.n_periods();
    if principal_factor_returns.len() != n || benchmark_returns.len() != n {
        return Err(Error::Dimension(format!(
            "series lengths {} and {} do not match {} return periods",
            principal_factor_returns.len(),
            benchmark_returns.len(),
            n
        )));
    }
    let mean_b = benchmark_returns.iter().sum::<f64>() / n as f64;
    let var_b = benchmark_returns
        .iter()
        .map(|x| (x - mean_b).powi(2))
        .sum::<f64>();
    if var_b < 1e-24 {
        return Err(Error::DegenerateSeries(
            "benchmark returns have zero variance".into(),
        ));
    }

    // y_t = α_b·Δt + β_b·x_t with the constant column equal to Δt, so the
    // first coefficient comes out directly in per-year units.
    let dt = returns.dt();
    let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { dt } else { benchmark_returns[t] });
    let y = DVector::from_column_slice(principal_factor_returns);
    let fit = crate::linalg::ols(&x, &y)?;
    let alpha_b = fit.coef[0];
    let beta_b = fit.coef[1];

    let mut adjusted = returns.returns.clone();
    for j in 0..returns.n_tickers() {
        if Some(j) == returns.benchmark {
            continue;
        }
        for t in 0..n {
            adjusted[(t, j)] -= alpha_b * dt;
        }
    }
    Ok((
        ReturnsPanel {
            dates: returns.dates.clone(),
            tickers: returns.tickers.clone(),
            returns: adjusted,
            dt,
            benchmark: returns.benchmark,
        },
        SurvivorshipFit { alpha_b, beta_b },
    ))
}
