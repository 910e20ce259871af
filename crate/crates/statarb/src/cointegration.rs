//! Co-integration screening: regress stock returns on factor returns, build
//! the cumulative-residual spread Z, test it for stationarity with an
//! augmented Dickey-Fuller test, and estimate the Ornstein-Uhlenbeck
//! parameters (θ̂, δ̂) of the spread.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::marketdata::TRADING_DAYS_PER_YEAR;

/// Per-stock regression of returns on factor returns.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Intercept in per-year units (the regression intercept is α·Δt).
    pub alpha: f64,
    /// Factor loadings β^{ij}, length m.
    pub beta_row: DVector<f64>,
    /// Cumulative residual spread, length n_periods + 1, starts at zero.
    pub z_series: Vec<f64>,
    /// Per-period residual variance (SSR over degrees of freedom).
    pub residual_variance: f64,
}

/// OLS of per-period stock returns on per-period factor returns with an
/// intercept; the spread is the cumulative sum of residuals.
pub fn fit_factor_regression(
    stock_returns: &[f64],
    factor_returns: &DMatrix<f64>,
    dt: f64,
) -> Result<RegressionFit> {
    let n = stock_returns.len();
    let m = factor_returns.ncols();
    if factor_returns.nrows() != n {
        return Err(Error::Dimension(format!(
            "{} stock returns vs {} factor rows",
            n,
            factor_returns.nrows()
        )));
    }
    if n < m + 2 {
        return Err(Error::InsufficientData { needed: m + 2, got: n });
    }
    let x = DMatrix::from_fn(n, m + 1, |t, j| if j == 0 { 1.0 } else { factor_returns[(t, j - 1)] });
    let y = DVector::from_column_slice(stock_returns);
    let fit = crate::linalg::ols(&x, &y)?;

    let mut z_series = Vec::with_capacity(n + 1);
    z_series.push(0.0);
    let mut z = 0.0;
    for t in 0..n {
        z += fit.residuals[t];
        z_series.push(z);
    }
    Ok(RegressionFit {
        alpha: fit.coef[0] / dt,
        beta_row: fit.coef.rows(1, m).into_owned(),
        z_series,
        residual_variance: fit.sigma2,
    })
}

/// Augmented Dickey-Fuller test result.
#[derive(Debug, Clone, Copy)]
pub struct AdfResult {
    /// t-ratio of the level coefficient.
    pub stat: f64,
    /// MacKinnon response-surface p-value (constant-only specification).
    pub pvalue: f64,
    /// Lag order chosen by AIC.
    pub lag: usize,
}

/// Schwert's rule for the maximum ADF lag: floor(12 (n/100)^{1/4}).
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey-Fuller test with a constant and no trend:
/// Δz_t = c + φ z_{t-1} + Σ_{i=1..k} γ_i Δz_{t-i} + ε_t.
///
/// The lag k is chosen by AIC over 0..=max_lag on a common estimation
/// sample, then the statistic is computed from a refit at the chosen lag on
/// the longest sample available for it.
pub fn adf_test(z: &[f64], max_lag: Option<usize>) -> Result<AdfResult> {
    let n = z.len();
    let max_lag = max_lag.unwrap_or_else(|| schwert_max_lag(n));
    if n < max_lag + 10 {
        return Err(Error::InsufficientData {
            needed: max_lag + 10,
            got: n,
        });
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    if z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() < 1e-24 {
        return Err(Error::DegenerateSeries("constant series in ADF test".into()));
    }

    let dz: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();

    // Common sample across candidate lags: dependent observations are
    // dz[max_lag .. n-1].
    let rows = n - 1 - max_lag;
    if rows <= max_lag + 3 {
        return Err(Error::InsufficientData {
            needed: 2 * max_lag + 5,
            got: n,
        });
    }
    let k_cols = 2 + max_lag;
    let mut x_full = DMatrix::zeros(rows, k_cols);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        let t = max_lag + r; // dz index of the dependent observation
        y[r] = dz[t];
        x_full[(r, 0)] = 1.0;
        x_full[(r, 1)] = z[t]; // level lagged one step behind dz[t]
        for i in 1..=max_lag {
            x_full[(r, 1 + i)] = dz[t - i];
        }
    }
    let gram = x_full.transpose() * &x_full;
    let xty = x_full.transpose() * &y;
    let yty = y.dot(&y);

    let mut best: Option<(f64, usize)> = None;
    for k in 0..=max_lag {
        let cols = 2 + k;
        let g = gram.view((0, 0), (cols, cols)).into_owned();
        let c = xty.rows(0, cols).into_owned();
        let Some(chol) = nalgebra::Cholesky::new(g.clone()) else {
            continue;
        };
        let b = chol.solve(&c);
        let ssr = (yty - b.dot(&c)).max(0.0);
        if ssr < 1e-300 {
            return Err(Error::DegenerateSeries(
                "ADF regression has zero residual variance".into(),
            ));
        }
        let aic = rows as f64 * (ssr / rows as f64).ln() + 2.0 * cols as f64;
        if best.is_none_or(|(b_aic, _)| aic < b_aic - 1e-12) {
            best = Some((aic, k));
        }
    }
    let (_, lag) = best.ok_or_else(|| {
        Error::DegenerateSeries("every ADF candidate regression was singular".into())
    })?;

    // Refit at the chosen lag on its longest sample.
    let rows = n - 1 - lag;
    let cols = 2 + lag;
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for r in 0..rows {
        let t = lag + r;
        y[r] = dz[t];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = z[t];
        for i in 1..=lag {
            x[(r, 1 + i)] = dz[t - i];
        }
    }
    let fit = crate::linalg::ols(&x, &y).map_err(|e| match e {
        Error::Collinear(_) => Error::DegenerateSeries("singular ADF regression".into()),
        other => other,
    })?;
    if fit.se[1] <= 0.0 {
        return Err(Error::DegenerateSeries(
            "zero standard error on the ADF level coefficient".into(),
        ));
    }
    let stat = fit.coef[1] / fit.se[1];
    Ok(AdfResult {
        stat,
        pvalue: mackinnon_pvalue(stat),
        lag,
    })
}

// MacKinnon (1994) response-surface constants for the ADF t-statistic with a
// constant and no trend, single series. Published values, the same tables
// the common statistics packages embed.
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const TAU_SMALL_P: [f64; 3] = [2.1659, 1.4412, 3.8269e-2];
const TAU_LARGE_P: [f64; 4] = [1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2];

/// Approximate asymptotic p-value for the constant-only ADF statistic.
pub fn mackinnon_pvalue(stat: f64) -> f64 {
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let poly: &[f64] = if stat <= TAU_STAR { &TAU_SMALL_P } else { &TAU_LARGE_P };
    let mut acc = 0.0;
    for &c in poly.iter().rev() {
        acc = acc * stat + c;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.cdf(acc)
}

/// Ornstein-Uhlenbeck estimates from the lag-one autocorrelation of Z.
#[derive(Debug, Clone, Copy)]
pub struct OuEstimate {
    /// Stationary mean θ̂ (time-series average).
    pub theta: f64,
    /// Mean-reversion speed δ̂ per year; `None` when the autocorrelation
    /// ratio is non-positive and no real δ̂ exists (non-tradeable).
    pub delta: Option<f64>,
}

/// θ̂ = mean(z); δ̂ = -(1/Δt) ln( Σ (z_{t+1}-θ̂)(z_t-θ̂) / Σ (z_t-θ̂)² ).
pub fn estimate_ou(z: &[f64], dt: f64) -> Result<OuEstimate> {
    let n = z.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let theta = z.iter().sum::<f64>() / n as f64;
    let den: f64 = z.iter().map(|v| (v - theta).powi(2)).sum();
    if den < 1e-24 {
        return Err(Error::DegenerateSeries(
            "constant series in OU estimation".into(),
        ));
    }
    let num: f64 = z
        .windows(2)
        .map(|w| (w[1] - theta) * (w[0] - theta))
        .sum();
    let ratio = num / den;
    let delta = if ratio > 0.0 { Some(-ratio.ln() / dt) } else { None };
    Ok(OuEstimate { theta, delta })
}

/// Everything known about one ticker after screening.
#[derive(Debug, Clone)]
pub struct CointegrationFit {
    pub ticker: String,
    /// Per-year systematic drift α̂.
    pub alpha: f64,
    pub beta_row: DVector<f64>,
    /// Spread path, starts at zero.
    pub z_series: Vec<f64>,
    pub adf_stat: f64,
    pub adf_pvalue: f64,
    pub theta_hat: f64,
    /// Per-year mean-reversion speed; `None` marks a non-tradeable spread.
    pub delta_hat: Option<f64>,
    pub residual_variance: f64,
}

impl CointegrationFit {
    /// Co-integrated and mean-reverting at the given threshold.
    pub fn passes(&self, p_threshold: f64) -> bool {
        self.adf_pvalue <= p_threshold && self.delta_hat.is_some_and(|d| d > 0.0)
    }

    /// Characteristic mean-reversion horizon 252/δ̂ in trading days.
    pub fn reversion_days(&self) -> Option<f64> {
        self.delta_hat
            .filter(|&d| d > 0.0)
            .map(|d| TRADING_DAYS_PER_YEAR / d)
    }
}

/// Fit every ticker of a returns window against the factor series.
///
/// Tickers whose spread is degenerate (for example a stock that is exactly a
/// factor combination) cannot be co-integration candidates and are skipped.
pub fn screen(
    returns: &DMatrix<f64>,
    tickers: &[String],
    factor_returns: &DMatrix<f64>,
    dt: f64,
    max_lag: Option<usize>,
) -> Result<Vec<CointegrationFit>> {
    if returns.ncols() != tickers.len() {
        return Err(Error::Dimension(format!(
            "{} return columns vs {} tickers",
            returns.ncols(),
            tickers.len()
        )));
    }
    let mut fits = Vec::with_capacity(tickers.len());
    for (i, ticker) in tickers.iter().enumerate() {
        let stock: Vec<f64> = returns.column(i).iter().copied().collect();
        let reg = fit_factor_regression(&stock, factor_returns, dt)?;
        let adf = match adf_test(&reg.z_series, max_lag) {
            Ok(a) => a,
            Err(Error::DegenerateSeries(_)) => {
                log::debug!("skipping {ticker}: degenerate spread");
                continue;
            }
            Err(e) => return Err(e),
        };
        let ou = match estimate_ou(&reg.z_series, dt) {
            Ok(o) => o,
            Err(Error::DegenerateSeries(_)) => continue,
            Err(e) => return Err(e),
        };
        fits.push(CointegrationFit {
            ticker: ticker.clone(),
            alpha: reg.alpha,
            beta_row: reg.beta_row,
            z_series: reg.z_series,
            adf_stat: adf.stat,
            adf_pvalue: adf.pvalue,
            theta_hat: ou.theta,
            delta_hat: ou.delta,
            residual_variance: reg.residual_variance,
        });
    }
    Ok(fits)
}

/// The trading universe for one training window.
#[derive(Debug, Clone)]
pub struct UniverseSelection {
    /// Tickers ordered by descending δ̂, at most d_max of them.
    pub tickers: Vec<String>,
    pub fits: Vec<CointegrationFit>,
    pub training_window: (NaiveDate, NaiveDate),
}

impl UniverseSelection {
    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }
}

/// Keep fits passing the ADF threshold with δ̂ > 0, sorted by descending δ̂
/// (ties broken by ticker), truncated to d_max. An empty selection is a
/// valid outcome.
pub fn select_universe(
    fits: &[CointegrationFit],
    d_max: usize,
    p_threshold: f64,
    training_window: (NaiveDate, NaiveDate),
) -> UniverseSelection {
    let mut passing: Vec<&CointegrationFit> =
        fits.iter().filter(|f| f.passes(p_threshold)).collect();
    passing.sort_by(|a, b| {
        let da = a.delta_hat.unwrap_or(f64::NEG_INFINITY);
        let db = b.delta_hat.unwrap_or(f64::NEG_INFINITY);
        db.partial_cmp(&da)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.ticker.cmp(&b.ticker))
    });
    passing.truncate(d_max);
    UniverseSelection {
        tickers: passing.iter().map(|f| f.ticker.clone()).collect(),
        fits: passing.into_iter().cloned().collect(),
        training_window,
    }
}

/// Screening report CSV:
/// ticker, alpha, beta_1..m, adf_stat, adf_pvalue, theta_hat, delta_hat,
/// reversion_days, selected.
pub fn write_screening_csv<W: Write>(
    writer: W,
    fits: &[CointegrationFit],
    selection: &UniverseSelection,
) -> Result<()> {
    let m = fits.first().map_or(0, |f| f.beta_row.len());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["ticker".to_string(), "alpha".to_string()];
    header.extend((1..=m).map(|j| format!("beta_{j}")));
    header.extend(
        ["adf_stat", "adf_pvalue", "theta_hat", "delta_hat", "reversion_days", "selected"]
            .iter()
            .map(|s| s.to_string()),
    );
    wtr.write_record(&header)?;
    for fit in fits {
        let mut row = vec![fit.ticker.clone(), fit.alpha.to_string()];
        for j in 0..m {
            row.push(fit.beta_row[j].to_string());
        }
        row.push(fit.adf_stat.to_string());
        row.push(fit.adf_pvalue.to_string());
        row.push(fit.theta_hat.to_string());
        row.push(fit.delta_hat.map(|d| d.to_string()).unwrap_or_default());
        row.push(
            fit.reversion_days()
                .map(|d| d.to_string())
                .unwrap_or_default(),
        );
        row.push(selection.tickers.contains(&fit.ticker).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
