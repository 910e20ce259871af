//! Eigenportfolio factors from the stock-return correlation matrix.
//!
//! Weights are ω_j = (1/c_j) σ⁻¹ v_j with c_j = 1ᵀσ⁻¹v_j, where v_j is the
//! j-th eigenvector of the correlation matrix and σ the diagonal matrix of
//! per-period return standard deviations. Each weight column sums to one;
//! the principal eigenportfolio proxies the market portfolio.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::marketdata::ReturnsPanel;

/// Eigenportfolio weights, eigenvalues, and the factor return series.
#[derive(Debug, Clone)]
pub struct EigenFactorSet {
    /// d_universe × m, columns sum to one.
    pub weights: DMatrix<f64>,
    /// Length m, strictly positive, non-increasing.
    pub eigenvalues: DVector<f64>,
    /// n_periods × m.
    pub factor_returns: DMatrix<f64>,
    /// Normalizers c_j = 1ᵀσ⁻¹v_j.
    pub normalizers: DVector<f64>,
    /// Tickers of the universe the weights refer to.
    pub tickers: Vec<String>,
}

/// Sample correlation matrix and diagonal of per-period standard deviations.
///
/// Errors with the offending ticker when a column has zero variance.
pub fn correlation_matrix(panel: &ReturnsPanel) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = panel.n_periods();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let cov = crate::linalg::cross_covariance(panel.returns(), panel.returns(), 1)?;
    let d = panel.n_tickers();
    let mut sigma = DVector::zeros(d);
    for i in 0..d {
        let v = cov[(i, i)];
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::DegenerateColumn(panel.tickers()[i].clone()));
        }
        sigma[i] = v.sqrt();
    }
    let mut rho = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                rho[(i, j)] = 1.0;
            } else {
                rho[(i, j)] = (cov[(i, j)] / (sigma[i] * sigma[j])).clamp(-1.0, 1.0);
            }
        }
    }
    Ok((crate::linalg::symmetrize(&rho), sigma))
}

/// Eigenportfolio weights and eigenvalues for the leading m factors.
///
/// Eigenvectors are sign-fixed so their component sum is positive (the
/// principal one then goes long the market) and sorted by descending
/// eigenvalue with a lexicographic tie-break for reproducibility.
pub fn eigenportfolios(
    rho: &DMatrix<f64>,
    sigma: &DVector<f64>,
    m: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let d = rho.nrows();
    if rho.ncols() != d || sigma.len() != d {
        return Err(Error::Dimension(format!(
            "rho is {}x{}, sigma has {} entries",
            rho.nrows(),
            rho.ncols(),
            sigma.len()
        )));
    }
    if m == 0 || m > d {
        return Err(Error::Dimension(format!(
            "need 1 <= m <= d, got m={m}, d={d}"
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(crate::linalg::symmetrize(rho));
    let mut vectors: Vec<DVector<f64>> = eig
        .eigenvectors
        .column_iter()
        .map(|c| c.into_owned())
        .collect();
    for v in &mut vectors {
        fix_sign(v);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| lex_cmp(&vectors[a], &vectors[b]))
    });

    let mut weights = DMatrix::zeros(d, m);
    let mut eigenvalues = DVector::zeros(m);
    let mut normalizers = DVector::zeros(m);
    for (j, &idx) in order.iter().take(m).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 1e-12 * d as f64 {
            return Err(Error::Conditioning(format!(
                "eigenvalue {j} of the correlation matrix is not positive ({lambda:.3e})"
            )));
        }
        let v = &vectors[idx];
        let scaled = DVector::from_fn(d, |i, _| v[i] / sigma[i]);
        let c = scaled.sum();
        if c.abs() < 1e-12 * scaled.amax().max(1e-300) * d as f64 {
            return Err(Error::Normalization(format!(
                "eigenportfolio {j} has 1'σ⁻¹v = {c:.3e}; weights cannot sum to one"
            )));
        }
        eigenvalues[j] = lambda;
        normalizers[j] = c;
        weights.set_column(j, &(scaled / c));
    }
    Ok((weights, eigenvalues, normalizers))
}

/// Factor return series: exact weighted sums of stock returns per period.
pub fn factor_return_series(weights: &DMatrix<f64>, returns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if weights.nrows() != returns.ncols() {
        return Err(Error::Dimension(format!(
            "weights have {} rows but returns have {} columns",
            weights.nrows(),
            returns.ncols()
        )));
    }
    Ok(returns * weights)
}

/// Convenience composition: correlation, eigenportfolios, factor series.
pub fn build(panel: &ReturnsPanel, m: usize) -> Result<EigenFactorSet> {
    let (rho, sigma) = correlation_matrix(panel)?;
    let (weights, eigenvalues, normalizers) = eigenportfolios(&rho, &sigma, m)?;
    let factor_returns = factor_return_series(&weights, panel.returns())?;
    Ok(EigenFactorSet {
        weights,
        eigenvalues,
        factor_returns,
        normalizers,
        tickers: panel.tickers().to_vec(),
    })
}

impl EigenFactorSet {
    pub fn m(&self) -> usize {
        self.weights.ncols()
    }

    /// Audit CSV: ticker, ω₁..ω_m.
    pub fn write_weights_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["ticker".to_string()];
        header.extend((1..=self.m()).map(|j| format!("omega_{j}")));
        wtr.write_record(&header)?;
        for (i, ticker) in self.tickers.iter().enumerate() {
            let mut row = vec![ticker.clone()];
            for j in 0..self.m() {
                row.push(self.weights[(i, j)].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let sum = v.sum();
    let flip = if sum.abs() > 1e-12 {
        sum < 0.0
    } else {
        // Sum-free eigenvector: make the first nonzero component positive.
        v.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0)
    };
    if flip {
        *v = -&*v;
    }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}
