//! Assembly of the full diffusion model: drifts, mean-reversion speeds, and
//! the diffusion matrices Σ₀, Σ₁, Σ₂, Σ₃ together with the factor loadings β
//! and the neutrality projector Σ_c.
//!
//! The Ψ factor matrices are never materialized: everything downstream only
//! needs Σ₀ = Ψ₀Ψ₀ᵀ, Σ₁ = Ψ₁Ψ₁ᵀ and the cross product Ψ₁Ψ₀ᵀ, which are
//! estimated directly from covariances. The structural identities
//!
//!   β  = cross Σ₀⁻¹
//!   Σ₂ = Σ₁ - cross βᵀ                 (not symmetric in general)
//!   Σ₃ = Σ₁ - cross βᵀ - β crossᵀ + β Σ₀ βᵀ
//!   Σ_c = Σ₁⁻¹ β (βᵀ Σ₁⁻¹ β)⁻¹ βᵀ Σ₁⁻¹
//!
//! hold exactly by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cointegration::UniverseSelection;
use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, serde_vector};

/// Complete parameter set consumed by the HJB solver.
///
/// All rates and diffusion matrices are in per-year units; `mu` is the
/// excess drift vector [μ^i - r].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub m: usize,
    #[serde(with = "serde_vector")]
    pub mu: DVector<f64>,
    #[serde(with = "serde_vector")]
    pub theta: DVector<f64>,
    /// Diagonal of the mean-reversion matrix δ, strictly positive.
    #[serde(with = "serde_vector")]
    pub delta: DVector<f64>,
    #[serde(with = "serde_matrix")]
    pub beta: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma0: DMatrix<f64>,
    /// Ψ₁Ψ₀ᵀ.
    #[serde(with = "serde_matrix")]
    pub cross: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma1: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma2: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma3: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma_c: DMatrix<f64>,
    /// False when β has rank zero and Σ_c was set to the zero matrix.
    pub sigma_c_valid: bool,
    pub r: f64,
    pub gamma: f64,
    #[serde(with = "serde_vector")]
    pub eta: DVector<f64>,
}

impl ModelParams {
    /// Build the model from the primitive quantities, deriving β, Σ₂, Σ₃ and
    /// Σ_c so the structural identities hold exactly.
    ///
    /// `mu_raw` is the raw stock drift [μ^i]; the stored `mu` is [μ^i - r].
    #[allow(clippy::too_many_arguments)]
    pub fn from_primitives(
        mu_raw: DVector<f64>,
        theta: DVector<f64>,
        delta: DVector<f64>,
        eta: DVector<f64>,
        sigma0: DMatrix<f64>,
        sigma1: DMatrix<f64>,
        cross: DMatrix<f64>,
        r: f64,
        gamma: f64,
    ) -> Result<Self> {
        if gamma >= 0.0 {
            return Err(Error::UnsupportedRegime(format!(
                "gamma must be negative (stability regime), got {gamma}"
            )));
        }
        let d = sigma1.nrows();
        let m = sigma0.nrows();
        if sigma0.ncols() != m || sigma1.ncols() != d {
            return Err(Error::Dimension("sigma0 and sigma1 must be square".into()));
        }
        if cross.nrows() != d || cross.ncols() != m {
            return Err(Error::Dimension(format!(
                "cross must be {d}x{m}, got {}x{}",
                cross.nrows(),
                cross.ncols()
            )));
        }
        if mu_raw.len() != d || theta.len() != d || delta.len() != d || eta.len() != m {
            return Err(Error::Dimension(
                "mu, theta, delta must have length d and eta length m".into(),
            ));
        }
        if delta.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return Err(Error::Data(
                "delta must have strictly positive finite entries".into(),
            ));
        }
        let sigma0 = linalg::symmetrize(&sigma0);
        let sigma1 = linalg::symmetrize(&sigma1);
        let chol0 = nalgebra::Cholesky::new(sigma0.clone())
            .ok_or_else(|| Error::Conditioning("sigma0 is not positive definite".into()))?;
        let chol1 = nalgebra::Cholesky::new(sigma1.clone())
            .ok_or_else(|| Error::Conditioning("sigma1 is not positive definite".into()))?;

        // beta = cross sigma0^{-1}  <=>  sigma0 betaᵀ = crossᵀ.
        let beta = chol0.solve(&cross.transpose()).transpose();
        let sigma2 = &sigma1 - &cross * beta.transpose();
        let sigma3 = linalg::symmetrize(
            &(&sigma1 - &cross * beta.transpose() - &beta * cross.transpose()
                + &beta * &sigma0 * beta.transpose()),
        );
        let (s3_min, s3_max) = linalg::sym_eig_range(&sigma3);
        if s3_min < -1e-8 * (1.0 + s3_max.abs()) {
            return Err(Error::Conditioning(format!(
                "sigma3 is not positive semi-definite (min eigenvalue {s3_min:.3e}); \
                 the joint factor/stock diffusion is inconsistent"
            )));
        }

        let beta_scale = beta.amax();
        let (sigma_c, sigma_c_valid) = if beta_scale < 1e-14 {
            (DMatrix::zeros(d, d), false)
        } else {
            // a = Σ₁⁻¹ β, g = βᵀ Σ₁⁻¹ β.
            let a = chol1.solve(&beta);
            let g = beta.transpose() * &a;
            let cholg = nalgebra::Cholesky::new(linalg::symmetrize(&g)).ok_or_else(|| {
                Error::Conditioning(
                    "betaᵀ Σ₁⁻¹ beta is singular: beta is rank-deficient".into(),
                )
            })?;
            let g_inv = cholg.inverse();
            (linalg::symmetrize(&(&a * g_inv * a.transpose())), true)
        };

        let params = ModelParams {
            d,
            m,
            mu: mu_raw.map(|x| x - r),
            theta,
            delta,
            beta,
            sigma0,
            cross,
            sigma1,
            sigma2,
            sigma3,
            sigma_c,
            sigma_c_valid,
            r,
            gamma,
            eta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check the structural identities; used after construction and after
    /// deserializing an externally produced document.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12;
        let check = |name: &str, lhs: &DMatrix<f64>, rhs: &DMatrix<f64>| -> Result<()> {
            let err = (lhs - rhs).norm();
            if err > tol * (1.0 + rhs.norm()) {
                return Err(Error::Numeric(format!(
                    "identity {name} violated by {err:.3e}"
                )));
            }
            Ok(())
        };
        check("beta sigma0 = cross", &(&self.beta * &self.sigma0), &self.cross)?;
        check(
            "sigma2 = sigma1 - cross betaᵀ",
            &self.sigma2,
            &(&self.sigma1 - &self.cross * self.beta.transpose()),
        )?;
        check(
            "sigma3 definition",
            &self.sigma3,
            &linalg::symmetrize(
                &(&self.sigma1 - &self.cross * self.beta.transpose()
                    - &self.beta * self.cross.transpose()
                    + &self.beta * &self.sigma0 * self.beta.transpose()),
            ),
        )?;
        if self.sigma_c_valid {
            // Market-neutrality algebra: βᵀ(Σ₁⁻¹ - Σ_c) = 0.
            let neutral = self.neutral_metric()?;
            let viol = (self.beta.transpose() * &neutral).amax();
            let scale = self.beta.amax() * neutral.amax();
            if viol > 1e-10 * (1.0 + scale) {
                return Err(Error::Numeric(format!(
                    "betaᵀ(Σ₁⁻¹ - Σ_c) is not zero (max entry {viol:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Σ₁⁻¹.
    pub fn sigma1_inv(&self) -> Result<DMatrix<f64>> {
        let chol = nalgebra::Cholesky::new(self.sigma1.clone())
            .ok_or_else(|| Error::Conditioning("sigma1 is not positive definite".into()))?;
        Ok(chol.inverse())
    }

    /// Σ₁⁻¹ - Σ_c, the metric of the market-neutral problem.
    pub fn neutral_metric(&self) -> Result<DMatrix<f64>> {
        Ok(linalg::symmetrize(&(self.sigma1_inv()? - &self.sigma_c)))
    }

    /// δ as a dense diagonal matrix.
    pub fn delta_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.delta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: ModelParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }
}

/// Which covariance estimates get Ledoit-Wolf shrinkage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Shrinkage {
    pub sigma0: bool,
    pub sigma1: bool,
}

impl Default for Shrinkage {
    fn default() -> Self {
        Self {
            sigma0: true,
            sigma1: true,
        }
    }
}

/// Ledoit-Wolf shrinkage of the sample covariance toward the scaled
/// identity ν I with ν = trace(S)/d. Returns the shrunk covariance (same
/// 1/n normalization as the sample estimate) and the intensity ρ* ∈ [0, 1].
///
/// The optimal intensity needs the per-observation outer products, so this
/// takes the observation matrix rather than a precomputed covariance.
pub fn ledoit_wolf_shrink(observations: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = observations.nrows();
    let d = observations.ncols();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let x = linalg::center_columns(observations);
    let s = x.transpose() * &x / n as f64;
    let nu = s.trace() / d as f64;
    let target = DMatrix::identity(d, d) * nu;

    // Normalized Frobenius distances; the d divisor cancels in the ratio.
    let d2 = (&s - &target).norm_squared() / d as f64;
    if d2 < 1e-300 {
        return Ok((s, 0.0));
    }
    let mut b_bar2 = 0.0;
    for t in 0..n {
        let row = x.row(t);
        let outer = row.transpose() * row;
        b_bar2 += (outer - &s).norm_squared();
    }
    b_bar2 /= (n * n) as f64 * d as f64;
    let b2 = b_bar2.min(d2);
    let intensity = b2 / d2;
    let shrunk = target * intensity + s * (1.0 - intensity);
    Ok((shrunk, intensity))
}

/// Diagnostics recorded while assembling a model from estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyDiagnostics {
    /// ‖β_OLS - β_model‖_F: distance between the regression loadings and the
    /// covariance-implied loadings.
    pub beta_ols_deviation: f64,
    pub shrink_intensity_sigma0: f64,
    pub shrink_intensity_sigma1: f64,
    /// d ≥ m; the constrained problem needs at least as many stocks as
    /// factors.
    pub constrained_feasible: bool,
    pub sigma_c_valid: bool,
}

/// Assemble [`ModelParams`] from a screened universe and its training data.
///
/// `factor_returns` and `stock_returns` are per-period returns over the same
/// window; `stock_returns` columns follow `selection.tickers` order. The raw
/// drift is recovered from the θ definition: μ^i = δ̂^i θ̂^i + α̂^i + (β η)^i.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    selection: &UniverseSelection,
    factor_returns: &DMatrix<f64>,
    stock_returns: &DMatrix<f64>,
    eta1: f64,
    r: f64,
    gamma: f64,
    dt: f64,
    shrinkage: Shrinkage,
) -> Result<(ModelParams, AssemblyDiagnostics)> {
    if gamma >= 0.0 {
        return Err(Error::UnsupportedRegime(format!(
            "gamma must be negative (stability regime), got {gamma}"
        )));
    }
    if selection.is_empty() {
        return Err(Error::Data("empty universe selection".into()));
    }
    let d = selection.len();
    let m = factor_returns.ncols();
    let n = factor_returns.nrows();
    if stock_returns.nrows() != n {
        return Err(Error::Dimension(format!(
            "{} stock rows vs {} factor rows",
            stock_returns.nrows(),
            n
        )));
    }
    if stock_returns.ncols() != d {
        return Err(Error::Dimension(format!(
            "{} stock columns vs {} selected tickers",
            stock_returns.ncols(),
            d
        )));
    }

    let (cov0, i0) = if shrinkage.sigma0 {
        ledoit_wolf_shrink(factor_returns)?
    } else {
        (linalg::cross_covariance(factor_returns, factor_returns, 0)?, 0.0)
    };
    let (cov1, i1) = if shrinkage.sigma1 {
        ledoit_wolf_shrink(stock_returns)?
    } else {
        (linalg::cross_covariance(stock_returns, stock_returns, 0)?, 0.0)
    };
    let sigma0 = cov0 / dt;
    let sigma1 = cov1 / dt;
    if !linalg::is_positive_definite(&sigma1) {
        return Err(Error::Conditioning(
            "sigma1 not positive definite after shrinkage".into(),
        ));
    }
    let cross = linalg::cross_covariance(stock_returns, factor_returns, 0)? / dt;

    // Loadings from the covariance identity; OLS rows kept as diagnostics.
    let chol0 = nalgebra::Cholesky::new(sigma0.clone())
        .ok_or_else(|| Error::Conditioning("sigma0 is not positive definite".into()))?;
    let beta = chol0.solve(&cross.transpose()).transpose();

    let mut eta = DVector::from_element(m, r);
    eta[0] = eta1;

    let mut theta = DVector::zeros(d);
    let mut delta = DVector::zeros(d);
    let mut alpha = DVector::zeros(d);
    for (i, fit) in selection.fits.iter().enumerate() {
        theta[i] = fit.theta_hat;
        delta[i] = fit.delta_hat.ok_or_else(|| {
            Error::Data(format!("{} has no mean-reversion speed", fit.ticker))
        })?;
        alpha[i] = fit.alpha;
    }
    let beta_eta = &beta * &eta;
    let mu_raw = DVector::from_fn(d, |i, _| delta[i] * theta[i] + alpha[i] + beta_eta[i]);

    let params = ModelParams::from_primitives(
        mu_raw, theta, delta, eta, sigma0, sigma1, cross, r, gamma,
    )?;

    let mut beta_ols = DMatrix::zeros(d, m);
    for (i, fit) in selection.fits.iter().enumerate() {
        if fit.beta_row.len() != m {
            return Err(Error::Dimension(format!(
                "{} has {} loadings, expected {m}",
                fit.ticker,
                fit.beta_row.len()
            )));
        }
        beta_ols.set_row(i, &fit.beta_row.transpose());
    }
    let beta_ols_deviation = (&beta_ols - &params.beta).norm();
    if d < m {
        log::warn!(
            "constrained problem infeasible: {d} stocks for {m} factors (need d >= m)"
        );
    }

    let diagnostics = AssemblyDiagnostics {
        beta_ols_deviation,
        shrink_intensity_sigma0: i0,
        shrink_intensity_sigma1: i1,
        constrained_feasible: d >= m,
        sigma_c_valid: params.sigma_c_valid,
    };
    Ok((params, diagnostics))
}

/// Rank and definiteness checks behind the constrained steady-state
/// guarantees. A report, not a gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityPreReport {
    /// rank(β) = rank(βᵀβ) against the full rank m.
    pub rank_beta: usize,
    pub m: usize,
    /// rank of (I - β(βᵀβ)⁻¹βᵀ) δ. For full-column-rank β this is d - m by
    /// projector algebra, so it is reported against d for reference only.
    pub rank_projected_delta: usize,
    pub d: usize,
    /// rank of (I - β(βᵀβ)⁻¹βᵀ) δ β against m: the operative kernel
    /// condition behind the constrained observability argument. δ ∝ I makes
    /// this zero because the projector then commutes with δ.
    pub rank_projected_delta_beta: usize,
    /// δ proportional to the identity: constrained steady state not
    /// guaranteed.
    pub delta_proportional_identity: bool,
    pub sigma1_eig: (f64, f64),
    pub sigma3_eig: (f64, f64),
    /// True when rank(β) = m and (I - P_β)δβ has trivial kernel.
    pub constrained_rank_ok: bool,
}

pub fn validate_stability_preconditions(params: &ModelParams) -> StabilityPreReport {
    let d = params.d;
    let m = params.m;
    let rank_beta = linalg::numerical_rank(&params.beta, 1e-10);

    // (I - P_β) with P_β the orthogonal projector onto col(β), built from an
    // SVD basis so rank deficiency of β is handled.
    let svd = params.beta.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-10 * smax.max(1e-300))
        .map(|(i, _)| i)
        .collect();
    let delta_mat = params.delta_matrix();
    let mut projected = delta_mat.clone();
    for &c in &cols {
        let uc = u.column(c);
        let coeff = uc.transpose() * &delta_mat;
        projected -= uc * coeff;
    }
    let dmin = params.delta.min();
    let dmax = params.delta.max();
    // Products can vanish up to roundoff, so rank them against the input
    // scale ‖δ‖‖β‖ rather than their own largest singular value.
    let scale = dmax.abs() * smax.max(1e-300);
    let rank_projected_delta = linalg::numerical_rank_abs(&projected, 1e-10 * dmax.abs().max(1e-300));
    let projected_beta = &projected * &params.beta;
    let rank_projected_delta_beta = linalg::numerical_rank_abs(&projected_beta, 1e-10 * scale);
    let delta_proportional_identity = (dmax - dmin).abs() <= 1e-10 * dmax.abs().max(1e-300);

    StabilityPreReport {
        rank_beta,
        m,
        rank_projected_delta,
        d,
        rank_projected_delta_beta,
        delta_proportional_identity,
        sigma1_eig: linalg::sym_eig_range(&params.sigma1),
        sigma3_eig: linalg::sym_eig_range(&params.sigma3),
        constrained_rank_ok: rank_beta == m && rank_projected_delta_beta == m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cointegration::CointegrationFit;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const DT: f64 = 1.0 / 252.0;

    fn scalar_params(sigma1: f64, beta: f64, sigma0: f64, gamma: f64) -> ModelParams {
        ModelParams::from_primitives(
            DVector::from_vec(vec![0.05]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![0.01]),
            DMatrix::from_vec(1, 1, vec![sigma0]),
            DMatrix::from_vec(1, 1, vec![sigma1]),
            DMatrix::from_vec(1, 1, vec![beta * sigma0]),
            0.01,
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn scalar_sigma_identities() {
        // beta = 0.8, sigma0 = 0.04, cross = 0.032:
        // sigma2 = sigma1 - 0.0256 and sigma3 = sigma1 - 0.0256.
        let p = scalar_params(0.09, 0.8, 0.04, -1.0);
        assert_relative_eq!(p.beta[(0, 0)], 0.8, epsilon = 1e-14);
        assert_relative_eq!(p.sigma2[(0, 0)], 0.09 - 0.0256, epsilon = 1e-14);
        assert_relative_eq!(p.sigma3[(0, 0)], 0.09 - 0.0512 + 0.0256, epsilon = 1e-14);
        assert_relative_eq!(p.mu[0], 0.04, epsilon = 1e-14);
    }

    #[test]
    fn zero_loading_degenerates_gracefully() {
        let p = ModelParams::from_primitives(
            DVector::from_vec(vec![0.05, 0.02]),
            DVector::zeros(2),
            DVector::from_vec(vec![2.0, 3.0]),
            DVector::from_vec(vec![0.01]),
            DMatrix::from_vec(1, 1, vec![0.04]),
            DMatrix::from_row_slice(2, 2, &[0.09, 0.01, 0.01, 0.04]),
            DMatrix::zeros(2, 1),
            0.01,
            -2.0,
        )
        .unwrap();
        assert!(!p.sigma_c_valid);
        assert_relative_eq!((&p.sigma2 - &p.sigma1).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!((&p.sigma3 - &p.sigma1).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(p.sigma_c.norm(), 0.0);
    }

    #[test]
    fn gamma_gate_rejects_nonnegative() {
        let out = ModelParams::from_primitives(
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_vec(vec![1.0]),
            DVector::zeros(1),
            DMatrix::from_vec(1, 1, vec![0.04]),
            DMatrix::from_vec(1, 1, vec![0.09]),
            DMatrix::zeros(1, 1),
            0.01,
            0.5,
        );
        assert!(matches!(out, Err(Error::UnsupportedRegime(_))));
    }

    use crate::synth::random_model_params as random_params;

    #[test]
    fn neutrality_identity_holds_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let d = 2 + (rng.random::<u32>() % 9) as usize;
            let m = 1 + (rng.random::<u32>() % 3.min(d as u32)) as usize;
            let p = random_params(&mut rng, d, m, -2.0);
            let neutral = p.neutral_metric().unwrap();
            let viol = (p.beta.transpose() * &neutral).amax();
            assert!(viol < 1e-10, "betaᵀM = {viol:.3e} for d={d}, m={m}");
            // Σ₁⁻¹ - Σ_c is PSD with null space containing the β directions.
            let (lo, _) = linalg::sym_eig_range(&neutral);
            assert!(lo > -1e-10, "min eig {lo:.3e}");
            let nb = (&neutral * &p.beta).amax();
            assert!(nb < 1e-10, "(Σ₁⁻¹-Σ_c)β = {nb:.3e}");
        }
    }

    #[test]
    fn ledoit_wolf_fixed_point_when_sample_equals_target() {
        // Orthogonal design with equal variances: S = I = ν I already.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0]);
        let (shrunk, _) = ledoit_wolf_shrink(&x).unwrap();
        assert_relative_eq!((shrunk - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ledoit_wolf_intensity_vanishes_with_many_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60_000;
        let x = DMatrix::from_fn(n, 3, |_, j| {
            (1.0 + j as f64) * rng.sample::<f64, _>(StandardNormal)
        });
        let (shrunk, intensity) = ledoit_wolf_shrink(&x).unwrap();
        assert!(intensity < 5e-4, "intensity = {intensity}");
        let s = linalg::cross_covariance(&x, &x, 0).unwrap();
        let rel = (&shrunk - &s).norm() / s.norm();
        assert!(rel < 1e-3, "relative deviation {rel}");
    }

    #[test]
    fn ledoit_wolf_rank_one_sample_becomes_positive_definite() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -3.0, -3.0]);
        let (shrunk, intensity) = ledoit_wolf_shrink(&x).unwrap();
        assert!(intensity > 0.0);
        assert!(linalg::is_positive_definite(&shrunk));
    }

    fn selection_from_fits(fits: Vec<CointegrationFit>) -> UniverseSelection {
        let tickers = fits.iter().map(|f| f.ticker.clone()).collect();
        UniverseSelection {
            tickers,
            fits,
            training_window: (
                NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(),
            ),
        }
    }

    fn synthetic_training_data(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        m: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let factor = DMatrix::from_fn(n, m, |_, j| {
            0.05 * DT + (0.12 + 0.03 * j as f64) * DT.sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        let mut stock = DMatrix::zeros(n, d);
        for i in 0..d {
            let beta = 0.8 + 0.1 * i as f64;
            let mut z: f64 = 0.0;
            for t in 0..n {
                let dz = -8.0 * z * DT + 0.10 * DT.sqrt() * rng.sample::<f64, _>(StandardNormal);
                z += dz;
                stock[(t, i)] = 0.02 * DT + beta * factor[(t, 0)] + dz;
            }
        }
        (factor, stock)
    }

    fn fits_for(stock: &DMatrix<f64>, factor: &DMatrix<f64>) -> Vec<CointegrationFit> {
        let tickers: Vec<String> = (0..stock.ncols()).map(|i| format!("T{i}")).collect();
        crate::cointegration::screen(stock, &tickers, factor, DT, None).unwrap()
    }

    #[test]
    fn assemble_holds_identities_and_reports_diagnostics() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (factor, stock) = synthetic_training_data(&mut rng, 400, 4, 2);
        let fits = fits_for(&stock, &factor);
        assert_eq!(fits.len(), 4);
        let selection = selection_from_fits(fits);
        let (params, diag) = assemble(
            &selection,
            &factor,
            &stock,
            0.05,
            0.01,
            -70.0,
            DT,
            Shrinkage::default(),
        )
        .unwrap();
        params.validate().unwrap();
        assert_eq!(params.d, 4);
        assert_eq!(params.m, 2);
        assert_relative_eq!(params.eta[0], 0.05);
        assert_relative_eq!(params.eta[1], 0.01);
        assert!(diag.constrained_feasible);
        assert!(diag.sigma_c_valid);
        assert!(diag.beta_ols_deviation.is_finite());
        // Identity check at the spec tolerance.
        let viol = (&params.beta * &params.sigma0 - &params.cross).norm();
        assert!(viol < 1e-12 * (1.0 + params.cross.norm()));
    }

    #[test]
    fn assemble_rejects_nonnegative_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (factor, stock) = synthetic_training_data(&mut rng, 300, 2, 1);
        let selection = selection_from_fits(fits_for(&stock, &factor));
        let out = assemble(
            &selection,
            &factor,
            &stock,
            0.05,
            0.01,
            0.5,
            DT,
            Shrinkage::default(),
        );
        assert!(matches!(out, Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = random_params(&mut rng, 3, 2, -5.0);
        let text = p.to_json().unwrap();
        let q = ModelParams::from_json(&text).unwrap();
        assert_relative_eq!((&p.sigma3 - &q.sigma3).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((&p.mu - &q.mu).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(p.sigma_c_valid, q.sigma_c_valid);
        // Row-major with explicit dimensions.
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["sigma1"]["rows"], 3);
        assert_eq!(doc["sigma1"]["cols"], 3);
        assert_eq!(doc["beta"]["cols"], 2);
    }

    #[test]
    fn proportional_delta_fails_rank_condition() {
        // δ = 2I makes rank(δ - P_β δ) = d - m < d.
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut p = random_params(&mut rng, 5, 2, -2.0);
        p.delta = DVector::from_element(5, 2.0);
        let report = validate_stability_preconditions(&p);
        assert!(report.delta_proportional_identity);
        assert_eq!(report.rank_projected_delta, 3);
        assert_eq!(report.rank_projected_delta_beta, 0);
        assert!(!report.constrained_rank_ok);

        // Oracle: explicit projector algebra.
        let btb = (p.beta.transpose() * &p.beta).try_inverse().unwrap();
        let proj = p.delta_matrix() - &p.beta * btb * p.beta.transpose() * p.delta_matrix();
        assert_eq!(linalg::numerical_rank(&proj, 1e-10), 3);
        assert_eq!(linalg::numerical_rank_abs(&(&proj * &p.beta), 1e-8), 0);
    }

    #[test]
    fn axis_aligned_beta_explicit_two_by_two() {
        // d=2, m=1, β = [1, 0]ᵀ, δ = diag(1, 2): projected δ has rank 1.
        let p = ModelParams::from_primitives(
            DVector::from_vec(vec![0.05, 0.04]),
            DVector::zeros(2),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.05]),
            DMatrix::from_vec(1, 1, vec![0.04]),
            DMatrix::from_row_slice(2, 2, &[0.09, 0.0, 0.0, 0.05]),
            DMatrix::from_column_slice(2, 1, &[0.04, 0.0]),
            0.01,
            -2.0,
        )
        .unwrap();
        assert_relative_eq!(p.beta[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.beta[(1, 0)], 0.0, epsilon = 1e-14);
        let report = validate_stability_preconditions(&p);
        assert_eq!(report.rank_projected_delta, 1);
        // β is axis-aligned, so (I - P_β)δβ = 0 and the steady state is not
        // guaranteed despite distinct δ entries.
        assert_eq!(report.rank_projected_delta_beta, 0);
        assert!(!report.constrained_rank_ok);
    }

    #[test]
    fn generic_models_pass_rank_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..20 {
            let p = random_params(&mut rng, 6, 2, -2.0);
            let report = validate_stability_preconditions(&p);
            assert_eq!(report.rank_beta, 2);
            // Projector algebra: (I - P_β)δ always has rank d - m.
            assert_eq!(report.rank_projected_delta, 4);
            assert_eq!(report.rank_projected_delta_beta, 2);
            assert!(report.constrained_rank_ok);
            assert!(!report.delta_proportional_identity);
        }
    }
}
