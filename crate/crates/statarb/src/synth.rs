//! Synthetic market with known ground truth: factors, co-integrated stocks,
//! and their spreads simulated under a joint geometric Euler scheme.
//!
//! The Ψ factor matrices are realized implicitly through the symmetric PSD
//! square root of the joint block matrix [[Σ₀, crossᵀ], [cross, Σ₁]]; any
//! factorization with the same Gram products is equivalent in law.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix};
use crate::marketdata::PricePanel;
use crate::model::ModelParams;

/// Ground-truth parameters of a simulated market.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub m: usize,
    /// Factor drifts η, per year.
    pub eta: Vec<f64>,
    /// Raw stock drifts μ^i, per year.
    pub mu: Vec<f64>,
    /// Mean-reversion speeds δ^i, per year, strictly positive.
    pub delta: Vec<f64>,
    /// Stationary spread means θ^i.
    pub theta: Vec<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma0: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub sigma1: DMatrix<f64>,
    /// Ψ₁Ψ₀ᵀ; the block matrix [[Σ₀, crossᵀ], [cross, Σ₁]] must be PSD.
    #[serde(with = "serde_matrix")]
    pub cross: DMatrix<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// Initial spreads; defaults to θ (stationary start).
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.m
            || self.mu.len() != self.d
            || self.delta.len() != self.d
            || self.theta.len() != self.d
        {
            return Err(Error::Config(
                "eta must have length m; mu, theta, delta length d".into(),
            ));
        }
        if self.sigma0.nrows() != self.m
            || self.sigma0.ncols() != self.m
            || self.sigma1.nrows() != self.d
            || self.sigma1.ncols() != self.d
            || self.cross.nrows() != self.d
            || self.cross.ncols() != self.m
        {
            return Err(Error::Config("diffusion matrix shapes are wrong".into()));
        }
        if let Some(z0) = &self.z0 {
            if z0.len() != self.d {
                return Err(Error::Config("z0 must have length d".into()));
            }
        }
        if self.delta.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config(
                "delta must be strictly positive (stationary spreads)".into(),
            ));
        }
        if !(self.dt > 0.0) || self.n_steps == 0 {
            return Err(Error::Config("need dt > 0 and n_steps >= 1".into()));
        }
        let (lo, hi) = linalg::sym_eig_range(&self.joint_block());
        if lo < -1e-10 * (1.0 + hi.abs()) {
            return Err(Error::Config(format!(
                "joint diffusion block [[sigma0, crossᵀ],[cross, sigma1]] is not PSD \
                 (min eigenvalue {lo:.3e}); no Ψ factorization exists"
            )));
        }
        Ok(())
    }

    /// The (m+d)×(m+d) joint diffusion Gram matrix.
    pub fn joint_block(&self) -> DMatrix<f64> {
        let k = self.m + self.d;
        let mut g = DMatrix::zeros(k, k);
        g.view_mut((0, 0), (self.m, self.m)).copy_from(&self.sigma0);
        g.view_mut((self.m, self.m), (self.d, self.d))
            .copy_from(&self.sigma1);
        g.view_mut((self.m, 0), (self.d, self.m)).copy_from(&self.cross);
        g.view_mut((0, self.m), (self.m, self.d))
            .copy_from(&self.cross.transpose());
        linalg::symmetrize(&g)
    }

    /// Loadings implied by the diffusion structure: β = cross Σ₀⁻¹, via
    /// pseudo-inverse when Σ₀ is singular (the zero-volatility limit).
    pub fn implied_beta(&self) -> Result<DMatrix<f64>> {
        if let Some(chol) = nalgebra::Cholesky::new(self.sigma0.clone()) {
            return Ok(chol.solve(&self.cross.transpose()).transpose());
        }
        let pinv = self
            .sigma0
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numeric(format!("sigma0 pseudo-inverse failed: {e}")))?;
        Ok(&self.cross * pinv)
    }

    /// The exact [`ModelParams`] of this market for a given trader (r, γ);
    /// the oracle against which estimators and solvers are checked.
    pub fn implied_model(&self, r: f64, gamma: f64) -> Result<ModelParams> {
        ModelParams::from_primitives(
            DVector::from_column_slice(&self.mu),
            DVector::from_column_slice(&self.theta),
            DVector::from_column_slice(&self.delta),
            DVector::from_column_slice(&self.eta),
            self.sigma0.clone(),
            self.sigma1.clone(),
            self.cross.clone(),
            r,
            gamma,
        )
    }

    /// Systematic drift α implied by the θ definition: α = μ - δθ - βη.
    pub fn implied_alpha(&self) -> Result<DVector<f64>> {
        let beta = self.implied_beta()?;
        let eta = DVector::from_column_slice(&self.eta);
        let beta_eta = beta * eta;
        Ok(DVector::from_fn(self.d, |i, _| {
            self.mu[i] - self.delta[i] * self.theta[i] - beta_eta[i]
        }))
    }

    /// A universe with `n_planted` genuinely co-integrated stocks (fast mean
    /// reversion) and `d - n_planted` near-unit-root decoys, driven by m
    /// factors. Spreads are driftless (θ = 0, α = 0) and stocks earn the
    /// factor-implied drift.
    pub fn planted(d: usize, n_planted: usize, m: usize, n_steps: usize, seed: u64) -> Self {
        assert!(n_planted <= d && m >= 1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let mut sigma0 = DMatrix::zeros(m, m);
        for j in 0..m {
            let vol = if j == 0 { 0.18 } else { 0.10 / (j as f64).sqrt() };
            sigma0[(j, j)] = vol * vol;
        }
        let beta = DMatrix::from_fn(d, m, |_, j| {
            if j == 0 {
                0.7 + 0.6 * rng.random::<f64>()
            } else {
                0.5 * (rng.random::<f64>() - 0.5)
            }
        });
        let cross = &beta * &sigma0;
        let idio = DVector::from_fn(d, |i, _| {
            let vol = if i < n_planted {
                0.10 + 0.05 * rng.random::<f64>()
            } else {
                0.15 + 0.10 * rng.random::<f64>()
            };
            vol * vol
        });
        let sigma1 = &beta * &sigma0 * beta.transpose() + DMatrix::from_diagonal(&idio);
        let delta: Vec<f64> = (0..d)
            .map(|i| {
                if i < n_planted {
                    5.0 + 10.0 * rng.random::<f64>()
                } else {
                    0.02
                }
            })
            .collect();
        let mut eta = vec![0.01; m];
        eta[0] = 0.06;
        let eta_v = DVector::from_column_slice(&eta);
        let mu: Vec<f64> = (&beta * eta_v).iter().copied().collect();
        SynthConfig {
            d,
            m,
            eta,
            mu,
            delta,
            theta: vec![0.0; d],
            sigma0,
            sigma1,
            cross,
            dt: 1.0 / 252.0,
            n_steps,
            seed,
            z0: None,
        }
    }
}

/// Simulated trajectories. Levels are strictly positive by the geometric
/// update; spreads satisfy the Euler recursion exactly.
#[derive(Debug, Clone)]
pub struct SynthPath {
    /// (n_steps + 1) × m.
    pub factor_levels: DMatrix<f64>,
    /// (n_steps + 1) × d.
    pub stock_levels: DMatrix<f64>,
    /// (n_steps + 1) × d.
    pub spreads: DMatrix<f64>,
    /// n_steps × (m + d): the correlated Gaussian increments (Ψ dB), factor
    /// block first.
    pub shocks: DMatrix<f64>,
    pub dt: f64,
}

impl SynthPath {
    pub fn n_steps(&self) -> usize {
        self.shocks.nrows()
    }

    /// Per-period factor returns ΔF/F, n_steps × m.
    pub fn factor_returns(&self) -> DMatrix<f64> {
        returns_of(&self.factor_levels)
    }

    /// Per-period stock returns ΔS/S, n_steps × d.
    pub fn stock_returns(&self) -> DMatrix<f64> {
        returns_of(&self.stock_levels)
    }

    /// Spread increments ΔZ, n_steps × d.
    pub fn spread_increments(&self) -> DMatrix<f64> {
        let n = self.spreads.nrows() - 1;
        DMatrix::from_fn(n, self.spreads.ncols(), |t, i| {
            self.spreads[(t + 1, i)] - self.spreads[(t, i)]
        })
    }
}

fn returns_of(levels: &DMatrix<f64>) -> DMatrix<f64> {
    let n = levels.nrows() - 1;
    DMatrix::from_fn(n, levels.ncols(), |t, i| {
        levels[(t + 1, i)] / levels[(t, i)] - 1.0
    })
}

/// Simulate the joint factor/stock/spread system with a seeded
/// counter-based generator (ChaCha); identical seeds give identical paths.
pub fn simulate(config: &SynthConfig) -> Result<SynthPath> {
    config.validate()?;
    let (d, m, dt) = (config.d, config.m, config.dt);
    let n = config.n_steps;
    let sqrt_dt = dt.sqrt();

    let root = {
        let eig = nalgebra::SymmetricEigen::new(config.joint_block());
        let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    };
    let beta = config.implied_beta()?;

    let mut factor_levels = DMatrix::zeros(n + 1, m);
    let mut stock_levels = DMatrix::zeros(n + 1, d);
    let mut spreads = DMatrix::zeros(n + 1, d);
    let mut shocks = DMatrix::zeros(n, m + d);

    for j in 0..m {
        factor_levels[(0, j)] = 1.0;
    }
    for i in 0..d {
        stock_levels[(0, i)] = 100.0;
        spreads[(0, i)] = config
            .z0
            .as_ref()
            .map_or(config.theta[i], |z0| z0[i]);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut w = DVector::zeros(m + d);
    for t in 0..n {
        for k in 0..m + d {
            w[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let xi = &root * &w * sqrt_dt;
        for k in 0..m + d {
            shocks[(t, k)] = xi[k];
        }
        let factor_shock = xi.rows(0, m);
        let beta_shock = &beta * factor_shock;

        for j in 0..m {
            let growth = 1.0 + config.eta[j] * dt + xi[j];
            let next = factor_levels[(t, j)] * growth;
            if !(next > 0.0) {
                return Err(Error::Numeric(format!(
                    "factor {j} level went non-positive at step {t}; \
                     volatility too large for the Euler step"
                )));
            }
            factor_levels[(t + 1, j)] = next;
        }
        for i in 0..d {
            let z = spreads[(t, i)];
            let growth = 1.0 + (config.mu[i] - config.delta[i] * z) * dt + xi[m + i];
            let next = stock_levels[(t, i)] * growth;
            if !(next > 0.0) {
                return Err(Error::Numeric(format!(
                    "stock {i} level went non-positive at step {t}; \
                     volatility too large for the Euler step"
                )));
            }
            stock_levels[(t + 1, i)] = next;
            spreads[(t + 1, i)] =
                z + config.delta[i] * (config.theta[i] - z) * dt - beta_shock[i] + xi[m + i];
        }
    }
    Ok(SynthPath {
        factor_levels,
        stock_levels,
        spreads,
        shocks,
        dt,
    })
}

/// Package simulated stock levels as a price panel on a synthetic weekday
/// calendar starting 2000-01-03.
pub fn to_panel(path: &SynthPath, tickers: &[String]) -> Result<PricePanel> {
    if tickers.len() != path.stock_levels.ncols() {
        return Err(Error::Dimension(format!(
            "{} tickers for {} simulated stocks",
            tickers.len(),
            path.stock_levels.ncols()
        )));
    }
    let dates = trading_dates(path.stock_levels.nrows());
    PricePanel::new(dates, tickers.to_vec(), path.stock_levels.clone(), None)
}

/// Synthetic weekday calendar (Mon-Fri), long enough for n dates.
pub fn trading_dates(n: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n);
    let mut day = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    while dates.len() < n {
        if day.weekday() != Weekday::Sat && day.weekday() != Weekday::Sun {
            dates.push(day);
        }
        day = day.succ_opt().expect("date overflow");
    }
    dates
}

/// Random fully-assembled model for property tests: factor structure plus
/// idiosyncratic diagonal, so the joint diffusion is PSD by construction and
/// Σ₃ equals the idiosyncratic covariance.
pub fn random_model_params (
    rng: &mut impl Rng,
    d: usize,
    m: usize,
    gamma: f64,
) -> ModelParams {
    let mut sigma0 = DMatrix::zeros(m, m);
    for j in 0..m {
        let vol: f64 = 0.10 + 0.10 * rng.random::<f64>();
        sigma0[(j, j)] = vol * vol;
    }
    for j in 0..m {
        for k in 0..j {
            let c = 0.2 * (rng.random::<f64>() - 0.5) * (sigma0[(j, j)] * sigma0[(k, k)]).sqrt();
            sigma0[(j, k)] = c;
            sigma0[(k, j)] = c;
        }
    }
    let beta = DMatrix::from_fn(d, m, |_, j| {
        if j == 0 {
            0.7 + 0.6 * rng.random::<f64>()
        } else {
            0.6 * (rng.random::<f64>() - 0.5)
        }
    });
    let cross = &beta * &sigma0;
    let idio = DVector::from_fn(d, |_, _| {
        let v: f64 = 0.10 + 0.15 * rng.random::<f64>();
        v * v
    });
    let sigma1 = &beta * &sigma0 * beta.transpose() + DMatrix::from_diagonal(&idio);
    let delta = DVector::from_fn(d, |_, _| 2.0 + 13.0 * rng.random::<f64>());
    let theta = DVector::from_fn(d, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
    let mu_raw = DVector::from_fn(d, |_, _| 0.02 + 0.08 * rng.random::<f64>());
    let mut eta = DVector::from_element(m, 0.01);
    eta[0] = 0.05;
    ModelParams::from_primitives(mu_raw, theta, delta, eta, sigma0, sigma1, cross, 0.01, gamma)
        .expect("random construction is valid by design")
}
