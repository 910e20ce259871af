//! Statistical-arbitrage research engine for co-integrated stocks.
//!
//! The pipeline: ingest daily adjusted-close prices ([`marketdata`]), build
//! eigenportfolio factors from the return correlation matrix ([`factors`]),
//! screen stocks for co-integration against those factors and estimate the
//! Ornstein-Uhlenbeck spread dynamics ([`cointegration`]), assemble the full
//! diffusion model ([`model`]), solve the steady-state HJB systems via a
//! matrix Riccati equation ([`hjb`]), turn the solutions into portfolio
//! weights ([`policy`]), and evaluate everything in sliding-window backtests
//! ([`backtest`]) or against simulated markets with known ground truth
//! ([`synth`]).

pub mod backtest;
pub mod cointegration;
pub mod error;
pub mod factors;
pub mod hjb;
pub mod linalg;
pub mod marketdata;
pub mod model;
pub mod policy;
pub mod synth;

pub use error::{Error, Result};
