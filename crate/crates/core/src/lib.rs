//! Spectral market-instability indicators for multi-asset price panels.
//!
//! Every trading day, the most recent `T` daily log-returns of `N` assets
//! form a random matrix whose covariance and correlation spectra carry the
//! market's volatility and correlation heartbeat. This crate turns that idea
//! into nine dated indicator series and two drawdown backtests:
//!
//! - [`market_data`] — per-ticker ingestion, calendar alignment, log-returns,
//!   synthetic panels, the panel cache.
//! - [`matrices`] — rolling windows, covariance/correlation/weighted
//!   matrices, eigenvalue spectra, rescaling helpers.
//! - [`references`] — the analytic null spectrum plus simulated
//!   calm-market and turmoil reference distributions on a shared support.
//! - [`hellinger`] — the distance indicators A1/A2/A3: pooled spectra,
//!   small-eigenvalue truncation, Hellinger distances to each reference.
//! - [`spectral`] — the scalar indicators B1/B2/B3 and the weighted variants
//!   B3A/B3B/B3C.
//! - [`crisis`] — forward maximum drawdown, danger-zone calibration, red
//!   flags, and the historical and threshold backtest protocols.
//!
//! All per-date computations are pure functions of immutable inputs and may
//! run in parallel; outputs are deterministic for a fixed seed regardless of
//! scheduling.

pub mod crisis;
pub mod density;
pub mod error;
pub mod hellinger;
pub mod market_data;
pub mod matrices;
pub mod references;
pub mod series;
pub mod spectral;

pub use density::BinnedDensity;
pub use error::{Error, Result};
pub use market_data::{
    load_panel, log_returns, synthetic_panel, AlignmentPolicy, AssetPanel, PriceRecord, Regime,
    ReturnPanel, SyntheticSpec, TailKind,
};
pub use matrices::{RescaleMode, RollingWindow, Spectrum};
pub use references::{MpParams, ReferenceKind, ReferenceSet, ReferenceSpec};
pub use series::{IndicatorName, IndicatorSeries};
