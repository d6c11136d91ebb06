//! Run configuration.
//!
//! One TOML file drives the whole pipeline; every stage receives the same
//! file, so a run is reproducible from a single artifact. Every numeric knob
//! has the canonical default baked in.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use eigenwatch::matrices::RescaleMode;
use eigenwatch::series::IndicatorName;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub panel: PanelConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default)]
    pub rescale: RescaleConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub indicators: IndicatorsConfig,
    #[serde(default)]
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    /// Per-ticker input files, `date,close[,volume,market_cap]`.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    /// Directory whose `*.csv` files (sorted by name) are appended to `paths`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Carry the last available value over gaps on retained dates.
    #[serde(default = "default_true")]
    pub forward_fill: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Rolling-window length T in trading days.
    #[serde(default = "default_window")]
    pub length: usize,
    /// Pooling depth P of the distance indicators.
    #[serde(default = "default_pooling")]
    pub pooling: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            length: default_window(),
            pooling: default_pooling(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportConfig {
    /// Histogram support reaches `multiplier * lambda_plus`.
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// `lambda_star = lambda_plus / truncation_divisor`.
    #[serde(default = "default_truncation_divisor")]
    pub truncation_divisor: f64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self {
            multiplier: default_multiplier(),
            bins: default_bins(),
            truncation_divisor: default_truncation_divisor(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleConfig {
    /// "mean-variance", "fixed" or "none".
    #[serde(default = "default_rescale_mode")]
    pub mode: String,
    /// The factor used by the "fixed" mode, e.g. `1/a^2` for a typical daily
    /// volatility `a`.
    #[serde(default)]
    pub factor: Option<f64>,
    /// Calibration slice of the "mean-variance" mode; whole panel if unset.
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    /// Also rescale the B-series covariance indicators (off by default:
    /// B1/B2 report raw return-variance units).
    #[serde(default)]
    pub apply_to_b_series: bool,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        Self {
            mode: default_rescale_mode(),
            factor: None,
            start: None,
            end: None,
            apply_to_b_series: false,
        }
    }
}

impl RescaleConfig {
    pub fn mode_for_a_series(&self) -> Result<RescaleMode, CliError> {
        match self.mode.as_str() {
            "none" => Ok(RescaleMode::None),
            "fixed" => {
                let factor = self.factor.ok_or_else(|| {
                    CliError::Config("rescale.mode = \"fixed\" needs rescale.factor".into())
                })?;
                Ok(RescaleMode::Fixed(factor))
            }
            "mean-variance" => Ok(RescaleMode::MeanVariance {
                start: self.start,
                end: self.end,
            }),
            other => Err(CliError::Config(format!(
                "unknown rescale.mode {other:?} (expected none | fixed | mean-variance)"
            ))),
        }
    }

    pub fn mode_for_b_series(&self) -> Result<RescaleMode, CliError> {
        if self.apply_to_b_series {
            self.mode_for_a_series()
        } else {
            Ok(RescaleMode::None)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Common-factor loading of the simulated references; "fixed" uses `rho`,
    /// "mean-correlation" averages long-term pairwise correlations over the
    /// whole panel.
    #[serde(default = "default_rho_mode")]
    pub rho_mode: String,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Monte-Carlo replicates per simulated reference.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Scale Student t(3) draws to unit variance (raw draws by default).
    #[serde(default)]
    pub standardize_student: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            rho_mode: default_rho_mode(),
            rho: default_rho(),
            samples: default_samples(),
            seed: default_seed(),
            standardize_student: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorsConfig {
    /// Which of A1, A2, A3, B1, B2, B3, B3A, B3B, B3C to compute.
    #[serde(default = "default_series")]
    pub series: Vec<String>,
    /// Trailing window of the B3C smoother.
    #[serde(default = "default_window")]
    pub ma_window: usize,
}

impl Default for IndicatorsConfig {
    fn default() -> Self {
        Self {
            series: default_series(),
            ma_window: default_window(),
        }
    }
}

impl IndicatorsConfig {
    pub fn names(&self) -> Result<Vec<IndicatorName>, CliError> {
        let mut names = Vec::with_capacity(self.series.len());
        for s in &self.series {
            names.push(s.parse::<IndicatorName>().map_err(CliError::Core)?);
        }
        if names.is_empty() {
            return Err(CliError::Config("indicators.series is empty".into()));
        }
        Ok(names)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    /// Indicator whose series is calibrated and backtested.
    #[serde(default = "default_backtest_indicator")]
    pub indicator: String,
    /// Ticker whose price defines the forward drawdown.
    #[serde(default)]
    pub reference_ticker: Option<String>,
    /// Forward drawdown horizon H in trading days.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Drawdown level defining the calibration event.
    #[serde(default = "default_mdd_threshold")]
    pub mdd_threshold: f64,
    /// Thresholds of the drawdown protocol.
    #[serde(default = "default_thresholds")]
    pub mdd_thresholds: Vec<f64>,
    #[serde(default = "default_lookback")]
    pub flag_lookback: usize,
    #[serde(default = "default_fraction")]
    pub flag_fraction: f64,
    /// In-sample calibration slice.
    #[serde(default)]
    pub calibration_start: Option<NaiveDate>,
    #[serde(default)]
    pub calibration_end: Option<NaiveDate>,
    /// Start of the out-of-sample span scored by the threshold protocol;
    /// whole series if unset.
    #[serde(default)]
    pub forecast_start: Option<NaiveDate>,
    /// Quantile levels of the calibration grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// `date,label` crisis calendar; the historical protocol runs with an
    /// empty calendar when unset.
    #[serde(default)]
    pub crisis_calendar: Option<PathBuf>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            indicator: default_backtest_indicator(),
            reference_ticker: None,
            horizon: default_horizon(),
            mdd_threshold: default_mdd_threshold(),
            mdd_thresholds: default_thresholds(),
            flag_lookback: default_lookback(),
            flag_fraction: default_fraction(),
            calibration_start: None,
            calibration_end: None,
            forecast_start: None,
            grid_points: default_grid_points(),
            crisis_calendar: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; `EIGENWATCH_OUT` or `./out` when unset.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_window() -> usize {
    150
}

fn default_pooling() -> usize {
    20
}

fn default_multiplier() -> f64 {
    25.0
}

fn default_bins() -> usize {
    200
}

fn default_truncation_divisor() -> f64 {
    10.0
}

fn default_rescale_mode() -> String {
    "mean-variance".into()
}

fn default_rho_mode() -> String {
    "fixed".into()
}

fn default_rho() -> f64 {
    0.5
}

fn default_samples() -> usize {
    500
}

fn default_seed() -> u64 {
    42
}

fn default_series() -> Vec<String> {
    IndicatorName::ALL.iter().map(|n| n.to_string()).collect()
}

fn default_backtest_indicator() -> String {
    "B3B".into()
}

fn default_horizon() -> usize {
    100
}

fn default_mdd_threshold() -> f64 {
    0.15
}

fn default_thresholds() -> Vec<f64> {
    vec![0.10, 0.15, 0.20, 0.25]
}

fn default_lookback() -> usize {
    100
}

fn default_fraction() -> f64 {
    0.6
}

fn default_grid_points() -> usize {
    101
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if self.window.length < 2 {
            return bad("window.length must be at least 2");
        }
        if self.window.pooling == 0 {
            return bad("window.pooling must be positive");
        }
        if self.support.multiplier < 1.0 {
            return bad("support.multiplier must be at least 1");
        }
        if self.support.bins < 10 {
            return bad("support.bins must be at least 10");
        }
        if self.support.truncation_divisor <= 0.0 {
            return bad("support.truncation_divisor must be positive");
        }
        if !(0.0..=1.0).contains(&self.reference.rho) {
            return bad("reference.rho must lie in [0, 1]");
        }
        if self.reference.samples == 0 {
            return bad("reference.samples must be positive");
        }
        if self.backtest.horizon == 0 {
            return bad("backtest.horizon must be positive");
        }
        if !(0.0..=1.0).contains(&self.backtest.flag_fraction) {
            return bad("backtest.flag_fraction must lie in [0, 1]");
        }
        if self.backtest.grid_points < 2 {
            return bad("backtest.grid_points must be at least 2");
        }
        self.rescale.mode_for_a_series()?;
        self.indicators.names()?;
        self.backtest
            .indicator
            .parse::<IndicatorName>()
            .map_err(CliError::Core)?;
        Ok(())
    }

    /// Input files: explicit paths first, then the sorted directory listing.
    pub fn panel_paths(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut paths = self.panel.paths.clone();
        if let Some(dir) = &self.panel.dir {
            let mut listed: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Config(format!("panel.dir {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
                .collect();
            listed.sort();
            paths.extend(listed);
        }
        if paths.is_empty() {
            return Err(CliError::Config(
                "no input files: set panel.paths or panel.dir".into(),
            ));
        }
        Ok(paths)
    }

    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output.dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("EIGENWATCH_OUT") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("out")
    }
}
