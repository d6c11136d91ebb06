//! The spectral-scalar indicator family.
//!
//! B1 is the spectral radius of the rolling covariance matrix (mixed
//! volatility/correlation signal), B2 its trace (volatility alone), B3 the
//! spectral radius of the correlation matrix (correlation alone). B3A and B3B
//! reweight the correlation matrix by market capitalization and traded
//! volume; B3C smooths B3B with a trailing moving average.

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::{log_returns, AssetPanel};
use crate::matrices::{
    correlation, covariance, weight_correlation, CorrelationMatrix, CovarianceMatrix, RescaleMode,
    RollingWindow,
};
use crate::series::{IndicatorName, IndicatorSeries};

/// B1: largest eigenvalue of the covariance matrix.
pub fn covariance_spectral_radius(cov: &CovarianceMatrix) -> Result<f64> {
    Ok(cov.spectrum()?.top())
}

/// B2: trace of the covariance matrix. Equals the eigenvalue sum, without
/// needing the decomposition.
pub fn covariance_trace(cov: &CovarianceMatrix) -> f64 {
    cov.values.trace()
}

/// B3: largest eigenvalue of the correlation matrix, in `[1, N]`.
pub fn correlation_spectral_radius(corr: &CorrelationMatrix) -> Result<f64> {
    Ok(corr.spectrum()?.top())
}

/// B3A/B3B: spectral radius of the weighted correlation matrix for the
/// weight row (market cap or volume) at the window's end date.
pub fn weighted_spectral_radius(corr: &CorrelationMatrix, weights: &[f64]) -> Result<f64> {
    Ok(weight_correlation(corr, weights)?.spectrum()?.top())
}

/// Strictly trailing moving average: the output at `t` averages the `window`
/// values *before* `t`, excluding `t` itself, and is emitted only once a full
/// history exists.
pub fn trailing_moving_average(series: &IndicatorSeries, window: usize) -> Result<IndicatorSeries> {
    if window == 0 {
        return Err(Error::InvalidParameter(
            "moving-average window must be positive".into(),
        ));
    }
    if series.len() < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: series.len(),
        });
    }
    let values = series.values();
    let mut dates = Vec::with_capacity(series.len() - window);
    let mut averaged = Vec::with_capacity(series.len() - window);
    for i in window..series.len() {
        let mean = values[i - window..i].iter().sum::<f64>() / window as f64;
        dates.push(series.dates()[i]);
        averaged.push(mean);
    }
    IndicatorSeries::new(series.name(), dates, averaged)
}

/// Parameters of the spectral-scalar pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSeriesConfig {
    /// Rolling-window length T.
    pub window: usize,
    /// Rescaling of covariance spectra. Off by default: B1/B2 are reported in
    /// raw return-variance units unless configured otherwise.
    pub rescale: RescaleMode,
    /// Trailing window of the B3C smoother.
    pub ma_window: usize,
}

impl Default for BSeriesConfig {
    fn default() -> Self {
        Self {
            window: crate::matrices::DEFAULT_WINDOW,
            rescale: RescaleMode::None,
            ma_window: crate::matrices::DEFAULT_WINDOW,
        }
    }
}

/// A weighted indicator skipped on a date because its weight row was unusable.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedDate {
    pub date: NaiveDate,
    pub indicator: IndicatorName,
    pub reason: String,
}

/// Everything the spectral pipeline produced.
#[derive(Debug, Clone, PartialEq)]
pub struct BSeriesOutput {
    /// B1, B2, B3, then B3A/B3B/B3C when the panel carries weights.
    pub series: Vec<IndicatorSeries>,
    /// Dates where a weighted indicator was skipped rather than filled.
    pub skipped: Vec<SkippedDate>,
}

impl BSeriesOutput {
    pub fn get(&self, name: IndicatorName) -> Option<&IndicatorSeries> {
        self.series.iter().find(|s| s.name() == name)
    }
}

struct DateRow {
    date: NaiveDate,
    b1: f64,
    b2: f64,
    b3: f64,
    b3a: Option<f64>,
    b3b: Option<f64>,
    skipped: Vec<SkippedDate>,
}

fn weight_column(
    panel: &AssetPanel,
    matrix: &nalgebra::DMatrix<f64>,
    column: usize,
) -> std::result::Result<Vec<f64>, String> {
    let weights: Vec<f64> = (0..panel.n_assets()).map(|i| matrix[(i, column)]).collect();
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || *w <= 0.0 {
            return Err(format!(
                "non-positive weight {w} for {}",
                panel.tickers()[i]
            ));
        }
    }
    Ok(weights)
}

/// Computes B1/B2/B3 per date, plus B3A/B3B/B3C when weight panels exist.
///
/// A date whose market-cap or volume row is unusable is skipped for that
/// weighted indicator and reported; a fabricated weight would silently
/// distort the spectral radius.
pub fn b_series(panel: &AssetPanel, cfg: &BSeriesConfig) -> Result<BSeriesOutput> {
    if cfg.window < 2 {
        return Err(Error::InvalidParameter("window must be at least 2".into()));
    }
    let returns = log_returns(panel)?;
    let t = cfg.window;
    let available = returns.n_dates();
    if available < t {
        return Err(Error::InsufficientHistory {
            needed: t,
            available,
        });
    }
    let factor = cfg.rescale.resolve(&returns)?;

    let rows: Vec<DateRow> = (t - 1..available)
        .into_par_iter()
        .map(|end| -> Result<DateRow> {
            let window = RollingWindow::from_returns(&returns, end, t)?;
            let date = window.end_date;
            let cov = covariance(&window)?;
            let b1 = covariance_spectral_radius(&cov)? * factor;
            let b2 = covariance_trace(&cov) * factor;
            let corr = correlation(&window).map_err(|e| match e {
                Error::DegenerateRow { row } => Error::DegenerateAsset {
                    ticker: returns.tickers()[row].clone(),
                    date,
                },
                other => other,
            })?;
            let b3 = correlation_spectral_radius(&corr)?;

            // weights are read at the window's end date in the price panel
            let panel_column = end + 1;
            let mut skipped = Vec::new();
            let mut weighted = |matrix: Option<&nalgebra::DMatrix<f64>>,
                                name: IndicatorName|
             -> Result<Option<f64>> {
                let Some(matrix) = matrix else {
                    return Ok(None);
                };
                match weight_column(panel, matrix, panel_column) {
                    Ok(weights) => Ok(Some(weighted_spectral_radius(&corr, &weights)?)),
                    Err(reason) => {
                        skipped.push(SkippedDate {
                            date,
                            indicator: name,
                            reason,
                        });
                        Ok(None)
                    }
                }
            };
            let b3a = weighted(panel.market_cap(), IndicatorName::B3A)?;
            let b3b = weighted(panel.volume(), IndicatorName::B3B)?;
            Ok(DateRow {
                date,
                b1,
                b2,
                b3,
                b3a,
                b3b,
                skipped,
            })
        })
        .collect::<Result<_>>()?;

    let dates: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect();
    let mut series = vec![
        IndicatorSeries::new(
            IndicatorName::B1,
            dates.clone(),
            rows.iter().map(|r| r.b1).collect(),
        )?,
        IndicatorSeries::new(
            IndicatorName::B2,
            dates.clone(),
            rows.iter().map(|r| r.b2).collect(),
        )?,
        IndicatorSeries::new(IndicatorName::B3, dates, rows.iter().map(|r| r.b3).collect())?,
    ];

    let optional = |name: IndicatorName, pick: fn(&DateRow) -> Option<f64>| -> Result<Option<IndicatorSeries>> {
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for row in &rows {
            if let Some(v) = pick(row) {
                dates.push(row.date);
                values.push(v);
            }
        }
        if dates.is_empty() {
            Ok(None)
        } else {
            Ok(Some(IndicatorSeries::new(name, dates, values)?))
        }
    };

    let has_caps = panel.market_cap().is_some();
    let has_volume = panel.volume().is_some();
    if has_caps {
        if let Some(s) = optional(IndicatorName::B3A, |r| r.b3a)? {
            series.push(s);
        }
    }
    let b3b = if has_volume {
        optional(IndicatorName::B3B, |r| r.b3b)?
    } else {
        None
    };
    if let Some(b3b) = b3b {
        if b3b.len() > cfg.ma_window {
            let b3c = trailing_moving_average(&b3b, cfg.ma_window)?.renamed(IndicatorName::B3C);
            series.push(b3b);
            series.push(b3c);
        } else {
            series.push(b3b);
        }
    }

    let skipped = rows.into_iter().flat_map(|r| r.skipped).collect();
    Ok(BSeriesOutput { series, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synthetic_panel, Regime, SyntheticSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
    }

    fn cov(values: DMatrix<f64>) -> CovarianceMatrix {
        CovarianceMatrix {
            end_date: d0(),
            values,
        }
    }

    fn corr(values: DMatrix<f64>) -> CorrelationMatrix {
        CorrelationMatrix {
            end_date: d0(),
            values,
        }
    }

    #[test]
    fn radius_of_zero_and_diagonal_matrices() {
        assert_eq!(
            covariance_spectral_radius(&cov(DMatrix::zeros(3, 3))).unwrap(),
            0.0
        );
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        assert_relative_eq!(
            covariance_spectral_radius(&cov(m)).unwrap(),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rank_one_radius_is_the_squared_norm() {
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let expected = v.norm_squared(); // 9
        assert_relative_eq!(
            covariance_spectral_radius(&cov(m)).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn trace_identities() {
        assert_eq!(covariance_trace(&cov(DMatrix::identity(5, 5))), 5.0);
        let w = RollingWindow::new(
            d0(),
            DMatrix::from_fn(2, 400, |i, k| {
                // two deterministic, roughly unit-variance uncorrelated rows
                let x = k as f64 * 0.7 + i as f64 * 1.3;
                if i == 0 {
                    2f64.sqrt() * x.sin()
                } else {
                    2f64.sqrt() * (x * 1.618 + 0.5).cos()
                }
            }),
        );
        let c = covariance(&w).unwrap();
        let b2 = covariance_trace(&c);
        assert!((b2 - 2.0).abs() < 0.2, "b2 {b2}");
        let b1 = covariance_spectral_radius(&c).unwrap();
        assert!(b1 <= b2 + 1e-12);
    }

    #[test]
    fn correlation_radius_brackets() {
        assert_relative_eq!(
            correlation_spectral_radius(&corr(DMatrix::identity(4, 4))).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        let ones = DMatrix::from_element(5, 5, 1.0);
        assert_relative_eq!(
            correlation_spectral_radius(&corr(ones)).unwrap(),
            5.0,
            epsilon = 1e-9
        );
        let n = 11;
        let equi = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.5 });
        assert_relative_eq!(
            correlation_spectral_radius(&corr(equi)).unwrap(),
            6.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn equal_weights_divide_the_radius_by_n() {
        let n = 6;
        let equi = corr(DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.3 }));
        let b3 = correlation_spectral_radius(&equi).unwrap();
        let weighted = weighted_spectral_radius(&equi, &vec![2.0; n]).unwrap();
        assert_relative_eq!(weighted, b3 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn single_asset_weighted_radius_is_one() {
        let one = corr(DMatrix::from_element(1, 1, 1.0));
        assert_relative_eq!(
            weighted_spectral_radius(&one, &[7.5]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hand_weighted_two_by_two_radius() {
        let m = corr(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let radius = weighted_spectral_radius(&m, &[3.0, 4.0]).unwrap();
        // closed-form top eigenvalue of [[9/25, 6/25], [6/25, 16/25]]
        let (a, d, b): (f64, f64, f64) = (9.0 / 25.0, 16.0 / 25.0, 6.0 / 25.0);
        let expected = 0.5 * (a + d + ((a - d).powi(2) + 4.0 * b * b).sqrt());
        assert_relative_eq!(radius, expected, epsilon = 1e-12);
    }

    #[test]
    fn moving_average_of_constant_series_is_constant() {
        let dates: Vec<NaiveDate> = (0..10).map(|k| d0() + chrono::Duration::days(k)).collect();
        let s = IndicatorSeries::new(IndicatorName::B3B, dates, vec![2.5; 10]).unwrap();
        let ma = trailing_moving_average(&s, 4).unwrap();
        assert_eq!(ma.len(), 6);
        assert!(ma.values().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn window_one_lags_by_one_date() {
        let dates: Vec<NaiveDate> = (0..5).map(|k| d0() + chrono::Duration::days(k)).collect();
        let s = IndicatorSeries::new(IndicatorName::B3B, dates.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap();
        let ma = trailing_moving_average(&s, 1).unwrap();
        assert_eq!(ma.dates(), &dates[1..]);
        assert_eq!(ma.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ramp_with_window_two_averages_prior_pairs() {
        let dates: Vec<NaiveDate> = (0..6).map(|k| d0() + chrono::Duration::days(k)).collect();
        let s = IndicatorSeries::new(
            IndicatorName::B3B,
            dates,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let ma = trailing_moving_average(&s, 2).unwrap();
        assert_eq!(ma.values(), &[1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn moving_average_commutes_with_affine_maps() {
        let dates: Vec<NaiveDate> = (0..40).map(|k| d0() + chrono::Duration::days(k)).collect();
        let values: Vec<f64> = (0..40).map(|k| ((k * k) % 17) as f64 * 0.3).collect();
        let s = IndicatorSeries::new(IndicatorName::B3B, dates.clone(), values.clone()).unwrap();
        let mapped = IndicatorSeries::new(
            IndicatorName::B3B,
            dates,
            values.iter().map(|v| 2.5 * v - 1.25).collect(),
        )
        .unwrap();
        let a = trailing_moving_average(&mapped, 7).unwrap();
        let b = trailing_moving_average(&s, 7).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(*x, 2.5 * y - 1.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn moving_average_needs_enough_history() {
        let s = IndicatorSeries::new(
            IndicatorName::B3B,
            vec![d0(), d0() + chrono::Duration::days(1)],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert!(matches!(
            trailing_moving_average(&s, 5),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    fn weighted_panel(days: usize, seed: u64) -> crate::market_data::AssetPanel {
        let mut spec = SyntheticSpec::new(6, vec![Regime::gaussian(days, 0.01, 0.4)]);
        spec.with_weights = true;
        synthetic_panel(&spec, seed).unwrap()
    }

    #[test]
    fn full_pipeline_emits_all_six_series() {
        let panel = weighted_panel(120, 61);
        let cfg = BSeriesConfig {
            window: 40,
            rescale: RescaleMode::None,
            ma_window: 20,
        };
        let out = b_series(&panel, &cfg).unwrap();
        let names: Vec<IndicatorName> = out.series.iter().map(|s| s.name()).collect();
        assert_eq!(
            names,
            vec![
                IndicatorName::B1,
                IndicatorName::B2,
                IndicatorName::B3,
                IndicatorName::B3A,
                IndicatorName::B3B,
                IndicatorName::B3C
            ]
        );
        assert!(out.skipped.is_empty());
        let b1 = out.get(IndicatorName::B1).unwrap();
        let b2 = out.get(IndicatorName::B2).unwrap();
        let b3 = out.get(IndicatorName::B3).unwrap();
        // 120 returns, window 40
        assert_eq!(b1.len(), 81);
        for ((x, y), z) in b1.values().iter().zip(b2.values()).zip(b3.values()) {
            assert!(x <= &(y + 1e-15), "b1 {x} > b2 {y}");
            assert!((1.0 - 1e-9..=6.0 + 1e-9).contains(z));
        }
        // b3c is the trailing average of b3b
        let b3b = out.get(IndicatorName::B3B).unwrap();
        let b3c = out.get(IndicatorName::B3C).unwrap();
        assert_eq!(b3c.len(), b3b.len() - 20);
    }

    #[test]
    fn panels_without_weights_emit_only_the_plain_series() {
        let spec = SyntheticSpec::new(5, vec![Regime::gaussian(80, 0.01, 0.2)]);
        let panel = synthetic_panel(&spec, 62).unwrap();
        let out = b_series(
            &panel,
            &BSeriesConfig {
                window: 30,
                rescale: RescaleMode::None,
                ma_window: 10,
            },
        )
        .unwrap();
        assert_eq!(out.series.len(), 3);
    }

    #[test]
    fn b1_and_b2_move_together_on_synthetic_panels() {
        let spec = SyntheticSpec::new(
            8,
            vec![
                Regime::gaussian(150, 0.01, 0.3),
                Regime::gaussian(150, 0.03, 0.5),
                Regime::gaussian(150, 0.015, 0.2),
            ],
        );
        let panel = synthetic_panel(&spec, 63).unwrap();
        let out = b_series(
            &panel,
            &BSeriesConfig {
                window: 60,
                rescale: RescaleMode::None,
                ma_window: 10,
            },
        )
        .unwrap();
        let b1 = out.get(IndicatorName::B1).unwrap().values();
        let b2 = out.get(IndicatorName::B2).unwrap().values();
        let spearman = spearman(b1, b2);
        assert!(spearman > 0.8, "spearman {spearman}");
    }

    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut r = vec![0.0; values.len()];
        for (rank, &i) in order.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = ra.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in ra.iter().zip(&rb) {
            cov += (x - ma) * (y - mb);
            va += (x - ma).powi(2);
            vb += (y - mb).powi(2);
        }
        cov / (va.sqrt() * vb.sqrt())
    }
}
