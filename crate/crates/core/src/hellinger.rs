//! The distance-based indicator family.
//!
//! Per date, the spectra of the last `P` rolling covariance matrices are
//! pooled into one histogram, reconciled with each reference below the
//! small-eigenvalue threshold, and scored by Hellinger distance against that
//! reference. Pooling exists because small panels yield only `N` eigenvalues
//! per date; `P = 20` dates give `20 N` observations, enough for a usable
//! normalized histogram.
//!
//! The reconciliation step caps the empirical mass at the reference's mass
//! below `lambda_star = lambda_plus / 10`. Calm, diversified markets pile
//! eigenvalues up near zero, and without the cap that pile dominates the
//! distance; the modified histogram is deliberately left unnormalized so the
//! removed mass is not redistributed back into the comparison.

use rayon::prelude::*;

use crate::density::BinnedDensity;
use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;
use crate::matrices::{
    covariance, eigen_spectrum, rescale_spectrum, RescaleMode, RollingWindow, Spectrum,
};
use crate::references::{mp_edges, MpParams, ReferenceSet};
use crate::series::{IndicatorName, IndicatorSeries};

/// Hellinger distance in its discrete form,
/// `D = sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2)`.
///
/// A true metric on equal-length nonnegative mass vectors, bounded by
/// `sqrt(2)` for probability vectors.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::MismatchedSupport);
    }
    let mut sum = 0.0;
    for (index, (a, b)) in p.iter().zip(q).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite mass at bin {index}"
            )));
        }
        if *a < 0.0 || *b < 0.0 {
            return Err(Error::NegativeMass { index });
        }
        let d = a.sqrt() - b.sqrt();
        sum += d * d;
    }
    Ok(sum.sqrt())
}

/// Eigenvalues pooled from the `P` most recent dates' covariance spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSpectrum {
    pub end_date: chrono::NaiveDate,
    pub eigenvalues: Vec<f64>,
}

/// Concatenates consecutive spectra; the slice is ordered oldest to newest
/// and the pool carries the newest date.
pub fn pool_spectra(spectra: &[Spectrum]) -> Result<PooledSpectrum> {
    let last = spectra.last().ok_or(Error::InsufficientHistory {
        needed: 1,
        available: 0,
    })?;
    let mut eigenvalues = Vec::with_capacity(spectra.iter().map(Spectrum::len).sum());
    for s in spectra {
        eigenvalues.extend_from_slice(&s.eigenvalues);
    }
    Ok(PooledSpectrum {
        end_date: last.end_date,
        eigenvalues,
    })
}

/// Normalized histogram of a pooled spectrum on the reference support.
pub fn empirical_density(pooled: &PooledSpectrum, edges: &[f64]) -> Result<BinnedDensity> {
    BinnedDensity::from_samples(edges, &pooled.eigenvalues)
}

/// The small-eigenvalue threshold `lambda_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationRule {
    pub lambda_star: f64,
}

impl TruncationRule {
    pub fn new(lambda_star: f64) -> Result<Self> {
        if !lambda_star.is_finite() || lambda_star <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda_star {lambda_star} must be positive"
            )));
        }
        Ok(Self { lambda_star })
    }

    /// `lambda_star = lambda_plus / divisor`, with the canonical divisor 10.
    pub fn from_upper_edge(lambda_plus: f64, divisor: f64) -> Result<Self> {
        if !divisor.is_finite() || divisor <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation divisor {divisor} must be positive"
            )));
        }
        Self::new(lambda_plus / divisor)
    }
}

/// Caps the empirical mass at the reference's mass for bins whose center lies
/// below `lambda_star`; bins at or above the threshold pass through.
///
/// The output is a sub-probability vector by construction and is *not*
/// renormalized.
pub fn truncate_modify(
    empirical: &BinnedDensity,
    reference: &BinnedDensity,
    rule: &TruncationRule,
) -> Result<BinnedDensity> {
    if !empirical.same_support(reference) {
        return Err(Error::MismatchedSupport);
    }
    let centers = empirical.bin_centers();
    let mass = centers
        .iter()
        .zip(empirical.mass().iter().zip(reference.mass()))
        .map(|(center, (e, r))| if *center < rule.lambda_star { e.min(*r) } else { *e })
        .collect();
    BinnedDensity::new(empirical.edges().to_vec(), mass)
}

/// Parameters of the distance-indicator pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ASeriesConfig {
    /// Rolling-window length T.
    pub window: usize,
    /// Pooling depth P.
    pub pooling: usize,
    /// `lambda_star = lambda_plus / truncation_divisor`.
    pub truncation_divisor: f64,
    /// How covariance spectra are brought onto the references' unit scale.
    pub rescale: RescaleMode,
}

impl Default for ASeriesConfig {
    fn default() -> Self {
        Self {
            window: crate::matrices::DEFAULT_WINDOW,
            pooling: 20,
            truncation_divisor: 10.0,
            rescale: RescaleMode::MeanVariance {
                start: None,
                end: None,
            },
        }
    }
}

/// Computes A1, A2 and A3 for every date with a full window and pool.
///
/// Warm-up dates are omitted, not padded: with `D` return observations the
/// three series are defined on exactly `D - (T - 1) - (P - 1)` dates. A3 is
/// the inverted indicator; see [`IndicatorName::A3`].
pub fn a_series(
    returns: &ReturnPanel,
    refs: &ReferenceSet,
    cfg: &ASeriesConfig,
) -> Result<[IndicatorSeries; 3]> {
    if cfg.window < 2 {
        return Err(Error::InvalidParameter("window must be at least 2".into()));
    }
    if cfg.pooling == 0 {
        return Err(Error::InvalidParameter("pooling must be positive".into()));
    }
    let t = cfg.window;
    let p = cfg.pooling;
    let available = returns.n_dates();
    let needed = t + p - 1;
    if available < needed {
        return Err(Error::InsufficientHistory { needed, available });
    }

    let params = MpParams::from_shape(returns.n_assets(), t)?;
    let (_, lambda_plus) = mp_edges(&params);
    let rule = TruncationRule::from_upper_edge(lambda_plus, cfg.truncation_divisor)?;
    let factor = cfg.rescale.resolve(returns)?;

    let spectra: Vec<Spectrum> = (t - 1..available)
        .into_par_iter()
        .map(|end| {
            let window = RollingWindow::from_returns(returns, end, t)?;
            let cov = covariance(&window)?;
            let spectrum = eigen_spectrum(&cov.values, cov.end_date)?;
            rescale_spectrum(&spectrum, factor)
        })
        .collect::<Result<_>>()?;

    let edges = refs.support();
    let rows: Vec<(chrono::NaiveDate, f64, f64, f64)> = (p - 1..spectra.len())
        .into_par_iter()
        .map(|end| {
            let pooled = pool_spectra(&spectra[end + 1 - p..=end])?;
            let empirical = empirical_density(&pooled, edges)?;
            let mut distances = [0.0; 3];
            for (slot, theta) in [refs.theta1(), refs.theta2(), refs.theta3()]
                .into_iter()
                .enumerate()
            {
                let modified = truncate_modify(&empirical, theta, &rule)?;
                distances[slot] = hellinger(modified.mass(), theta.mass())?;
            }
            Ok((pooled.end_date, distances[0], distances[1], distances[2]))
        })
        .collect::<Result<_>>()?;

    let dates: Vec<chrono::NaiveDate> = rows.iter().map(|r| r.0).collect();
    let a1 = IndicatorSeries::new(
        IndicatorName::A1,
        dates.clone(),
        rows.iter().map(|r| r.1).collect(),
    )?;
    let a2 = IndicatorSeries::new(
        IndicatorName::A2,
        dates.clone(),
        rows.iter().map(|r| r.2).collect(),
    )?;
    let a3 = IndicatorSeries::new(IndicatorName::A3, dates, rows.iter().map(|r| r.3).collect())?;
    Ok([a1, a2, a3])
}
