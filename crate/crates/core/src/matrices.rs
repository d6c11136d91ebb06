//! Rolling windows and the matrix pipeline: row centering, covariance,
//! correlation, weighted correlation, eigenvalue spectra and rescaling.
//!
//! Conventions, applied everywhere: covariance and correlation use the biased
//! `1/T` normalization (no Bessel correction), and the correlation matrix is
//! formed as `(1/T) S S'` over rows standardized by their biased standard
//! deviation, which is the unique reading that yields a unit diagonal.

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;

/// Default rolling-window length in trading days.
pub const DEFAULT_WINDOW: usize = 150;

/// Row variance (squared-return units) below which an asset is declared
/// degenerate. Guards against division blow-ups from stale or filled prices.
pub const VARIANCE_FLOOR: f64 = 1e-18;

/// Relative symmetry tolerance accepted by [`eigen_spectrum`].
const SYMMETRY_TOL: f64 = 1e-9;

/// An N x T block of log-returns ending at a date; the T columns are the T
/// most recent observations up to and including `end_date`.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingWindow {
    pub end_date: NaiveDate,
    pub data: DMatrix<f64>,
}

impl RollingWindow {
    pub fn new(end_date: NaiveDate, data: DMatrix<f64>) -> Self {
        Self { end_date, data }
    }

    /// Cuts the window of `length` return observations ending at return-date
    /// index `end_index`.
    pub fn from_returns(returns: &ReturnPanel, end_index: usize, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidParameter("window length must be positive".into()));
        }
        if end_index >= returns.n_dates() || end_index + 1 < length {
            return Err(Error::InsufficientHistory {
                needed: length,
                available: end_index.min(returns.n_dates()) + 1,
            });
        }
        let data = returns
            .returns()
            .columns(end_index + 1 - length, length)
            .into_owned();
        Ok(Self {
            end_date: returns.dates()[end_index],
            data,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Subtracts each row's mean. Idempotent on already-centered rows.
pub fn center_rows(window: &RollingWindow) -> RollingWindow {
    let mut data = window.data.clone();
    for mut row in data.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    RollingWindow {
        end_date: window.end_date,
        data,
    }
}

/// Rolling covariance matrix `(1/T) M M'` over centered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub end_date: NaiveDate,
    pub values: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn spectrum(&self) -> Result<Spectrum> {
        eigen_spectrum(&self.values, self.end_date)
    }
}

/// Rolling correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub end_date: NaiveDate,
    pub values: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn spectrum(&self) -> Result<Spectrum> {
        eigen_spectrum(&self.values, self.end_date)
    }
}

/// Correlation matrix reweighted by per-asset weights; not unit-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCorrelationMatrix {
    pub end_date: NaiveDate,
    pub values: DMatrix<f64>,
}

impl WeightedCorrelationMatrix {
    pub fn spectrum(&self) -> Result<Spectrum> {
        eigen_spectrum(&self.values, self.end_date)
    }
}

/// Biased covariance of the window: centers internally, then `(1/T) M M'`.
pub fn covariance(window: &RollingWindow) -> Result<CovarianceMatrix> {
    let t = window.len();
    if t < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: t,
        });
    }
    let centered = center_rows(window);
    let values = (&centered.data * centered.data.transpose()) / t as f64;
    Ok(CovarianceMatrix {
        end_date: window.end_date,
        values,
    })
}

/// Pearson correlation matrix (biased, `1/T`) of the window rows.
///
/// A row whose variance falls below [`VARIANCE_FLOOR`] yields
/// [`Error::DegenerateRow`]; panel-level callers translate the row index into
/// a ticker name.
pub fn correlation(window: &RollingWindow) -> Result<CorrelationMatrix> {
    let t = window.len();
    if t < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: t,
        });
    }
    let mut standardized = center_rows(window).data;
    for (row_index, mut row) in standardized.row_iter_mut().enumerate() {
        let var = row.iter().map(|v| v * v).sum::<f64>() / t as f64;
        if !var.is_finite() || var <= VARIANCE_FLOOR {
            return Err(Error::DegenerateRow { row: row_index });
        }
        let inv_sd = 1.0 / var.sqrt();
        row.apply(|v| *v *= inv_sd);
    }
    let values = (&standardized * standardized.transpose()) / t as f64;
    Ok(CorrelationMatrix {
        end_date: window.end_date,
        values,
    })
}

/// Reweights a correlation matrix: entry `(i, j)` becomes
/// `CR(i, j) * w_i w_j / sum_k w_k^2`.
pub fn weight_correlation(
    matrix: &CorrelationMatrix,
    weights: &[f64],
) -> Result<WeightedCorrelationMatrix> {
    let n = matrix.values.nrows();
    if weights.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} weights for a {n}x{n} matrix",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidParameter(
            "weights must be strictly positive and finite".into(),
        ));
    }
    let norm: f64 = weights.iter().map(|w| w * w).sum();
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::InvalidParameter("weight norm overflowed".into()));
    }
    let values = DMatrix::from_fn(n, n, |i, j| {
        matrix.values[(i, j)] * ((weights[i] * weights[j]) / norm)
    });
    Ok(WeightedCorrelationMatrix {
        end_date: matrix.end_date,
        values,
    })
}

/// Eigenvalues of a symmetric matrix, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub end_date: NaiveDate,
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Largest eigenvalue (the spectral radius for PSD inputs).
    pub fn top(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Full eigenvalue spectrum of a symmetric matrix, descending.
///
/// The input is checked for symmetry to a relative `1e-9`, symmetrized, and
/// decomposed. Eigenvalues in `(-1e-9 * lambda_max, 0)` are clamped to zero so
/// PSD rounding noise cannot create negative-support histogram bins.
pub fn eigen_spectrum(matrix: &DMatrix<f64>, end_date: NaiveDate) -> Result<Spectrum> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "expected a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let max_abs = matrix.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut max_asymmetry = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asymmetry = max_asymmetry.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if max_asymmetry > SYMMETRY_TOL * max_abs {
        return Err(Error::NotSymmetric { max_asymmetry });
    }
    let symmetrized = (matrix + matrix.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = symmetrized.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let top = eigenvalues[0];
    if top > 0.0 {
        let floor = -1e-9 * top;
        for v in &mut eigenvalues {
            if *v < 0.0 && *v > floor {
                *v = 0.0;
            }
        }
    }
    Ok(Spectrum {
        end_date,
        eigenvalues,
    })
}

/// Multiplies every eigenvalue by a positive factor; ordering is preserved.
pub fn rescale_spectrum(spectrum: &Spectrum, factor: f64) -> Result<Spectrum> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "rescaling factor {factor} must be positive"
        )));
    }
    Ok(Spectrum {
        end_date: spectrum.end_date,
        eigenvalues: spectrum.eigenvalues.iter().map(|v| v * factor).collect(),
    })
}

/// How covariance spectra are brought onto the unit-variance scale of the
/// reference distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RescaleMode {
    /// Leave spectra in raw return-variance units.
    None,
    /// Multiply by a fixed factor, e.g. `1/a^2` for a typical daily
    /// volatility `a` in `[0.01, 0.03]`.
    Fixed(f64),
    /// Multiply by the inverse of the mean per-asset return variance over a
    /// calibration slice (the whole panel when no bounds are given).
    MeanVariance {
        start: Option<NaiveDate>,
        end: Option<NaiveDate>,
    },
}

impl RescaleMode {
    pub fn resolve(&self, returns: &ReturnPanel) -> Result<f64> {
        match *self {
            RescaleMode::None => Ok(1.0),
            RescaleMode::Fixed(factor) => {
                if !factor.is_finite() || factor <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "rescaling factor {factor} must be positive"
                    )));
                }
                Ok(factor)
            }
            RescaleMode::MeanVariance { start, end } => mean_variance_factor(returns, start, end),
        }
    }
}

fn date_slice(
    returns: &ReturnPanel,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<(usize, usize)> {
    let dates = returns.dates();
    let from = match start {
        Some(s) => dates.partition_point(|d| *d < s),
        None => 0,
    };
    let to = match end {
        Some(e) => dates.partition_point(|d| *d <= e),
        None => dates.len(),
    };
    if from >= to {
        return Err(Error::EmptyOverlap);
    }
    Ok((from, to))
}

/// `1 / mean(per-asset biased variance)` over a calibration slice.
pub fn mean_variance_factor(
    returns: &ReturnPanel,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<f64> {
    let (from, to) = date_slice(returns, start, end)?;
    let t = to - from;
    if t < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: t,
        });
    }
    let m = returns.returns();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let mean = (from..to).map(|k| m[(i, k)]).sum::<f64>() / t as f64;
        acc += (from..to).map(|k| (m[(i, k)] - mean).powi(2)).sum::<f64>() / t as f64;
    }
    let mean_var = acc / m.nrows() as f64;
    if !mean_var.is_finite() || mean_var <= 0.0 {
        return Err(Error::InvalidParameter(
            "mean variance of the calibration slice is not positive".into(),
        ));
    }
    Ok(1.0 / mean_var)
}

/// Average off-diagonal correlation over a calibration slice; the long-term
/// estimate used to pick the reference correlation level.
pub fn mean_pairwise_correlation(
    returns: &ReturnPanel,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<f64> {
    let n = returns.n_assets();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "need at least two assets for pairwise correlations".into(),
        ));
    }
    let (from, to) = date_slice(returns, start, end)?;
    let window = RollingWindow {
        end_date: returns.dates()[to - 1],
        data: returns.returns().columns(from, to - from).into_owned(),
    };
    let corr = correlation(&window)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += corr.values[(i, j)];
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()
    }

    fn window(rows: usize, cols: usize, data: &[f64]) -> RollingWindow {
        RollingWindow::new(d0(), DMatrix::from_row_slice(rows, cols, data))
    }

    fn random_window(rng: &mut StdRng, n: usize, t: usize) -> RollingWindow {
        let data = DMatrix::from_fn(n, t, |_, _| rng.random_range(-0.05..0.05));
        RollingWindow::new(d0(), data)
    }

    #[test]
    fn centering_simple_row() {
        let w = window(1, 3, &[1.0, 2.0, 3.0]);
        let c = center_rows(&w);
        assert_eq!(c.data.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn centering_is_idempotent_on_centered_rows() {
        let w = window(1, 3, &[-1.0, 0.0, 1.0]);
        let c = center_rows(&w);
        assert_eq!(c.data, w.data);
    }

    #[test]
    fn centering_leaves_tiny_row_means() {
        let mut rng = StdRng::seed_from_u64(1);
        let w = random_window(&mut rng, 6, 40);
        let c = center_rows(&w);
        for row in c.data.row_iter() {
            assert!(row.mean().abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_of_constant_window_is_zero() {
        let w = window(2, 4, &[3.0; 8]);
        let cv = covariance(&w).unwrap();
        assert!(cv.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn covariance_of_identical_rows() {
        // two identical rows: all four entries equal the row's biased variance
        let w = window(2, 4, &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let cv = covariance(&w).unwrap();
        let var = 1.25; // mean 2.5, squared deviations (2.25, .25, .25, 2.25) / 4
        for v in cv.values.iter() {
            assert_relative_eq!(*v, var, epsilon = 1e-15);
        }
        assert_relative_eq!(cv.values.trace(), 2.0 * var, epsilon = 1e-15);
    }

    #[test]
    fn covariance_of_single_row_is_biased_variance() {
        let w = window(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let cv = covariance(&w).unwrap();
        assert_eq!(cv.values.nrows(), 1);
        assert_relative_eq!(cv.values[(0, 0)], 1.25, epsilon = 1e-15);
    }

    #[test]
    fn covariance_needs_two_observations() {
        let w = window(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            covariance(&w),
            Err(Error::InsufficientHistory { needed: 2, .. })
        ));
    }

    #[test]
    fn covariance_is_invariant_under_precentering() {
        let mut rng = StdRng::seed_from_u64(2);
        let w = random_window(&mut rng, 5, 30);
        let a = covariance(&w).unwrap();
        let b = covariance(&center_rows(&w)).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn perfect_anticorrelation() {
        let w = window(2, 3, &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
        let cr = correlation(&w).unwrap();
        assert_relative_eq!(cr.values[(0, 1)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(cr.values[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_row_has_unit_correlation() {
        let w = window(2, 4, &[0.1, -0.2, 0.3, 0.05, 0.1, -0.2, 0.3, 0.05]);
        let cr = correlation(&w).unwrap();
        assert_relative_eq!(cr.values[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn independent_long_rows_decorrelate() {
        let mut rng = StdRng::seed_from_u64(3);
        let w = random_window(&mut rng, 2, 10_000);
        let cr = correlation(&w).unwrap();
        assert!(cr.values[(0, 1)].abs() < 0.05);
    }

    #[test]
    fn degenerate_row_is_reported_by_index() {
        let w = window(2, 4, &[1.0, 1.0, 1.0, 1.0, 0.1, 0.2, 0.3, 0.4]);
        match correlation(&w) {
            Err(Error::DegenerateRow { row }) => assert_eq!(row, 0),
            other => panic!("expected degenerate row, got {other:?}"),
        }
    }

    #[test]
    fn unit_diagonal_and_bounded_entries() {
        let mut rng = StdRng::seed_from_u64(4);
        let w = random_window(&mut rng, 8, 60);
        let cr = correlation(&w).unwrap();
        for i in 0..8 {
            assert_relative_eq!(cr.values[(i, i)], 1.0, epsilon = 1e-9);
            for j in 0..8 {
                assert!(cr.values[(i, j)].abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn equal_weights_scale_by_inverse_n() {
        let mut rng = StdRng::seed_from_u64(5);
        let w = random_window(&mut rng, 6, 50);
        let cr = correlation(&w).unwrap();
        let weighted = weight_correlation(&cr, &[1.0; 6]).unwrap();
        let inv_n = 1.0 / 6.0;
        for (a, b) in weighted.values.iter().zip(cr.values.iter()) {
            assert_eq!(*a, b * inv_n);
        }
    }

    #[test]
    fn tiny_second_weight_leaves_first_self_term() {
        let cr = CorrelationMatrix {
            end_date: d0(),
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        };
        let weighted = weight_correlation(&cr, &[1.0, 1e-9]).unwrap();
        assert_relative_eq!(weighted.values[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(weighted.values[(1, 1)].abs() < 1e-15);
        assert!(weighted.values[(0, 1)].abs() < 1e-8);
    }

    #[test]
    fn hand_weighted_two_by_two() {
        let cr = CorrelationMatrix {
            end_date: d0(),
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        };
        let weighted = weight_correlation(&cr, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(weighted.values[(0, 1)], 0.24, epsilon = 1e-15);
        assert_relative_eq!(weighted.values[(0, 0)], 9.0 / 25.0, epsilon = 1e-15);
        assert_relative_eq!(weighted.values[(1, 1)], 16.0 / 25.0, epsilon = 1e-15);
    }

    #[test]
    fn nonpositive_weights_are_rejected() {
        let cr = CorrelationMatrix {
            end_date: d0(),
            values: DMatrix::identity(2, 2),
        };
        assert!(weight_correlation(&cr, &[1.0, 0.0]).is_err());
        assert!(weight_correlation(&cr, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn identity_spectrum() {
        let s = eigen_spectrum(&DMatrix::identity(3, 3), d0()).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_keeps_negatives() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 2.0, -1.0]));
        let s = eigen_spectrum(&m, d0()).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 5.0, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn equicorrelation_spectrum_matches_closed_form() {
        // eigenvalues 1 + (N-1) r and 1 - r
        let n = 4;
        let r = 0.5;
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { r });
        let s = eigen_spectrum(&m, d0()).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 2.5, epsilon = 1e-10);
        for k in 1..n {
            assert_relative_eq!(s.eigenvalues[k], 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            eigen_spectrum(&m, d0()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn trace_equals_eigenvalue_sum_on_random_covariances() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..50 {
            let w = random_window(&mut rng, 7, 40);
            let cv = covariance(&w).unwrap();
            let s = cv.spectrum().unwrap();
            let trace = cv.values.trace();
            assert_relative_eq!(s.sum(), trace, max_relative = 1e-8);
            assert!(s.eigenvalues.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn correlation_radius_lies_in_one_to_n() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..25 {
            let w = random_window(&mut rng, 5, 80);
            let cr = correlation(&w).unwrap();
            let s = cr.spectrum().unwrap();
            assert!(s.top() >= 1.0 - 1e-9 && s.top() <= 5.0 + 1e-9);
            assert_relative_eq!(cr.values.trace(), 5.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn permuting_assets_permutes_matrices_and_preserves_spectra() {
        let mut rng = StdRng::seed_from_u64(8);
        let w = random_window(&mut rng, 5, 60);
        let perm = [3usize, 0, 4, 1, 2];
        let permuted = RollingWindow::new(
            w.end_date,
            DMatrix::from_fn(5, 60, |i, k| w.data[(perm[i], k)]),
        );
        let cv = covariance(&w).unwrap();
        let cvp = covariance(&permuted).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_relative_eq!(
                    cvp.values[(i, j)],
                    cv.values[(perm[i], perm[j])],
                    epsilon = 1e-15
                );
            }
        }
        let s = cv.spectrum().unwrap();
        let sp = cvp.spectrum().unwrap();
        for (a, b) in s.eigenvalues.iter().zip(sp.eigenvalues.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn rescaling_by_one_is_identity() {
        let s = Spectrum {
            end_date: d0(),
            eigenvalues: vec![2.0, 1.0, 0.0],
        };
        assert_eq!(rescale_spectrum(&s, 1.0).unwrap(), s);
    }

    #[test]
    fn rescaling_by_dataset_factor() {
        let s = Spectrum {
            end_date: d0(),
            eigenvalues: vec![2.0, 1.0, 0.0],
        };
        let r = rescale_spectrum(&s, 3410.0).unwrap();
        assert_eq!(r.eigenvalues, vec![6820.0, 3410.0, 0.0]);
    }

    #[test]
    fn rescaling_rejects_nonpositive_factors() {
        let s = Spectrum {
            end_date: d0(),
            eigenvalues: vec![1.0],
        };
        assert!(rescale_spectrum(&s, 0.0).is_err());
        assert!(rescale_spectrum(&s, -2.0).is_err());
    }

    #[test]
    fn mean_variance_factor_normalizes_spectra() {
        use crate::market_data::{synthetic_panel, Regime, SyntheticSpec};
        let spec = SyntheticSpec::new(6, vec![Regime::gaussian(500, 0.02, 0.0)]);
        let panel = synthetic_panel(&spec, 17).unwrap();
        let returns = crate::market_data::log_returns(&panel).unwrap();
        let factor = mean_variance_factor(&returns, None, None).unwrap();
        // factor is 1/mean-variance, so rescaled variances centre on 1
        let m = returns.returns();
        let t = m.ncols() as f64;
        let mut acc = 0.0;
        for i in 0..m.nrows() {
            let mean = m.row(i).mean();
            acc += m.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        }
        let rescaled = factor * acc / m.nrows() as f64;
        assert_relative_eq!(rescaled, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_pairwise_correlation_tracks_the_mixing_level() {
        use crate::market_data::{synthetic_panel, Regime, SyntheticSpec};
        let spec = SyntheticSpec::new(8, vec![Regime::gaussian(2000, 0.01, 0.5)]);
        let panel = synthetic_panel(&spec, 19).unwrap();
        let returns = crate::market_data::log_returns(&panel).unwrap();
        let rho = mean_pairwise_correlation(&returns, None, None).unwrap();
        // loading 0.5 induces pairwise correlation 0.25
        assert!((rho - 0.25).abs() < 0.06, "rho {rho}");
    }
}
