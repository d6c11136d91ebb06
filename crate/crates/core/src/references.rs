//! Reference eigenvalue distributions.
//!
//! Three references share one binned support: the analytic Marchenko-Pastur
//! law for i.i.d. Gaussian coefficients, a Monte-Carlo ensemble of
//! equicorrelated Gaussians (second calm-market reference), and the same
//! ensemble with Student t(3) coefficients (the turmoil reference, whose fat
//! tails shift the whole spectrum toward large eigenvalues).
//!
//! Simulated references are bitwise deterministic for a fixed seed: replicate
//! `k` draws from stream `k` of a counter-based generator, and histograms are
//! accumulated as integer counts, so parallel and serial runs agree exactly.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::density::{histogram_counts, validate_edges, BinnedDensity};
use crate::error::{Error, Result};

/// Variance scale and aspect ratio of the Marchenko-Pastur law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    /// Variance scale sigma^2 of the matrix coefficients.
    pub sigma2: f64,
    /// Aspect ratio N/T of the underlying rectangular matrix.
    pub gamma: f64,
}

impl MpParams {
    pub fn new(sigma2: f64, gamma: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma2 {sigma2} must be positive"
            )));
        }
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma {gamma} must be positive"
            )));
        }
        Ok(Self { sigma2, gamma })
    }

    /// Parameters for an `n_assets x window` panel at unit variance scale.
    pub fn from_shape(n_assets: usize, window: usize) -> Result<Self> {
        if n_assets == 0 || window == 0 {
            return Err(Error::InvalidParameter(
                "matrix shape must be positive".into(),
            ));
        }
        Self::new(1.0, n_assets as f64 / window as f64)
    }
}

/// Support edges `(lambda_minus, lambda_plus) = sigma^2 (1 -+ sqrt(gamma))^2`.
pub fn mp_edges(params: &MpParams) -> (f64, f64) {
    let root = params.gamma.sqrt();
    (
        params.sigma2 * (1.0 - root).powi(2),
        params.sigma2 * (1.0 + root).powi(2),
    )
}

fn mp_pdf(params: &MpParams, lower: f64, upper: f64, x: f64) -> f64 {
    if x <= lower || x >= upper || x <= 0.0 {
        return 0.0;
    }
    ((upper - x) * (x - lower)).sqrt() / (2.0 * PI * params.sigma2 * params.gamma * x)
}

/// Bin masses of the Marchenko-Pastur density, numerically integrated per bin
/// and renormalized to total mass one.
///
/// Restricted to `0 < gamma < 1`; the degenerate regime would add an atom at
/// zero that the binned form cannot represent.
pub fn mp_density(params: &MpParams, edges: &[f64]) -> Result<BinnedDensity> {
    if params.gamma >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma {} must be below 1 for the continuous law",
            params.gamma
        )));
    }
    validate_edges(edges)?;
    let (lower, upper) = mp_edges(params);
    let (nodes, weights) = gauss_legendre(32);
    let mut mass = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let a = w[0].max(lower);
        let b = w[1].min(upper);
        if a >= b {
            mass.push(0.0);
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, wt)| wt * mp_pdf(params, lower, upper, mid + half * x))
            .sum::<f64>()
            * half;
        mass.push(integral.max(0.0));
    }
    BinnedDensity::new(edges.to_vec(), mass)?.normalized()
}

/// Uniform bin edges on `[0, multiplier * lambda_plus]`.
///
/// The lower end is pinned at zero rather than `lambda_minus` so that the
/// small-eigenvalue accumulation seen in calm markets stays representable;
/// the default multiplier of 25 covers the largest observed spectral
/// excursions above the bulk edge.
pub fn standard_support(params: &MpParams, multiplier: f64, bins: usize) -> Result<Vec<f64>> {
    if !multiplier.is_finite() || multiplier < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "support multiplier {multiplier} must be at least 1"
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    let (_, upper) = mp_edges(params);
    let top = multiplier * upper;
    Ok((0..=bins).map(|i| top * i as f64 / bins as f64).collect())
}

/// Which reference distribution a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    MarchenkoPastur,
    GaussianCorrelated,
    StudentCorrelated,
}

impl ReferenceKind {
    fn key(self) -> &'static str {
        match self {
            ReferenceKind::MarchenkoPastur => "mp",
            ReferenceKind::GaussianCorrelated => "gauss",
            ReferenceKind::StudentCorrelated => "student",
        }
    }
}

/// Full recipe for one reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    pub n_assets: usize,
    pub window: usize,
    /// Common-factor loading; every coefficient is
    /// `rho * Z0 + sqrt(1 - rho^2) * Z` with `Z0` shared per column.
    pub rho: f64,
    /// Monte-Carlo replicate count.
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
    /// Scale Student t(3) draws to unit variance. Off by default: the raw
    /// t(3) draws (variance 3) are what shifts the turmoil reference right.
    pub standardize_student: bool,
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::InvalidParameter("n_assets must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::InvalidParameter("window must be at least 2".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("samples must be positive".into()));
        }
        if self.bins < 10 {
            return Err(Error::InvalidParameter("need at least 10 bins".into()));
        }
        if !self.rho.is_finite() || !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "rho {} must lie in [0, 1]",
                self.rho
            )));
        }
        Ok(())
    }

    /// Stable key identifying the simulated artifact on disk.
    pub fn cache_key(&self) -> String {
        let mut key = format!(
            "{}-n{}-t{}-rho{}-s{}-seed{}-b{}",
            self.kind.key(),
            self.n_assets,
            self.window,
            self.rho,
            self.samples,
            self.seed,
            self.bins
        );
        if self.standardize_student {
            key.push_str("-std");
        }
        key
    }
}

fn student_t3(rng: &mut ChaCha8Rng, standardize: bool) -> f64 {
    let t: f64 = StudentT::new(3.0).expect("valid dof").sample(rng);
    if standardize {
        t / 3f64.sqrt()
    } else {
        t
    }
}

/// Covariance eigenvalues of one simulated replicate, descending.
///
/// Replicate `k` is drawn from stream `k` of the seeded generator, so any
/// subset of replicates can be regenerated independently.
pub fn replicate_eigenvalues(spec: &ReferenceSpec, replicate: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.kind == ReferenceKind::MarchenkoPastur {
        return Err(Error::InvalidParameter(
            "the analytic reference is not simulated".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(replicate);
    let n = spec.n_assets;
    let t = spec.window;
    let loading = spec.rho;
    let residual = (1.0 - loading * loading).max(0.0).sqrt();
    let gaussian = spec.kind == ReferenceKind::GaussianCorrelated;

    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if gaussian {
            StandardNormal.sample(rng)
        } else {
            student_t3(rng, spec.standardize_student)
        }
    };

    let mut matrix = nalgebra::DMatrix::zeros(n, t);
    for j in 0..t {
        let shared = draw(&mut rng);
        for i in 0..n {
            matrix[(i, j)] = loading * shared + residual * draw(&mut rng);
        }
    }
    let covariance = (&matrix * matrix.transpose()) / t as f64;
    let mut eigenvalues: Vec<f64> = covariance
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(eigenvalues)
}

/// Monte-Carlo reference density: pools the covariance eigenvalues of
/// `samples` replicates and histograms them on the given support.
pub fn simulate_reference(spec: &ReferenceSpec, edges: &[f64]) -> Result<BinnedDensity> {
    spec.validate()?;
    validate_edges(edges)?;
    if spec.kind == ReferenceKind::MarchenkoPastur {
        return Err(Error::InvalidParameter(
            "the analytic reference is not simulated".into(),
        ));
    }
    let bins = edges.len() - 1;
    let counts = (0..spec.samples as u64)
        .into_par_iter()
        .map(|k| {
            let eigenvalues =
                replicate_eigenvalues(spec, k).expect("spec validated before dispatch");
            histogram_counts(edges, &eigenvalues)
        })
        .reduce(
            || vec![0u64; bins],
            |mut acc, counts| {
                for (a, c) in acc.iter_mut().zip(&counts) {
                    *a += c;
                }
                acc
            },
        );
    let total = (spec.samples * spec.n_assets) as f64;
    let mass = counts.iter().map(|c| *c as f64 / total).collect();
    BinnedDensity::new(edges.to_vec(), mass)
}

/// The three references plus the support they share.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    support: Vec<f64>,
    theta1: BinnedDensity,
    theta2: BinnedDensity,
    theta3: BinnedDensity,
}

impl ReferenceSet {
    /// Builds all three references for an `n_assets x window` panel.
    ///
    /// The Student reference uses `seed + 1` so its streams are decoupled
    /// from the Gaussian one.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        n_assets: usize,
        window: usize,
        rho: f64,
        samples: usize,
        seed: u64,
        bins: usize,
        multiplier: f64,
        standardize_student: bool,
    ) -> Result<Self> {
        let params = MpParams::from_shape(n_assets, window)?;
        let support = standard_support(&params, multiplier, bins)?;
        let theta1 = mp_density(&params, &support)?;
        let gauss = ReferenceSpec {
            kind: ReferenceKind::GaussianCorrelated,
            n_assets,
            window,
            rho,
            samples,
            seed,
            bins,
            standardize_student,
        };
        let theta2 = simulate_reference(&gauss, &support)?;
        let student = ReferenceSpec {
            kind: ReferenceKind::StudentCorrelated,
            seed: seed.wrapping_add(1),
            ..gauss
        };
        let theta3 = simulate_reference(&student, &support)?;
        Self::from_parts(support, theta1, theta2, theta3)
    }

    pub fn from_parts(
        support: Vec<f64>,
        theta1: BinnedDensity,
        theta2: BinnedDensity,
        theta3: BinnedDensity,
    ) -> Result<Self> {
        validate_edges(&support)?;
        for theta in [&theta1, &theta2, &theta3] {
            if theta.edges() != support.as_slice() {
                return Err(Error::MismatchedSupport);
            }
        }
        Ok(Self {
            support,
            theta1,
            theta2,
            theta3,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn theta1(&self) -> &BinnedDensity {
        &self.theta1
    }

    pub fn theta2(&self) -> &BinnedDensity {
        &self.theta2
    }

    pub fn theta3(&self) -> &BinnedDensity {
        &self.theta3
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let j = j as f64;
                let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}
