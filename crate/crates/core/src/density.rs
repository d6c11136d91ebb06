//! Binned densities over eigenvalue supports.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// An eigenvalue distribution as bin edges plus per-bin masses.
///
/// Normalized constructors produce masses summing to one; the truncation step
/// in the distance pipeline deliberately yields sub-probability vectors, so
/// the sum-to-one property is documented per constructor rather than enforced
/// here.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDensity {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

pub(crate) fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidParameter(
            "a density needs at least one bin".into(),
        ));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("bin edges must be finite".into()));
    }
    if !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter(
            "bin edges must be strictly ascending".into(),
        ));
    }
    Ok(())
}

impl BinnedDensity {
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        if mass.len() + 1 != edges.len() {
            return Err(Error::InvalidParameter(format!(
                "{} masses for {} edges",
                mass.len(),
                edges.len()
            )));
        }
        for (index, m) in mass.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "mass at bin {index} is not finite"
                )));
            }
            if *m < 0.0 {
                return Err(Error::NegativeMass { index });
            }
        }
        Ok(Self { edges, mass })
    }

    /// Normalized histogram of the samples on the given edges.
    ///
    /// Values below the first edge land in bin 0 and values at or above the
    /// last edge accumulate in the final bin, so the masses always sum to one.
    pub fn from_samples(edges: &[f64], samples: &[f64]) -> Result<Self> {
        validate_edges(edges)?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot histogram an empty sample".into(),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("samples must be finite".into()));
        }
        let counts = histogram_counts(edges, samples);
        let total = samples.len() as f64;
        let mass = counts.iter().map(|c| *c as f64 / total).collect();
        Ok(Self {
            edges: edges.to_vec(),
            mass,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn n_bins(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Exact edge equality; densities built from the same support share bits.
    pub fn same_support(&self, other: &Self) -> bool {
        self.edges == other.edges
    }

    /// Rescales masses to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let total = self.total_mass();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidParameter(
                "cannot normalize a density with zero total mass".into(),
            ));
        }
        for m in &mut self.mass {
            *m /= total;
        }
        Ok(self)
    }

    /// Writes the `bin_center,mass` table used by every density artifact.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_center,mass")?;
        for (center, mass) in self.bin_centers().iter().zip(&self.mass) {
            writeln!(w, "{center},{mass}")?;
        }
        Ok(())
    }

    /// Reads a `bin_center,mass` table back onto a known support.
    ///
    /// The support is carried separately because centers alone cannot
    /// reconstruct edges exactly; the file's centers are checked against it.
    pub fn read_csv_with_edges<R: BufRead>(r: R, edges: &[f64]) -> Result<Self> {
        validate_edges(edges)?;
        let bad = |line: usize, message: String| Error::Parse {
            path: "<density>".into(),
            line,
            message,
        };
        let mut mass = Vec::with_capacity(edges.len() - 1);
        let mut centers = Vec::with_capacity(edges.len() - 1);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 1 && trimmed.starts_with("bin_center")) {
                continue;
            }
            let (c, m) = trimmed
                .split_once(',')
                .ok_or_else(|| bad(lineno, "expected `center,mass`".into()))?;
            centers.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(lineno, format!("bad center: {e}")))?,
            );
            mass.push(
                m.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(lineno, format!("bad mass: {e}")))?,
            );
        }
        if mass.len() + 1 != edges.len() {
            return Err(Error::MismatchedSupport);
        }
        let density = Self::new(edges.to_vec(), mass)?;
        for (file_center, center) in centers.iter().zip(density.bin_centers()) {
            if (file_center - center).abs() > 1e-9 * (1.0 + center.abs()) {
                return Err(Error::MismatchedSupport);
            }
        }
        Ok(density)
    }
}

/// Raw bin counts with the clamping convention of [`BinnedDensity::from_samples`].
///
/// Integer counts make parallel accumulation order-independent, which keeps
/// Monte-Carlo histograms bitwise reproducible under any scheduling.
pub fn histogram_counts(edges: &[f64], samples: &[f64]) -> Vec<u64> {
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for &v in samples {
        let at = edges.partition_point(|e| *e <= v);
        let bin = at.saturating_sub(1).min(bins - 1);
        counts[bin] += 1;
    }
    counts
}
