//! Dated indicator series.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// The nine instability indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorName {
    /// Distance to the analytic calm-market reference.
    A1,
    /// Distance to the correlated-Gaussian calm-market reference.
    A2,
    /// Distance to the heavy-tailed turmoil reference. Inverted: a *drop*
    /// means the spectrum is approaching the turmoil shape.
    A3,
    /// Spectral radius of the covariance matrix.
    B1,
    /// Trace of the covariance matrix.
    B2,
    /// Spectral radius of the correlation matrix.
    B3,
    /// Spectral radius of the market-cap-weighted correlation matrix.
    B3A,
    /// Spectral radius of the volume-weighted correlation matrix.
    B3B,
    /// Trailing moving average of B3B.
    B3C,
}

impl IndicatorName {
    pub const ALL: [IndicatorName; 9] = [
        IndicatorName::A1,
        IndicatorName::A2,
        IndicatorName::A3,
        IndicatorName::B1,
        IndicatorName::B2,
        IndicatorName::B3,
        IndicatorName::B3A,
        IndicatorName::B3B,
        IndicatorName::B3C,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IndicatorName::A1 => "A1",
            IndicatorName::A2 => "A2",
            IndicatorName::A3 => "A3",
            IndicatorName::B1 => "B1",
            IndicatorName::B2 => "B2",
            IndicatorName::B3 => "B3",
            IndicatorName::B3A => "B3A",
            IndicatorName::B3B => "B3B",
            IndicatorName::B3C => "B3C",
        }
    }
}

impl fmt::Display for IndicatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndicatorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|name| name.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownIndicator(s.to_string()))
    }
}

/// A dated scalar series for one indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    name: IndicatorName,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl IndicatorSeries {
    pub fn new(name: IndicatorName, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "series dates must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "series values must be finite".into(),
            ));
        }
        Ok(Self {
            name,
            dates,
            values,
        })
    }

    pub fn name(&self) -> IndicatorName {
        self.name
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn renamed(mut self, name: IndicatorName) -> Self {
        self.name = name;
        self
    }

    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|i| self.values[i])
    }

    /// Index of the last observation on or before `date`.
    pub fn index_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        let at = self.dates.partition_point(|d| *d <= date);
        at.checked_sub(1)
    }

    /// Sub-series restricted to a closed date interval.
    pub fn restrict(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Self {
        let from = match start {
            Some(s) => self.dates.partition_point(|d| *d < s),
            None => 0,
        };
        let to = match end {
            Some(e) => self.dates.partition_point(|d| *d <= e),
            None => self.dates.len(),
        };
        let (from, to) = (from.min(to), to);
        Self {
            name: self.name,
            dates: self.dates[from..to].to_vec(),
            values: self.values[from..to].to_vec(),
        }
    }

    /// Writes the `date,value` table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,{}", self.name)?;
        for (date, value) in self.dates.iter().zip(&self.values) {
            writeln!(w, "{date},{value}")?;
        }
        Ok(())
    }

    /// Reads a `date,value` table back; the header's indicator column is
    /// ignored in favour of the caller's name.
    pub fn read_csv<R: BufRead>(name: IndicatorName, r: R) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<series>".into(),
            line,
            message,
        };
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 1 && trimmed.starts_with("date")) {
                continue;
            }
            let (d, v) = trimmed
                .split_once(',')
                .ok_or_else(|| bad(lineno, "expected `date,value`".into()))?;
            dates.push(
                NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                    .map_err(|_| bad(lineno, format!("cannot parse date {d:?}")))?,
            );
            values.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(lineno, format!("bad value: {e}")))?,
            );
        }
        Self::new(name, dates, values)
    }
}
