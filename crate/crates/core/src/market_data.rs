//! Price-panel ingestion, alignment and log-return computation.
//!
//! Input is one text file per ticker with a `date,close[,volume,market_cap]`
//! header and ISO-8601 dates. Tickers are aligned onto the intersection of
//! their trading calendars; a value gap on a retained date carries the last
//! previously available value forward. Zero or negative prices are hard
//! errors: a log-return is undefined there and silent repair would corrupt
//! every spectrum computed downstream.
//!
//! The module also provides a deterministic synthetic-panel generator used by
//! tests and demos, and a plain-text panel cache (layout documented on
//! [`write_panel_cache`]).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};

/// A single validated price observation for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub ticker: String,
    pub date: NaiveDate,
    /// Dividend/split-adjusted close, in currency units. Strictly positive.
    pub close: f64,
    /// Traded value in currency units, when the input carries it.
    pub volume: Option<f64>,
    /// Market capitalization in currency units, when the input carries it.
    pub market_cap: Option<f64>,
}

impl PriceRecord {
    pub fn new(
        ticker: impl Into<String>,
        date: NaiveDate,
        close: f64,
        volume: Option<f64>,
        market_cap: Option<f64>,
    ) -> Result<Self> {
        let ticker = ticker.into();
        if !close.is_finite() || close <= 0.0 {
            return Err(Error::NonPositivePrice {
                ticker,
                date,
                value: close,
            });
        }
        if let Some(v) = volume {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "volume {v} for {ticker} on {date} must be nonnegative"
                )));
            }
        }
        if let Some(c) = market_cap {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "market_cap {c} for {ticker} on {date} must be positive"
                )));
            }
        }
        Ok(Self {
            ticker,
            date,
            close,
            volume,
            market_cap,
        })
    }
}

/// How raw per-ticker series are reconciled onto one calendar.
///
/// Dates are always restricted to the intersection of the tickers' trading
/// calendars. `forward_fill` controls what happens when a retained date has a
/// row but an empty value cell: carry the last available value (default), or
/// fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentPolicy {
    pub forward_fill: bool,
}

impl Default for AlignmentPolicy {
    fn default() -> Self {
        Self { forward_fill: true }
    }
}

/// Aligned daily panel of adjusted close prices, with optional volume and
/// market-cap panels of the same shape.
///
/// Rows are assets, columns are trading dates. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    close: DMatrix<f64>,
    volume: Option<DMatrix<f64>>,
    market_cap: Option<DMatrix<f64>>,
}

impl AssetPanel {
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        close: DMatrix<f64>,
        volume: Option<DMatrix<f64>>,
        market_cap: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::InvalidParameter(
                "panel needs at least one ticker and one date".into(),
            ));
        }
        let (n, d) = (tickers.len(), dates.len());
        if close.nrows() != n || close.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "close matrix is {}x{}, expected {n}x{d}",
                close.nrows(),
                close.ncols()
            )));
        }
        for m in [&volume, &market_cap].into_iter().flatten() {
            if m.nrows() != n || m.ncols() != d {
                return Err(Error::InvalidParameter(format!(
                    "weight matrix is {}x{}, expected {n}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "panel dates must be strictly increasing".into(),
            ));
        }
        for j in 0..n {
            for k in 0..d {
                let p = close[(j, k)];
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        ticker: tickers[j].clone(),
                        date: dates[k],
                        value: p,
                    });
                }
            }
        }
        Ok(Self {
            tickers,
            dates,
            close,
            volume,
            market_cap,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn close(&self) -> &DMatrix<f64> {
        &self.close
    }

    pub fn volume(&self) -> Option<&DMatrix<f64>> {
        self.volume.as_ref()
    }

    pub fn market_cap(&self) -> Option<&DMatrix<f64>> {
        self.market_cap.as_ref()
    }

    pub fn ticker_index(&self, ticker: &str) -> Result<usize> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .ok_or_else(|| Error::UnknownTicker(ticker.to_string()))
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Close-price series of one ticker across all panel dates.
    pub fn close_series(&self, ticker: &str) -> Result<Vec<f64>> {
        let j = self.ticker_index(ticker)?;
        Ok(self.close.row(j).iter().copied().collect())
    }
}

/// Panel of daily log-returns, one column per return date.
///
/// Column `k` holds `ln(close[k+1] / close[k])`; its date is the later of the
/// two trading days.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != tickers.len() || returns.ncols() != dates.len() {
            return Err(Error::InvalidParameter(format!(
                "return matrix is {}x{}, expected {}x{}",
                returns.nrows(),
                returns.ncols(),
                tickers.len(),
                dates.len()
            )));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "return dates must be strictly increasing".into(),
            ));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "return matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            tickers,
            dates,
            returns,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

/// Daily log-returns with respect to the previous trading day.
pub fn log_returns(panel: &AssetPanel) -> Result<ReturnPanel> {
    let d = panel.n_dates();
    if d < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: d,
        });
    }
    let n = panel.n_assets();
    let close = panel.close();
    let returns = DMatrix::from_fn(n, d - 1, |j, k| (close[(j, k + 1)] / close[(j, k)]).ln());
    ReturnPanel::new(
        panel.tickers().to_vec(),
        panel.dates()[1..].to_vec(),
        returns,
    )
}

// ---------------------------------------------------------------------------
// File parsing and alignment
// ---------------------------------------------------------------------------

struct RawRow {
    date: NaiveDate,
    close: Option<f64>,
    volume: Option<f64>,
    market_cap: Option<f64>,
}

struct RawSeries {
    ticker: String,
    rows: Vec<RawRow>,
    has_volume: bool,
    has_market_cap: bool,
}

fn parse_opt_f64(field: Option<&str>, path: &str, line: usize, name: &str) -> Result<Option<f64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
            path: path.to_string(),
            line,
            message: format!("cannot parse {name} value {s:?}"),
        }),
    }
}

fn parse_price_file(path: &Path) -> Result<RawSeries> {
    let display = path.display().to_string();
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Parse {
            path: display.clone(),
            line: 0,
            message: "cannot derive a ticker from the file name".into(),
        })?;

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| Error::Parse {
        path: display.clone(),
        line: 1,
        message: "missing `date` column".into(),
    })?;
    let close_col = col("close").ok_or_else(|| Error::Parse {
        path: display.clone(),
        line: 1,
        message: "missing `close` column".into(),
    })?;
    let volume_col = col("volume");
    let market_cap_col = col("market_cap");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let date_field = record.get(date_col).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|_| Error::Parse {
            path: display.clone(),
            line,
            message: format!("cannot parse date {date_field:?}"),
        })?;
        let close = parse_opt_f64(record.get(close_col), &display, line, "close")?;
        if let Some(c) = close {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::NonPositivePrice {
                    ticker,
                    date,
                    value: c,
                });
            }
        }
        let volume = match volume_col {
            Some(c) => parse_opt_f64(record.get(c), &display, line, "volume")?,
            None => None,
        };
        if let Some(v) = volume {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("volume {v} must be nonnegative"),
                });
            }
        }
        let market_cap = match market_cap_col {
            Some(c) => parse_opt_f64(record.get(c), &display, line, "market_cap")?,
            None => None,
        };
        if let Some(c) = market_cap {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Parse {
                    path: display.clone(),
                    line,
                    message: format!("market_cap {c} must be positive"),
                });
            }
        }
        rows.push(RawRow {
            date,
            close,
            volume,
            market_cap,
        });
    }
    rows.sort_by_key(|r| r.date);
    if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::Parse {
            path: display,
            line: 0,
            message: format!("duplicate date {}", w[0].date),
        });
    }
    Ok(RawSeries {
        ticker,
        has_volume: volume_col.is_some(),
        has_market_cap: market_cap_col.is_some(),
        rows,
    })
}

/// Loads one file per ticker and aligns them onto the common trading calendar.
///
/// The panel is restricted to the intersection of all tickers' row dates; a
/// retained date whose value cell is empty carries the last previously
/// available value when the policy allows it. Volume and market-cap panels
/// are produced iff every input file carries the column.
pub fn load_panel<P: AsRef<Path>>(paths: &[P], policy: AlignmentPolicy) -> Result<AssetPanel> {
    if paths.is_empty() {
        return Err(Error::InvalidParameter("no input files".into()));
    }
    let series = paths
        .iter()
        .map(|p| parse_price_file(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    align_series(series, policy)
}

fn align_series(series: Vec<RawSeries>, policy: AlignmentPolicy) -> Result<AssetPanel> {
    let mut common: BTreeSet<NaiveDate> = series[0].rows.iter().map(|r| r.date).collect();
    for s in &series[1..] {
        let dates: BTreeSet<NaiveDate> = s.rows.iter().map(|r| r.date).collect();
        common.retain(|d| dates.contains(d));
    }
    if common.is_empty() {
        return Err(Error::EmptyDateIntersection);
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let with_volume = series.iter().all(|s| s.has_volume);
    let with_market_cap = series.iter().all(|s| s.has_market_cap);

    let n = series.len();
    let d = dates.len();
    let mut close = DMatrix::zeros(n, d);
    let mut volume = with_volume.then(|| DMatrix::zeros(n, d));
    let mut market_cap = with_market_cap.then(|| DMatrix::zeros(n, d));

    for (j, s) in series.iter().enumerate() {
        let mut last_close: Option<f64> = None;
        let mut last_volume: Option<f64> = None;
        let mut last_cap: Option<f64> = None;
        let mut r = 0;
        for (k, &date) in dates.iter().enumerate() {
            let mut at_date: Option<&RawRow> = None;
            while r < s.rows.len() && s.rows[r].date <= date {
                let row = &s.rows[r];
                if row.close.is_some() {
                    last_close = row.close;
                }
                if row.volume.is_some() {
                    last_volume = row.volume;
                }
                if row.market_cap.is_some() {
                    last_cap = row.market_cap;
                }
                if row.date == date {
                    at_date = Some(row);
                }
                r += 1;
            }
            let at_date = at_date.expect("every panel date is in every ticker's calendar");

            let fill = |own: Option<f64>, last: Option<f64>, field: &'static str| -> Result<f64> {
                match (own, last, policy.forward_fill) {
                    (Some(v), _, _) => Ok(v),
                    (None, Some(v), true) => Ok(v),
                    (None, None, true) => Err(Error::MissingLeadingValue {
                        ticker: s.ticker.clone(),
                        field,
                        date,
                    }),
                    (None, _, false) => Err(Error::MissingValue {
                        ticker: s.ticker.clone(),
                        field,
                        date,
                    }),
                }
            };

            close[(j, k)] = fill(at_date.close, last_close, "close")?;
            if let Some(vol) = volume.as_mut() {
                vol[(j, k)] = fill(at_date.volume, last_volume, "volume")?;
            }
            if let Some(cap) = market_cap.as_mut() {
                cap[(j, k)] = fill(at_date.market_cap, last_cap, "market_cap")?;
            }
        }
    }

    AssetPanel::new(
        series.into_iter().map(|s| s.ticker).collect(),
        dates,
        close,
        volume,
        market_cap,
    )
}

// ---------------------------------------------------------------------------
// Synthetic panels
// ---------------------------------------------------------------------------

/// Coefficient distribution for a synthetic regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    Gaussian,
    /// Student t with 3 degrees of freedom, standardized to unit variance so
    /// the regime volatility is the actual return standard deviation.
    StudentT3,
}

/// One homogeneous stretch of a synthetic panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    /// Number of daily return observations.
    pub days: usize,
    /// Daily return standard deviation.
    pub volatility: f64,
    /// Common-factor loading: each coefficient is
    /// `rho * Z0 + sqrt(1 - rho^2) * Z`, so `rho = 0` gives independent
    /// assets and `rho = 1` collapses every row onto the shared factor.
    /// Induced pairwise return correlation is `rho^2`.
    pub rho: f64,
    pub tails: TailKind,
}

impl Regime {
    pub fn gaussian(days: usize, volatility: f64, rho: f64) -> Self {
        Self {
            days,
            volatility,
            rho,
            tails: TailKind::Gaussian,
        }
    }

    pub fn student_t3(days: usize, volatility: f64, rho: f64) -> Self {
        Self {
            days,
            volatility,
            rho,
            tails: TailKind::StudentT3,
        }
    }
}

/// Full recipe for a deterministic synthetic panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub regimes: Vec<Regime>,
    pub start_date: NaiveDate,
    pub initial_price: f64,
    /// Also emit lognormal volume and market-cap panels.
    pub with_weights: bool,
}

impl SyntheticSpec {
    pub fn new(n_assets: usize, regimes: Vec<Regime>) -> Self {
        Self {
            n_assets,
            regimes,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
            initial_price: 100.0,
            with_weights: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::InvalidParameter("n_assets must be positive".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidParameter("at least one regime".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.days == 0 {
                return Err(Error::InvalidParameter(format!(
                    "regime {i}: days must be positive"
                )));
            }
            if !r.volatility.is_finite() || r.volatility <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "regime {i}: volatility must be positive"
                )));
            }
            if !r.rho.is_finite() || !(0.0..=1.0).contains(&r.rho) {
                return Err(Error::InvalidParameter(format!(
                    "regime {i}: rho must lie in [0, 1]"
                )));
            }
        }
        if !self.initial_price.is_finite() || self.initial_price <= 0.0 {
            return Err(Error::InvalidParameter(
                "initial_price must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn next_business_day(mut date: NaiveDate) -> NaiveDate {
    loop {
        date = date.succ_opt().expect("date overflow");
        match date.weekday() {
            Weekday::Sat | Weekday::Sun => continue,
            _ => return date,
        }
    }
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(count);
    let mut d = match start.weekday() {
        Weekday::Sat | Weekday::Sun => next_business_day(start),
        _ => start,
    };
    for _ in 0..count {
        dates.push(d);
        d = next_business_day(d);
    }
    dates
}

fn draw_unit(rng: &mut ChaCha8Rng, tails: TailKind) -> f64 {
    match tails {
        TailKind::Gaussian => StandardNormal.sample(rng),
        TailKind::StudentT3 => {
            let t: f64 = StudentT::new(3.0).expect("valid dof").sample(rng);
            // t(3) has variance 3; standardize so regimes mean what they say
            t / 3f64.sqrt()
        }
    }
}

/// Deterministic-for-seed panel whose per-regime returns follow the
/// equicorrelated factor model, exponentiated into prices.
pub fn synthetic_panel(spec: &SyntheticSpec, seed: u64) -> Result<AssetPanel> {
    spec.validate()?;
    let n = spec.n_assets;
    let total: usize = spec.regimes.iter().map(|r| r.days).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut returns = DMatrix::zeros(n, total);
    let mut k = 0;
    for regime in &spec.regimes {
        let loading = regime.rho;
        let residual = (1.0 - loading * loading).max(0.0).sqrt();
        for _ in 0..regime.days {
            let z0 = draw_unit(&mut rng, regime.tails);
            for i in 0..n {
                let z = draw_unit(&mut rng, regime.tails);
                returns[(i, k)] = regime.volatility * (loading * z0 + residual * z);
            }
            k += 1;
        }
    }

    let d = total + 1;
    let mut close = DMatrix::zeros(n, d);
    for i in 0..n {
        close[(i, 0)] = spec.initial_price;
        for k in 0..total {
            close[(i, k + 1)] = close[(i, k)] * returns[(i, k)].exp();
        }
    }

    let (volume, market_cap) = if spec.with_weights {
        let shares: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.0e7 * (0.5 * z).exp()
            })
            .collect();
        let mut volume = DMatrix::zeros(n, d);
        for k in 0..d {
            for i in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                volume[(i, k)] = 1.0e6 * (0.3 * z).exp();
            }
        }
        let market_cap = DMatrix::from_fn(n, d, |i, k| close[(i, k)] * shares[i]);
        (Some(volume), Some(market_cap))
    } else {
        (None, None)
    };

    let tickers = (0..n).map(|i| format!("A{i:02}")).collect();
    AssetPanel::new(tickers, business_days(spec.start_date, d), close, volume, market_cap)
}

// ---------------------------------------------------------------------------
// Panel cache and per-ticker files
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &str = "#eigenwatch-panel v1";

/// Serializes a panel as a single text matrix file.
///
/// Layout: a `#eigenwatch-panel v1` magic line, a `#fields` line naming the
/// present blocks, then one `#block <name>` section per field. Each section
/// is a CSV matrix with a `date,<tickers...>` header and one row per trading
/// date. Floats are written in shortest round-trip form, so a cache round
/// trip is bit-exact.
pub fn write_panel_cache<W: Write>(panel: &AssetPanel, mut w: W) -> Result<()> {
    let mut fields = vec!["close"];
    if panel.volume().is_some() {
        fields.push("volume");
    }
    if panel.market_cap().is_some() {
        fields.push("market_cap");
    }
    writeln!(w, "{CACHE_MAGIC}")?;
    writeln!(w, "#fields {}", fields.join(","))?;

    let write_block = |name: &str, m: &DMatrix<f64>, w: &mut W| -> Result<()> {
        writeln!(w, "#block {name}")?;
        writeln!(w, "date,{}", panel.tickers().join(","))?;
        for (k, date) in panel.dates().iter().enumerate() {
            write!(w, "{date}")?;
            for j in 0..panel.n_assets() {
                write!(w, ",{}", m[(j, k)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    };

    write_block("close", panel.close(), &mut w)?;
    if let Some(v) = panel.volume() {
        write_block("volume", v, &mut w)?;
    }
    if let Some(c) = panel.market_cap() {
        write_block("market_cap", c, &mut w)?;
    }
    Ok(())
}

/// Reads a panel back from the cache layout of [`write_panel_cache`].
pub fn read_panel_cache<R: BufRead>(r: R) -> Result<AssetPanel> {
    let bad = |line: usize, message: String| Error::Parse {
        path: "<panel cache>".into(),
        line,
        message,
    };
    let mut lines = r.lines().enumerate();
    let (_, magic) = lines
        .next()
        .ok_or_else(|| bad(1, "empty cache".into()))
        .and_then(|(i, l)| Ok((i, l?)))?;
    if magic.trim() != CACHE_MAGIC {
        return Err(bad(1, format!("bad magic {magic:?}")));
    }
    let (_, fields_line) = lines
        .next()
        .ok_or_else(|| bad(2, "missing #fields line".into()))
        .and_then(|(i, l)| Ok((i, l?)))?;
    let fields: Vec<String> = fields_line
        .strip_prefix("#fields ")
        .ok_or_else(|| bad(2, "missing #fields line".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();

    let mut tickers: Option<Vec<String>> = None;
    let mut dates: Option<Vec<NaiveDate>> = None;
    let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();

    for item in lines {
        let (i, line) = item;
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("#block ") {
            blocks.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        if line.starts_with("date,") {
            let ts: Vec<String> = line
                .split(',')
                .skip(1)
                .map(|s| s.trim().to_string())
                .collect();
            match &tickers {
                None => tickers = Some(ts),
                Some(prev) if *prev == ts => {}
                Some(_) => return Err(bad(lineno, "ticker headers differ between blocks".into())),
            }
            continue;
        }
        let (date_field, rest) = line
            .split_once(',')
            .ok_or_else(|| bad(lineno, "expected a csv row".into()))?;
        let date = NaiveDate::parse_from_str(date_field.trim(), "%Y-%m-%d")
            .map_err(|_| bad(lineno, format!("cannot parse date {date_field:?}")))?;
        let values = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(lineno, format!("cannot parse value: {e}")))?;
        let block = blocks
            .last_mut()
            .ok_or_else(|| bad(lineno, "data row before any #block".into()))?;
        if block.0 == "close" {
            match &mut dates {
                None => dates = Some(vec![date]),
                Some(ds) => ds.push(date),
            }
        }
        block.1.push(values);
    }

    let tickers = tickers.ok_or_else(|| bad(0, "no header rows".into()))?;
    let dates = dates.ok_or_else(|| bad(0, "no close block".into()))?;
    let n = tickers.len();
    let d = dates.len();
    let mut close = None;
    let mut volume = None;
    let mut market_cap = None;
    for (name, rows) in blocks {
        if rows.len() != d || rows.iter().any(|r| r.len() != n) {
            return Err(bad(0, format!("block {name} has inconsistent shape")));
        }
        let m = DMatrix::from_fn(n, d, |j, k| rows[k][j]);
        match name.as_str() {
            "close" => close = Some(m),
            "volume" => volume = Some(m),
            "market_cap" => market_cap = Some(m),
            other => return Err(bad(0, format!("unknown block {other:?}"))),
        }
    }
    let close = close.ok_or_else(|| bad(0, "missing close block".into()))?;
    let expect_volume = fields.iter().any(|f| f == "volume");
    let expect_cap = fields.iter().any(|f| f == "market_cap");
    if expect_volume != volume.is_some() || expect_cap != market_cap.is_some() {
        return Err(bad(0, "#fields line disagrees with blocks".into()));
    }
    AssetPanel::new(tickers, dates, close, volume, market_cap)
}

/// Writes one `date,close[,volume,market_cap]` file per ticker into `dir`,
/// returning the paths in panel ticker order. Used for fixtures and demos.
pub fn write_ticker_files(panel: &AssetPanel, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(panel.n_assets());
    for (j, ticker) in panel.tickers().iter().enumerate() {
        let path = dir.join(format!("{ticker}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        let mut header = String::from("date,close");
        if panel.volume().is_some() {
            header.push_str(",volume");
        }
        if panel.market_cap().is_some() {
            header.push_str(",market_cap");
        }
        writeln!(w, "{header}")?;
        for (k, date) in panel.dates().iter().enumerate() {
            write!(w, "{date},{}", panel.close()[(j, k)])?;
            if let Some(v) = panel.volume() {
                write!(w, ",{}", v[(j, k)])?;
            }
            if let Some(c) = panel.market_cap() {
                write!(w, ",{}", c[(j, k)])?;
            }
            writeln!(w)?;
        }
    }
    for ticker in panel.tickers() {
        paths.push(dir.join(format!("{ticker}.csv")));
    }
    Ok(paths)
}
