//! Drawdown-based evaluation of indicator series.
//!
//! The forward maximum drawdown of a reference asset defines what counts as a
//! market event. A danger zone — a closed indicator-value interval — is
//! calibrated on an in-sample slice, red flags fire when enough of the recent
//! history sits inside the zone, and two backtest protocols score the flags:
//! one against a fixed crisis calendar, one against drawdown-threshold
//! exceedances.

use std::io::{BufRead, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::AssetPanel;
use crate::series::IndicatorSeries;

/// Forward maximum drawdown `MDD_H(t)` of a reference price series.
#[derive(Debug, Clone, PartialEq)]
pub struct MddSeries {
    pub reference_ticker: String,
    /// Forward horizon in trading days.
    pub horizon: usize,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl MddSeries {
    pub fn new(
        reference_ticker: impl Into<String>,
        horizon: usize,
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} dates for {} drawdown values",
                dates.len(),
                values.len()
            )));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "drawdown dates must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "drawdown values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            reference_ticker: reference_ticker.into(),
            horizon,
            dates,
            values,
        })
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

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,mdd")?;
        for (date, value) in self.dates.iter().zip(&self.values) {
            writeln!(w, "{date},{value}")?;
        }
        Ok(())
    }
}

/// `MDD_H(t) = max over t <= x <= y <= t+H of (1 - R(y)/R(x))`.
///
/// One forward pass per date: a running maximum of `R` over `[t, y]` turns
/// the pair maximum into an `O(H)` recurrence, which the test suite pins
/// against the quadratic brute force.
pub fn mdd(
    dates: &[NaiveDate],
    prices: &[f64],
    horizon: usize,
    reference_ticker: &str,
) -> Result<MddSeries> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if dates.len() != prices.len() {
        return Err(Error::InvalidParameter(format!(
            "{} dates for {} prices",
            dates.len(),
            prices.len()
        )));
    }
    if prices.len() <= horizon {
        return Err(Error::InsufficientHistory {
            needed: horizon + 1,
            available: prices.len(),
        });
    }
    if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::InvalidParameter(
            "reference prices must be positive".into(),
        ));
    }
    let eligible = prices.len() - horizon;
    let mut values = Vec::with_capacity(eligible);
    for t in 0..eligible {
        let mut peak = f64::NEG_INFINITY;
        let mut worst = 0.0f64;
        for &price in &prices[t..=t + horizon] {
            peak = peak.max(price);
            worst = worst.max(1.0 - price / peak);
        }
        values.push(worst);
    }
    Ok(MddSeries {
        reference_ticker: reference_ticker.to_string(),
        horizon,
        dates: dates[..eligible].to_vec(),
        values,
    })
}

/// Forward drawdown of one panel ticker.
pub fn mdd_from_panel(panel: &AssetPanel, ticker: &str, horizon: usize) -> Result<MddSeries> {
    let prices = panel.close_series(ticker)?;
    mdd(panel.dates(), &prices, horizon, ticker)
}

/// Closed indicator-value interval where near-term crisis probability peaks.
///
/// Low weighted correlation means a quiet market; extremely high means the
/// crisis already happened and the forward drawdown is again small. The
/// danger sits between the two thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DangerZone {
    pub low: f64,
    pub high: f64,
}

impl DangerZone {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !low.is_finite() || !high.is_finite() || low >= high {
            return Err(Error::InvalidParameter(format!(
                "danger zone [{low}, {high}] must have low < high"
            )));
        }
        Ok(Self { low, high })
    }

    /// Membership is inclusive on both bounds.
    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Calibration knobs for [`calibrate_danger_zone`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Forward drawdown at or above this defines the event being predicted.
    pub mdd_threshold: f64,
    /// Number of quantile levels forming the candidate grid.
    pub grid_points: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            mdd_threshold: 0.15,
            grid_points: 101,
        }
    }
}

/// Grid-searches `(low, high)` over indicator-value quantiles, maximizing the
/// F1 score of zone membership against the event `MDD >= threshold`.
///
/// Ties break deterministically: smallest zone width, then lowest low. The
/// search is a surrogate for the visual threshold-picking the procedure
/// replaces, and is exactly reproducible for identical inputs.
pub fn calibrate_danger_zone(
    indicator: &IndicatorSeries,
    mdd: &MddSeries,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    cfg: &CalibrationConfig,
) -> Result<DangerZone> {
    if cfg.grid_points < 2 {
        return Err(Error::InvalidParameter(
            "grid needs at least two quantile levels".into(),
        ));
    }
    if !cfg.mdd_threshold.is_finite() || cfg.mdd_threshold <= 0.0 {
        return Err(Error::InvalidParameter(
            "mdd_threshold must be positive".into(),
        ));
    }
    let restricted = indicator.restrict(start, end);
    let mut points: Vec<(f64, bool)> = Vec::new();
    for (date, value) in restricted.dates().iter().zip(restricted.values()) {
        if let Some(m) = lookup(mdd.dates(), mdd.values(), *date) {
            points.push((*value, m >= cfg.mdd_threshold));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite indicator values"));
    let n = points.len();
    if points[0].0 == points[n - 1].0 {
        return Err(Error::ConstantIndicator);
    }

    // prefix sums over the value-sorted points make each candidate O(log n)
    let mut event_prefix = vec![0usize; n + 1];
    for (i, (_, event)) in points.iter().enumerate() {
        event_prefix[i + 1] = event_prefix[i] + usize::from(*event);
    }
    let total_events = event_prefix[n];
    let values: Vec<f64> = points.iter().map(|p| p.0).collect();

    let mut grid: Vec<f64> = (0..cfg.grid_points)
        .map(|k| values[k * (n - 1) / (cfg.grid_points - 1)])
        .collect();
    grid.dedup();

    let mut best: Option<(f64, f64, f64, f64)> = None; // (f1, width, low, high)
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            let (low, high) = (grid[i], grid[j]);
            let from = values.partition_point(|v| *v < low);
            let to = values.partition_point(|v| *v <= high);
            let in_zone = to - from;
            let tp = event_prefix[to] - event_prefix[from];
            let fp = in_zone - tp;
            let fn_ = total_events - tp;
            let denom = 2 * tp + fp + fn_;
            let f1 = if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            };
            let width = high - low;
            let better = match best {
                None => true,
                Some((bf1, bwidth, blow, _)) => {
                    f1 > bf1 || (f1 == bf1 && (width < bwidth || (width == bwidth && low < blow)))
                }
            };
            if better {
                best = Some((f1, width, low, high));
            }
        }
    }
    let (_, _, low, high) = best.ok_or(Error::ConstantIndicator)?;
    DangerZone::new(low, high)
}

fn lookup(dates: &[NaiveDate], values: &[f64], date: NaiveDate) -> Option<f64> {
    dates.binary_search(&date).ok().map(|i| values[i])
}

/// Dated boolean red-flag series.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagSeries {
    dates: Vec<NaiveDate>,
    flags: Vec<bool>,
}

impl FlagSeries {
    pub fn new(dates: Vec<NaiveDate>, flags: Vec<bool>) -> Result<Self> {
        if dates.len() != flags.len() {
            return Err(Error::InvalidParameter(format!(
                "{} dates for {} flags",
                dates.len(),
                flags.len()
            )));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "flag dates must be strictly increasing".into(),
            ));
        }
        Ok(Self { dates, flags })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count_raised(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,flag")?;
        for (date, flag) in self.dates.iter().zip(&self.flags) {
            writeln!(w, "{date},{}", u8::from(*flag))?;
        }
        Ok(())
    }
}

/// Raises a flag at `t` iff at least `fraction` of the `lookback + 1` values
/// in the closed window `[t - lookback, t]` lie inside the zone.
///
/// The comparison is `count >= fraction * (lookback + 1)` on the exact
/// count: with the canonical 60 % rule over 101 points, 60 in-zone points do
/// *not* flag (60 < 60.6) while 61 do. Dates without a full window emit
/// nothing.
pub fn red_flags(
    indicator: &IndicatorSeries,
    zone: &DangerZone,
    lookback: usize,
    fraction: f64,
) -> Result<FlagSeries> {
    if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} must lie in [0, 1]"
        )));
    }
    let values = indicator.values();
    let window = lookback + 1;
    if values.len() < window {
        return Ok(FlagSeries {
            dates: Vec::new(),
            flags: Vec::new(),
        });
    }
    let in_zone: Vec<bool> = values.iter().map(|v| zone.contains(*v)).collect();
    let mut count = in_zone[..window].iter().filter(|b| **b).count();
    let needed = fraction * window as f64;
    let mut dates = Vec::with_capacity(values.len() - lookback);
    let mut flags = Vec::with_capacity(values.len() - lookback);
    for t in lookback..values.len() {
        if t > lookback {
            count += usize::from(in_zone[t]);
            count -= usize::from(in_zone[t - window]);
        }
        dates.push(indicator.dates()[t]);
        flags.push(count as f64 >= needed);
    }
    FlagSeries::new(dates, flags)
}

/// A dated crisis calendar.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrisisCalendar {
    events: Vec<(NaiveDate, String)>,
}

impl CrisisCalendar {
    /// Events are stored sorted by date.
    pub fn new(mut events: Vec<(NaiveDate, String)>) -> Self {
        events.sort_by_key(|e| e.0);
        Self { events }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[(NaiveDate, String)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Parses a `date,label` file; a `date,...` header line is optional and
    /// labels may contain commas.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<crisis calendar>".into(),
            line,
            message,
        };
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty()
                || trimmed.starts_with('#')
                || (lineno == 1 && trimmed.to_ascii_lowercase().starts_with("date"))
            {
                continue;
            }
            let (d, label) = trimmed
                .split_once(',')
                .ok_or_else(|| bad(lineno, "expected `date,label`".into()))?;
            let date = NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                .map_err(|_| bad(lineno, format!("cannot parse date {d:?}")))?;
            events.push((date, label.trim().to_string()));
        }
        Ok(Self::new(events))
    }
}

/// One crisis row of the historical protocol. `None` percent means the crisis
/// fell outside the evaluated span (rendered as NA).
#[derive(Debug, Clone, PartialEq)]
pub struct CrisisRow {
    pub label: String,
    pub date: NaiveDate,
    pub percent_in_zone: Option<f64>,
    pub predicted: Option<bool>,
}

/// Output of the historical (calendar-based) protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalReport {
    pub zone: DangerZone,
    pub lookback: usize,
    pub fraction: f64,
    pub rows: Vec<CrisisRow>,
    /// Share of in-zone points that fall within `lookback` days before some
    /// calendar crisis.
    pub crisis_zone_ratio: Option<f64>,
    /// Complement of the above — the share of in-zone points not explained
    /// by any calendar crisis.
    pub false_positive_ratio: Option<f64>,
}

/// Scores zone membership against a crisis calendar.
///
/// Per crisis: the percentage of the `lookback + 1` dates up to and including
/// the crisis date whose indicator value lies in the zone, and a predicted
/// verdict at the same `fraction` rule as [`red_flags`]. Crises without a
/// full window inside the evaluated span report NA.
pub fn historical_backtest(
    indicator: &IndicatorSeries,
    zone: &DangerZone,
    calendar: &CrisisCalendar,
    lookback: usize,
    fraction: f64,
) -> Result<HistoricalReport> {
    if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} must lie in [0, 1]"
        )));
    }
    if indicator.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let values = indicator.values();
    let in_zone: Vec<bool> = values.iter().map(|v| zone.contains(*v)).collect();
    let window = lookback + 1;
    let needed = fraction * window as f64;

    let mut rows = Vec::with_capacity(calendar.len());
    let mut near_crisis = vec![false; values.len()];
    for (date, label) in calendar.events() {
        let row = match indicator.index_at_or_before(*date) {
            Some(at) if at + 1 >= window && *date <= *indicator.dates().last().unwrap() => {
                let from = at + 1 - window;
                for covered in near_crisis.iter_mut().take(at + 1).skip(from) {
                    *covered = true;
                }
                let count = in_zone[from..=at].iter().filter(|b| **b).count();
                CrisisRow {
                    label: label.clone(),
                    date: *date,
                    percent_in_zone: Some(100.0 * count as f64 / window as f64),
                    predicted: Some(count as f64 >= needed),
                }
            }
            _ => CrisisRow {
                label: label.clone(),
                date: *date,
                percent_in_zone: None,
                predicted: None,
            },
        };
        rows.push(row);
    }

    let zone_total = in_zone.iter().filter(|b| **b).count();
    let (crisis_zone_ratio, false_positive_ratio) = if zone_total == 0 {
        (None, None)
    } else {
        let explained = in_zone
            .iter()
            .zip(&near_crisis)
            .filter(|(z, c)| **z && **c)
            .count();
        let ratio = explained as f64 / zone_total as f64;
        (Some(ratio), Some(1.0 - ratio))
    };

    Ok(HistoricalReport {
        zone: *zone,
        lookback,
        fraction,
        rows,
        crisis_zone_ratio,
        false_positive_ratio,
    })
}

/// One threshold row of the drawdown protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub crises: usize,
    pub predicted: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Output of the drawdown-threshold protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub rows: Vec<ThresholdRow>,
    /// Number of dates common to the flag and drawdown series.
    pub evaluated_dates: usize,
}

/// Scores red flags against drawdown exceedances on the common dates.
///
/// The counts satisfy `predicted + false_negatives = crises` and
/// `predicted + false_positives = total flags` exactly.
pub fn threshold_backtest(
    flags: &FlagSeries,
    mdd: &MddSeries,
    thresholds: &[f64],
) -> Result<ThresholdReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("no thresholds given".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("thresholds must be finite".into()));
    }
    let mut pairs: Vec<(bool, f64)> = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < flags.len() && j < mdd.len() {
        match flags.dates()[i].cmp(&mdd.dates()[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                pairs.push((flags.flags()[i], mdd.values()[j]));
                i += 1;
                j += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let rows = thresholds
        .iter()
        .map(|&threshold| {
            let mut crises = 0;
            let mut predicted = 0;
            let mut false_positives = 0;
            for (flag, value) in &pairs {
                let crisis = *value >= threshold;
                crises += usize::from(crisis);
                predicted += usize::from(crisis && *flag);
                false_positives += usize::from(*flag && !crisis);
            }
            ThresholdRow {
                threshold,
                crises,
                predicted,
                false_positives,
                false_negatives: crises - predicted,
            }
        })
        .collect();
    Ok(ThresholdReport {
        rows,
        evaluated_dates: pairs.len(),
    })
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

fn format_percent(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.2}"),
        None => "NA".into(),
    }
}

/// Aligned text table of the historical protocol, one row per crisis plus the
/// trailing false-positive line.
pub fn render_historical_table(report: &HistoricalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "danger zone [{}, {}], lookback {}, fraction {}\n",
        report.zone.low, report.zone.high, report.lookback, report.fraction
    ));
    let label_width = report
        .rows
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("False Positive (%)".len()))
        .max()
        .unwrap_or(8);
    out.push_str(&format!(
        "{:<label_width$}  {:>10}  {:>12}  {:>9}\n",
        "crisis", "date", "in-zone (%)", "predicted"
    ));
    for row in &report.rows {
        let predicted = match row.predicted {
            Some(true) => "yes",
            Some(false) => "no",
            None => "NA",
        };
        out.push_str(&format!(
            "{:<label_width$}  {:>10}  {:>12}  {:>9}\n",
            row.label,
            row.date.to_string(),
            format_percent(row.percent_in_zone),
            predicted
        ));
    }
    out.push_str(&format!(
        "{:<label_width$}  {:>10}  {:>12}\n",
        "False Positive (%)",
        "",
        format_percent(report.false_positive_ratio.map(|r| 100.0 * r))
    ));
    out.push_str(&format!(
        "{:<label_width$}  {:>10}  {:>12}\n",
        "Crisis-zone (%)",
        "",
        format_percent(report.crisis_zone_ratio.map(|r| 100.0 * r))
    ));
    out
}

/// Machine-readable rows: `crisis_label,date,percent,predicted`.
pub fn write_historical_csv<W: Write>(report: &HistoricalReport, mut w: W) -> Result<()> {
    writeln!(w, "crisis_label,date,percent,predicted")?;
    for row in &report.rows {
        let percent = match row.percent_in_zone {
            Some(p) => format!("{p}"),
            None => "NA".into(),
        };
        let predicted = match row.predicted {
            Some(true) => "1",
            Some(false) => "0",
            None => "NA",
        };
        writeln!(w, "{},{},{},{}", row.label, row.date, percent, predicted)?;
    }
    let ratio = |r: Option<f64>| match r {
        Some(r) => format!("{r}"),
        None => "NA".into(),
    };
    writeln!(
        w,
        "false_positive_ratio,,{},",
        ratio(report.false_positive_ratio)
    )?;
    writeln!(w, "crisis_zone_ratio,,{},", ratio(report.crisis_zone_ratio))?;
    Ok(())
}

/// Aligned text table of the threshold protocol.
pub fn render_threshold_table(report: &ThresholdReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("evaluated dates: {}\n", report.evaluated_dates));
    out.push_str(&format!(
        "{:>13}  {:>7}  {:>9}  {:>15}  {:>15}\n",
        "MDD threshold", "crises", "predicted", "false positives", "false negatives"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:>12}%  {:>7}  {:>9}  {:>15}  {:>15}\n",
            100.0 * row.threshold,
            row.crises,
            row.predicted,
            row.false_positives,
            row.false_negatives
        ));
    }
    out
}

/// Machine-readable rows: `threshold,crises,predicted,fp,fn`.
pub fn write_threshold_csv<W: Write>(report: &ThresholdReport, mut w: W) -> Result<()> {
    writeln!(w, "threshold,crises,predicted,fp,fn")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.threshold, row.crises, row.predicted, row.false_positives, row.false_negatives
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::IndicatorName;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn day(k: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Duration::days(k)
    }

    fn days(n: usize) -> Vec<NaiveDate> {
        (0..n as i64).map(day).collect()
    }

    /// Quadratic oracle: maximum of `1 - R(y)/R(x)` over all ordered pairs.
    fn mdd_brute(prices: &[f64], t: usize, horizon: usize) -> f64 {
        let mut worst = 0.0f64;
        for x in t..=t + horizon {
            for y in x..=t + horizon {
                worst = worst.max(1.0 - prices[y] / prices[x]);
            }
        }
        worst
    }

    #[test]
    fn increasing_prices_have_zero_drawdown() {
        let prices: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let series = mdd(&days(20), &prices, 5, "X").unwrap();
        assert!(series.values().iter().all(|v| *v == 0.0));
        assert_eq!(series.len(), 15);
    }

    #[test]
    fn hand_case_drop_and_partial_recovery() {
        let prices = [100.0, 80.0, 90.0];
        let series = mdd(&days(3), &prices, 2, "X").unwrap();
        assert_relative_eq!(series.values()[0], 0.2, epsilon = 1e-15);
        assert_eq!(series.len(), 1);
    }

    #[test]
    fn constant_prices_have_zero_drawdown() {
        let prices = [50.0; 10];
        let series = mdd(&days(10), &prices, 3, "X").unwrap();
        assert!(series.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fast_recurrence_matches_brute_force_exactly() {
        let mut state = 42u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let mut price = 100.0;
            let prices: Vec<f64> = (0..120)
                .map(|_| {
                    price *= (0.1 * (rand01() - 0.5)).exp();
                    price
                })
                .collect();
            let series = mdd(&days(120), &prices, 20, "X").unwrap();
            for (t, v) in series.values().iter().enumerate() {
                assert_eq!(*v, mdd_brute(&prices, t, 20));
            }
        }
    }

    #[test]
    fn drawdown_is_scale_invariant_and_monotone_in_horizon() {
        let prices = [10.0, 9.0, 11.0, 8.0, 12.0, 7.0, 13.0, 6.0, 14.0, 5.0];
        let a = mdd(&days(10), &prices, 4, "X").unwrap();
        let scaled: Vec<f64> = prices.iter().map(|p| p * 37.5).collect();
        let b = mdd(&days(10), &scaled, 4, "X").unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let shorter = mdd(&days(10), &prices, 2, "X").unwrap();
        for (t, v) in a.values().iter().enumerate() {
            assert!(shorter.values()[t] <= v + 1e-15);
        }
    }

    #[test]
    fn mdd_requires_future_observations() {
        assert!(matches!(
            mdd(&days(5), &[1.0; 5], 5, "X"),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    proptest! {
        #[test]
        fn mdd_values_stay_in_unit_interval(
            raw in proptest::collection::vec(0.01f64..100.0, 30..60)
        ) {
            let series = mdd(&days(raw.len()), &raw, 10, "X").unwrap();
            for v in series.values() {
                prop_assert!((0.0..1.0).contains(v));
            }
        }
    }

    fn indicator(values: Vec<f64>) -> IndicatorSeries {
        IndicatorSeries::new(IndicatorName::B3B, days(values.len()), values).unwrap()
    }

    #[test]
    fn calibration_recovers_a_separating_band() {
        // indicator sweeps [0, 1]; events sit exactly where it is in [0.4, 0.6]
        let n = 600;
        let values: Vec<f64> = (0..n).map(|k| (k % 101) as f64 / 100.0).collect();
        let ind = indicator(values.clone());
        let mdd_values: Vec<f64> = values
            .iter()
            .map(|v| if (0.4..=0.6).contains(v) { 0.3 } else { 0.05 })
            .collect();
        let mdd_series = MddSeries {
            reference_ticker: "X".into(),
            horizon: 100,
            dates: days(n),
            values: mdd_values,
        };
        let zone = calibrate_danger_zone(
            &ind,
            &mdd_series,
            None,
            None,
            &CalibrationConfig::default(),
        )
        .unwrap();
        assert!((zone.low - 0.4).abs() <= 0.011, "low {}", zone.low);
        assert!((zone.high - 0.6).abs() <= 0.011, "high {}", zone.high);
    }

    #[test]
    fn calibration_is_deterministic() {
        let values: Vec<f64> = (0..300).map(|k| ((k * 17) % 100) as f64 / 100.0).collect();
        let ind = indicator(values.clone());
        let mdd_series = MddSeries {
            reference_ticker: "X".into(),
            horizon: 100,
            dates: days(300),
            values: values.iter().map(|v| v * 0.4).collect(),
        };
        let cfg = CalibrationConfig::default();
        let a = calibrate_danger_zone(&ind, &mdd_series, None, None, &cfg).unwrap();
        let b = calibrate_danger_zone(&ind, &mdd_series, None, None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_rejects_degenerate_inputs() {
        let ind = indicator(vec![0.5; 50]);
        let mdd_series = MddSeries {
            reference_ticker: "X".into(),
            horizon: 100,
            dates: days(50),
            values: vec![0.2; 50],
        };
        assert!(matches!(
            calibrate_danger_zone(&ind, &mdd_series, None, None, &CalibrationConfig::default()),
            Err(Error::ConstantIndicator)
        ));
        let ind = indicator((0..50).map(|k| k as f64).collect());
        let disjoint = MddSeries {
            reference_ticker: "X".into(),
            horizon: 100,
            dates: (1000..1050).map(day).collect(),
            values: vec![0.2; 50],
        };
        assert!(matches!(
            calibrate_danger_zone(&ind, &disjoint, None, None, &CalibrationConfig::default()),
            Err(Error::EmptyOverlap)
        ));
    }

    #[test]
    fn flags_fire_inside_and_not_outside_the_zone() {
        let zone = DangerZone::new(0.4, 0.8).unwrap();
        let inside = indicator(vec![0.5; 150]);
        let flags = red_flags(&inside, &zone, 100, 0.6).unwrap();
        assert_eq!(flags.len(), 50);
        assert!(flags.flags().iter().all(|f| *f));
        let outside = indicator(vec![0.1; 150]);
        let flags = red_flags(&outside, &zone, 100, 0.6).unwrap();
        assert!(flags.flags().iter().all(|f| !*f));
    }

    #[test]
    fn sixty_of_101_points_is_just_below_the_rule() {
        let zone = DangerZone::new(0.4, 0.8).unwrap();
        // first 60 in zone, then 41 outside: at t = 100 the window holds
        // exactly 60 in-zone points and 60 >= 60.6 is false
        let mut values = vec![0.5; 60];
        values.extend(vec![0.0; 41]);
        let flags = red_flags(&indicator(values), &zone, 100, 0.6).unwrap();
        assert_eq!(flags.len(), 1);
        assert!(!flags.flags()[0]);
        // one more in-zone point flips it
        let mut values = vec![0.5; 61];
        values.extend(vec![0.0; 40]);
        let flags = red_flags(&indicator(values), &zone, 100, 0.6).unwrap();
        assert!(flags.flags()[0]);
    }

    #[test]
    fn short_series_emit_no_flags() {
        let zone = DangerZone::new(0.0, 1.0).unwrap();
        let flags = red_flags(&indicator(vec![0.5; 10]), &zone, 100, 0.6).unwrap();
        assert!(flags.is_empty());
    }

    #[test]
    fn zone_membership_is_inclusive() {
        let zone = DangerZone::new(0.41, 0.8).unwrap();
        assert!(zone.contains(0.41));
        assert!(zone.contains(0.8));
        assert!(!zone.contains(0.40999));
        assert!(DangerZone::new(0.8, 0.41).is_err());
    }

    #[test]
    fn historical_backtest_full_and_empty_windows() {
        let zone = DangerZone::new(0.4, 0.8).unwrap();
        let mut values = vec![0.5; 150];
        values.extend(vec![0.1; 150]);
        let ind = indicator(values);
        let calendar = CrisisCalendar::new(vec![
            (day(120), "Crisis A".into()),
            (day(290), "Crisis B".into()),
            (day(5000), "Out of span".into()),
        ]);
        let report = historical_backtest(&ind, &zone, &calendar, 100, 0.6).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].percent_in_zone, Some(100.0));
        assert_eq!(report.rows[0].predicted, Some(true));
        assert_eq!(report.rows[1].percent_in_zone, Some(0.0));
        assert_eq!(report.rows[1].predicted, Some(false));
        assert_eq!(report.rows[2].percent_in_zone, None);
        // in-zone points: dates 0..150; those within 100 days before crisis A
        // (indices 20..=120) are explained
        let ratio = report.crisis_zone_ratio.unwrap();
        assert_relative_eq!(ratio, 101.0 / 150.0, epsilon = 1e-12);
        assert_relative_eq!(
            report.false_positive_ratio.unwrap(),
            1.0 - 101.0 / 150.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn historical_backtest_with_empty_calendar() {
        let zone = DangerZone::new(0.4, 0.8).unwrap();
        let report =
            historical_backtest(&indicator(vec![0.5; 50]), &zone, &CrisisCalendar::empty(), 10, 0.6)
                .unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.false_positive_ratio, Some(1.0));
    }

    #[test]
    fn threshold_backtest_boundary_cases() {
        let flags = FlagSeries::new(days(10), vec![true; 10]).unwrap();
        let mdd_series = MddSeries {
            reference_ticker: "X".into(),
            horizon: 100,
            dates: days(10),
            values: vec![0.3; 10],
        };
        let report = threshold_backtest(&flags, &mdd_series, &[0.1]).unwrap();
        assert_eq!(report.rows[0].crises, 10);
        assert_eq!(report.rows[0].predicted, 10);
        assert_eq!(report.rows[0].false_negatives, 0);
        assert_eq!(report.rows[0].false_positives, 0);

        let no_flags = FlagSeries::new(days(10), vec![false; 10]).unwrap();
        let report = threshold_backtest(&no_flags, &mdd_series, &[0.1]).unwrap();
        assert_eq!(report.rows[0].predicted, 0);
        assert_eq!(report.rows[0].false_positives, 0);
        assert_eq!(report.rows[0].false_negatives, 10);
    }

    #[test]
    fn threshold_accounting_identities_hold() {
        let mut state = 9u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let n = 50;
            let flags =
                FlagSeries::new(days(n), (0..n).map(|_| rand01() < 0.4).collect()).unwrap();
            let mdd_series = MddSeries {
                reference_ticker: "X".into(),
                horizon: 100,
                dates: days(n),
                values: (0..n).map(|_| rand01() * 0.5).collect(),
            };
            let report =
                threshold_backtest(&flags, &mdd_series, &[0.1, 0.15, 0.2, 0.25]).unwrap();
            let raised = flags.count_raised();
            for row in &report.rows {
                assert_eq!(row.predicted + row.false_negatives, row.crises);
                assert_eq!(row.predicted + row.false_positives, raised);
            }
        }
    }

    #[test]
    fn calendar_reads_and_sorts() {
        let text = "date,label\n2008-09-15,Crisis 15 : Large bank failure\n1987-10-19,Crisis 1 : Crash\n";
        let calendar = CrisisCalendar::read_csv(std::io::Cursor::new(text)).unwrap();
        assert_eq!(calendar.len(), 2);
        assert_eq!(calendar.events()[0].0, NaiveDate::from_ymd_opt(1987, 10, 19).unwrap());
        assert!(calendar.events()[1].1.contains("Large bank"));
    }

    #[test]
    fn historical_table_renders_na_rows_and_false_positive_line() {
        // layout fixture shaped like the published table: 19 crises, NA for
        // out-of-span entries, trailing false-positive percentage
        let rows: Vec<CrisisRow> = (1..=19)
            .map(|k| CrisisRow {
                label: format!("Crisis {k}"),
                date: day(k as i64 * 10),
                percent_in_zone: if k <= 2 { None } else { Some(90.0 + k as f64 / 10.0) },
                predicted: if k <= 2 { None } else { Some(true) },
            })
            .collect();
        let report = HistoricalReport {
            zone: DangerZone::new(0.41, 0.8).unwrap(),
            lookback: 100,
            fraction: 0.6,
            rows,
            crisis_zone_ratio: Some(1.0 - 0.7338),
            false_positive_ratio: Some(0.7338),
        };
        let table = render_historical_table(&report);
        assert!(table.contains("danger zone [0.41, 0.8]"));
        assert_eq!(table.matches("NA").count(), 4); // two NA rows x two columns
        assert!(table.contains("False Positive (%)"));
        assert!(table.contains("73.38"));
        let mut csv = Vec::new();
        write_historical_csv(&report, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.lines().count() >= 20);
        assert!(csv.contains("Crisis 1,"));
    }

    #[test]
    fn threshold_table_renders_the_published_shape() {
        let report = ThresholdReport {
            rows: vec![ThresholdRow {
                threshold: 0.25,
                crises: 268,
                predicted: 268,
                false_positives: 2016,
                false_negatives: 0,
            }],
            evaluated_dates: 3770,
        };
        let table = render_threshold_table(&report);
        assert!(table.contains("25%"));
        assert!(table.contains("268"));
        assert!(table.contains("2016"));
        let mut csv = Vec::new();
        write_threshold_csv(&report, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("0.25,268,268,2016,0"));
    }
}
