//! The five pipeline stages.
//!
//! Each stage reads the previous stage's files from the output directory and
//! writes its own, so a finished directory is a complete, reproducible record
//! of the run. All outputs are plain comma-separated text with a one-line
//! header; floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use eigenwatch::crisis::{
    calibrate_danger_zone, historical_backtest, mdd_from_panel, red_flags,
    render_historical_table, render_threshold_table, threshold_backtest, write_historical_csv,
    write_threshold_csv, CalibrationConfig, CrisisCalendar, DangerZone, FlagSeries,
};
use eigenwatch::density::BinnedDensity;
use eigenwatch::hellinger::{a_series, ASeriesConfig};
use eigenwatch::market_data::{
    load_panel, log_returns, read_panel_cache, write_panel_cache, AlignmentPolicy, AssetPanel,
};
use eigenwatch::matrices::mean_pairwise_correlation;
use eigenwatch::references::{
    mp_density, standard_support, simulate_reference, MpParams, ReferenceKind, ReferenceSet,
    ReferenceSpec,
};
use eigenwatch::series::{IndicatorName, IndicatorSeries};
use eigenwatch::spectral::{b_series, BSeriesConfig};
use eigenwatch::Error;

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn ingest(config: &RunConfig, out: &Path) -> Result<()> {
    let paths = config.panel_paths()?;
    let policy = AlignmentPolicy {
        forward_fill: config.panel.forward_fill,
    };
    let panel = load_panel(&paths, policy)?;
    let cache = out.join("panel.txt");
    let mut w = BufWriter::new(File::create(&cache)?);
    write_panel_cache(&panel, &mut w)?;
    w.flush()?;
    println!(
        "ingest: {} assets x {} dates ({} .. {}) -> {}",
        panel.n_assets(),
        panel.n_dates(),
        panel.dates().first().unwrap(),
        panel.dates().last().unwrap(),
        cache.display()
    );
    Ok(())
}

fn read_panel(out: &Path) -> Result<AssetPanel> {
    let path = out.join("panel.txt");
    let file = File::open(&path).map_err(|_| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "panel cache not found; run the ingest stage first".into(),
        })
    })?;
    Ok(read_panel_cache(BufReader::new(file))?)
}

fn resolve_rho(config: &RunConfig, panel: &AssetPanel) -> Result<f64> {
    match config.reference.rho_mode.as_str() {
        "fixed" => Ok(config.reference.rho),
        "mean-correlation" => {
            let returns = log_returns(panel)?;
            Ok(mean_pairwise_correlation(&returns, None, None)?)
        }
        other => Err(CliError::Config(format!(
            "unknown reference.rho_mode {other:?} (expected fixed | mean-correlation)"
        ))),
    }
}

fn reference_specs(config: &RunConfig, n_assets: usize, rho: f64) -> (ReferenceSpec, ReferenceSpec) {
    let gauss = ReferenceSpec {
        kind: ReferenceKind::GaussianCorrelated,
        n_assets,
        window: config.window.length,
        rho,
        samples: config.reference.samples,
        seed: config.reference.seed,
        bins: config.support.bins,
        standardize_student: config.reference.standardize_student,
    };
    let student = ReferenceSpec {
        kind: ReferenceKind::StudentCorrelated,
        seed: config.reference.seed.wrapping_add(1),
        ..gauss.clone()
    };
    (gauss, student)
}

fn reference_key(config: &RunConfig, n_assets: usize, rho: f64) -> String {
    let (gauss, student) = reference_specs(config, n_assets, rho);
    format!(
        "panel n={} t={}\nsupport multiplier={} bins={}\nrho={rho}\ntheta2={}\ntheta3={}\n",
        n_assets,
        config.window.length,
        config.support.multiplier,
        config.support.bins,
        gauss.cache_key(),
        student.cache_key()
    )
}

fn write_support(path: &Path, edges: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "edge").map_err(Error::Io)?;
    for e in edges {
        writeln!(w, "{e}").map_err(Error::Io)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn read_support(out: &Path) -> Result<Vec<f64>> {
    let path = out.join("support.csv");
    let file = File::open(&path).map_err(|_| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "support grid not found; run the reference stage first".into(),
        })
    })?;
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && trimmed == "edge") {
            continue;
        }
        edges.push(trimmed.parse::<f64>().map_err(|e| {
            CliError::Core(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("bad edge: {e}"),
            })
        })?);
    }
    Ok(edges)
}

fn write_density(path: &Path, density: &BinnedDensity) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    density.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

fn read_density(out: &Path, name: &str, edges: &[f64]) -> Result<BinnedDensity> {
    let path = out.join(name);
    let file = File::open(&path).map_err(|_| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "reference density not found; run the reference stage first".into(),
        })
    })?;
    Ok(BinnedDensity::read_csv_with_edges(
        BufReader::new(file),
        edges,
    )?)
}

pub fn reference(config: &RunConfig, out: &Path) -> Result<()> {
    let panel = read_panel(out)?;
    let n = panel.n_assets();
    let rho = resolve_rho(config, &panel)?;
    let key = reference_key(config, n, rho);
    let key_path = out.join("reference.key");
    let artifacts = ["support.csv", "theta1.csv", "theta2.csv", "theta3.csv"];
    let cached = std::fs::read_to_string(&key_path)
        .map(|existing| existing == key)
        .unwrap_or(false)
        && artifacts.iter().all(|a| out.join(a).exists());
    if cached {
        println!("reference: artifacts up to date ({})", key_path.display());
        return Ok(());
    }

    let params = MpParams::from_shape(n, config.window.length)?;
    let support = standard_support(&params, config.support.multiplier, config.support.bins)?;
    let theta1 = mp_density(&params, &support)?;
    let (gauss, student) = reference_specs(config, n, rho);
    let theta2 = simulate_reference(&gauss, &support)?;
    let theta3 = simulate_reference(&student, &support)?;
    for theta in [&theta1, &theta2, &theta3] {
        debug_assert!((theta.total_mass() - 1.0).abs() < 1e-9);
    }

    write_support(&out.join("support.csv"), &support)?;
    write_density(&out.join("theta1.csv"), &theta1)?;
    write_density(&out.join("theta2.csv"), &theta2)?;
    write_density(&out.join("theta3.csv"), &theta3)?;
    std::fs::write(&key_path, key)?;
    println!(
        "reference: theta1/theta2/theta3 on {} bins (rho = {rho}) -> {}",
        config.support.bins,
        out.display()
    );
    Ok(())
}

fn series_path(out: &Path, name: IndicatorName) -> PathBuf {
    out.join(format!("series_{name}.csv"))
}

fn write_series(out: &Path, series: &IndicatorSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(series_path(out, series.name()))?);
    series.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Combined `date,<columns...>` table; cells are blank where a series has no
/// observation for the row's date.
fn write_combined(path: &Path, columns: &[&IndicatorSeries]) -> Result<()> {
    let mut dates: Vec<chrono::NaiveDate> = columns
        .iter()
        .flat_map(|s| s.dates().iter().copied())
        .collect();
    dates.sort();
    dates.dedup();
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = columns.iter().map(|s| s.name().to_string()).collect();
    writeln!(w, "date,{}", header.join(",")).map_err(Error::Io)?;
    for date in dates {
        write!(w, "{date}").map_err(Error::Io)?;
        for series in columns {
            match series.value_on(date) {
                Some(v) => write!(w, ",{v}").map_err(Error::Io)?,
                None => write!(w, ",").map_err(Error::Io)?,
            }
        }
        writeln!(w).map_err(Error::Io)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

pub fn indicators(config: &RunConfig, out: &Path) -> Result<()> {
    let panel = read_panel(out)?;
    let selected = config.indicators.names()?;
    let is_a = |n: &IndicatorName| matches!(n, IndicatorName::A1 | IndicatorName::A2 | IndicatorName::A3);
    let wants_a = selected.iter().any(is_a);
    let wants_b = selected.iter().any(|n| !is_a(n));
    let mut written = 0usize;

    if wants_a {
        let returns = log_returns(&panel)?;
        let support = read_support(out)?;
        let refs = ReferenceSet::from_parts(
            support.clone(),
            read_density(out, "theta1.csv", &support)?,
            read_density(out, "theta2.csv", &support)?,
            read_density(out, "theta3.csv", &support)?,
        )?;
        let cfg = ASeriesConfig {
            window: config.window.length,
            pooling: config.window.pooling,
            truncation_divisor: config.support.truncation_divisor,
            rescale: config.rescale.mode_for_a_series()?,
        };
        let computed = a_series(&returns, &refs, &cfg)?;
        let chosen: Vec<&IndicatorSeries> = computed
            .iter()
            .filter(|s| selected.contains(&s.name()))
            .collect();
        for series in &chosen {
            write_series(out, series)?;
            written += 1;
        }
        write_combined(&out.join("a_series.csv"), &chosen)?;
    }

    if wants_b {
        for (name, field, panel_has) in [
            (IndicatorName::B3A, "market_cap", panel.market_cap().is_some()),
            (IndicatorName::B3B, "volume", panel.volume().is_some()),
            (IndicatorName::B3C, "volume", panel.volume().is_some()),
        ] {
            if selected.contains(&name) && !panel_has {
                return Err(CliError::Core(Error::MissingWeightPanel {
                    field,
                    indicator: name.as_str(),
                }));
            }
        }
        let cfg = BSeriesConfig {
            window: config.window.length,
            rescale: config.rescale.mode_for_b_series()?,
            ma_window: config.indicators.ma_window,
        };
        let output = b_series(&panel, &cfg)?;
        if selected.contains(&IndicatorName::B3C)
            && output.get(IndicatorName::B3C).is_none()
        {
            return Err(CliError::Core(Error::InsufficientHistory {
                needed: config.indicators.ma_window + 1,
                available: output
                    .get(IndicatorName::B3B)
                    .map(|s| s.len())
                    .unwrap_or(0),
            }));
        }
        let chosen: Vec<&IndicatorSeries> = output
            .series
            .iter()
            .filter(|s| selected.contains(&s.name()))
            .collect();
        for series in &chosen {
            write_series(out, series)?;
            written += 1;
        }
        write_combined(&out.join("b_series.csv"), &chosen)?;
        if !output.skipped.is_empty() {
            let path = out.join("skipped.csv");
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "date,indicator,reason").map_err(Error::Io)?;
            for s in &output.skipped {
                writeln!(w, "{},{},{}", s.date, s.indicator, s.reason).map_err(Error::Io)?;
            }
            w.flush().map_err(Error::Io)?;
            eprintln!(
                "indicators: {} weighted observations skipped (see {})",
                output.skipped.len(),
                path.display()
            );
        }
    }

    println!("indicators: wrote {written} series -> {}", out.display());
    Ok(())
}

fn read_series(out: &Path, name: IndicatorName) -> Result<IndicatorSeries> {
    let path = series_path(out, name);
    let file = File::open(&path).map_err(|_| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("series {name} not found; run the indicators stage first"),
        })
    })?;
    Ok(IndicatorSeries::read_csv(name, BufReader::new(file))?)
}

fn restrict_flags(flags: &FlagSeries, start: Option<chrono::NaiveDate>) -> Result<FlagSeries> {
    let Some(start) = start else {
        return Ok(flags.clone());
    };
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (date, flag) in flags.dates().iter().zip(flags.flags()) {
        if *date >= start {
            dates.push(*date);
            values.push(*flag);
        }
    }
    Ok(FlagSeries::new(dates, values)?)
}

pub fn backtest(config: &RunConfig, out: &Path) -> Result<()> {
    let panel = read_panel(out)?;
    let ticker = config
        .backtest
        .reference_ticker
        .as_deref()
        .ok_or_else(|| CliError::Config("backtest.reference_ticker is required".into()))?;
    let name: IndicatorName = config.backtest.indicator.parse().map_err(CliError::Core)?;
    let indicator = read_series(out, name)?;

    let mdd = mdd_from_panel(&panel, ticker, config.backtest.horizon)?;
    let mut w = BufWriter::new(File::create(out.join("mdd.csv"))?);
    mdd.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;

    let zone = calibrate_danger_zone(
        &indicator,
        &mdd,
        config.backtest.calibration_start,
        config.backtest.calibration_end,
        &CalibrationConfig {
            mdd_threshold: config.backtest.mdd_threshold,
            grid_points: config.backtest.grid_points,
        },
    )?;
    std::fs::write(
        out.join("danger_zone.csv"),
        format!("low,high\n{},{}\n", zone.low, zone.high),
    )?;

    let flags = red_flags(
        &indicator,
        &zone,
        config.backtest.flag_lookback,
        config.backtest.flag_fraction,
    )?;
    let mut w = BufWriter::new(File::create(out.join("flags.csv"))?);
    flags.write_csv(&mut w)?;
    w.flush().map_err(Error::Io)?;

    let calendar = match &config.backtest.crisis_calendar {
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                CliError::Config(format!("crisis calendar {}: {e}", path.display()))
            })?;
            CrisisCalendar::read_csv(BufReader::new(file))?
        }
        None => CrisisCalendar::empty(),
    };
    let historical = historical_backtest(
        &indicator,
        &zone,
        &calendar,
        config.backtest.flag_lookback,
        config.backtest.flag_fraction,
    )?;
    let mut w = BufWriter::new(File::create(out.join("historical.csv"))?);
    write_historical_csv(&historical, &mut w)?;
    w.flush().map_err(Error::Io)?;
    std::fs::write(out.join("historical.txt"), render_historical_table(&historical))?;

    let forecast_flags = restrict_flags(&flags, config.backtest.forecast_start)?;
    let threshold = threshold_backtest(&forecast_flags, &mdd, &config.backtest.mdd_thresholds)?;
    let mut w = BufWriter::new(File::create(out.join("threshold.csv"))?);
    write_threshold_csv(&threshold, &mut w)?;
    w.flush().map_err(Error::Io)?;
    std::fs::write(out.join("threshold.txt"), render_threshold_table(&threshold))?;

    println!(
        "backtest: {name} zone [{}, {}], {} flags raised on {} dates -> {}",
        zone.low,
        zone.high,
        flags.count_raised(),
        flags.len(),
        out.display()
    );
    Ok(())
}

fn read_zone(out: &Path) -> Result<DangerZone> {
    let path = out.join("danger_zone.csv");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "danger zone not found; run the backtest stage first".into(),
        })
    })?;
    let line = text.lines().nth(1).ok_or_else(|| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 2,
            message: "missing zone row".into(),
        })
    })?;
    let (low, high) = line.split_once(',').ok_or_else(|| {
        CliError::Core(Error::Parse {
            path: path.display().to_string(),
            line: 2,
            message: "expected `low,high`".into(),
        })
    })?;
    let parse = |s: &str| {
        s.trim().parse::<f64>().map_err(|e| {
            CliError::Core(Error::Parse {
                path: path.display().to_string(),
                line: 2,
                message: format!("bad bound: {e}"),
            })
        })
    };
    Ok(DangerZone::new(parse(low)?, parse(high)?)?)
}

fn read_stage_text(out: &Path, name: &str) -> Result<String> {
    std::fs::read_to_string(out.join(name)).map_err(|_| {
        CliError::Core(Error::Parse {
            path: out.join(name).display().to_string(),
            line: 0,
            message: "stage output not found; run the backtest stage first".into(),
        })
    })
}

pub fn report(config: &RunConfig, out: &Path) -> Result<()> {
    let panel = read_panel(out)?;
    let zone = read_zone(out)?;
    let historical = read_stage_text(out, "historical.txt")?;
    let threshold = read_stage_text(out, "threshold.txt")?;

    let mut text = String::new();
    text.push_str("eigenwatch run report\n");
    text.push_str("=====================\n\n");
    text.push_str(&format!(
        "panel: {} assets x {} dates ({} .. {})\n",
        panel.n_assets(),
        panel.n_dates(),
        panel.dates().first().unwrap(),
        panel.dates().last().unwrap()
    ));
    text.push_str(&format!(
        "weights: volume {}, market cap {}\n",
        if panel.volume().is_some() { "yes" } else { "no" },
        if panel.market_cap().is_some() { "yes" } else { "no" }
    ));
    text.push_str(&format!(
        "backtested indicator: {} (danger zone [{}, {}])\n",
        config.backtest.indicator, zone.low, zone.high
    ));
    text.push_str(&format!(
        "flag rule: at least {}% of the prior {} observations in zone\n\n",
        100.0 * config.backtest.flag_fraction,
        config.backtest.flag_lookback + 1
    ));
    text.push_str("historical protocol\n");
    text.push_str("-------------------\n");
    text.push_str(&historical);
    text.push('\n');
    text.push_str("threshold protocol\n");
    text.push_str("------------------\n");
    text.push_str(&threshold);

    std::fs::write(out.join("report.txt"), &text)?;
    println!("report: wrote {}", out.join("report.txt").display());
    Ok(())
}
