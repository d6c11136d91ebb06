//! Regenerates the bundled demo dataset: a calm Gaussian regime followed by
//! a turbulent heavy-tailed one, with volume and market-cap panels, plus a
//! one-event crisis calendar at the regime break.
//!
//! Usage: `cargo run -p eigenwatch --example make_demo_panel [dir]`
//! (default `data/demo`). Output is deterministic.

use eigenwatch::market_data::{synthetic_panel, write_ticker_files, Regime, SyntheticSpec};

fn main() -> eigenwatch::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/demo".to_string());
    let dir = std::path::PathBuf::from(dir);

    let mut spec = SyntheticSpec::new(
        8,
        vec![
            Regime::gaussian(250, 0.01, 0.3),
            Regime::student_t3(200, 0.035, 0.75),
        ],
    );
    spec.with_weights = true;
    let panel = synthetic_panel(&spec, 17)?;
    write_ticker_files(&panel, &dir.join("panel"))?;

    let break_date = panel.dates()[251];
    let deep_date = panel.dates()[310];
    std::fs::write(
        dir.join("crises.csv"),
        format!(
            "date,label\n1999-01-04,Crisis 0 : Before the sample\n{break_date},Crisis 1 : Regime break\n{deep_date},Crisis 2 : Deep turbulence\n"
        ),
    )?;

    println!(
        "demo panel: {} assets x {} dates ({} .. {})",
        panel.n_assets(),
        panel.n_dates(),
        panel.dates().first().unwrap(),
        panel.dates().last().unwrap()
    );
    println!("regime break: {break_date}");
    println!("calibration_end suggestion: {}", panel.dates()[320]);
    println!("forecast_start suggestion: {}", panel.dates()[321]);
    Ok(())
}
