//! Run a suite described in TOML with periodic replanning and write the CSV
//! report.
//!
//!     cargo run --release --example benchmark_report [-- report.csv]

use affordkit::orchestrator::{run_benchmark, SuiteConfig};

const SUITE: &str = r#"
name = "mixed"
tasks = ["pick the kettle", "place the peach onto the plate", "close the cubby"]
sources = ["oracle", "baseline"]
episodes = 10
seed = 500
variation = "camera_shift"
replan = 25
"#;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "report.csv".into());
    let suite = SuiteConfig::from_toml(SUITE)?;
    let report = run_benchmark(&suite, None)?;
    print!("{}", report.to_table());
    report.write_csv(std::fs::File::create(&out)?)?;
    println!("wrote {out}");
    Ok(())
}
