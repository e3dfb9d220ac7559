//! Closed-loop grasping: ground-truth affordance plans against a policy that
//! only knows where the object is.

use affordkit::orchestrator::{run_benchmark, PlanSource, SuiteConfig};

fn main() -> anyhow::Result<()> {
    let episodes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let suite = SuiteConfig::builtin("grasping", vec![PlanSource::Oracle, PlanSource::Baseline], episodes).expect("builtin");
    let report = run_benchmark(&suite, None)?;
    print!("{}", report.to_table());
    for src in report.sources() {
        let hist = report.failure_histogram(src);
        println!("{:<10} failures {hist:?}", src.as_str());
    }
    Ok(())
}
