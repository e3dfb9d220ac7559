//! Train the template predictor on three data mixtures and compare offline
//! scores on a suite that includes tasks only the annotated images cover.

use affordkit::corpus::{aug_tasks, default_aug_images, robot_demos, robot_tasks, web_proxy, ROBOT_SEED_BASE};
use affordkit::datasets::{assemble_mixture, MixtureConfig};
use affordkit::extraction::ExtractionConfig;
use affordkit::orchestrator::{run_benchmark, PlanSource, SuiteConfig};
use affordkit::predictor::{eval_offline, fit, offline_suite, JudgeConfig};
use affordkit::simenv::Variation;

fn main() -> anyhow::Result<()> {
    let robot: Vec<_> = robot_demos(&robot_tasks(), 20, ROBOT_SEED_BASE)?.into_iter().map(|(_, t)| t).collect();
    let aug = default_aug_images()?;
    let web = web_proxy(4, 0);
    println!("robot {}  aug {}  web {}", robot.len(), aug.len(), web.len());

    let mut tasks = robot_tasks();
    tasks.extend(aug_tasks());
    let suite = offline_suite(&tasks, Variation::InDist, 20, 0);
    let extraction = ExtractionConfig::default();
    let mut full_model = None;
    for name in ["full", "no_aug", "no_web"] {
        let cfg = MixtureConfig::preset(name).expect("known preset");
        let set = assemble_mixture(&robot, &web, &aug, &cfg, 7)?;
        let model = fit(&set, &extraction)?;
        let report = eval_offline(&model, &suite, &JudgeConfig::default())?;
        println!("{name:<8} score {:.1}%", 100.0 * report.score(Variation::InDist));
        if name == "full" {
            println!("{}", report.to_table());
            full_model = Some(model);
        }
    }

    let suite = SuiteConfig::builtin("beyond", vec![PlanSource::Predictor, PlanSource::Baseline], 10).expect("builtin");
    let report = run_benchmark(&suite, full_model.as_ref())?;
    println!("{}", report.to_table());
    Ok(())
}
