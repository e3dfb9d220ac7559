//! Export a small dataset directory, load it back and assemble the three
//! training mixtures.

use affordkit::corpus::{export_dataset, ExportOptions};
use affordkit::datasets::{assemble_mixture, DatasetDir, MixtureConfig, Source};

fn main() -> anyhow::Result<()> {
    let root = std::env::temp_dir().join("affordkit-mixture-example");
    let _ = std::fs::remove_dir_all(&root);
    let opts = ExportOptions {
        robot_per_task: 4,
        aug_per_task: 6,
        web_per_category: 2,
        ..ExportOptions::default()
    };
    let summary = export_dataset(&root, &opts)?;
    println!("exported {summary:?} to {}", root.display());

    let dir = DatasetDir::new(&root);
    let (robot, web, aug) = (dir.trajectories()?, dir.web_proxy()?, dir.annotations()?);
    for name in ["full", "no_aug", "no_web"] {
        let cfg = MixtureConfig::preset(name).expect("preset");
        let set = assemble_mixture(&robot, &web, &aug, &cfg, 42)?;
        let c = set.counts();
        let leaked = set.records().iter().filter(|r| !cfg.includes(r.source())).count();
        println!(
            "{name:<7} robot {:>3} web {:>3} aug {:>3}  excluded-source records: {leaked}",
            c.get(Source::Robot),
            c.get(Source::Web),
            c.get(Source::Aug)
        );
    }
    Ok(())
}
