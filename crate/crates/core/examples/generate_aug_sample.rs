//! Regenerate the shipped augmented-image sample (`data/annotations.jsonl`).
//!
//!     cargo run --release --example generate_aug_sample [-- OUT]

use affordkit::corpus::default_aug_images;
use affordkit::datasets::export_annotations;
use std::collections::BTreeMap;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/annotations.jsonl").to_string());
    let images = default_aug_images()?;
    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &images {
        *per_task.entry(a.language.as_str()).or_default() += 1;
    }
    for (task, n) in &per_task {
        println!("{n:>4}  {task}");
    }
    export_annotations(&images, &out)?;
    println!("{} records -> {out}", images.len());
    Ok(())
}
