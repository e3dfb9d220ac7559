//! Spawn each kind of task, run the scripted expert and replay its actions.
//!
//!     cargo run --example scripted_demo [-- OUT_DIR]

use affordkit::simenv::{check_success, generate_demo, replay, snapshot, spawn_scene, TaskSpec, Variation};
use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let tasks = [
        TaskSpec::pick("kettle"),
        TaskSpec::place("eggplant", "box"),
        TaskSpec::close("cubby"),
        TaskSpec::turn("faucet"),
    ];
    for (i, task) in tasks.iter().enumerate() {
        for variation in Variation::ALL {
            let scene = spawn_scene(task, 100 + i as u64, variation)?;
            let demo = generate_demo(&scene, task)?;
            let end = replay(&scene, &demo);
            println!(
                "{:<32} {:<16} {:>4} frames, replay success {}",
                task.label(),
                variation.as_str(),
                demo.frames.len(),
                check_success(&end, task)
            );
            if variation == Variation::InDist {
                let path = dir.join(format!("scene_{i}.png"));
                snapshot(&scene).save_png(&path)?;
            }
        }
    }
    Ok(())
}
