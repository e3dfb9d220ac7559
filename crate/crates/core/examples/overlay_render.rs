//! Draw a plan over a scene snapshot and print its text form.
//!
//!     cargo run --example overlay_render [-- OUT.png]

use affordkit::extraction::{build_affordance_plan, ExtractionConfig};
use affordkit::render::{overlay, parse_plan_text, pixel_plan, tokenize_plan};
use affordkit::simenv::{generate_demo, snapshot, spawn_scene, TaskSpec, Variation};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "overlay.png".into());
    let task = TaskSpec::place("apple", "pot");
    let scene = spawn_scene(&task, 5, Variation::InDist)?;
    let demo = generate_demo(&scene, &task)?;
    let plan = build_affordance_plan(&demo, &ExtractionConfig::default())?;

    let base = snapshot(&scene);
    let drawn = overlay(&base, &scene.camera, &plan, &scene.config.gripper)?;
    drawn.image.save_png(&out)?;
    let changed = base
        .as_raw()
        .chunks(3)
        .zip(drawn.image.as_raw().chunks(3))
        .filter(|(a, b)| a != b)
        .count();
    println!("{out}: {changed} pixels changed, {} waypoints skipped", drawn.skipped.len());

    let text = tokenize_plan(&plan, &scene.camera, &scene.config.gripper);
    println!("{}", text.as_str());
    let parsed = parse_plan_text(text.as_str())?;
    assert_eq!(parsed, pixel_plan(&plan, &scene.camera, &scene.config.gripper));
    println!("text form parses back to the same pixel plan");
    Ok(())
}
