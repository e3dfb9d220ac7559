//! Record an expert pick-and-place and recover its affordance plan from the
//! gripper aperture alone, at several thresholds.

use affordkit::extraction::{build_affordance_plan, detect_key_timesteps, make_policy_records, ExtractionConfig};
use affordkit::simenv::{generate_demo, spawn_scene, TaskSpec, Variation};

fn main() -> anyhow::Result<()> {
    let task = TaskSpec::place("peach", "plate");
    let scene = spawn_scene(&task, 11, Variation::InDist)?;
    let demo = generate_demo(&scene, &task)?;
    println!("{}: {} frames", demo.language, demo.frames.len());

    for alpha in [0.3, 0.5, 0.7] {
        let cfg = ExtractionConfig::new(alpha)?;
        let events = detect_key_timesteps(&demo.apertures(), &cfg)?;
        println!("alpha {alpha}: events {events:?}");
    }

    let cfg = ExtractionConfig::default();
    let plan = build_affordance_plan(&demo, &cfg)?;
    for w in plan.waypoints() {
        let p = w.pose.position;
        println!(
            "  t={:<4} {:<6} ({:.3}, {:.3}, {:.3}) yaw {:.1}",
            w.source_timestep,
            w.kind.as_str(),
            p.x,
            p.y,
            p.z,
            w.pose.heading().to_degrees()
        );
    }
    let records = make_policy_records(&demo, &cfg)?;
    println!("{} policy training records, all conditioned on the same plan", records.len());
    Ok(())
}
