//! Start a human-sourced episode on the service and answer its plan
//! requests from another thread, the way the browser UI would.

use affordkit::extraction::WaypointKind;
use affordkit::service::{
    AnnotationService, EpisodeState, LiveAffordanceRequest, ServiceOptions, StartEpisodeRequest, WaypointPayload,
};
use affordkit::simenv::Variation;
use affordkit::orchestrator::PlanSource;
use std::time::Duration;

fn main() -> anyhow::Result<()> {
    let root = std::env::temp_dir().join("affordkit-steering-example");
    let _ = std::fs::remove_dir_all(&root);
    let service = AnnotationService::open(&root, ServiceOptions::default())?;
    let status = service.start_episode(&StartEpisodeRequest {
        task: "pick the apple".into(),
        seed: 3,
        variation: Variation::InDist,
        source: PlanSource::Human,
        replan: None,
        pacing_hz: Some(200.0),
        timeout_secs: Some(10.0),
    })?;
    println!("started {}", status.id);

    let mut answered = 0;
    loop {
        let s = service.episode_status(&status.id)?;
        match s.state {
            EpisodeState::Awaiting if s.prompts > answered => {
                answered = s.prompts;
                // stand-in for a person clicking on the frame: project the
                // apple's grasp point from the same seeded scene
                let frame = service.fetch_frame(&status.id)?;
                println!("step {}: awaiting a plan ({} bytes of frame)", s.step, frame.png.len());
                let scene = affordkit::simenv::spawn_scene(
                    &affordkit::simenv::TaskSpec::pick("apple"),
                    3,
                    Variation::InDist,
                )?;
                let apple = scene.find("apple").expect("apple");
                let part = apple.part_world().position;
                let foot = affordkit::geometry::Vec3::new(part.x, part.y, scene.table_height);
                let px = scene.camera.project_point(&foot)?;
                let wp = |kind, h| WaypointPayload {
                    kind,
                    pixel: [px.u, px.v],
                    yaw_deg: apple.yaw().to_degrees(),
                    height: h,
                };
                let height = part.z - scene.table_height;
                service.submit_live_affordance(
                    &status.id,
                    &LiveAffordanceRequest {
                        waypoints: vec![wp(WaypointKind::Close, height), wp(WaypointKind::Final, height + 0.25)],
                    },
                )?;
            }
            EpisodeState::Done | EpisodeState::Failed => {
                println!("{s:?}");
                break;
            }
            _ => std::thread::sleep(Duration::from_millis(20)),
        }
    }
    Ok(())
}
