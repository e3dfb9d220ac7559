//! Drive the annotation service directly: submit clicks for a pending image,
//! export, and check the reprojection of the stored plan.

use affordkit::corpus::{export_dataset, ExportOptions};
use affordkit::datasets::read_annotations;
use affordkit::extraction::WaypointKind;
use affordkit::geometry::Vec3;
use affordkit::service::{AnnotationService, AnnotationSubmission, ServiceOptions, WaypointPayload};

fn main() -> anyhow::Result<()> {
    let root = std::env::temp_dir().join("affordkit-annotation-example");
    let _ = std::fs::remove_dir_all(&root);
    let opts = ExportOptions {
        robot_per_task: 1,
        aug_per_task: 0,
        pending_per_task: 1,
        web_per_category: 1,
        ..ExportOptions::default()
    };
    export_dataset(&root, &opts)?;
    let service = AnnotationService::open(&root, ServiceOptions::default())?;

    let pending = service.list_pending();
    println!("{} pending images", pending.len());
    let first = &pending[0];
    let view = service.fetch_image(&first.id)?;
    println!("{} \"{}\" ({} bytes of base64 PNG)", view.id, view.language, view.png.len());

    let clicks = [(70.0, 60.0, 0.03, WaypointKind::Close), (72.0, 58.0, 0.25, WaypointKind::Final)];
    let submission = AnnotationSubmission {
        annotator: "example".into(),
        waypoints: clicks
            .iter()
            .map(|&(u, v, h, kind)| WaypointPayload {
                kind,
                pixel: [u, v],
                yaw_deg: 90.0,
                height: h,
            })
            .collect(),
        objects: vec![],
        language: None,
        base_version: Some(view.version),
    };
    let first_try = service.submit(&first.id, &submission)?;
    let retry = service.submit(&first.id, &submission)?;
    println!("submitted: {first_try:?}, retried: {retry:?}");

    let exported = read_annotations(&service.export_aug()?[..])?;
    let stored = exported.iter().find(|a| a.is_annotated()).expect("one annotated record");
    let tool = affordkit::geometry::GripperGeometry::default().tool_center();
    for (w, &(u, v, _, _)) in stored.plan.as_ref().expect("plan").waypoints().iter().zip(&clicks) {
        let tcp = w.pose.compose(&tool).position;
        let px = view.camera.project_point(&Vec3::new(tcp.x, tcp.y, view.table_height))?;
        println!("clicked ({u}, {v}) -> reprojected ({:.6}, {:.6})", px.u, px.v);
    }
    Ok(())
}
