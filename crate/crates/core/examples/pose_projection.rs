//! Project a gripper pose into a camera and lift a clicked pixel back onto
//! the table.

use affordkit::geometry::{CameraModel, GripperGeometry, Pixel, Pose, Vec3};
use affordkit::service::pixel_to_pose;

fn main() -> anyhow::Result<()> {
    let table = 0.7;
    let cam = CameraModel::new(
        100.0,
        100.0,
        80.0,
        60.0,
        160,
        120,
        CameraModel::look_at(Vec3::new(0.0, 0.0, table + 0.85), Vec3::new(0.55, 0.0, table), Vec3::z()),
    )?;
    let ee = Pose::top_down(Vec3::new(0.6, 0.1, table + 0.2), 30f64.to_radians());
    let geom = GripperGeometry::default();

    for (name, p) in [
        ("left tip", geom.left_tip),
        ("right tip", geom.right_tip),
        ("top", geom.top),
        ("arm", geom.arm),
    ] {
        let w = ee.transform_point(&p);
        let px = cam.project_point(&w)?;
        println!("{name:<10} world ({:.3}, {:.3}, {:.3}) -> pixel ({:.2}, {:.2})", w.x, w.y, w.z, px.u, px.v);
    }

    let click = Pixel::new(97.0, 71.0);
    let lifted = pixel_to_pose(&cam, click, 45f64.to_radians(), 0.05, table)?;
    let p = lifted.position;
    println!("click ({}, {}) -> pose at ({:.4}, {:.4}, {:.4}), yaw {:.1} deg", click.u, click.v, p.x, p.y, p.z, lifted.heading().to_degrees());
    let on_table = Vec3::new(p.x, p.y, table);
    let back = cam.project_point(&on_table)?;
    println!("reprojected footprint ({:.6}, {:.6})", back.u, back.v);
    Ok(())
}
