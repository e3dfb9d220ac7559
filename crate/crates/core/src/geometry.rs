//! Rigid poses, pinhole projection and the four-point gripper outline.
//!
//! Camera frame convention: +z forward, +x right, +y down. A
//! [`CameraModel`] stores its extrinsic as camera-in-world and inverts it
//! at projection time.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Points closer to the image plane than this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Tolerance on the quaternion norm accepted at construction.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("quaternion norm {norm} is not within {UNIT_NORM_TOL} of 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid gripper geometry: {0}")]
    InvalidGripper(String),
}

/// Position plus unit-quaternion orientation, world frame unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    /// (w, x, y, z)
    orientation: [f64; 4],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        Pose::new(r.position, r.orientation)
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            position: p.position.into(),
            orientation: p.wxyz(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    /// Validating constructor. The quaternion is stored as given (not
    /// renormalized) so that values survive serialization bit-for-bit.
    pub fn new(position: [f64; 3], wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        if position.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("position"));
        }
        if wxyz.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("orientation"));
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Pose {
            position: Vec3::from(position),
            orientation: Unit::new_unchecked(q),
        })
    }

    pub fn from_parts(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Pose::from_parts(Vec3::zeros(), UnitQuaternion::identity())
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Pose::from_parts(Vec3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Rotation about world +z by `yaw` radians, at the origin.
    pub fn yaw(yaw: f64) -> Self {
        Pose::from_parts(Vec3::zeros(), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw))
    }

    /// Roll-pitch-yaw (radians, applied x then y then z). Only meant for
    /// config and file boundaries.
    pub fn from_rpy(position: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Pose::from_parts(position, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Gripper pointing straight down (EE +z along world -z), rotated by
    /// `yaw` about the vertical.
    pub fn top_down(position: Vec3, yaw: f64) -> Self {
        let down = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), PI);
        let about_z = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw);
        Pose::from_parts(position, about_z * down)
    }

    /// `[w, x, y, z]`
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rpy(&self) -> (f64, f64, f64) {
        self.orientation.euler_angles()
    }

    /// Apply this pose to a point expressed in its local frame.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p - self.position)
    }

    /// `self ∘ other`: `other` interpreted in this pose's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.orientation.quaternion() * other.orientation.quaternion();
        Pose {
            position: self.transform_point(&other.position),
            orientation: UnitQuaternion::new_normalize(q),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    /// Rotation angle (radians, in `[0, π]`) between two orientations.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Heading of the EE x axis projected on the horizontal plane.
    pub fn heading(&self) -> f64 {
        let x = self.orientation * Vec3::x();
        x.y.atan2(x.x)
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

/// Real-valued pixel coordinate; may lie outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }
}

/// Pinhole intrinsics (zero skew) plus camera-in-world extrinsic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsic: Pose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsic: Pose,
    ) -> Result<Self, GeometryError> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite("camera intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Camera placed at `eye` looking at `target`. `up` is the world
    /// direction that should appear towards the top of the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let z = (target - eye).normalize();
        // image +y is down, so it points against `up`
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rot = nalgebra::Rotation3::from_basis_unchecked(&[x, y, z]);
        Pose::from_parts(eye, UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.inverse_transform_point(p)
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project_camera_point(&self, pc: &Vec3) -> Result<Pixel, GeometryError> {
        if pc.z <= MIN_DEPTH {
            return Err(GeometryError::BehindCamera { depth: pc.z });
        }
        Ok(Pixel {
            u: self.fx * pc.x / pc.z + self.cx,
            v: self.fy * pc.y / pc.z + self.cy,
        })
    }

    pub fn project_point(&self, p: &Vec3) -> Result<Pixel, GeometryError> {
        self.project_camera_point(&self.world_to_camera(p))
    }

    /// Camera-frame viewing direction through a pixel (z component 1).
    pub fn pixel_ray(&self, px: Pixel) -> Vec3 {
        Vec3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }
}

pub fn project_point(cam: &CameraModel, p: &Vec3) -> Result<Pixel, GeometryError> {
    cam.project_point(p)
}

/// Four gripper reference points in the EE frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperGeometry {
    pub left_tip: Vec3,
    pub right_tip: Vec3,
    pub top: Vec3,
    pub arm: Vec3,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        GripperGeometry {
            left_tip: Vec3::new(-0.04, 0.0, 0.10),
            right_tip: Vec3::new(0.04, 0.0, 0.10),
            top: Vec3::new(0.0, 0.0, 0.02),
            arm: Vec3::new(0.0, 0.0, -0.08),
        }
    }
}

impl GripperGeometry {
    pub fn new(left_tip: Vec3, right_tip: Vec3, top: Vec3, arm: Vec3) -> Result<Self, GeometryError> {
        let g = GripperGeometry {
            left_tip,
            right_tip,
            top,
            arm,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let pts = self.points();
        if pts.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite("gripper geometry"));
        }
        if self.left_tip.x >= self.right_tip.x {
            return Err(GeometryError::InvalidGripper(
                "left tip must have smaller x than right tip".into(),
            ));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if pts[i] == pts[j] {
                    return Err(GeometryError::InvalidGripper(format!(
                        "points {} and {} coincide",
                        OUTLINE_LABELS[i], OUTLINE_LABELS[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Left tip, right tip, top, arm.
    pub fn points(&self) -> [Vec3; 4] {
        [self.left_tip, self.right_tip, self.top, self.arm]
    }

    /// Midpoint between the fingertips, as a pose offset in the EE frame.
    pub fn tool_center(&self) -> Pose {
        let mid = (self.left_tip + self.right_tip) * 0.5;
        Pose::translation(mid.x, mid.y, mid.z)
    }
}

/// Indices into [`GripperOutline::points`].
pub const LEFT_TIP: usize = 0;
pub const RIGHT_TIP: usize = 1;
pub const TOP: usize = 2;
pub const ARM: usize = 3;

pub const OUTLINE_LABELS: [&str; 4] = ["left_tip", "right_tip", "top", "arm"];

/// Outline connectivity: left→top, top→right, top→arm.
pub const OUTLINE_SEGMENTS: [(usize, usize); 3] = [(LEFT_TIP, TOP), (TOP, RIGHT_TIP), (TOP, ARM)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperOutline {
    pub points: [Pixel; 4],
}

impl GripperOutline {
    pub fn segments(&self) -> [(Pixel, Pixel); 3] {
        OUTLINE_SEGMENTS.map(|(a, b)| (self.points[a], self.points[b]))
    }
}

/// The four gripper reference points in world coordinates, in
/// left/right/top/arm order.
pub fn gripper_keypoints(ee: &Pose, geom: &GripperGeometry) -> [Vec3; 4] {
    geom.points().map(|p| ee.transform_point(&p))
}

pub fn project_outline(
    cam: &CameraModel,
    ee: &Pose,
    geom: &GripperGeometry,
) -> Result<GripperOutline, GeometryError> {
    let world = gripper_keypoints(ee, geom);
    let mut points = [Pixel::new(0.0, 0.0); 4];
    for (slot, p) in points.iter_mut().zip(world.iter()) {
        *slot = cam.project_point(p)?;
    }
    Ok(GripperOutline { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn test_cam() -> CameraModel {
        CameraModel::new(100.0, 100.0, 64.0, 64.0, 128, 128, Pose::identity()).unwrap()
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        assert!(a.distance_to(b) < tol, "{a:?} vs {b:?}");
        assert!(a.angle_to(b) < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn identity_is_neutral() {
        let p = Pose::from_rpy(Vec3::new(0.3, -0.2, 1.0), 0.1, 0.2, 0.3);
        assert_pose_close(&Pose::identity().compose(&p), &p, 1e-12);
        assert_pose_close(&p.compose(&Pose::identity()), &p, 1e-12);
        assert_pose_close(&p.compose(&p.inverse()), &Pose::identity(), 1e-9);
    }

    #[test]
    fn yaw_then_translate() {
        let a = Pose::from_parts(Vec3::new(1.0, 0.0, 0.0), Pose::yaw(FRAC_PI_2).orientation);
        let c = a.compose(&Pose::translation(1.0, 0.0, 0.0));
        // hand rotation matrix for 90° about z: [[0,-1,0],[1,0,0],[0,0,1]]
        let r = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let local = [1.0, 0.0, 0.0];
        let expect: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| r[i][j] * local[j]).sum::<f64>() + a.position[i])
            .collect();
        assert!((c.position - Vec3::new(expect[0], expect[1], expect[2])).norm() < 1e-12);
        assert!((c.position - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn invert_translation() {
        let p = Pose::translation(1.0, 2.0, 3.0).inverse();
        assert_eq!(p.position, Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(Pose::identity().inverse(), Pose::identity());
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(matches!(
            Pose::new([0.0; 3], [1.0, 0.1, 0.0, 0.0]),
            Err(GeometryError::NonUnitQuaternion { .. })
        ));
        assert!(Pose::new([f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let cam = test_cam();
        assert_eq!(cam.project_point(&Vec3::new(0.0, 0.0, 1.0)).unwrap(), Pixel::new(64.0, 64.0));
        let px = cam.project_point(&Vec3::new(0.1, 0.2, 1.0)).unwrap();
        assert!((px.u - 74.0).abs() < 1e-12 && (px.v - 84.0).abs() < 1e-12);
        assert!(matches!(
            cam.project_point(&Vec3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(cam.project_point(&Vec3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 4, 4, Pose::identity()).is_err());
        assert!(CameraModel::new(1.0, 1.0, 4.0, 1.0, 4, 4, Pose::identity()).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 3.5, 4, 4, Pose::identity()).is_ok());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(0.0, 0.0, 1.5);
        let target = Vec3::new(0.5, 0.0, 0.7);
        let cam = CameraModel::new(100.0, 100.0, 80.0, 60.0, 160, 120, CameraModel::look_at(eye, target, Vec3::z())).unwrap();
        let px = cam.project_point(&target).unwrap();
        assert!((px.u - 80.0).abs() < 1e-9 && (px.v - 60.0).abs() < 1e-9);
        // world up appears above the target in the image
        let above = cam.project_point(&(target + Vec3::new(0.0, 0.0, 0.1))).unwrap();
        assert!(above.v < 60.0);
        // world +y (robot's left when looking down +x) is on the image left
        let left = cam.project_point(&(target + Vec3::new(0.0, 0.1, 0.0))).unwrap();
        assert!(left.u < 80.0);
    }

    #[test]
    fn keypoints_identity_translation_and_yaw() {
        let g = GripperGeometry::default();
        assert_eq!(gripper_keypoints(&Pose::identity(), &g), g.points());
        let t = Vec3::new(0.5, -0.25, 1.0);
        let moved = gripper_keypoints(&Pose::translation(t.x, t.y, t.z), &g);
        for (m, o) in moved.iter().zip(g.points()) {
            assert!((m - (o + t)).norm() < 1e-15);
        }
        let rotated = gripper_keypoints(&Pose::yaw(FRAC_PI_2), &g);
        for (r, o) in rotated.iter().zip(g.points()) {
            let expect = Vec3::new(-o.y, o.x, o.z);
            assert!((r - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn gripper_validation() {
        let d = GripperGeometry::default();
        assert!(d.validate().is_ok());
        assert!(GripperGeometry::new(d.right_tip, d.left_tip, d.top, d.arm).is_err());
        assert!(GripperGeometry::new(d.left_tip, d.right_tip, d.top, d.top).is_err());
    }

    #[test]
    fn outline_on_principal_axis_is_symmetric() {
        let cam = test_cam();
        let g = GripperGeometry::default();
        let outline = project_outline(&cam, &Pose::translation(0.0, 0.0, 1.0), &g).unwrap();
        let p = outline.points;
        assert!(((p[LEFT_TIP].u - 64.0) + (p[RIGHT_TIP].u - 64.0)).abs() < 1e-12);
        assert_eq!(p[LEFT_TIP].v, p[RIGHT_TIP].v);
        assert_eq!(outline.segments().len(), 3);

        let far = project_outline(&cam, &Pose::translation(0.0, 0.0, 2.0), &GripperGeometry {
            left_tip: Vec3::new(-0.04, 0.0, 0.0),
            right_tip: Vec3::new(0.04, 0.0, 0.0),
            top: Vec3::new(0.0, 0.02, 0.0),
            arm: Vec3::new(0.0, -0.08, 0.0),
        })
        .unwrap();
        let near = project_outline(&cam, &Pose::translation(0.0, 0.0, 1.0), &GripperGeometry {
            left_tip: Vec3::new(-0.04, 0.0, 0.0),
            right_tip: Vec3::new(0.04, 0.0, 0.0),
            top: Vec3::new(0.0, 0.02, 0.0),
            arm: Vec3::new(0.0, -0.08, 0.0),
        })
        .unwrap();
        for (f, n) in far.points.iter().zip(near.points.iter()) {
            assert!(((f.u - 64.0) * 2.0 - (n.u - 64.0)).abs() < 1e-12);
            assert!(((f.v - 64.0) * 2.0 - (n.v - 64.0)).abs() < 1e-12);
        }

        let behind = project_outline(&cam, &Pose::translation(0.0, 0.0, -1.0), &g);
        assert!(matches!(behind, Err(GeometryError::BehindCamera { .. })));
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let p = Pose::from_rpy(Vec3::new(0.1, 0.2, 0.3), 0.4, -0.5, 2.9);
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        assert!(serde_json::from_str::<Pose>(r#"{"position":[0,0,0],"orientation":[2,0,0,0]}"#).is_err());
    }
}
