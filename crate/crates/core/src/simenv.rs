//! Kinematic tabletop world: scene spawning with controlled variations,
//! Cartesian stepping with a tolerance-based attach model, success checks,
//! scripted expert demonstrations and flat-shaded snapshots.

use crate::extraction::{Action, Frame, ObjectAnnotation, Trajectory, DEFAULT_ALPHA};
use crate::geometry::{CameraModel, GripperGeometry, Pose, Vec3};
use crate::render::{Image, Rgb};
use nalgebra::{Point2, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("could not place objects without overlap after {0} attempts")]
    PlacementFailure(usize),
    #[error("task infeasible: {0}")]
    InfeasibleTask(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Pick,
    Place,
    Close,
    Turn,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Pick => "pick",
            Verb::Place => "place",
            Verb::Close => "close",
            Verb::Turn => "turn",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A templated task: `pick the X`, `place the X into the Y`, `close the X`, `turn the X`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskSpec {
    pub verb: Verb,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receptacle: Option<String>,
}

fn spoken(category: &str) -> String {
    category.replace('_', " ")
}

fn preposition(receptacle: &str) -> &'static str {
    if receptacle == "plate" {
        "onto"
    } else {
        "into"
    }
}

impl TaskSpec {
    pub fn pick(target: &str) -> Self {
        TaskSpec {
            verb: Verb::Pick,
            target: target.into(),
            receptacle: None,
        }
    }

    pub fn place(target: &str, receptacle: &str) -> Self {
        TaskSpec {
            verb: Verb::Place,
            target: target.into(),
            receptacle: Some(receptacle.into()),
        }
    }

    pub fn close(target: &str) -> Self {
        TaskSpec {
            verb: Verb::Close,
            target: target.into(),
            receptacle: None,
        }
    }

    pub fn turn(target: &str) -> Self {
        TaskSpec {
            verb: Verb::Turn,
            target: target.into(),
            receptacle: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        category(&self.target).ok_or_else(|| SimError::UnknownCategory(self.target.clone()))?;
        match (&self.verb, &self.receptacle) {
            (Verb::Place, None) => return Err(SimError::InvalidTask("place requires a receptacle".into())),
            (Verb::Place, Some(r)) => {
                category(r).ok_or_else(|| SimError::UnknownCategory(r.clone()))?;
                if *r == self.target {
                    return Err(SimError::InvalidTask("receptacle must differ from target".into()));
                }
            }
            (_, Some(_)) => return Err(SimError::InvalidTask(format!("{} takes no receptacle", self.verb))),
            _ => {}
        }
        let spec = category(&self.target).expect("checked");
        let articulated = spec.articulation.is_some();
        if matches!(self.verb, Verb::Close | Verb::Turn) != articulated {
            return Err(SimError::InvalidTask(format!(
                "cannot {} a {}",
                self.verb, self.target
            )));
        }
        Ok(())
    }

    pub fn language(&self) -> String {
        match &self.receptacle {
            Some(r) => format!("place the {} {} the {}", spoken(&self.target), preposition(r), spoken(r)),
            None => format!("{} the {}", self.verb, spoken(&self.target)),
        }
    }

    /// Short row label, e.g. `Pick kettle`.
    pub fn label(&self) -> String {
        let verb = match self.verb {
            Verb::Pick => "Pick",
            Verb::Place => "Place",
            Verb::Close => "Close",
            Verb::Turn => "Turn",
        };
        match &self.receptacle {
            Some(r) => format!("{verb} {} {} {}", spoken(&self.target), preposition(r), spoken(r)),
            None => format!("{verb} {}", spoken(&self.target)),
        }
    }

    /// Parse the task grammar. Accepts an optional `the` before nouns and
    /// `onto` as a synonym of `into`.
    pub fn parse(language: &str) -> Result<Self, SimError> {
        let lower = language.trim().to_ascii_lowercase();
        let words: Vec<&str> = lower.split_whitespace().filter(|w| *w != "the").collect();
        let bad = || SimError::InvalidTask(format!("cannot parse {language:?}"));
        let (verb, rest) = words.split_first().ok_or_else(bad)?;
        let noun = |ws: &[&str]| -> Result<String, SimError> {
            if ws.is_empty() {
                return Err(bad());
            }
            let name = ws.join("_");
            category(&name).map(|_| name.clone()).ok_or(SimError::UnknownCategory(name))
        };
        let task = match *verb {
            "pick" => TaskSpec::pick(&noun(rest)?),
            "close" => TaskSpec::close(&noun(rest)?),
            "turn" => TaskSpec::turn(&noun(rest)?),
            "place" => {
                let split = rest
                    .iter()
                    .position(|w| *w == "into" || *w == "onto")
                    .ok_or_else(bad)?;
                TaskSpec::place(&noun(&rest[..split])?, &noun(&rest[split + 1..])?)
            }
            _ => return Err(bad()),
        };
        task.validate()?;
        Ok(task)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.language())
    }
}

impl FromStr for TaskSpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskSpec::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variation {
    InDist,
    NovelObject,
    CameraShift,
    BackgroundShift,
}

impl Variation {
    pub const ALL: [Variation; 4] = [
        Variation::InDist,
        Variation::NovelObject,
        Variation::CameraShift,
        Variation::BackgroundShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variation::InDist => "in_dist",
            Variation::NovelObject => "novel_object",
            Variation::CameraShift => "camera_shift",
            Variation::BackgroundShift => "background_shift",
        }
    }
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variation::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variation {s:?}"))
    }
}

/// Linear 1-DOF joint; the graspable part slides along `axis` (object
/// frame) by `current` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    pub axis: Vec3,
    pub range: [f64; 2],
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: u32,
    pub category: String,
    /// Bounding-box center, world frame. For articulated objects this is
    /// the fixed base.
    pub pose: Pose,
    /// Graspable part in the object frame. Its +z axis points into the
    /// part, so the gripper grasps it top-down.
    pub part_offset: Pose,
    pub half_extents: Vec3,
    pub texture: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
}

impl SimObject {
    pub fn part_world(&self) -> Pose {
        let slide = match &self.articulation {
            Some(a) => {
                let d = a.axis * a.current;
                Pose::translation(d.x, d.y, d.z)
            }
            None => Pose::identity(),
        };
        self.pose.compose(&slide).compose(&self.part_offset)
    }

    pub fn axis_world(&self) -> Option<Vec3> {
        self.articulation.as_ref().map(|a| self.pose.orientation * a.axis)
    }

    /// Pose on the table plane below the object center, yaw only.
    pub fn table_pose(&self, table_height: f64) -> Pose {
        let p = self.pose.position;
        Pose::from_parts(
            Vec3::new(p.x, p.y, table_height),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.yaw()),
        )
    }

    pub fn yaw(&self) -> f64 {
        let x = self.pose.orientation * Vec3::x();
        x.y.atan2(x.x)
    }

    /// Local xy footprint containment test for a world point.
    pub fn contains_xy(&self, p: &Vec3) -> bool {
        let local = self.pose.inverse_transform_point(p);
        local.x.abs() <= self.half_extents.x && local.y.abs() <= self.half_extents.y
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = |bit: usize| if i & bit == 0 { -1.0 } else { 1.0 };
            *c = self
                .pose
                .transform_point(&Vec3::new(s(1) * h.x, s(2) * h.y, s(4) * h.z));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Graspable,
    Receptacle,
    Articulated,
}

/// Library entry for an object category.
#[derive(Debug, Clone, Copy)]
pub struct CategorySpec {
    pub name: &'static str,
    pub half_extents: [f64; 3],
    /// Part position in the object frame.
    pub part: [f64; 3],
    /// Part yaw relative to the object (radians).
    pub part_yaw: f64,
    pub role: Role,
    /// `(axis, range, start)`
    pub articulation: Option<([f64; 3], [f64; 2], f64)>,
    pub color: Rgb,
}

impl CategorySpec {
    pub fn nominal_part_offset(&self) -> Pose {
        let [x, y, z] = self.part;
        Pose::top_down(Vec3::new(x, y, z), self.part_yaw)
    }

    /// Radius of a circle covering the footprint, including articulation travel.
    pub fn footprint_radius(&self) -> f64 {
        let [hx, hy, _] = self.half_extents;
        let travel = self.articulation.map_or(0.0, |(_, r, _)| r[1].abs().max(r[0].abs()));
        (hx * hx + hy * hy).sqrt() + travel
    }
}

const fn cat(
    name: &'static str,
    half_extents: [f64; 3],
    part: [f64; 3],
    part_yaw: f64,
    role: Role,
    color: Rgb,
) -> CategorySpec {
    CategorySpec {
        name,
        half_extents,
        part,
        part_yaw,
        role,
        articulation: None,
        color,
    }
}

pub const CATEGORIES: &[CategorySpec] = &[
    cat("box", [0.09, 0.07, 0.05], [0.0, 0.0, 0.05], 0.0, Role::Graspable, [196, 160, 90]),
    cat("dustpan", [0.15, 0.08, 0.03], [0.13, 0.0, 0.03], 0.0, Role::Graspable, [60, 140, 200]),
    cat("kettle", [0.08, 0.08, 0.09], [-0.09, 0.0, 0.06], PI / 2.0, Role::Graspable, [180, 180, 190]),
    cat("pot", [0.10, 0.10, 0.07], [0.11, 0.0, 0.06], PI / 2.0, Role::Graspable, [90, 90, 100]),
    cat("headphones", [0.08, 0.09, 0.03], [0.0, 0.07, 0.03], PI / 2.0, Role::Graspable, [40, 40, 40]),
    cat("apple", [0.04, 0.04, 0.04], [0.0, 0.0, 0.04], 0.0, Role::Graspable, [200, 30, 30]),
    cat("peach", [0.04, 0.04, 0.035], [0.0, 0.0, 0.035], 0.0, Role::Graspable, [250, 170, 110]),
    cat("bell_pepper", [0.05, 0.04, 0.04], [0.0, 0.0, 0.04], 0.0, Role::Graspable, [40, 170, 40]),
    cat("eggplant", [0.07, 0.035, 0.035], [0.04, 0.0, 0.035], 0.0, Role::Graspable, [90, 30, 110]),
    cat("plate", [0.10, 0.10, 0.015], [0.0, 0.09, 0.015], 0.0, Role::Receptacle, [235, 235, 230]),
    cat("basket", [0.12, 0.10, 0.07], [0.0, 0.0, 0.07], 0.0, Role::Receptacle, [150, 110, 60]),
    CategorySpec {
        articulation: Some(([-1.0, 0.0, 0.0], [0.0, 0.06], 0.06)),
        ..cat("cubby", [0.10, 0.12, 0.10], [-0.12, 0.0, 0.0], PI / 2.0, Role::Articulated, [120, 80, 50])
    },
    CategorySpec {
        articulation: Some(([0.0, 1.0, 0.0], [0.0, 0.06], 0.06)),
        ..cat("faucet", [0.04, 0.04, 0.08], [0.0, 0.0, 0.09], 0.0, Role::Articulated, [200, 200, 210])
    },
];

pub fn category(name: &str) -> Option<&'static CategorySpec> {
    CATEGORIES.iter().find(|c| c.name == name)
}

/// Tolerances and limits of the kinematic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    /// Max EE translation per step (m).
    pub max_translation: f64,
    /// Max aperture change per step.
    pub gripper_rate: f64,
    pub attach_distance: f64,
    pub attach_angle_deg: f64,
    pub lift_height: f64,
    pub articulation_tolerance: f64,
    pub gripper: GripperGeometry,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            alpha: DEFAULT_ALPHA,
            max_translation: 0.05,
            gripper_rate: 0.2,
            attach_distance: 0.02,
            attach_angle_deg: 20.0,
            lift_height: 0.15,
            articulation_tolerance: 0.005,
            gripper: GripperGeometry::default(),
        }
    }
}

impl SimConfig {
    /// Fingertip center in the EE frame.
    pub fn tool_center(&self) -> Pose {
        self.gripper.tool_center()
    }

    /// EE pose that puts the fingertip center on `part`.
    pub fn grasp_pose(&self, part: &Pose) -> Pose {
        part.compose(&self.tool_center().inverse())
    }

    pub fn attach_ok(&self, ee: &Pose, part: &Pose) -> bool {
        let tcp = ee.compose(&self.tool_center());
        tcp.distance_to(part) <= self.attach_distance && tcp.angle_to(part).to_degrees() <= self.attach_angle_deg
    }
}

pub const DEFAULT_TABLE_HEIGHT: f64 = 0.7;
/// Table surface extent in world x and y.
pub const TABLE_X: [f64; 2] = [0.1, 1.0];
pub const TABLE_Y: [f64; 2] = [-0.6, 0.6];
/// Where objects may be spawned.
pub const SPAWN_X: [f64; 2] = [0.30, 0.85];
pub const SPAWN_Y: [f64; 2] = [-0.40, 0.40];
const PLACEMENT_MARGIN: f64 = 0.005;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Seen instances perturb the part by at most this much per axis (m).
pub const SEEN_PART_BAND: f64 = 0.004;
/// Held-out instances perturb the part by a radial offset in this band (m).
pub const NOVEL_PART_BAND: [f64; 2] = [0.015, 0.04];

pub const DEFAULT_BACKGROUND: &str = "wood";
pub const SHIFTED_BACKGROUNDS: &[&str] = &["marble", "cloth", "steel"];

pub fn default_camera(table_height: f64) -> CameraModel {
    let eye = Vec3::new(0.0, 0.0, table_height + 0.85);
    let target = Vec3::new(0.55, 0.0, table_height);
    CameraModel::new(
        100.0,
        100.0,
        80.0,
        60.0,
        160,
        120,
        CameraModel::look_at(eye, target, Vec3::z()),
    )
    .expect("default camera is valid")
}

pub fn home_pose(table_height: f64) -> Pose {
    Pose::top_down(Vec3::new(0.3, 0.0, table_height + 0.40), 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SimObject>,
    pub ee_pose: Pose,
    pub gripper: f64,
    pub attached: Option<u32>,
    /// Object pose in the EE frame while attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grip_offset: Option<Pose>,
    pub table_height: f64,
    pub background: String,
    pub camera: CameraModel,
    pub step_count: u64,
    pub config: SimConfig,
}

impl Scene {
    pub fn empty(config: SimConfig) -> Self {
        Scene {
            objects: Vec::new(),
            ee_pose: home_pose(DEFAULT_TABLE_HEIGHT),
            gripper: 1.0,
            attached: None,
            grip_offset: None,
            table_height: DEFAULT_TABLE_HEIGHT,
            background: DEFAULT_BACKGROUND.into(),
            camera: default_camera(DEFAULT_TABLE_HEIGHT),
            step_count: 0,
            config,
        }
    }

    pub fn object(&self, id: u32) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_mut(&mut self, id: u32) -> Option<&mut SimObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn find(&self, category: &str) -> Option<&SimObject> {
        self.objects.iter().find(|o| o.category == category)
    }

    /// Objects as an annotator would mark them on the first frame.
    pub fn annotations(&self) -> Vec<ObjectAnnotation> {
        self.objects
            .iter()
            .map(|o| {
                let part = o.part_world().position;
                let px = self.camera.project_point(&part).map(|p| [p.u, p.v]).unwrap_or([-1.0, -1.0]);
                ObjectAnnotation {
                    category: o.category.clone(),
                    part_pixel: px,
                    table_pose: o.table_pose(self.table_height),
                    height: o.pose.position.z + o.half_extents.z - self.table_height,
                }
            })
            .collect()
    }

    /// Apply one action in place.
    pub fn apply(&mut self, action: &Action) {
        let cfg = self.config;
        let prev_ee = self.ee_pose;
        let prev_gripper = self.gripper;

        let mut delta = Vec3::from(action.delta_position);
        if !delta.iter().all(|c| c.is_finite()) {
            delta = Vec3::zeros();
        }
        let n = delta.norm();
        if n > cfg.max_translation {
            delta *= cfg.max_translation / n;
        }
        let [w, x, y, z] = action.delta_orientation;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let rot = if q.norm() > 0.0 && q.norm().is_finite() {
            UnitQuaternion::new_normalize(q)
        } else {
            UnitQuaternion::identity()
        };
        let is_identity = rot == UnitQuaternion::identity();
        self.ee_pose = Pose::from_parts(
            prev_ee.position + delta,
            if is_identity {
                prev_ee.orientation
            } else {
                UnitQuaternion::new_normalize(rot.quaternion() * prev_ee.orientation.quaternion())
            },
        );

        let cmd = if action.gripper_command.is_finite() {
            action.gripper_command.clamp(0.0, 1.0)
        } else {
            prev_gripper
        };
        let diff = cmd - prev_gripper;
        self.gripper = if diff.abs() <= cfg.gripper_rate {
            cmd
        } else {
            prev_gripper + cfg.gripper_rate * diff.signum()
        };

        let closed = |g: f64| g < cfg.alpha;
        if let Some(id) = self.attached {
            let ee = self.ee_pose;
            let offset = self.grip_offset.unwrap_or_default();
            let moved = self.ee_pose.position - prev_ee.position;
            if let Some(obj) = self.object_mut(id) {
                match obj.articulation.as_mut() {
                    Some(art) => {
                        let axis = obj.pose.orientation * art.axis;
                        art.current = (art.current + moved.dot(&axis)).clamp(art.range[0], art.range[1]);
                    }
                    None => obj.pose = ee.compose(&offset),
                }
            }
            if closed(prev_gripper) && !closed(self.gripper) {
                self.release(id);
            }
        } else if !closed(prev_gripper) && closed(self.gripper) {
            let ee = self.ee_pose;
            let tcp = ee.compose(&cfg.tool_center());
            let best = self
                .objects
                .iter()
                .filter(|o| cfg.attach_ok(&ee, &o.part_world()))
                .min_by(|a, b| {
                    let da = tcp.distance_to(&a.part_world());
                    let db = tcp.distance_to(&b.part_world());
                    da.total_cmp(&db)
                })
                .map(|o| (o.id, ee.inverse().compose(&o.pose)));
            if let Some((id, offset)) = best {
                self.attached = Some(id);
                self.grip_offset = Some(offset);
            }
        }
        self.step_count += 1;
    }

    /// Let go of `id`; free objects settle upright onto the table.
    fn release(&mut self, id: u32) {
        self.attached = None;
        self.grip_offset = None;
        let table = self.table_height;
        if let Some(obj) = self.object_mut(id) {
            if obj.articulation.is_none() {
                let yaw = obj.yaw();
                let p = obj.pose.position;
                obj.pose = Pose::from_parts(
                    Vec3::new(p.x, p.y, table + obj.half_extents.z),
                    UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
                );
            }
        }
    }
}

pub fn step(scene: &Scene, action: &Action) -> Scene {
    let mut next = scene.clone();
    next.apply(action);
    next
}

fn variation_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Spawn the task objects plus two or three distractors without footprint
/// overlap. Twins with the same seed share every object pose; the
/// variation only touches part offsets, the camera or the background.
pub fn spawn_scene(task: &TaskSpec, seed: u64, variation: Variation) -> Result<Scene, SimError> {
    spawn_scene_with(task, seed, variation, SimConfig::default())
}

pub fn spawn_scene_with(task: &TaskSpec, seed: u64, variation: Variation, config: SimConfig) -> Result<Scene, SimError> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::empty(config);

    let mut specs: Vec<&'static CategorySpec> = vec![category(&task.target).expect("validated")];
    if let Some(r) = &task.receptacle {
        specs.push(category(r).expect("validated"));
    }
    let n_distractors = rng.random_range(2..=3);
    let mut pool: Vec<&'static CategorySpec> = CATEGORIES
        .iter()
        .filter(|c| !specs.iter().any(|s| s.name == c.name))
        .collect();
    for _ in 0..n_distractors {
        let i = rng.random_range(0..pool.len());
        specs.push(pool.swap_remove(i));
    }

    let radii: Vec<f64> = specs.iter().map(|s| s.footprint_radius() + PLACEMENT_MARGIN).collect();
    let mut placed: Vec<(Vec3, f64)> = Vec::new();
    let mut attempts = 0;
    let mut tries_this_layout = 0;
    while placed.len() < specs.len() {
        attempts += 1;
        tries_this_layout += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(SimError::PlacementFailure(MAX_PLACEMENT_ATTEMPTS));
        }
        if tries_this_layout > 100 {
            // dead end, start the layout over
            placed.clear();
            tries_this_layout = 0;
        }
        let r = radii[placed.len()];
        let p = Vec3::new(
            rng.random_range(SPAWN_X[0]..SPAWN_X[1]),
            rng.random_range(SPAWN_Y[0]..SPAWN_Y[1]),
            0.0,
        );
        if placed.iter().all(|(q, rq)| (p - q).norm() > r + rq) {
            placed.push((p, r));
        }
    }
    for (id, (spec, (xy, _))) in specs.iter().zip(&placed).enumerate() {
        let yaw = if spec.articulation.is_some() {
            rng.random_range(-0.3..0.3)
        } else {
            rng.random_range(-PI..PI)
        };
        let seen = [
            rng.random_range(-1.0..=1.0) * SEEN_PART_BAND,
            rng.random_range(-1.0..=1.0) * SEEN_PART_BAND,
        ];
        let [hx, hy, hz] = spec.half_extents;
        let [px, py, pz] = spec.part;
        scene.objects.push(SimObject {
            id: id as u32,
            category: spec.name.into(),
            pose: Pose::from_parts(
                Vec3::new(xy.x, xy.y, scene.table_height + hz),
                UnitQuaternion::from_axis_angle(&Vec3::z_axis(), yaw),
            ),
            part_offset: Pose::top_down(Vec3::new(px + seen[0], py + seen[1], pz), spec.part_yaw),
            half_extents: Vec3::new(hx, hy, hz),
            texture: format!("{}_seen", spec.name),
            articulation: spec.articulation.map(|(axis, range, start)| Articulation {
                axis: Vec3::from(axis),
                range,
                current: start,
            }),
        });
    }

    let mut vrng = variation_rng(seed);
    match variation {
        Variation::InDist => {}
        Variation::NovelObject => {
            for (obj, spec) in scene.objects.iter_mut().zip(&specs) {
                let radius = vrng.random_range(NOVEL_PART_BAND[0]..=NOVEL_PART_BAND[1]);
                let angle = vrng.random_range(-PI..PI);
                let [px, py, pz] = spec.part;
                obj.part_offset = Pose::top_down(
                    Vec3::new(px + radius * angle.cos(), py + radius * angle.sin(), pz),
                    spec.part_yaw,
                );
                obj.texture = format!("{}_novel", spec.name);
            }
        }
        Variation::CameraShift => {
            let th = scene.table_height;
            let eye = Vec3::new(
                vrng.random_range(-0.08..0.08),
                vrng.random_range(-0.08..0.08),
                th + 0.85 + vrng.random_range(-0.08..0.08),
            );
            let target = Vec3::new(0.55 + vrng.random_range(-0.05..0.05), vrng.random_range(-0.05..0.05), th);
            scene.camera.extrinsic = CameraModel::look_at(eye, target, Vec3::z());
        }
        Variation::BackgroundShift => {
            scene.background = SHIFTED_BACKGROUNDS[vrng.random_range(0..SHIFTED_BACKGROUNDS.len())].into();
        }
    }
    Ok(scene)
}

pub fn check_success(scene: &Scene, task: &TaskSpec) -> bool {
    let Some(target) = scene.find(&task.target) else {
        return false;
    };
    let cfg = &scene.config;
    match task.verb {
        Verb::Pick => {
            scene.attached == Some(target.id) && target.pose.position.z >= scene.table_height + cfg.lift_height
        }
        Verb::Place => {
            let Some(rec) = task.receptacle.as_deref().and_then(|r| scene.find(r)) else {
                return false;
            };
            scene.attached != Some(target.id) && rec.contains_xy(&target.pose.position)
        }
        Verb::Close | Verb::Turn => target
            .articulation
            .as_ref()
            .is_some_and(|a| (a.current - a.range[0]).abs() <= cfg.articulation_tolerance),
    }
}

/// Proportional Cartesian servo limits shared by the expert and the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoGains {
    /// Fraction of the remaining error commanded per step.
    pub gain: f64,
    pub max_rotation: f64,
    pub position_tolerance: f64,
    pub rotation_tolerance: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        ServoGains {
            gain: 0.6,
            max_rotation: 0.3,
            position_tolerance: 0.002,
            rotation_tolerance: 2f64.to_radians(),
        }
    }
}

impl ServoGains {
    pub fn reached(&self, current: &Pose, target: &Pose) -> bool {
        current.distance_to(target) <= self.position_tolerance && current.angle_to(target) <= self.rotation_tolerance
    }

    /// One step toward `target`. Within tolerance the remaining error is
    /// closed exactly.
    pub fn action_toward(&self, current: &Pose, target: &Pose, max_translation: f64, gripper: f64) -> Action {
        let err = target.position - current.position;
        let mut d = if err.norm() <= self.position_tolerance { err } else { err * self.gain };
        if d.norm() > max_translation {
            d *= max_translation / d.norm();
        }
        let rel = target.orientation * current.orientation.inverse();
        let angle = rel.angle();
        let rot = if angle <= self.rotation_tolerance {
            rel
        } else {
            let frac = (self.gain * angle).min(self.max_rotation) / angle;
            UnitQuaternion::identity().slerp(&rel, frac)
        };
        let q = rot.quaternion();
        Action {
            delta_position: d.into(),
            delta_orientation: [q.w, q.i, q.j, q.k],
            gripper_command: gripper,
        }
    }
}

/// Step budget for scripted demonstrations.
pub const EXPERT_MAX_STEPS: usize = 600;
pub const EXPERT_APPROACH: f64 = 0.10;
pub const EXPERT_LIFT: f64 = 0.25;
pub const EXPERT_RETREAT: f64 = 0.10;
/// Distance pushed past an articulation's closed stop; the part clamps at
/// the stop while the hand keeps going.
pub const EXPERT_OVERTRAVEL: f64 = 0.015;

#[derive(Debug, Clone, Copy)]
enum Segment {
    Move(Pose),
    Gripper(f64),
}

fn raised(p: &Pose, dz: f64) -> Pose {
    Pose::from_parts(p.position + Vec3::new(0.0, 0.0, dz), p.orientation)
}

fn expert_script(scene: &Scene, task: &TaskSpec) -> Result<Vec<Segment>, SimError> {
    let cfg = scene.config;
    let target = scene
        .find(&task.target)
        .ok_or_else(|| SimError::InfeasibleTask(format!("no {} in scene", task.target)))?;
    let grasp = cfg.grasp_pose(&target.part_world());
    let mut s = vec![
        Segment::Move(raised(&grasp, EXPERT_APPROACH)),
        Segment::Move(grasp),
        Segment::Gripper(0.0),
    ];
    match task.verb {
        Verb::Pick => s.push(Segment::Move(raised(&grasp, EXPERT_LIFT))),
        Verb::Place => {
            let rec = task
                .receptacle
                .as_deref()
                .and_then(|r| scene.find(r))
                .ok_or_else(|| SimError::InfeasibleTask("receptacle missing".into()))?;
            let lifted = raised(&grasp, EXPERT_LIFT);
            // object center relative to the EE does not change while held
            let held = target.pose.position - grasp.position;
            let goal = rec.pose.position - held;
            let drop = Pose::from_parts(
                Vec3::new(goal.x, goal.y, scene.table_height + 0.30),
                grasp.orientation,
            );
            s.extend([
                Segment::Move(lifted),
                Segment::Move(drop),
                Segment::Gripper(1.0),
                Segment::Move(raised(&drop, EXPERT_RETREAT)),
            ]);
        }
        Verb::Close | Verb::Turn => {
            let art = target
                .articulation
                .ok_or_else(|| SimError::InfeasibleTask(format!("{} is not articulated", task.target)))?;
            let axis = target.axis_world().expect("articulated");
            let pushed = Pose::from_parts(grasp.position + axis * (art.range[0] - art.current - EXPERT_OVERTRAVEL), grasp.orientation);
            s.extend([
                Segment::Move(pushed),
                Segment::Gripper(1.0),
                Segment::Move(raised(&pushed, EXPERT_RETREAT)),
            ]);
        }
    }
    Ok(s)
}

/// Scripted expert: approach, descend, close, then lift / transport and
/// release / push and release. Recorded frame-by-frame.
pub fn generate_demo(scene: &Scene, task: &TaskSpec) -> Result<Trajectory, SimError> {
    task.validate()?;
    let script = expert_script(scene, task)?;
    let gains = ServoGains::default();
    let mut sim = scene.clone();
    let mut frames = Vec::new();
    let mut aperture = sim.gripper;
    let record = |sim: &Scene, action: Option<Action>, frames: &mut Vec<Frame>| {
        frames.push(Frame {
            image_ref: format!("frame_{:04}.png", frames.len()),
            ee_pose: sim.ee_pose,
            gripper: sim.gripper,
            action,
        });
    };
    for seg in script {
        loop {
            if frames.len() >= EXPERT_MAX_STEPS {
                return Err(SimError::InfeasibleTask("expert exceeded its step budget".into()));
            }
            let action = match seg {
                Segment::Move(target) => {
                    if gains.reached(&sim.ee_pose, &target) {
                        break;
                    }
                    gains.action_toward(&sim.ee_pose, &target, sim.config.max_translation, aperture)
                }
                Segment::Gripper(cmd) => {
                    aperture = cmd;
                    if sim.gripper == cmd {
                        break;
                    }
                    Action::hold(cmd)
                }
            };
            record(&sim, Some(action), &mut frames);
            sim.apply(&action);
        }
    }
    record(&sim, None, &mut frames);
    if !check_success(&sim, task) {
        return Err(SimError::InfeasibleTask(format!("expert failed to {}", task.language())));
    }
    Ok(Trajectory {
        language: task.language(),
        frames,
        objects: scene.annotations(),
    })
}

/// Replay a trajectory's actions from `scene`.
pub fn replay(scene: &Scene, traj: &Trajectory) -> Scene {
    let mut sim = scene.clone();
    for a in traj.frames.iter().filter_map(|f| f.action.as_ref()) {
        sim.apply(a);
    }
    sim
}

pub fn background_color(tag: &str) -> Rgb {
    match tag {
        "wood" => [164, 128, 92],
        "marble" => [214, 214, 206],
        "cloth" => [64, 96, 150],
        "steel" => [128, 134, 140],
        other => {
            // stable FNV-1a hash so unknown tags still get a fixed color
            let h = other.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
            });
            [(h >> 16) as u8, (h >> 24) as u8, (h >> 32) as u8]
        }
    }
}

pub const WALL_COLOR: Rgb = [40, 44, 52];

pub fn category_color(name: &str) -> Rgb {
    category(name).map_or([255, 0, 255], |c| c.color)
}

/// Table-surface mask: true where the pixel ray hits the table top.
pub fn table_mask(scene: &Scene) -> Vec<bool> {
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let origin = cam.extrinsic.position;
    let mut mask = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let ray = cam.extrinsic.orientation * cam.pixel_ray(crate::geometry::Pixel::new(x as f64 + 0.5, y as f64 + 0.5));
            if ray.z.abs() < 1e-12 {
                continue;
            }
            let t = (scene.table_height - origin.z) / ray.z;
            if t <= 0.0 {
                continue;
            }
            let p = origin + ray * t;
            mask[(y * w + x) as usize] = (TABLE_X[0]..=TABLE_X[1]).contains(&p.x) && (TABLE_Y[0]..=TABLE_Y[1]).contains(&p.y);
        }
    }
    mask
}

fn convex_hull(mut pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn fill_convex(img: &mut Image, hull: &[Point2<f64>], color: Rgb) {
    if hull.len() < 3 {
        return;
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let min_x = hull.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).max(0.0).floor() as u32;
    let max_x = hull.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).min(w - 1.0).max(-1.0);
    let min_y = hull.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).max(0.0).floor() as u32;
    let max_y = hull.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).min(h - 1.0).max(-1.0);
    if max_x < 0.0 || max_y < 0.0 {
        return;
    }
    for y in min_y..=max_y as u32 {
        for x in min_x..=max_x as u32 {
            let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            let inside = hull.iter().zip(hull.iter().cycle().skip(1)).all(|(a, b)| {
                (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x) >= 0.0
            });
            if inside {
                img.put(x, y, color);
            }
        }
    }
}

/// Flat-shaded render: wall, table (colored by background tag), then
/// object boxes far to near.
pub fn snapshot(scene: &Scene) -> Image {
    let cam = &scene.camera;
    let table = background_color(&scene.background);
    let mask = table_mask(scene);
    let mut img = Image::filled(cam.width, cam.height, WALL_COLOR);
    for y in 0..cam.height {
        for x in 0..cam.width {
            if mask[(y * cam.width + x) as usize] {
                img.put(x, y, table);
            }
        }
    }
    let mut order: Vec<(f64, &SimObject)> = scene
        .objects
        .iter()
        .map(|o| (cam.world_to_camera(&o.pose.position).z, o))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    for (_, obj) in order {
        let Ok(px): Result<Vec<_>, _> = obj.corners().iter().map(|c| cam.project_point(c)).collect() else {
            continue;
        };
        let hull = convex_hull(px.iter().map(|p| Point2::new(p.u, p.v)).collect());
        fill_convex(&mut img, &hull, category_color(&obj.category));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{build_affordance_plan, ExtractionConfig, WaypointKind};

    fn kettle_scene() -> (Scene, TaskSpec) {
        let task = TaskSpec::pick("kettle");
        (spawn_scene(&task, 7, Variation::InDist).unwrap(), task)
    }

    #[test]
    fn task_language_round_trip() {
        for t in [
            TaskSpec::pick("kettle"),
            TaskSpec::place("bell_pepper", "basket"),
            TaskSpec::close("cubby"),
            TaskSpec::turn("faucet"),
        ] {
            assert_eq!(TaskSpec::parse(&t.language()).unwrap(), t);
        }
        assert_eq!(
            TaskSpec::parse("Place peach onto plate").unwrap(),
            TaskSpec::place("peach", "plate")
        );
        assert!(TaskSpec::parse("place the apple").is_err());
        assert!(TaskSpec::parse("juggle the apple").is_err());
        assert!(matches!(TaskSpec::parse("pick the unicorn"), Err(SimError::UnknownCategory(_))));
        assert!(TaskSpec::close("apple").validate().is_err());
        assert!(TaskSpec::pick("cubby").validate().is_err());
    }

    #[test]
    fn spawn_is_deterministic_and_non_overlapping() {
        let (a, task) = kettle_scene();
        let b = spawn_scene(&task, 7, Variation::InDist).unwrap();
        assert_eq!(a, b);
        assert!((3..=4).contains(&a.objects.len()));
        for (i, o) in a.objects.iter().enumerate() {
            for p in &a.objects[i + 1..] {
                let ro = category(&o.category).unwrap().footprint_radius();
                let rp = category(&p.category).unwrap().footprint_radius();
                assert!((o.pose.position - p.pose.position).xy().norm() > ro + rp);
            }
        }
        assert_eq!(a.objects.iter().filter(|o| o.category == "kettle").count(), 1);
    }

    #[test]
    fn variation_twins_differ_only_where_intended() {
        let task = TaskSpec::place("apple", "pot");
        let base = spawn_scene(&task, 11, Variation::InDist).unwrap();
        let cam = spawn_scene(&task, 11, Variation::CameraShift).unwrap();
        assert_ne!(cam.camera.extrinsic, base.camera.extrinsic);
        assert_eq!(Scene { camera: base.camera, ..cam.clone() }, base);

        let bg = spawn_scene(&task, 11, Variation::BackgroundShift).unwrap();
        assert_ne!(bg.background, base.background);
        assert_eq!(Scene { background: base.background.clone(), ..bg }, base);

        let novel = spawn_scene(&task, 11, Variation::NovelObject).unwrap();
        for (n, b) in novel.objects.iter().zip(&base.objects) {
            assert_eq!(n.pose, b.pose);
            assert_ne!(n.part_offset, b.part_offset);
        }
    }

    #[test]
    fn novel_parts_come_from_held_out_band() {
        let task = TaskSpec::pick("box");
        for seed in 0..1000 {
            for (variation, lo, hi) in [
                (Variation::InDist, 0.0, SEEN_PART_BAND * 2f64.sqrt()),
                (Variation::NovelObject, NOVEL_PART_BAND[0], NOVEL_PART_BAND[1]),
            ] {
                let s = spawn_scene(&task, seed, variation).unwrap();
                for o in &s.objects {
                    let nominal = category(&o.category).unwrap().nominal_part_offset();
                    let d = o.part_offset.distance_to(&nominal);
                    assert!(d >= lo - 1e-12 && d <= hi + 1e-12, "{variation} {d}");
                }
            }
        }
    }

    #[test]
    fn zero_action_only_advances_step_count() {
        let (s, _) = kettle_scene();
        let next = step(&s, &Action::hold(s.gripper));
        assert_eq!(next.step_count, 1);
        assert_eq!(Scene { step_count: 0, ..next }, s);
    }

    #[test]
    fn translation_and_gripper_are_rate_limited() {
        let (s, _) = kettle_scene();
        let a = Action {
            delta_position: [1.0, 0.0, 0.0],
            delta_orientation: [1.0, 0.0, 0.0, 0.0],
            gripper_command: 0.0,
        };
        let next = step(&s, &a);
        assert!(((next.ee_pose.position - s.ee_pose.position).norm() - 0.05).abs() < 1e-12);
        assert!((next.gripper - 0.8).abs() < 1e-12);
    }

    fn close_at(scene: &Scene, ee: Pose) -> Scene {
        let mut s = scene.clone();
        s.ee_pose = ee;
        for _ in 0..5 {
            s.apply(&Action::hold(0.0));
        }
        s
    }

    #[test]
    fn attach_tolerance_predicate() {
        let (s, _) = kettle_scene();
        let kettle = s.find("kettle").unwrap().clone();
        let grasp = s.config.grasp_pose(&kettle.part_world());
        // oracle: distance and angle of the fingertip center to the handle
        let oracle = |ee: &Pose| {
            let tcp = ee.compose(&s.config.tool_center());
            tcp.distance_to(&kettle.part_world()) <= 0.02
                && tcp.angle_to(&kettle.part_world()) <= 20f64.to_radians()
        };
        let near = Pose::from_parts(grasp.position + Vec3::new(0.012, 0.0, 0.0), grasp.orientation);
        assert!(oracle(&near));
        assert_eq!(close_at(&s, near).attached, Some(kettle.id));

        let far = Pose::from_parts(grasp.position + Vec3::new(0.05, 0.0, 0.0), grasp.orientation);
        assert!(!oracle(&far));
        assert_eq!(close_at(&s, far).attached, None);

        let twisted = grasp.compose(&Pose::from_parts(Vec3::zeros(), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 30f64.to_radians())));
        assert!(!oracle(&twisted));
        assert_eq!(close_at(&s, twisted).attached, None);
    }

    #[test]
    fn attached_object_is_rigid_and_released_on_open() {
        let (s, _) = kettle_scene();
        let kettle = s.find("kettle").unwrap().id;
        let grasp = s.config.grasp_pose(&s.find("kettle").unwrap().part_world());
        let mut sim = close_at(&s, grasp);
        assert_eq!(sim.attached, Some(kettle));
        let rel = sim.ee_pose.inverse().compose(&sim.object(kettle).unwrap().pose);
        let twist = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 0.2);
        let q = twist.quaternion();
        for i in 0..20 {
            sim.apply(&Action {
                delta_position: [0.01, -0.02, 0.03 * (i % 3) as f64],
                delta_orientation: [q.w, q.i, q.j, q.k],
                gripper_command: 0.0,
            });
            let now = sim.ee_pose.inverse().compose(&sim.object(kettle).unwrap().pose);
            assert!(now.distance_to(&rel) < 1e-9 && now.angle_to(&rel) < 1e-9);
        }
        for _ in 0..5 {
            sim.apply(&Action::hold(1.0));
        }
        assert_eq!(sim.attached, None);
        let k = sim.object(kettle).unwrap();
        assert!((k.pose.position.z - (sim.table_height + k.half_extents.z)).abs() < 1e-12);
    }

    #[test]
    fn fresh_scene_is_not_a_success() {
        for task in [
            TaskSpec::pick("kettle"),
            TaskSpec::place("apple", "pot"),
            TaskSpec::close("cubby"),
            TaskSpec::turn("faucet"),
        ] {
            let s = spawn_scene(&task, 3, Variation::InDist).unwrap();
            assert!(!check_success(&s, &task));
        }
    }

    #[test]
    fn low_lift_is_not_a_pick() {
        let (s, task) = kettle_scene();
        let grasp = s.config.grasp_pose(&s.find("kettle").unwrap().part_world());
        let mut sim = close_at(&s, grasp);
        let up = Action {
            delta_position: [0.0, 0.0, 0.05],
            delta_orientation: [1.0, 0.0, 0.0, 0.0],
            gripper_command: 0.0,
        };
        sim.apply(&up);
        let k = sim.find("kettle").unwrap();
        assert!((k.pose.position.z - s.find("kettle").unwrap().pose.position.z - 0.05).abs() < 1e-9);
        assert!(!check_success(&sim, &task));
        for _ in 0..3 {
            sim.apply(&up);
        }
        assert!(check_success(&sim, &task));
    }

    #[test]
    fn expert_demos_succeed_with_expected_events() {
        let cfg = ExtractionConfig::default();
        use WaypointKind::*;
        for (task, kinds) in [
            (TaskSpec::pick("dustpan"), vec![Close, Final]),
            (TaskSpec::place("eggplant", "box"), vec![Close, Open, Final]),
            (TaskSpec::close("cubby"), vec![Close, Open, Final]),
            (TaskSpec::turn("faucet"), vec![Close, Open, Final]),
        ] {
            for seed in 0..10 {
                let s = spawn_scene(&task, seed, Variation::InDist).unwrap();
                let demo = generate_demo(&s, &task).unwrap();
                assert!(check_success(&replay(&s, &demo), &task));
                assert_eq!(build_affordance_plan(&demo, &cfg).unwrap().kinds(), kinds, "{task}");
                assert_eq!(demo.frames.last().unwrap().action, None);
            }
        }
        let s = spawn_scene(&TaskSpec::close("cubby"), 1, Variation::InDist).unwrap();
        let end = replay(&s, &generate_demo(&s, &TaskSpec::close("cubby")).unwrap());
        let art = end.find("cubby").unwrap().articulation.unwrap();
        assert!((art.current - art.range[0]).abs() <= 0.005);
    }

    #[test]
    fn demo_for_missing_target_is_infeasible() {
        let s = spawn_scene(&TaskSpec::pick("apple"), 0, Variation::InDist).unwrap();
        let missing = ["kettle", "dustpan", "pot", "box", "headphones"]
            .into_iter()
            .find(|c| s.find(c).is_none())
            .unwrap();
        assert!(matches!(
            generate_demo(&s, &TaskSpec::pick(missing)),
            Err(SimError::InfeasibleTask(_))
        ));
    }

    #[test]
    fn every_part_is_in_view() {
        let tasks = [TaskSpec::pick("kettle"), TaskSpec::place("eggplant", "box"), TaskSpec::close("cubby")];
        for task in &tasks {
            for seed in 0..300 {
                for v in [Variation::InDist, Variation::CameraShift] {
                    let s = spawn_scene(task, seed, v).unwrap();
                    for o in &s.objects {
                        let px = s.camera.project_point(&o.part_world().position).unwrap();
                        assert!(s.camera.contains(px), "{} {seed} {v}: {px:?}", o.category);
                    }
                }
            }
        }
    }

    #[test]
    fn snapshots() {
        let (s, task) = kettle_scene();
        assert_eq!(snapshot(&s), snapshot(&s));

        let empty = Scene::empty(SimConfig::default());
        let img = snapshot(&empty);
        let table = background_color(DEFAULT_BACKGROUND);
        let mut n_table = 0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                let c = img.get(x, y);
                assert!(c == table || c == WALL_COLOR);
                n_table += (c == table) as usize;
            }
        }
        assert!(n_table > 0);

        let twin = spawn_scene(&task, 7, Variation::BackgroundShift).unwrap();
        let (a, b) = (snapshot(&s), snapshot(&twin));
        let (ta, tb) = (background_color(&s.background), background_color(&twin.background));
        let mut differing = 0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                if a.get(x, y) != b.get(x, y) {
                    differing += 1;
                    assert_eq!((a.get(x, y), b.get(x, y)), (ta, tb));
                }
            }
        }
        assert!(differing > 0);
        // objects are drawn somewhere
        let kettle_color = category_color("kettle");
        assert!((0..a.height()).any(|y| (0..a.width()).any(|x| a.get(x, y) == kettle_color)));
    }
}
