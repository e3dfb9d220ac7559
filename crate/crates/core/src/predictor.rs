//! Affordance prediction from task language and detected objects.
//!
//! The model is a template table: for every task key, training plans are
//! re-expressed relative to the objects they act on and averaged. At
//! prediction time the averaged offsets are composed with the detected
//! object poses.

use crate::datasets::{TrainingRecord, TrainingSet};
use crate::extraction::{build_affordance_plan, AffordancePlan, ExtractionConfig, ObjectAnnotation, WaypointKind};
use crate::geometry::{CameraModel, GripperGeometry, Pose, Vec3};
use crate::simenv::{Scene, TaskSpec, Variation, EXPERT_LIFT};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("no usable training records")]
    NoUsableRecords,
    #[error("cannot parse task language: {0}")]
    LanguageParse(String),
    #[error("no {0} detected")]
    TargetNotDetected(String),
    #[error("evaluation suite is empty")]
    EmptySuite,
    #[error("model file: {0}")]
    ModelFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    /// `[u_min, v_min, u_max, v_max]`
    pub bbox: [f64; 4],
    /// Object pose on the table plane, yaw only.
    pub table_pose: Pose,
    /// Object height above the table (m).
    pub height: f64,
}

impl Detection {
    pub fn bbox_center(&self) -> [f64; 2] {
        [(self.bbox[0] + self.bbox[2]) / 2.0, (self.bbox[1] + self.bbox[3]) / 2.0]
    }
}

/// What the predictor sees: detections with world poses and the camera.
/// Surface appearance such as the background is not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObservation {
    pub image_ref: String,
    pub detections: Vec<Detection>,
    pub camera: CameraModel,
    pub table_height: f64,
}

/// Ground-truth detections of every object not held by the gripper.
pub fn observe(scene: &Scene) -> SceneObservation {
    let detections = scene
        .objects
        .iter()
        .filter(|o| scene.attached != Some(o.id))
        .filter_map(|o| {
            let px: Vec<_> = o
                .corners()
                .iter()
                .map(|c| scene.camera.project_point(c))
                .collect::<Result<_, _>>()
                .ok()?;
            let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&crate::geometry::Pixel) -> f64| {
                px.iter().map(get).fold(init, f)
            };
            Some(Detection {
                category: o.category.clone(),
                bbox: [
                    fold(f64::min, f64::INFINITY, |p| p.u),
                    fold(f64::min, f64::INFINITY, |p| p.v),
                    fold(f64::max, f64::NEG_INFINITY, |p| p.u),
                    fold(f64::max, f64::NEG_INFINITY, |p| p.v),
                ],
                table_pose: o.table_pose(scene.table_height),
                height: o.pose.position.z + o.half_extents.z - scene.table_height,
            })
        })
        .collect();
    SceneObservation {
        image_ref: format!("scene_{}.png", scene.step_count),
        detections,
        camera: scene.camera,
        table_height: scene.table_height,
    }
}

/// Template table key: verb, target and, for place tasks, the receptacle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskKey(pub TaskSpec);

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0.verb, self.0.target)?;
        if let Some(r) = &self.0.receptacle {
            write!(f, ":{r}")?;
        }
        Ok(())
    }
}

impl FromStr for TaskKey {
    type Err = PredictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || PredictError::ModelFile(format!("bad template key {s:?}"));
        let task = match parts.as_slice() {
            ["pick", t] => TaskSpec::pick(t),
            ["close", t] => TaskSpec::close(t),
            ["turn", t] => TaskSpec::turn(t),
            ["place", t, r] => TaskSpec::place(t, r),
            _ => return Err(bad()),
        };
        task.validate().map_err(|_| bad())?;
        Ok(TaskKey(task))
    }
}

impl Serialize for TaskKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// Full pose in the target's table frame.
    Target,
    /// Where the held target should be, in the receptacle's table frame;
    /// orientation stored as a world rotation relative to the grasp.
    Receptacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateWaypoint {
    pub kind: WaypointKind,
    pub anchor: Anchor,
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub waypoints: Vec<TemplateWaypoint>,
    /// Records averaged into this template.
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeySources {
    pub robot: usize,
    pub aug: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictorModel {
    pub templates: BTreeMap<TaskKey, Template>,
    pub sources: BTreeMap<TaskKey, KeySources>,
    /// Web-proxy records mentioning each category.
    pub web_coverage: BTreeMap<String, usize>,
    pub skipped_records: usize,
}

impl PredictorModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictError> {
        let text = serde_json::to_string_pretty(self).expect("model is plain data");
        std::fs::write(path, text + "\n").map_err(|e| PredictError::ModelFile(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictError> {
        let text = std::fs::read_to_string(path).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| PredictError::ModelFile(e.to_string()))
    }

    pub fn has(&self, task: &TaskSpec) -> bool {
        self.templates.contains_key(&TaskKey(task.clone()))
    }
}

/// One training example reduced to what fitting needs.
struct Example<'a> {
    task: TaskSpec,
    plan: AffordancePlan,
    objects: &'a [ObjectAnnotation],
}

fn find_unique<'a>(objects: &'a [ObjectAnnotation], category: &str) -> Option<&'a ObjectAnnotation> {
    let mut it = objects.iter().filter(|o| o.category == category);
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

/// Relative offsets of one example, or `None` when the objects it needs
/// are missing or ambiguous.
fn offsets(ex: &Example) -> Option<Vec<TemplateWaypoint>> {
    let target = find_unique(ex.objects, &ex.task.target)?.table_pose;
    let receptacle = match &ex.task.receptacle {
        Some(r) => Some(find_unique(ex.objects, r)?.table_pose),
        None => None,
    };
    let wps = ex.plan.waypoints();
    let grasp_idx = wps.iter().position(|w| w.kind == WaypointKind::Close)?;
    let grasp = wps[grasp_idx].pose;
    let held = grasp.position - target.position;
    Some(
        wps.iter()
            .enumerate()
            .map(|(i, w)| match receptacle {
                Some(rec) if i > grasp_idx => TemplateWaypoint {
                    kind: w.kind,
                    anchor: Anchor::Receptacle,
                    offset: Pose::from_parts(
                        rec.inverse_transform_point(&(w.pose.position - held)),
                        w.pose.orientation * grasp.orientation.inverse(),
                    ),
                },
                _ => TemplateWaypoint {
                    kind: w.kind,
                    anchor: Anchor::Target,
                    offset: target.inverse().compose(&w.pose),
                },
            })
            .collect(),
    )
}

/// Mean of poses: linear mean of positions, normalized sum of
/// sign-aligned quaternions.
pub fn mean_pose(poses: &[Pose]) -> Pose {
    assert!(!poses.is_empty());
    let n = poses.len() as f64;
    let position = poses.iter().fold(Vec3::zeros(), |acc, p| acc + p.position) / n;
    let reference = poses[0].orientation.quaternion().coords;
    let sum = poses.iter().fold(nalgebra::Vector4::zeros(), |acc, p| {
        let q = p.orientation.quaternion().coords;
        if q.dot(&reference) < 0.0 {
            acc - q
        } else {
            acc + q
        }
    });
    Pose::from_parts(position, UnitQuaternion::new_normalize(Quaternion::from(sum)))
}

fn record_examples<'a>(record: &'a TrainingRecord, extraction: &ExtractionConfig) -> Option<Example<'a>> {
    match record {
        TrainingRecord::Robot(t) => Some(Example {
            task: TaskSpec::parse(&t.language).ok()?,
            plan: build_affordance_plan(t, extraction).ok()?,
            objects: &t.objects,
        }),
        TrainingRecord::Aug(a) => Some(Example {
            task: TaskSpec::parse(&a.language).ok()?,
            plan: a.plan.clone().filter(|p| !p.is_empty())?,
            objects: &a.objects,
        }),
        TrainingRecord::Web(_) => None,
    }
}

/// Build the template table. Web-proxy records only feed the coverage
/// statistic.
pub fn fit(training: &TrainingSet, extraction: &ExtractionConfig) -> Result<PredictorModel, PredictError> {
    let mut model = PredictorModel::default();
    let mut pooled: BTreeMap<TaskKey, Vec<Vec<TemplateWaypoint>>> = BTreeMap::new();
    for record in training.records() {
        if let TrainingRecord::Web(w) = record {
            for c in crate::simenv::CATEGORIES {
                if w.payload.contains(&c.name.replace('_', " ")) {
                    *model.web_coverage.entry(c.name.to_string()).or_default() += 1;
                }
            }
            continue;
        }
        let Some(ex) = record_examples(record, extraction) else {
            model.skipped_records += 1;
            continue;
        };
        let Some(offs) = offsets(&ex) else {
            model.skipped_records += 1;
            continue;
        };
        let key = TaskKey(ex.task.clone());
        let src = model.sources.entry(key.clone()).or_default();
        match record {
            TrainingRecord::Robot(_) => src.robot += 1,
            _ => src.aug += 1,
        }
        pooled.entry(key).or_default().push(offs);
    }
    if pooled.is_empty() {
        return Err(PredictError::NoUsableRecords);
    }
    for (key, examples) in pooled {
        // majority event signature; ties go to the first seen
        let mut signatures: Vec<(Vec<(WaypointKind, Anchor)>, usize)> = Vec::new();
        for ex in &examples {
            let sig: Vec<_> = ex.iter().map(|w| (w.kind, w.anchor)).collect();
            match signatures.iter_mut().find(|(s, _)| *s == sig) {
                Some((_, n)) => *n += 1,
                None => signatures.push((sig, 1)),
            }
        }
        let best = signatures.iter().map(|(_, n)| *n).max().expect("non-empty");
        let sig = signatures.into_iter().find(|(_, n)| *n == best).expect("max exists").0;
        let chosen: Vec<_> = examples
            .iter()
            .filter(|ex| ex.iter().map(|w| (w.kind, w.anchor)).eq(sig.iter().copied()))
            .collect();
        let waypoints = sig
            .iter()
            .enumerate()
            .map(|(i, (kind, anchor))| TemplateWaypoint {
                kind: *kind,
                anchor: *anchor,
                offset: mean_pose(&chosen.iter().map(|ex| ex[i].offset).collect::<Vec<_>>()),
            })
            .collect();
        model.templates.insert(
            key,
            Template {
                waypoints,
                support: chosen.len(),
            },
        );
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: TaskSpec,
    pub plan: AffordancePlan,
    /// No template for the task; the plan grasps the target's top center.
    pub fallback: bool,
    /// Several detections of the target category; the one nearest the
    /// image center was used.
    pub ambiguous: bool,
}

fn choose<'a>(obs: &'a SceneObservation, category: &str) -> Result<(&'a Detection, bool), PredictError> {
    let center = [obs.camera.cx, obs.camera.cy];
    let dist = |d: &Detection| {
        let c = d.bbox_center();
        (c[0] - center[0]).hypot(c[1] - center[1])
    };
    let found: Vec<&Detection> = obs.detections.iter().filter(|d| d.category == category).collect();
    let best = found
        .iter()
        .copied()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .ok_or_else(|| PredictError::TargetNotDetected(category.to_string()))?;
    Ok((best, found.len() > 1))
}

/// Grasp the top center of a detection and lift.
pub fn center_grasp_plan(target: &Detection, geom: &GripperGeometry) -> AffordancePlan {
    let tp = target.table_pose;
    let top = tp.position + Vec3::new(0.0, 0.0, target.height);
    let grasp = Pose::top_down(top, tp.heading()).compose(&geom.tool_center().inverse());
    let lifted = Pose::from_parts(grasp.position + Vec3::new(0.0, 0.0, EXPERT_LIFT), grasp.orientation);
    AffordancePlan::from_poses([(grasp, WaypointKind::Close), (lifted, WaypointKind::Final)]).expect("ordered")
}

pub fn predict(model: &PredictorModel, language: &str, obs: &SceneObservation) -> Result<Prediction, PredictError> {
    let task = TaskSpec::parse(language).map_err(|e| PredictError::LanguageParse(e.to_string()))?;
    let (target, mut ambiguous) = choose(obs, &task.target)?;
    let Some(template) = model.templates.get(&TaskKey(task.clone())) else {
        return Ok(Prediction {
            plan: center_grasp_plan(target, &GripperGeometry::default()),
            task,
            fallback: true,
            ambiguous,
        });
    };
    let receptacle = match &task.receptacle {
        Some(r) => {
            let (d, amb) = choose(obs, r)?;
            ambiguous |= amb;
            Some(d.table_pose)
        }
        None => None,
    };
    let t = target.table_pose;
    let mut grasp: Option<Pose> = None;
    let mut poses = Vec::with_capacity(template.waypoints.len());
    for w in &template.waypoints {
        let pose = match (w.anchor, receptacle, grasp) {
            (Anchor::Receptacle, Some(rec), Some(g)) => {
                let held = g.position - t.position;
                Pose::from_parts(rec.transform_point(&w.offset.position) + held, w.offset.orientation * g.orientation)
            }
            _ => t.compose(&w.offset),
        };
        if grasp.is_none() && w.kind == WaypointKind::Close {
            grasp = Some(pose);
        }
        poses.push((pose, w.kind));
    }
    let plan = AffordancePlan::from_poses(poses).expect("template kinds end with final");
    Ok(Prediction {
        task,
        plan,
        fallback: false,
        ambiguous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub position_tolerance: f64,
    pub orientation_tolerance_deg: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            position_tolerance: 0.03,
            orientation_tolerance_deg: 30.0,
        }
    }
}

impl JudgeConfig {
    /// Whether the plan's first grasp puts the fingertip center on the part.
    pub fn judge(&self, plan: &AffordancePlan, part: &Pose, geom: &GripperGeometry) -> bool {
        let Some(grasp) = plan.first_of(WaypointKind::Close) else {
            return false;
        };
        let tcp = grasp.pose.compose(&geom.tool_center());
        tcp.distance_to(part) <= self.position_tolerance
            && tcp.angle_to(part).to_degrees() <= self.orientation_tolerance_deg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub task: TaskSpec,
    pub variation: Variation,
    pub seed: u64,
    pub observation: SceneObservation,
    /// Ground-truth graspable part of the target.
    pub part: Pose,
}

/// `n` scenes per task for one variation, seeds `seed0..seed0 + n`.
pub fn offline_suite(tasks: &[TaskSpec], variation: Variation, n: u64, seed0: u64) -> Vec<EvalCase> {
    let mut out = Vec::new();
    for task in tasks {
        for seed in seed0..seed0 + n {
            let Ok(scene) = crate::simenv::spawn_scene(task, seed, variation) else {
                continue;
            };
            let part = scene.find(&task.target).expect("spawned").part_world();
            out.push(EvalCase {
                task: task.clone(),
                variation,
                seed,
                observation: observe(&scene),
                part,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += ok as usize;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OfflineReport {
    /// Keyed by task label and variation.
    pub per_task: BTreeMap<(String, String), Tally>,
    /// Keyed by target category and variation.
    pub per_category: BTreeMap<(String, String), Tally>,
    pub fallbacks: usize,
}

impl OfflineReport {
    /// Mean of per-task fractions for a variation.
    pub fn score(&self, variation: Variation) -> f64 {
        let v = variation.as_str();
        let fr: Vec<f64> = self
            .per_task
            .iter()
            .filter(|((_, var), _)| var == v)
            .map(|(_, t)| t.fraction())
            .collect();
        if fr.is_empty() {
            0.0
        } else {
            fr.iter().sum::<f64>() / fr.len() as f64
        }
    }

    pub fn category(&self, category: &str, variation: Variation) -> Option<Tally> {
        self.per_category
            .get(&(category.to_string(), variation.as_str().to_string()))
            .copied()
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<32} {:<18} {:>8}\n", "task", "variation", "score");
        for ((task, var), t) in &self.per_task {
            s += &format!("{task:<32} {var:<18} {:>3}/{:<4}\n", t.correct, t.total);
        }
        s
    }
}

pub fn eval_offline(model: &PredictorModel, suite: &[EvalCase], judge: &JudgeConfig) -> Result<OfflineReport, PredictError> {
    if suite.is_empty() {
        return Err(PredictError::EmptySuite);
    }
    let geom = GripperGeometry::default();
    let mut report = OfflineReport::default();
    for case in suite {
        let ok = match predict(model, &case.task.language(), &case.observation) {
            Ok(p) => {
                report.fallbacks += p.fallback as usize;
                judge.judge(&p.plan, &case.part, &geom)
            }
            Err(_) => false,
        };
        let var = case.variation.as_str().to_string();
        report.per_task.entry((case.task.label(), var.clone())).or_default().add(ok);
        report
            .per_category
            .entry((case.task.target.clone(), var))
            .or_default()
            .add(ok);
    }
    Ok(report)
}
