//! Annotation and live-steering backend.
//!
//! Annotators click waypoints on images; clicks are lifted to 3D by
//! intersecting the pixel ray with the table plane and raising the point
//! by a height offset. Accepted annotations go to an append-only log that
//! is periodically compacted into `annotations.jsonl`. Episodes driven by
//! a human block until a plan is submitted for them.

use crate::datasets::{
    read_jsonl, write_jsonl, AugmentedImage, DatasetConfig, DatasetDir, DirLock, ANNOTATIONS_FILE, CAMERAS_FILE,
};
use crate::extraction::{AffordancePlan, ObjectAnnotation, WaypointKind};
use crate::geometry::{CameraModel, GripperGeometry, Pixel, Pose};
use crate::orchestrator::{render_observation, run_episode, EpisodeConfig, HumanChannel, PlanSource, Providers, Replan};
use crate::policy::FailureTag;
use crate::predictor::PredictorModel;
use crate::simenv::{spawn_scene, Scene, TaskSpec, Variation, DEFAULT_TABLE_HEIGHT};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const LOG_FILE: &str = "annotations.log";
pub const DEFAULT_CAMERA: &str = "default";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("image {image} is at version {current}, submission was based on {base}")]
    Conflict { image: String, current: u64, base: u64 },
    #[error("episode {0} is not waiting for an affordance")]
    NotAwaiting(String),
    #[error("pixel ray is parallel to the table plane")]
    RayParallelToPlane,
    #[error("table plane is behind the camera along this pixel ray")]
    PlaneBehindCamera,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage: {0}")]
    Storage(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ServiceError {
    ServiceError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn storage<E: std::fmt::Display>(e: E) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

/// Lift a pixel to a pose: intersect its ray with the plane
/// `z = table_height`, raise by `height`, and orient top-down with `yaw`
/// (radians) about the vertical.
pub fn pixel_to_pose(cam: &CameraModel, px: Pixel, yaw: f64, height: f64, table_height: f64) -> Result<Pose, ServiceError> {
    let origin = cam.extrinsic.position;
    let dir = cam.extrinsic.orientation * cam.pixel_ray(px);
    if dir.z.abs() < 1e-12 {
        return Err(ServiceError::RayParallelToPlane);
    }
    let t = (table_height - origin.z) / dir.z;
    if t <= 0.0 {
        return Err(ServiceError::PlaneBehindCamera);
    }
    let mut p = origin + dir * t;
    p.z = table_height + height;
    Ok(Pose::top_down(p, yaw))
}

/// One clicked waypoint: the fingertip center's footprint on the table,
/// its height above the table and the gripper yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointPayload {
    pub kind: WaypointKind,
    pub pixel: [f64; 2],
    pub yaw_deg: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPayload {
    pub category: String,
    /// Object footprint center on the table.
    pub pixel: [f64; 2],
    pub yaw_deg: f64,
    pub height: f64,
    pub part_pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    pub annotator: String,
    pub waypoints: Vec<WaypointPayload>,
    #[serde(default)]
    pub objects: Vec<ObjectPayload>,
    /// Replaces the image's task label when given.
    #[serde(default)]
    pub language: Option<String>,
    /// Version the annotator started from; stale versions conflict.
    #[serde(default)]
    pub base_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveAffordanceRequest {
    pub waypoints: Vec<WaypointPayload>,
}

fn check_pixel(field: &str, px: [f64; 2], cam: &CameraModel) -> Result<(), ServiceError> {
    if !px.iter().all(|c| c.is_finite()) || !cam.contains(Pixel::new(px[0], px[1])) {
        return Err(invalid(field, format!("({}, {}) outside the {}x{} image", px[0], px[1], cam.width, cam.height)));
    }
    Ok(())
}

fn check_finite(field: &str, v: f64) -> Result<(), ServiceError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

/// Validate waypoints and lift them to EE poses.
pub fn waypoints_to_plan(
    waypoints: &[WaypointPayload],
    cam: &CameraModel,
    table_height: f64,
    geom: &GripperGeometry,
) -> Result<AffordancePlan, ServiceError> {
    if waypoints.is_empty() {
        return Err(invalid("waypoints", "at least one waypoint is required"));
    }
    let last = waypoints.len() - 1;
    let tool_inv = geom.tool_center().inverse();
    let mut poses = Vec::with_capacity(waypoints.len());
    for (i, w) in waypoints.iter().enumerate() {
        let f = |name: &str| format!("waypoints[{i}].{name}");
        if (i == last) != (w.kind == WaypointKind::Final) {
            return Err(invalid(f("kind"), "the last waypoint, and only the last, must be final"));
        }
        check_pixel(&f("pixel"), w.pixel, cam)?;
        check_finite(&f("yaw_deg"), w.yaw_deg)?;
        check_finite(&f("height"), w.height)?;
        let tcp = pixel_to_pose(cam, Pixel::new(w.pixel[0], w.pixel[1]), w.yaw_deg.to_radians(), w.height, table_height)
            .map_err(|e| invalid(f("pixel"), e.to_string()))?;
        poses.push((tcp.compose(&tool_inv), w.kind));
    }
    Ok(AffordancePlan::from_poses(poses).expect("kinds checked"))
}

pub fn objects_to_annotations(objects: &[ObjectPayload], cam: &CameraModel, table_height: f64) -> Result<Vec<ObjectAnnotation>, ServiceError> {
    objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let f = |name: &str| format!("objects[{i}].{name}");
            if o.category.trim().is_empty() {
                return Err(invalid(f("category"), "must not be empty"));
            }
            check_pixel(&f("pixel"), o.pixel, cam)?;
            check_pixel(&f("part_pixel"), o.part_pixel, cam)?;
            check_finite(&f("yaw_deg"), o.yaw_deg)?;
            check_finite(&f("height"), o.height)?;
            let tp = pixel_to_pose(cam, Pixel::new(o.pixel[0], o.pixel[1]), o.yaw_deg.to_radians(), 0.0, table_height)
                .map_err(|e| invalid(f("pixel"), e.to_string()))?;
            // table frame: yaw about z only, not the top-down gripper frame
            let table_pose = Pose::from_parts(
                tp.position,
                nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Vector3::z_axis(), o.yaw_deg.to_radians()),
            );
            Ok(ObjectAnnotation {
                category: o.category.clone(),
                part_pixel: o.part_pixel,
                table_pose,
                height: o.height,
            })
        })
        .collect()
}

/// Hash of everything in a record except its timestamp.
fn content_hash(record: &AugmentedImage) -> String {
    let mut r = record.clone();
    r.timestamp = None;
    let bytes = serde_json::to_vec(&r).expect("plain data");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Image id: the file stem of its `image_ref`.
pub fn image_id(image_ref: &str) -> String {
    Path::new(image_ref)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_ref.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogEntry {
    image_id: String,
    version: u64,
    record: AugmentedImage,
}

#[derive(Debug, Clone)]
struct ImageEntry {
    record: AugmentedImage,
    version: u64,
}

struct Store {
    images: BTreeMap<String, ImageEntry>,
    order: Vec<String>,
    log: File,
    since_compaction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingImage {
    pub id: String,
    pub image_ref: String,
    pub language: String,
    /// Base64 PNG at quarter resolution, absent when the file is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub id: String,
    pub image_ref: String,
    pub language: String,
    pub camera: CameraModel,
    pub table_height: f64,
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AugmentedImage>,
    /// Base64 PNG.
    pub png: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub version: u64,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeState {
    Starting,
    Awaiting,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub id: String,
    pub task: String,
    pub state: EpisodeState,
    pub step: usize,
    /// How many times the episode has asked for a plan.
    pub prompts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub status: EpisodeStatus,
    /// Base64 PNG of the current scene with the active plan drawn on it.
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartEpisodeRequest {
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "in_dist")]
    pub variation: Variation,
    #[serde(default = "human")]
    pub source: PlanSource,
    #[serde(default)]
    pub replan: Option<usize>,
    #[serde(default)]
    pub pacing_hz: Option<f64>,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
}

fn in_dist() -> Variation {
    Variation::InDist
}

fn human() -> PlanSource {
    PlanSource::Human
}

struct EpisodeInner {
    state: EpisodeState,
    step: usize,
    scene: Scene,
    plan: AffordancePlan,
    inbox: Option<AffordancePlan>,
    prompts: usize,
    success: Option<bool>,
    failure: Option<FailureTag>,
    error: Option<String>,
}

/// A running episode and the mailbox a human plan is delivered through.
pub struct Episode {
    id: String,
    task: TaskSpec,
    inner: Mutex<EpisodeInner>,
    wake: Condvar,
}

impl Episode {
    fn status(&self) -> EpisodeStatus {
        let s = self.inner.lock().expect("episode lock");
        EpisodeStatus {
            id: self.id.clone(),
            task: self.task.language(),
            state: s.state,
            step: s.step,
            prompts: s.prompts,
            success: s.success,
            failure: s.failure,
            error: s.error.clone(),
        }
    }
}

impl HumanChannel for Episode {
    fn request_plan(&self, scene: &Scene, step: usize, timeout: Duration) -> Option<AffordancePlan> {
        let mut s = self.inner.lock().expect("episode lock");
        s.state = EpisodeState::Awaiting;
        s.scene = scene.clone();
        s.step = step;
        s.prompts += 1;
        s.inbox = None;
        let (mut s, _) = self
            .wake
            .wait_timeout_while(s, timeout, |s| s.inbox.is_none())
            .expect("episode lock");
        let plan = s.inbox.take();
        if let Some(p) = &plan {
            s.plan = p.clone();
            s.state = EpisodeState::Running;
        }
        plan
    }

    fn on_step(&self, step: usize, scene: &Scene, plan: &AffordancePlan) {
        let mut s = self.inner.lock().expect("episode lock");
        s.step = step;
        s.scene = scene.clone();
        s.plan = plan.clone();
    }
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Compact the log into `annotations.jsonl` after this many accepted
    /// submissions.
    pub compact_every: usize,
    pub model: Option<PredictorModel>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            compact_every: 32,
            model: None,
        }
    }
}

pub struct AnnotationService {
    dir: DatasetDir,
    config: DatasetConfig,
    store: Mutex<Store>,
    episodes: Mutex<BTreeMap<String, Arc<Episode>>>,
    model: Option<Arc<PredictorModel>>,
    compact_every: usize,
    geometry: GripperGeometry,
    _lock: DirLock,
}

impl AnnotationService {
    /// Open a data directory as its single writer. A missing camera config
    /// falls back to the simulator's default camera.
    pub fn open(data_dir: impl AsRef<Path>, opts: ServiceOptions) -> Result<Arc<Self>, ServiceError> {
        let dir = DatasetDir::new(data_dir.as_ref());
        fs::create_dir_all(&dir.root).map_err(storage)?;
        let lock = dir.lock().map_err(storage)?;
        let config = if dir.path(CAMERAS_FILE).exists() {
            dir.config().map_err(storage)?
        } else {
            DatasetConfig {
                table_height: DEFAULT_TABLE_HEIGHT,
                cameras: [(DEFAULT_CAMERA.to_string(), crate::simenv::default_camera(DEFAULT_TABLE_HEIGHT))].into(),
            }
        };
        let mut images = BTreeMap::new();
        let mut order = Vec::new();
        for record in dir.annotations().map_err(storage)? {
            let id = image_id(&record.image_ref);
            if images.contains_key(&id) {
                return Err(ServiceError::Storage(format!("duplicate image id {id}")));
            }
            order.push(id.clone());
            images.insert(id, ImageEntry { record, version: 0 });
        }
        let log_path = dir.path(LOG_FILE);
        let mut replayed = 0;
        if log_path.exists() {
            let entries: Vec<LogEntry> = read_jsonl(File::open(&log_path).map_err(storage)?, |_: &LogEntry| Ok(())).map_err(storage)?;
            for e in entries {
                if !images.contains_key(&e.image_id) {
                    order.push(e.image_id.clone());
                }
                images.insert(
                    e.image_id,
                    ImageEntry {
                        record: e.record,
                        version: e.version,
                    },
                );
                replayed += 1;
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(storage)?;
        Ok(Arc::new(AnnotationService {
            dir,
            config,
            store: Mutex::new(Store {
                images,
                order,
                log,
                since_compaction: replayed,
            }),
            episodes: Mutex::new(BTreeMap::new()),
            model: opts.model.map(Arc::new),
            compact_every: opts.compact_every.max(1),
            geometry: GripperGeometry::default(),
            _lock: lock,
        }))
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir.root
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    fn camera_for(&self, record: &AugmentedImage) -> Result<CameraModel, ServiceError> {
        let name = record.camera.as_deref().unwrap_or(DEFAULT_CAMERA);
        self.config
            .cameras
            .get(name)
            .copied()
            .ok_or_else(|| ServiceError::Storage(format!("camera {name:?} not configured")))
    }

    fn read_png(&self, image_ref: &str) -> Result<Vec<u8>, ServiceError> {
        let path: PathBuf = self.dir.root.join(image_ref);
        fs::read(&path).map_err(|_| ServiceError::NotFound(format!("image file {image_ref}")))
    }

    /// Unannotated images.
    pub fn list_pending(&self) -> Vec<PendingImage> {
        let store = self.store.lock().expect("store lock");
        store
            .order
            .iter()
            .filter_map(|id| store.images.get(id).map(|e| (id, e)))
            .filter(|(_, e)| !e.record.is_annotated())
            .map(|(id, e)| PendingImage {
                id: id.clone(),
                image_ref: e.record.image_ref.clone(),
                language: e.record.language.clone(),
                thumbnail: self
                    .read_png(&e.record.image_ref)
                    .ok()
                    .and_then(|bytes| crate::render::Image::from_png_bytes(&bytes).ok())
                    .and_then(|img| img.downscale(4).to_png_bytes().ok())
                    .map(|b| base64::engine::general_purpose::STANDARD.encode(b)),
            })
            .collect()
    }

    pub fn fetch_image(&self, id: &str) -> Result<ImageView, ServiceError> {
        let entry = {
            let store = self.store.lock().expect("store lock");
            store
                .images
                .get(id)
                .cloned()
                .ok_or_else(|| ServiceError::NotFound(format!("image {id}")))?
        };
        let png = self.read_png(&entry.record.image_ref)?;
        Ok(ImageView {
            id: id.to_string(),
            image_ref: entry.record.image_ref.clone(),
            language: entry.record.language.clone(),
            camera: self.camera_for(&entry.record)?,
            table_height: self.config.table_height,
            version: entry.version,
            annotation: entry.record.is_annotated().then(|| entry.record.clone()),
            png: base64::engine::general_purpose::STANDARD.encode(png),
        })
    }

    pub fn fetch_png(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        let image_ref = {
            let store = self.store.lock().expect("store lock");
            store
                .images
                .get(id)
                .map(|e| e.record.image_ref.clone())
                .ok_or_else(|| ServiceError::NotFound(format!("image {id}")))?
        };
        self.read_png(&image_ref)
    }

    /// Validate, lift to 3D and persist. Resubmitting the same content by
    /// the same annotator is a no-op.
    pub fn submit(&self, id: &str, sub: &AnnotationSubmission) -> Result<SubmitOutcome, ServiceError> {
        if sub.annotator.trim().is_empty() {
            return Err(invalid("annotator", "must not be empty"));
        }
        let mut store = self.store.lock().expect("store lock");
        let entry = store
            .images
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("image {id}")))?;
        let cam = self.camera_for(&entry.record)?;
        let language = sub.language.clone().unwrap_or_else(|| entry.record.language.clone());
        TaskSpec::parse(&language).map_err(|e| invalid("language", e.to_string()))?;
        let record = AugmentedImage {
            image_ref: entry.record.image_ref.clone(),
            language,
            plan: Some(waypoints_to_plan(&sub.waypoints, &cam, self.config.table_height, &self.geometry)?),
            objects: objects_to_annotations(&sub.objects, &cam, self.config.table_height)?,
            camera: entry.record.camera.clone(),
            annotator: Some(sub.annotator.clone()),
            timestamp: Some(now_secs()),
        };
        if entry.record.is_annotated() && content_hash(&entry.record) == content_hash(&record) {
            return Ok(SubmitOutcome {
                version: entry.version,
                duplicate: true,
            });
        }
        if let Some(base) = sub.base_version {
            if base != entry.version {
                return Err(ServiceError::Conflict {
                    image: id.to_string(),
                    current: entry.version,
                    base,
                });
            }
        }
        let version = entry.version + 1;
        let log_entry = LogEntry {
            image_id: id.to_string(),
            version,
            record: record.clone(),
        };
        let line = serde_json::to_string(&log_entry).expect("plain data");
        writeln!(store.log, "{line}").and_then(|_| store.log.flush()).map_err(storage)?;
        store.images.insert(id.to_string(), ImageEntry { record, version });
        store.since_compaction += 1;
        if store.since_compaction >= self.compact_every {
            self.compact_locked(&mut store)?;
        }
        Ok(SubmitOutcome { version, duplicate: false })
    }

    fn compact_locked(&self, store: &mut Store) -> Result<(), ServiceError> {
        let records: Vec<AugmentedImage> = store.order.iter().map(|id| store.images[id].record.clone()).collect();
        let target = self.dir.path(ANNOTATIONS_FILE);
        let tmp = self.dir.path(&format!("{ANNOTATIONS_FILE}.tmp"));
        let f = File::create(&tmp).map_err(storage)?;
        write_jsonl(&records, std::io::BufWriter::new(f)).map_err(storage)?;
        fs::rename(&tmp, &target).map_err(storage)?;
        store.log.set_len(0).map_err(storage)?;
        store.since_compaction = 0;
        // versions restart from the compacted file on the next open
        Ok(())
    }

    pub fn compact(&self) -> Result<(), ServiceError> {
        let mut store = self.store.lock().expect("store lock");
        self.compact_locked(&mut store)
    }

    /// Compact and return the contents of `annotations.jsonl`.
    pub fn export_aug(&self) -> Result<Vec<u8>, ServiceError> {
        self.compact()?;
        fs::read(self.dir.path(ANNOTATIONS_FILE)).map_err(storage)
    }

    /// Add an unannotated image record, e.g. after copying a new PNG in.
    pub fn add_image(&self, record: AugmentedImage) -> Result<String, ServiceError> {
        let id = image_id(&record.image_ref);
        let mut store = self.store.lock().expect("store lock");
        if store.images.contains_key(&id) {
            return Err(invalid("image_ref", format!("image id {id} already exists")));
        }
        let line = serde_json::to_string(&LogEntry {
            image_id: id.clone(),
            version: 0,
            record: record.clone(),
        })
        .expect("plain data");
        writeln!(store.log, "{line}").and_then(|_| store.log.flush()).map_err(storage)?;
        store.order.push(id.clone());
        store.images.insert(id.clone(), ImageEntry { record, version: 0 });
        Ok(id)
    }

    pub fn start_episode(&self, req: &StartEpisodeRequest) -> Result<EpisodeStatus, ServiceError> {
        let task = TaskSpec::parse(&req.task).map_err(|e| invalid("task", e.to_string()))?;
        let mut cfg = EpisodeConfig::new(task.clone(), req.seed, req.source);
        cfg.variation = req.variation;
        if let Some(k) = req.replan {
            cfg.replan = Replan::Fixed(k);
        }
        if let Some(hz) = req.pacing_hz {
            cfg.pacing_hz = hz;
        }
        if let Some(t) = req.timeout_secs {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("timeout_secs", "must be positive"));
            }
            cfg.human_timeout = Duration::from_secs_f64(t);
        }
        cfg.validate().map_err(|e| invalid("episode", e.to_string()))?;
        if cfg.source == PlanSource::Predictor && self.model.is_none() {
            return Err(invalid("source", "no predictor model loaded"));
        }
        let scene = spawn_scene(&task, req.seed, req.variation).map_err(|e| invalid("task", e.to_string()))?;
        let id = {
            let episodes = self.episodes.lock().expect("episodes lock");
            format!("ep{}", episodes.len() + 1)
        };
        let episode = Arc::new(Episode {
            id: id.clone(),
            task,
            inner: Mutex::new(EpisodeInner {
                state: EpisodeState::Starting,
                step: 0,
                scene,
                plan: AffordancePlan::empty(),
                inbox: None,
                prompts: 0,
                success: None,
                failure: None,
                error: None,
            }),
            wake: Condvar::new(),
        });
        self.episodes.lock().expect("episodes lock").insert(id.clone(), episode.clone());
        let model = self.model.clone();
        let ep = episode.clone();
        std::thread::spawn(move || {
            let providers = Providers {
                model: model.as_deref(),
                human: Some(&*ep),
            };
            let result = run_episode(&cfg, providers);
            let mut s = ep.inner.lock().expect("episode lock");
            match result {
                Ok(r) => {
                    s.state = EpisodeState::Done;
                    s.step = r.rollout.steps();
                    s.scene = r.rollout.final_scene.clone();
                    s.plan = r.final_plan.clone();
                    s.success = Some(r.rollout.success);
                    s.failure = Some(r.rollout.failure);
                }
                Err(e) => {
                    s.state = EpisodeState::Failed;
                    s.error = Some(e.to_string());
                }
            }
        });
        Ok(episode.status())
    }

    fn episode(&self, id: &str) -> Result<Arc<Episode>, ServiceError> {
        self.episodes
            .lock()
            .expect("episodes lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("episode {id}")))
    }

    pub fn episode_status(&self, id: &str) -> Result<EpisodeStatus, ServiceError> {
        Ok(self.episode(id)?.status())
    }

    pub fn fetch_frame(&self, id: &str) -> Result<FrameView, ServiceError> {
        let ep = self.episode(id)?;
        let (scene, plan) = {
            let s = ep.inner.lock().expect("episode lock");
            (s.scene.clone(), s.plan.clone())
        };
        let png = render_observation(&scene, &plan).to_png_bytes().map_err(storage)?;
        Ok(FrameView {
            status: ep.status(),
            png: base64::engine::general_purpose::STANDARD.encode(png),
        })
    }

    /// Deliver a plan to an episode waiting for one.
    pub fn submit_live_affordance(&self, id: &str, req: &LiveAffordanceRequest) -> Result<EpisodeStatus, ServiceError> {
        let ep = self.episode(id)?;
        {
            let mut s = ep.inner.lock().expect("episode lock");
            if s.state != EpisodeState::Awaiting || s.inbox.is_some() {
                return Err(ServiceError::NotAwaiting(id.to_string()));
            }
            let plan = waypoints_to_plan(&req.waypoints, &s.scene.camera, s.scene.table_height, &s.scene.config.gripper)?;
            s.inbox = Some(plan);
        }
        ep.wake.notify_all();
        Ok(ep.status())
    }

    /// Route one HTTP request.
    pub fn handle(&self, method: &str, path: &str, body: &[u8]) -> HttpResponse {
        match self.route(method, path, body) {
            Ok(r) => r,
            Err(e) => HttpResponse::error(&e),
        }
    }

    fn route(&self, method: &str, path: &str, body: &[u8]) -> Result<HttpResponse, ServiceError> {
        let path = path.split('?').next().unwrap_or("");
        let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, parts.as_slice()) {
            ("GET", ["api", "images", "pending"]) => Ok(HttpResponse::json(&self.list_pending())),
            ("GET", ["api", "images", id]) => Ok(HttpResponse::json(&self.fetch_image(id)?)),
            ("GET", ["api", "images", id, "png"]) => Ok(HttpResponse::bytes("image/png", self.fetch_png(id)?)),
            ("POST", ["api", "images", id, "annotations"]) => Ok(HttpResponse::json(&self.submit(id, &parse(body)?)?)),
            ("GET", ["api", "export"]) => Ok(HttpResponse::bytes("application/x-ndjson", self.export_aug()?)),
            ("POST", ["api", "episodes"]) => Ok(HttpResponse::json(&self.start_episode(&parse(body)?)?)),
            ("GET", ["api", "episodes", id]) => Ok(HttpResponse::json(&self.episode_status(id)?)),
            ("GET", ["api", "episodes", id, "frame"]) => Ok(HttpResponse::json(&self.fetch_frame(id)?)),
            ("POST", ["api", "episodes", id, "affordance"]) => {
                Ok(HttpResponse::json(&self.submit_live_affordance(id, &parse(body)?)?))
            }
            _ => Err(ServiceError::NotFound(format!("{method} {path}"))),
        }
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl HttpResponse {
    pub fn json<T: Serialize>(v: &T) -> Self {
        HttpResponse {
            status: 200,
            content_type: "application/json",
            body: serde_json::to_vec(v).expect("plain data"),
        }
    }

    pub fn bytes(content_type: &'static str, body: Vec<u8>) -> Self {
        HttpResponse {
            status: 200,
            content_type,
            body,
        }
    }

    pub fn error(e: &ServiceError) -> Self {
        let (status, field) = match e {
            ServiceError::NotFound(_) => (404, None),
            ServiceError::Validation { field, .. } => (422, Some(field.as_str())),
            ServiceError::Conflict { .. } | ServiceError::NotAwaiting(_) => (409, None),
            ServiceError::BadRequest(_) | ServiceError::RayParallelToPlane | ServiceError::PlaneBehindCamera => (400, None),
            ServiceError::Storage(_) => (500, None),
        };
        HttpResponse {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(&ErrorBody {
                error: e.to_string(),
                field,
            })
            .expect("plain data"),
        }
    }
}

/// Serve `service` over HTTP/1.1 until the process exits, with `workers`
/// threads taking requests.
pub fn serve(service: Arc<AnnotationService>, addr: &str, workers: usize) -> Result<(), ServiceError> {
    let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| ServiceError::Storage(e.to_string()))?);
    log::info!("listening on {}", server.server_addr());
    serve_on(service, server, workers);
    Ok(())
}

/// Serve on an already bound server; returns once all workers stop.
pub fn serve_on(service: Arc<AnnotationService>, server: Arc<tiny_http::Server>, workers: usize) {
    let handles: Vec<_> = (0..workers.max(1))
        .map(|_| {
            let server = server.clone();
            let service = service.clone();
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = Vec::new();
                    if req.as_reader().read_to_end(&mut body).is_err() {
                        continue;
                    }
                    let resp = service.handle(req.method().as_str(), req.url(), &body);
                    let header = tiny_http::Header::from_bytes("Content-Type", resp.content_type).expect("valid header");
                    let out = tiny_http::Response::from_data(resp.body)
                        .with_status_code(resp.status)
                        .with_header(header);
                    if let Err(e) = req.respond(out) {
                        log::warn!("response failed: {e}");
                    }
                }
            })
        })
        .collect();
    for h in handles {
        let _ = h.join();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn down_camera() -> CameraModel {
        CameraModel::new(
            100.0,
            100.0,
            64.0,
            48.0,
            128,
            96,
            CameraModel::look_at(Vec3::new(0.5, 0.0, 1.7), Vec3::new(0.5, 0.0, 0.7), Vec3::x()),
        )
        .unwrap()
    }

    #[test]
    fn principal_point_lands_under_the_optical_axis() {
        let cam = down_camera();
        let p = pixel_to_pose(&cam, Pixel::new(64.0, 48.0), 0.0, 0.0, 0.7).unwrap();
        assert!((p.position - Vec3::new(0.5, 0.0, 0.7)).norm() < 1e-12);
        // oracle: similar triangles from a camera 1 m above the plane
        let p = pixel_to_pose(&cam, Pixel::new(74.0, 48.0), 0.0, 0.05, 0.7).unwrap();
        let cam_x = cam.extrinsic.orientation * Vec3::x();
        let expected = Vec3::new(0.5, 0.0, 0.7) + cam_x * 0.1 + Vec3::new(0.0, 0.0, 0.05);
        assert!((p.position - expected).norm() < 1e-12);
    }

    #[test]
    fn pixel_to_pose_round_trips() {
        let cam = crate::simenv::default_camera(0.7);
        for v in (40..120).step_by(7) {
            for u in (0..160).step_by(9) {
                let px = Pixel::new(u as f64 + 0.25, v as f64 + 0.5);
                let p = pixel_to_pose(&cam, px, 0.3, 0.0, 0.7).unwrap();
                let back = cam.project_point(&p.position).unwrap();
                assert!((back.u - px.u).abs() < 1e-6 && (back.v - px.v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn horizon_ray_is_rejected() {
        let level = CameraModel::new(
            100.0,
            100.0,
            64.0,
            48.0,
            128,
            96,
            CameraModel::look_at(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 1.0), Vec3::z()),
        )
        .unwrap();
        assert_eq!(
            pixel_to_pose(&level, Pixel::new(64.0, 48.0), 0.0, 0.0, 0.7).unwrap_err(),
            ServiceError::RayParallelToPlane
        );
        assert_eq!(
            pixel_to_pose(&level, Pixel::new(64.0, 0.0), 0.0, 0.0, 0.7).unwrap_err(),
            ServiceError::PlaneBehindCamera
        );
    }

    #[test]
    fn waypoint_validation_names_fields() {
        let cam = down_camera();
        let g = GripperGeometry::default();
        let wp = |kind, u: f64| WaypointPayload {
            kind,
            pixel: [u, 10.0],
            yaw_deg: 0.0,
            height: 0.05,
        };
        let field = |r: Result<AffordancePlan, ServiceError>| match r {
            Err(ServiceError::Validation { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(waypoints_to_plan(&[], &cam, 0.7, &g)), "waypoints");
        assert_eq!(field(waypoints_to_plan(&[wp(WaypointKind::Close, 3.0)], &cam, 0.7, &g)), "waypoints[0].kind");
        assert_eq!(
            field(waypoints_to_plan(&[wp(WaypointKind::Close, 3.0), wp(WaypointKind::Final, 500.0)], &cam, 0.7, &g)),
            "waypoints[1].pixel"
        );
        let plan = waypoints_to_plan(&[wp(WaypointKind::Close, 3.0), wp(WaypointKind::Final, 5.0)], &cam, 0.7, &g).unwrap();
        // the EE sits one tool length above the clicked fingertip point
        let tcp = plan.waypoints()[0].pose.compose(&g.tool_center());
        assert!((tcp.position.z - 0.75).abs() < 1e-12);
        assert!((plan.waypoints()[0].pose.position.z - 0.85).abs() < 1e-12);
    }
}
