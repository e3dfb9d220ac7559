//! Synthetic training corpus: scripted robot demonstrations, augmented
//! images labeled by a simulated annotator, and web-proxy stubs.
//!
//! The annotator only sees the rendered image: it clicks each waypoint's
//! footprint on the table (integer pixels), reads the yaw to the nearest
//! degree and the height to the nearest millimeter, and the clicks are
//! lifted back to 3D through the same path the annotation service uses.

use crate::datasets::{
    export_annotations, save_trajectories, save_web_proxy, AugmentedImage, DatasetConfig, DatasetDir, DatasetError,
    WebKind, WebProxyRecord, ANNOTATIONS_FILE, IMAGES_DIR, TRAJECTORIES_FILE, WEB_PROXY_FILE,
};
use crate::extraction::{build_affordance_plan, AffordancePlan, ExtractionConfig, Trajectory};
use crate::geometry::Vec3;
use crate::service::{objects_to_annotations, waypoints_to_plan, ObjectPayload, WaypointPayload, DEFAULT_CAMERA};
use crate::simenv::{generate_demo, snapshot, spawn_scene, Scene, TaskSpec, Variation, CATEGORIES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

/// Seed offsets keep training scenes disjoint from evaluation seeds,
/// which start at zero.
pub const ROBOT_SEED_BASE: u64 = 2_000_000;
pub const AUG_SEED_BASE: u64 = 1_000_000;
pub const AUG_PER_TASK: usize = 75;
pub const SYNTHETIC_ANNOTATOR: &str = "synthetic";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("could not produce {wanted} samples for {task} within {tried} seeds")]
    Exhausted { task: String, wanted: usize, tried: u64 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("render: {0}")]
    Render(#[from] crate::render::RenderError),
}

/// Tasks with teleoperated-style robot demonstrations.
pub fn robot_tasks() -> Vec<TaskSpec> {
    ["apple", "peach", "bell_pepper", "box", "eggplant"].iter().map(|c| TaskSpec::pick(c)).collect()
}

/// Tasks covered only by annotated images.
pub fn aug_tasks() -> Vec<TaskSpec> {
    let mut t: Vec<TaskSpec> = ["dustpan", "kettle", "pot", "headphones"].iter().map(|c| TaskSpec::pick(c)).collect();
    t.extend([
        TaskSpec::place("apple", "pot"),
        TaskSpec::place("peach", "plate"),
        TaskSpec::place("bell_pepper", "basket"),
        TaskSpec::place("eggplant", "box"),
        TaskSpec::close("cubby"),
        TaskSpec::turn("faucet"),
    ]);
    t
}

/// Expert demonstrations, `per_task` per task, from consecutive seeds
/// (seeds whose scene cannot be solved are skipped).
pub fn robot_demos(tasks: &[TaskSpec], per_task: usize, seed_base: u64) -> Result<Vec<(u64, Trajectory)>, CorpusError> {
    let mut out = Vec::with_capacity(tasks.len() * per_task);
    for (ti, task) in tasks.iter().enumerate() {
        let mut got = 0;
        let start = seed_base + (ti as u64) * 100_000;
        let mut seed = start;
        while got < per_task {
            if seed - start > 20 * per_task as u64 + 100 {
                return Err(CorpusError::Exhausted {
                    task: task.language(),
                    wanted: per_task,
                    tried: seed - start,
                });
            }
            if let Ok(scene) = spawn_scene(task, seed, Variation::InDist) {
                if let Ok(t) = generate_demo(&scene, task) {
                    out.push((seed, t));
                    got += 1;
                }
            }
            seed += 1;
        }
    }
    Ok(out)
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn click(scene: &Scene, p: &Vec3) -> Option<[f64; 2]> {
    let footprint = Vec3::new(p.x, p.y, scene.table_height);
    let px = scene.camera.project_point(&footprint).ok()?;
    let c = [px.u.round(), px.v.round()];
    scene.camera.contains(crate::geometry::Pixel::new(c[0], c[1])).then_some(c)
}

/// What the simulated annotator would submit for `plan` drawn over `scene`.
/// `None` when a click would fall outside the image.
pub fn annotate(scene: &Scene, plan: &AffordancePlan) -> Option<(Vec<WaypointPayload>, Vec<ObjectPayload>)> {
    let tool = scene.config.tool_center();
    let waypoints = plan
        .waypoints()
        .iter()
        .map(|w| {
            let tcp = w.pose.compose(&tool);
            Some(WaypointPayload {
                kind: w.kind,
                pixel: click(scene, &tcp.position)?,
                yaw_deg: tcp.heading().to_degrees().round(),
                height: round_to(tcp.position.z - scene.table_height, 0.001),
            })
        })
        .collect::<Option<Vec<_>>>()?;
    let objects = scene
        .objects
        .iter()
        .map(|o| {
            let part = scene.camera.project_point(&o.part_world().position).ok()?;
            let part = [part.u.round(), part.v.round()];
            Some(ObjectPayload {
                category: o.category.clone(),
                pixel: click(scene, &o.pose.position)?,
                yaw_deg: o.yaw().to_degrees().round(),
                height: round_to(o.pose.position.z + o.half_extents.z - scene.table_height, 0.001),
                part_pixel: part,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    Some((waypoints, objects))
}

/// Annotated images: for each task, scenes from consecutive seeds with the
/// hindsight plan of an expert run clicked in by the simulated annotator.
/// Returns the seed of each image alongside the record.
pub fn aug_images(tasks: &[TaskSpec], per_task: usize, seed_base: u64) -> Result<Vec<(u64, AugmentedImage)>, CorpusError> {
    let extraction = ExtractionConfig::default();
    let mut out = Vec::with_capacity(tasks.len() * per_task);
    for (ti, task) in tasks.iter().enumerate() {
        let start = seed_base + (ti as u64) * 100_000;
        let mut seed = start;
        let mut got = 0;
        while got < per_task {
            if seed - start > 20 * per_task as u64 + 100 {
                return Err(CorpusError::Exhausted {
                    task: task.language(),
                    wanted: per_task,
                    tried: seed - start,
                });
            }
            let s = seed;
            seed += 1;
            let Ok(scene) = spawn_scene(task, s, Variation::InDist) else { continue };
            let Ok(demo) = generate_demo(&scene, task) else { continue };
            let Ok(plan) = build_affordance_plan(&demo, &extraction) else { continue };
            let Some((wps, objs)) = annotate(&scene, &plan) else { continue };
            let (Ok(plan), Ok(objects)) = (
                waypoints_to_plan(&wps, &scene.camera, scene.table_height, &scene.config.gripper),
                objects_to_annotations(&objs, &scene.camera, scene.table_height),
            ) else {
                continue;
            };
            out.push((
                s,
                AugmentedImage {
                    image_ref: format!("{IMAGES_DIR}/aug/aug_{:04}.png", out.len()),
                    language: task.language(),
                    plan: Some(plan),
                    objects,
                    camera: Some(DEFAULT_CAMERA.to_string()),
                    annotator: Some(SYNTHETIC_ANNOTATOR.to_string()),
                    timestamp: None,
                },
            ));
            got += 1;
        }
    }
    Ok(out)
}

/// The shipped augmented set: every aug task, [`AUG_PER_TASK`] each.
pub fn default_aug_images() -> Result<Vec<AugmentedImage>, CorpusError> {
    Ok(aug_images(&aug_tasks(), AUG_PER_TASK, AUG_SEED_BASE)?.into_iter().map(|(_, a)| a).collect())
}

/// Caption and detection stubs mentioning each category.
pub fn web_proxy(per_category: usize, seed: u64) -> Vec<WebProxyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in CATEGORIES {
        let name = c.name.replace('_', " ");
        for i in 0..per_category {
            let image_ref = format!("{IMAGES_DIR}/web/web_{:04}.png", out.len());
            let (kind, payload) = if i % 2 == 0 {
                (WebKind::Caption, format!("a photo of a {name} on a kitchen counter"))
            } else {
                let x0: u32 = rng.random_range(0..100);
                let y0: u32 = rng.random_range(0..80);
                let w: u32 = rng.random_range(10..60);
                let h: u32 = rng.random_range(10..40);
                (WebKind::Detection, format!("{name} [{x0}, {y0}, {}, {}]", x0 + w, y0 + h))
            };
            out.push(WebProxyRecord { image_ref, kind, payload });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub robot_per_task: usize,
    pub aug_per_task: usize,
    pub web_per_category: usize,
    /// Also write one PNG per robot frame (large); otherwise only the
    /// first frame of each trajectory is rendered.
    pub all_frames: bool,
    /// Leave this many aug images per task unannotated, for the
    /// annotation service to serve as pending work.
    pub pending_per_task: usize,
    pub seed: u64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            robot_per_task: 20,
            aug_per_task: AUG_PER_TASK,
            web_per_category: 4,
            all_frames: false,
            pending_per_task: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportSummary {
    pub trajectories: usize,
    pub aug: usize,
    pub pending: usize,
    pub web: usize,
    pub images: usize,
}

/// Write a complete dataset directory.
pub fn export_dataset(root: impl AsRef<Path>, opts: &ExportOptions) -> Result<ExportSummary, CorpusError> {
    let dir = DatasetDir::new(root.as_ref());
    dir.create()?;
    let _lock = dir.lock()?;
    let mut images = 0;
    let save = |scene: &Scene, rel: &str, images: &mut usize| -> Result<(), CorpusError> {
        let path = dir.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| DatasetError::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
        snapshot(scene).save_png(&path)?;
        *images += 1;
        Ok(())
    };

    let demos = robot_demos(&robot_tasks(), opts.robot_per_task, ROBOT_SEED_BASE + opts.seed)?;
    let mut trajectories = Vec::with_capacity(demos.len());
    for (i, (seed, mut t)) in demos.into_iter().enumerate() {
        let task = TaskSpec::parse(&t.language).expect("generated language parses");
        let mut scene = spawn_scene(&task, seed, Variation::InDist).expect("seed spawned before");
        for (k, f) in t.frames.iter_mut().enumerate() {
            f.image_ref = format!("{IMAGES_DIR}/robot/{i:04}/frame_{k:04}.png");
            if k == 0 || opts.all_frames {
                save(&scene, &f.image_ref, &mut images)?;
            }
            if let Some(a) = &f.action {
                scene.apply(a);
            }
        }
        trajectories.push(t);
    }
    save_trajectories(&trajectories, dir.path(TRAJECTORIES_FILE))?;

    let mut aug = Vec::new();
    let mut pending = 0;
    let per_task = opts.aug_per_task + opts.pending_per_task;
    let generated = aug_images(&aug_tasks(), per_task, AUG_SEED_BASE + opts.seed)?;
    for (i, (seed, mut rec)) in generated.into_iter().enumerate() {
        let task = TaskSpec::parse(&rec.language).expect("generated language parses");
        rec.image_ref = format!("{IMAGES_DIR}/aug/aug_{i:04}.png");
        save(&spawn_scene(&task, seed, Variation::InDist).expect("seed spawned before"), &rec.image_ref, &mut images)?;
        if i % per_task >= opts.aug_per_task {
            rec.plan = None;
            rec.objects.clear();
            rec.annotator = None;
            pending += 1;
        }
        aug.push(rec);
    }
    export_annotations(&aug, dir.path(ANNOTATIONS_FILE))?;

    let web = web_proxy(opts.web_per_category, opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5745_4230);
    for w in &web {
        let task = TaskSpec::pick(CATEGORIES[rng.random_range(0..CATEGORIES.len())].name);
        if let Ok(scene) = spawn_scene(&task, rng.random(), Variation::BackgroundShift) {
            save(&scene, &w.image_ref, &mut images)?;
        }
    }
    save_web_proxy(&web, dir.path(WEB_PROXY_FILE))?;

    let table_height = crate::simenv::DEFAULT_TABLE_HEIGHT;
    dir.write_config(&DatasetConfig {
        table_height,
        cameras: [(DEFAULT_CAMERA.to_string(), crate::simenv::default_camera(table_height))].into(),
    })?;
    Ok(ExportSummary {
        trajectories: trajectories.len(),
        aug: aug.len() - pending,
        pending,
        web: web.len(),
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotated_plans_reproject_within_a_pixel() {
        let task = TaskSpec::pick("kettle");
        let set = aug_images(&[task], 5, AUG_SEED_BASE).unwrap();
        assert_eq!(set.len(), 5);
        for (seed, rec) in &set {
            let scene = spawn_scene(&task_of(rec), *seed, Variation::InDist).unwrap();
            let demo = generate_demo(&scene, &task_of(rec)).unwrap();
            let truth = build_affordance_plan(&demo, &ExtractionConfig::default()).unwrap();
            let got = rec.plan.as_ref().unwrap();
            assert_eq!(got.kinds(), truth.kinds());
            let tool = scene.config.tool_center();
            for (a, b) in got.waypoints().iter().zip(truth.waypoints()) {
                let foot = |p: &crate::geometry::Pose| {
                    let t = p.compose(&tool).position;
                    scene.camera.project_point(&Vec3::new(t.x, t.y, scene.table_height)).unwrap()
                };
                let (pa, pb) = (foot(&a.pose), foot(&b.pose));
                assert!((pa.u - pb.u).abs() <= 0.5 + 1e-9 && (pa.v - pb.v).abs() <= 0.5 + 1e-9);
            }
        }
    }

    fn task_of(rec: &AugmentedImage) -> TaskSpec {
        TaskSpec::parse(&rec.language).unwrap()
    }

    #[test]
    fn export_writes_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ExportOptions {
            robot_per_task: 1,
            aug_per_task: 1,
            web_per_category: 1,
            all_frames: false,
            pending_per_task: 1,
            seed: 0,
        };
        let s = export_dataset(dir.path(), &opts).unwrap();
        assert_eq!(s.trajectories, 5);
        assert_eq!((s.aug, s.pending), (10, 10));
        let d = DatasetDir::new(dir.path());
        let trajs = d.trajectories().unwrap();
        assert!(dir.path().join(&trajs[0].frames[0].image_ref).exists());
        let anns = d.annotations().unwrap();
        assert_eq!(anns.iter().filter(|a| a.is_annotated()).count(), 10);
        assert!(anns.iter().all(|a| dir.path().join(&a.image_ref).exists()));
        assert_eq!(d.config().unwrap().cameras.len(), 1);
        assert!(!dir.path().join(crate::datasets::LOCK_FILE).exists());
        let closes = trajs
            .iter()
            .filter(|t| t.frames.windows(2).any(|w| w[0].gripper >= 0.5 && w[1].gripper < 0.5))
            .count();
        assert_eq!(closes, 5);
    }
}
