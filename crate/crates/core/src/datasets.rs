//! Dataset files and the robot / web-proxy / augmented-image training mixture.
//!
//! Every record file is JSON Lines: one record per line, floats written in
//! shortest round-trip form so poses survive save/load bit-exactly.

use crate::extraction::{AffordancePlan, ObjectAnnotation, Trajectory};
use crate::geometry::CameraModel;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const WEB_PROXY_FILE: &str = "web_proxy.jsonl";
pub const CAMERAS_FILE: &str = "cameras.toml";
pub const IMAGES_DIR: &str = "images";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("every included source is empty")]
    AllSourcesEmpty,
    #[error("included source {0} is empty")]
    EmptySource(Source),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("dataset directory {0} is locked by another writer")]
    Locked(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Image gathered without robot actions, optionally annotated with a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedImage {
    pub image_ref: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<AffordancePlan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectAnnotation>,
    /// Key into the dataset camera config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    /// Unix seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl AugmentedImage {
    pub fn is_annotated(&self) -> bool {
        self.plan.as_ref().is_some_and(|p| !p.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WebKind {
    Caption,
    Detection,
}

/// Synthetic stand-in for a captioning or detection web example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebProxyRecord {
    pub image_ref: String,
    pub kind: WebKind,
    pub payload: String,
}

impl WebProxyRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.payload.trim().is_empty() {
            Err("empty payload".into())
        } else {
            Ok(())
        }
    }
}

/// Write one JSON record per line.
pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> Result<(), std::io::Error> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Read JSON Lines, skipping blank lines. `check` runs on every record;
/// failures report the 1-based line number.
pub fn read_jsonl<T, R, F>(r: R, check: F) -> Result<Vec<T>, DatasetError>
where
    T: DeserializeOwned,
    R: Read,
    F: Fn(&T) -> Result<(), String>,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        check(&rec).map_err(|message| DatasetError::Schema { line: i + 1, message })?;
        out.push(rec);
    }
    Ok(out)
}

fn load_file<T: DeserializeOwned>(path: &Path, check: impl Fn(&T) -> Result<(), String>) -> Result<Vec<T>, DatasetError> {
    read_jsonl(File::open(path).map_err(io_err(path))?, check)
}

fn save_file<T: Serialize>(records: &[T], path: &Path) -> Result<(), DatasetError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_jsonl(records, BufWriter::new(f)).map_err(io_err(path))
}

fn check_trajectory(t: &Trajectory) -> Result<(), String> {
    t.validate().map_err(|e| e.to_string())
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, DatasetError> {
    load_file(path.as_ref(), check_trajectory)
}

pub fn save_trajectories(trajs: &[Trajectory], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    save_file(trajs, path.as_ref())
}

pub fn import_annotations(path: impl AsRef<Path>) -> Result<Vec<AugmentedImage>, DatasetError> {
    load_file(path.as_ref(), |_: &AugmentedImage| Ok(()))
}

pub fn read_annotations<R: Read>(r: R) -> Result<Vec<AugmentedImage>, DatasetError> {
    read_jsonl(r, |_: &AugmentedImage| Ok(()))
}

pub fn export_annotations(images: &[AugmentedImage], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    save_file(images, path.as_ref())
}

pub fn load_web_proxy(path: impl AsRef<Path>) -> Result<Vec<WebProxyRecord>, DatasetError> {
    load_file(path.as_ref(), WebProxyRecord::validate)
}

pub fn save_web_proxy(records: &[WebProxyRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    save_file(records, path.as_ref())
}

/// Camera and table parameters shared by a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub table_height: f64,
    #[serde(default)]
    pub cameras: BTreeMap<String, CameraModel>,
}

impl DatasetConfig {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        let cfg: DatasetConfig = toml::from_str(text).map_err(|e| DatasetError::Config(e.to_string()))?;
        for (name, cam) in &cfg.cameras {
            cam.validate().map_err(|e| DatasetError::Config(format!("camera {name}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }
}

/// Exclusive writer lock on a dataset directory; released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = dir.as_ref().join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(DatasetError::Locked(dir.as_ref().to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A dataset directory: record files, `images/` and `cameras.toml`.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
}

impl DatasetDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetDir { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn create(&self) -> Result<(), DatasetError> {
        let images = self.path(IMAGES_DIR);
        fs::create_dir_all(&images).map_err(io_err(&images))
    }

    pub fn lock(&self) -> Result<DirLock, DatasetError> {
        DirLock::acquire(&self.root)
    }

    /// Missing record files read as empty.
    pub fn trajectories(&self) -> Result<Vec<Trajectory>, DatasetError> {
        let p = self.path(TRAJECTORIES_FILE);
        if p.exists() {
            load_trajectories(p)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn annotations(&self) -> Result<Vec<AugmentedImage>, DatasetError> {
        let p = self.path(ANNOTATIONS_FILE);
        if p.exists() {
            import_annotations(p)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn web_proxy(&self) -> Result<Vec<WebProxyRecord>, DatasetError> {
        let p = self.path(WEB_PROXY_FILE);
        if p.exists() {
            load_web_proxy(p)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn config(&self) -> Result<DatasetConfig, DatasetError> {
        let p = self.path(CAMERAS_FILE);
        DatasetConfig::from_toml(&fs::read_to_string(&p).map_err(io_err(&p))?)
    }

    pub fn write_config(&self, cfg: &DatasetConfig) -> Result<(), DatasetError> {
        let p = self.path(CAMERAS_FILE);
        fs::write(&p, cfg.to_toml()).map_err(io_err(&p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Robot,
    Web,
    Aug,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Robot, Source::Web, Source::Aug];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Robot => "robot",
            Source::Web => "web",
            Source::Aug => "aug",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub include_robot: bool,
    pub include_web: bool,
    pub include_aug: bool,
    /// Sampling weights for robot, web and aug. Excluded sources are ignored.
    pub weights: [f64; 3],
    /// Records to draw. Defaults to the total size of the included sources.
    #[serde(default)]
    pub total: Option<usize>,
    /// Tolerate included sources that have no records.
    #[serde(default)]
    pub allow_empty: bool,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig::full()
    }
}

impl MixtureConfig {
    pub fn full() -> Self {
        MixtureConfig {
            include_robot: true,
            include_web: true,
            include_aug: true,
            weights: [1.0, 1.0, 1.0],
            total: None,
            allow_empty: false,
        }
    }

    pub fn no_aug() -> Self {
        MixtureConfig {
            include_aug: false,
            ..Self::full()
        }
    }

    pub fn no_web() -> Self {
        MixtureConfig {
            include_web: false,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "no_aug" => Some(Self::no_aug()),
            "no_web" => Some(Self::no_web()),
            _ => None,
        }
    }

    pub fn includes(&self, s: Source) -> bool {
        match s {
            Source::Robot => self.include_robot,
            Source::Web => self.include_web,
            Source::Aug => self.include_aug,
        }
    }

    pub fn weight(&self, s: Source) -> f64 {
        if self.includes(s) {
            self.weights[s as usize]
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !Source::ALL.iter().any(|s| self.includes(*s)) {
            return Err(DatasetError::InvalidMixture("no source included".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DatasetError::InvalidMixture("weights must be finite and non-negative".into()));
        }
        if Source::ALL.iter().all(|s| self.weight(*s) == 0.0) {
            return Err(DatasetError::InvalidMixture("all included weights are zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", content = "record", rename_all = "lowercase")]
pub enum TrainingRecord {
    Robot(Trajectory),
    Web(WebProxyRecord),
    Aug(AugmentedImage),
}

impl TrainingRecord {
    pub fn source(&self) -> Source {
        match self {
            TrainingRecord::Robot(_) => Source::Robot,
            TrainingRecord::Web(_) => Source::Web,
            TrainingRecord::Aug(_) => Source::Aug,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceCounts {
    pub robot: usize,
    pub web: usize,
    pub aug: usize,
}

impl SourceCounts {
    pub fn get(&self, s: Source) -> usize {
        match s {
            Source::Robot => self.robot,
            Source::Web => self.web,
            Source::Aug => self.aug,
        }
    }

    fn bump(&mut self, s: Source) {
        match s {
            Source::Robot => self.robot += 1,
            Source::Web => self.web += 1,
            Source::Aug => self.aug += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.robot + self.web + self.aug
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    records: Vec<TrainingRecord>,
    counts: SourceCounts,
}

impl TrainingSet {
    pub fn from_records(records: Vec<TrainingRecord>) -> Self {
        let mut counts = SourceCounts::default();
        for r in &records {
            counts.bump(r.source());
        }
        TrainingSet { records, counts }
    }

    pub fn records(&self) -> &[TrainingRecord] {
        &self.records
    }

    pub fn counts(&self) -> SourceCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Draw a training set: each draw picks a source in proportion to its
/// weight, then a record of that source uniformly, with replacement.
pub fn assemble_mixture(
    robot: &[Trajectory],
    web: &[WebProxyRecord],
    aug: &[AugmentedImage],
    cfg: &MixtureConfig,
    seed: u64,
) -> Result<TrainingSet, DatasetError> {
    cfg.validate()?;
    let sizes = [robot.len(), web.len(), aug.len()];
    for s in Source::ALL {
        if cfg.includes(s) && sizes[s as usize] == 0 && !cfg.allow_empty {
            return Err(DatasetError::EmptySource(s));
        }
    }
    let live: Vec<Source> = Source::ALL
        .into_iter()
        .filter(|s| cfg.weight(*s) > 0.0 && sizes[*s as usize] > 0)
        .collect();
    if live.is_empty() {
        return Err(DatasetError::AllSourcesEmpty);
    }
    let total = cfg
        .total
        .unwrap_or_else(|| Source::ALL.iter().filter(|s| cfg.includes(**s)).map(|s| sizes[*s as usize]).sum());
    let pick = WeightedIndex::new(live.iter().map(|s| cfg.weight(*s))).expect("positive weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..total)
        .map(|_| {
            let s = live[pick.sample(&mut rng)];
            let i = rng.random_range(0..sizes[s as usize]);
            match s {
                Source::Robot => TrainingRecord::Robot(robot[i].clone()),
                Source::Web => TrainingRecord::Web(web[i].clone()),
                Source::Aug => TrainingRecord::Aug(aug[i].clone()),
            }
        })
        .collect();
    Ok(TrainingSet::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{Action, Frame, WaypointKind};
    use crate::geometry::{Pose, Vec3};
    use proptest::prelude::*;
    use rand::Rng;

    fn traj(seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..20);
        Trajectory {
            language: format!("pick the thing {seed}"),
            frames: (0..n)
                .map(|i| Frame {
                    image_ref: format!("images/{seed}/frame_{i:04}.png"),
                    ee_pose: Pose::from_rpy(
                        Vec3::new(rng.random(), rng.random::<f64>() - 0.5, rng.random()),
                        rng.random(),
                        rng.random(),
                        rng.random(),
                    ),
                    gripper: rng.random(),
                    action: (i + 1 < n).then(|| Action {
                        delta_position: [rng.random(), rng.random(), 1.0 / 3.0],
                        delta_orientation: [1.0, 0.0, 0.0, 0.0],
                        gripper_command: rng.random(),
                    }),
                })
                .collect(),
            objects: vec![],
        }
    }

    fn aug(i: usize) -> AugmentedImage {
        AugmentedImage {
            image_ref: format!("aug/{i}.png"),
            language: "pick the kettle".into(),
            plan: Some(
                AffordancePlan::from_poses([
                    (Pose::top_down(Vec3::new(0.5, 0.1 * i as f64, 0.8), 0.3), WaypointKind::Close),
                    (Pose::top_down(Vec3::new(0.5, 0.1, 1.0), 0.3), WaypointKind::Final),
                ])
                .unwrap(),
            ),
            objects: vec![],
            camera: Some("default".into()),
            annotator: Some("ann".into()),
            timestamp: Some(1_700_000_000 + i as u64),
        }
    }

    fn web(i: usize) -> WebProxyRecord {
        WebProxyRecord {
            image_ref: format!("web/{i}.png"),
            kind: WebKind::Caption,
            payload: format!("a photo of object {i}"),
        }
    }

    #[test]
    fn trajectories_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAJECTORIES_FILE);
        let trajs: Vec<_> = (0..100).map(traj).collect();
        save_trajectories(&trajs, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let back = load_trajectories(&path).unwrap();
        assert_eq!(back, trajs);
        save_trajectories(&back, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn empty_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_trajectories(&path).unwrap().is_empty());
        assert!(import_annotations(&path).unwrap().is_empty());

        let good = serde_json::to_string(&traj(1)).unwrap();
        fs::write(&path, format!("{good}\n{{\"language\":\"x\",\"frames\":[{{\"gripper\":0.5}}]}}\n")).unwrap();
        match load_trajectories(&path) {
            Err(DatasetError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_gripper = good.replacen("\"gripper\":", "\"gripper\":7.0,\"x\":", 1);
        fs::write(&path, format!("\n{bad_gripper}\n")).unwrap();
        assert!(matches!(load_trajectories(&path), Err(DatasetError::Schema { line: 2, .. })));
        assert!(matches!(load_trajectories(dir.path().join("missing")), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn annotations_and_web_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a: Vec<_> = (0..20).map(aug).collect();
        let p = dir.path().join(ANNOTATIONS_FILE);
        export_annotations(&a, &p).unwrap();
        assert_eq!(import_annotations(&p).unwrap(), a);
        let w: Vec<_> = (0..20).map(web).collect();
        let p = dir.path().join(WEB_PROXY_FILE);
        save_web_proxy(&w, &p).unwrap();
        assert_eq!(load_web_proxy(&p).unwrap(), w);
        fs::write(&p, "{\"image_ref\":\"a\",\"kind\":\"caption\",\"payload\":\" \"}\n").unwrap();
        assert!(matches!(load_web_proxy(&p), Err(DatasetError::Schema { line: 1, .. })));
    }

    #[test]
    fn invalid_plan_in_annotation_is_a_schema_error() {
        let mut line = serde_json::to_value(aug(0)).unwrap();
        line["plan"][1]["kind"] = "close".into();
        let text = format!("{}\n", line);
        assert!(matches!(read_annotations(text.as_bytes()), Err(DatasetError::Schema { line: 1, .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetDir::new(dir.path());
        let lock = ds.lock().unwrap();
        assert!(matches!(ds.lock(), Err(DatasetError::Locked(_))));
        drop(lock);
        ds.lock().unwrap();
    }

    #[test]
    fn config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetDir::new(dir.path());
        let cfg = DatasetConfig {
            table_height: 0.7,
            cameras: [("default".to_string(), crate::simenv::default_camera(0.7))].into(),
        };
        ds.write_config(&cfg).unwrap();
        assert_eq!(ds.config().unwrap(), cfg);
        assert!(DatasetConfig::from_toml("table_height = 0.7\n[cameras.bad]\nfx = -1.0").is_err());
    }

    fn sources() -> (Vec<Trajectory>, Vec<WebProxyRecord>, Vec<AugmentedImage>) {
        ((0..10).map(traj).collect(), (0..30).map(web).collect(), (0..20).map(aug).collect())
    }

    #[test]
    fn mixture_ablations_exclude_sources() {
        let (r, w, a) = sources();
        let full = assemble_mixture(&r, &w, &a, &MixtureConfig::full(), 3).unwrap();
        assert_eq!(full, assemble_mixture(&r, &w, &a, &MixtureConfig::full(), 3).unwrap());
        assert_eq!(full.len(), 60);
        assert!(Source::ALL.iter().all(|s| full.counts().get(*s) > 0));

        let no_aug = assemble_mixture(&r, &w, &a, &MixtureConfig::no_aug(), 3).unwrap();
        assert_eq!(no_aug.counts().aug, 0);
        assert!(no_aug.records().iter().all(|r| r.source() != Source::Aug));
        let no_web = assemble_mixture(&r, &w, &a, &MixtureConfig::no_web(), 3).unwrap();
        assert_eq!(no_web.counts().web, 0);
        assert_eq!(no_web.len(), 30);
    }

    #[test]
    fn mixture_errors() {
        let (r, w, _) = sources();
        assert!(matches!(
            assemble_mixture(&r, &w, &[], &MixtureConfig::full(), 0),
            Err(DatasetError::EmptySource(Source::Aug))
        ));
        let tolerant = MixtureConfig {
            allow_empty: true,
            ..MixtureConfig::full()
        };
        assert_eq!(assemble_mixture(&r, &w, &[], &tolerant, 0).unwrap().counts().aug, 0);
        assert!(matches!(
            assemble_mixture(&[], &[], &[], &tolerant, 0),
            Err(DatasetError::AllSourcesEmpty)
        ));
        let none = MixtureConfig {
            include_robot: false,
            include_web: false,
            include_aug: false,
            ..MixtureConfig::full()
        };
        assert!(matches!(none.validate(), Err(DatasetError::InvalidMixture(_))));
    }

    #[test]
    fn weights_steer_the_draw() {
        let (r, w, a) = sources();
        let cfg = MixtureConfig {
            weights: [0.0, 1.0, 3.0],
            total: Some(4000),
            ..MixtureConfig::full()
        };
        let set = assemble_mixture(&r, &w, &a, &cfg, 9).unwrap();
        let c = set.counts();
        assert_eq!(c.robot, 0);
        let frac = c.aug as f64 / c.total() as f64;
        assert!((frac - 0.75).abs() < 0.03, "{frac}");
    }

    proptest! {
        #[test]
        fn counts_match_tags(seed in any::<u64>(), inc in 1u8..8, total in 0usize..200) {
            let (r, w, a) = sources();
            let cfg = MixtureConfig {
                include_robot: inc & 1 != 0,
                include_web: inc & 2 != 0,
                include_aug: inc & 4 != 0,
                total: Some(total),
                ..MixtureConfig::full()
            };
            let set = assemble_mixture(&r, &w, &a, &cfg, seed).unwrap();
            prop_assert_eq!(set.len(), total);
            for s in Source::ALL {
                let tagged = set.records().iter().filter(|r| r.source() == s).count();
                prop_assert_eq!(tagged, set.counts().get(s));
                if !cfg.includes(s) {
                    prop_assert_eq!(tagged, 0);
                }
            }
        }
    }
}
