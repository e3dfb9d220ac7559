//! Hindsight affordance plans: key timesteps from gripper aperture and the
//! training records built on top of them.

use crate::geometry::{Pose, UNIT_NORM_TOL};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("trajectory has no actions")]
    NoActions,
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Commanded change of EE pose and gripper target for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub delta_position: [f64; 3],
    /// Unit quaternion (w, x, y, z), applied in the world frame.
    pub delta_orientation: [f64; 4],
    pub gripper_command: f64,
}

impl Action {
    /// No motion, gripper held at `aperture`.
    pub fn hold(aperture: f64) -> Self {
        Action {
            delta_position: [0.0; 3],
            delta_orientation: [1.0, 0.0, 0.0, 0.0],
            gripper_command: aperture,
        }
    }

    pub fn validate(&self) -> Result<(), ExtractionError> {
        let [w, x, y, z] = self.delta_orientation;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(ExtractionError::InvalidTrajectory(format!(
                "action quaternion norm {norm} is not unit"
            )));
        }
        if self.delta_position.iter().any(|c| !c.is_finite()) {
            return Err(ExtractionError::InvalidTrajectory("non-finite action delta".into()));
        }
        if !(0.0..=1.0).contains(&self.gripper_command) {
            return Err(ExtractionError::InvalidTrajectory(format!(
                "gripper command {} outside [0, 1]",
                self.gripper_command
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub image_ref: String,
    pub ee_pose: Pose,
    /// Normalized aperture, 1 = fully open.
    pub gripper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
}

/// Object seen in the first frame of a trajectory or in an annotated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub category: String,
    /// Pixel of the graspable part.
    pub part_pixel: [f64; 2],
    /// Object pose projected on the table plane (table height, yaw only).
    pub table_pose: Pose,
    /// Object height above the table (m).
    #[serde(default)]
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub language: String,
    pub frames: Vec<Frame>,
    /// Objects visible at the first frame, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectAnnotation>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        if self.frames.is_empty() {
            return Err(ExtractionError::EmptySequence);
        }
        for (i, f) in self.frames.iter().enumerate() {
            if !(0.0..=1.0).contains(&f.gripper) {
                return Err(ExtractionError::InvalidTrajectory(format!(
                    "frame {i}: gripper {} outside [0, 1]",
                    f.gripper
                )));
            }
            if let Some(a) = &f.action {
                a.validate()
                    .map_err(|e| ExtractionError::InvalidTrajectory(format!("frame {i}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn apertures(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.gripper).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperEvent {
    Close,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaypointKind {
    Close,
    Open,
    Final,
}

impl WaypointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WaypointKind::Close => "close",
            WaypointKind::Open => "open",
            WaypointKind::Final => "final",
        }
    }
}

impl From<GripperEvent> for WaypointKind {
    fn from(e: GripperEvent) -> Self {
        match e {
            GripperEvent::Close => WaypointKind::Close,
            GripperEvent::Open => WaypointKind::Open,
        }
    }
}

impl fmt::Display for WaypointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WaypointKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "close" => Ok(WaypointKind::Close),
            "open" => Ok(WaypointKind::Open),
            "final" => Ok(WaypointKind::Final),
            other => Err(format!("unknown waypoint kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pose: Pose,
    pub kind: WaypointKind,
    pub source_timestep: usize,
}

/// Ordered EE poses at key timesteps. Empty plans are allowed; a
/// non-empty plan always ends with a `final` waypoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Waypoint>", into = "Vec<Waypoint>")]
pub struct AffordancePlan {
    waypoints: Vec<Waypoint>,
}

impl TryFrom<Vec<Waypoint>> for AffordancePlan {
    type Error = ExtractionError;

    fn try_from(w: Vec<Waypoint>) -> Result<Self, Self::Error> {
        AffordancePlan::new(w)
    }
}

impl From<AffordancePlan> for Vec<Waypoint> {
    fn from(p: AffordancePlan) -> Self {
        p.waypoints
    }
}

impl AffordancePlan {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, ExtractionError> {
        for pair in waypoints.windows(2) {
            if pair[1].source_timestep <= pair[0].source_timestep {
                return Err(ExtractionError::InvalidPlan(format!(
                    "source timesteps not strictly increasing ({} then {})",
                    pair[0].source_timestep, pair[1].source_timestep
                )));
            }
        }
        if let Some((last, rest)) = waypoints.split_last() {
            if last.kind != WaypointKind::Final {
                return Err(ExtractionError::InvalidPlan("last waypoint must be final".into()));
            }
            if rest.iter().any(|w| w.kind == WaypointKind::Final) {
                return Err(ExtractionError::InvalidPlan("only the last waypoint may be final".into()));
            }
        }
        Ok(AffordancePlan { waypoints })
    }

    /// Plan whose waypoints are numbered by position, for plans that were
    /// not extracted from a trajectory (predicted or annotated).
    pub fn from_poses(items: impl IntoIterator<Item = (Pose, WaypointKind)>) -> Result<Self, ExtractionError> {
        AffordancePlan::new(
            items
                .into_iter()
                .enumerate()
                .map(|(i, (pose, kind))| Waypoint {
                    pose,
                    kind,
                    source_timestep: i,
                })
                .collect(),
        )
    }

    pub fn empty() -> Self {
        AffordancePlan::default()
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn kinds(&self) -> Vec<WaypointKind> {
        self.waypoints.iter().map(|w| w.kind).collect()
    }

    pub fn first_of(&self, kind: WaypointKind) -> Option<&Waypoint> {
        self.waypoints.iter().find(|w| w.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub alpha: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { alpha: DEFAULT_ALPHA }
    }
}

impl ExtractionConfig {
    pub fn new(alpha: f64) -> Result<Self, ExtractionError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ExtractionError::InvalidAlpha(alpha));
        }
        Ok(ExtractionConfig { alpha })
    }
}

/// Indices where the aperture crosses `alpha` strictly: `g[i-1] > α` and
/// `g[i] < α` is a close, the reverse an open. Touching α is not a crossing.
pub fn detect_key_timesteps(
    apertures: &[f64],
    cfg: &ExtractionConfig,
) -> Result<Vec<(usize, GripperEvent)>, ExtractionError> {
    if apertures.is_empty() {
        return Err(ExtractionError::EmptySequence);
    }
    let a = cfg.alpha;
    Ok(apertures
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            if w[0] > a && w[1] < a {
                Some((i + 1, GripperEvent::Close))
            } else if w[0] < a && w[1] > a {
                Some((i + 1, GripperEvent::Open))
            } else {
                None
            }
        })
        .collect())
}

pub fn build_affordance_plan(traj: &Trajectory, cfg: &ExtractionConfig) -> Result<AffordancePlan, ExtractionError> {
    let events = detect_key_timesteps(&traj.apertures(), cfg)?;
    let last = traj.frames.len() - 1;
    let mut waypoints: Vec<Waypoint> = events
        .into_iter()
        .filter(|&(i, _)| i != last)
        .map(|(i, e)| Waypoint {
            pose: traj.frames[i].ee_pose,
            kind: e.into(),
            source_timestep: i,
        })
        .collect();
    waypoints.push(Waypoint {
        pose: traj.frames[last].ee_pose,
        kind: WaypointKind::Final,
        source_timestep: last,
    });
    AffordancePlan::new(waypoints)
}

/// `(o, l, q)` tuple for training the plan predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRecord {
    pub image_ref: String,
    pub language: String,
    pub plan: AffordancePlan,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectAnnotation>,
}

pub fn make_predictor_record(traj: &Trajectory, cfg: &ExtractionConfig) -> Result<PredictorRecord, ExtractionError> {
    let plan = build_affordance_plan(traj, cfg)?;
    Ok(PredictorRecord {
        image_ref: traj.frames[0].image_ref.clone(),
        language: traj.language.clone(),
        plan,
        objects: traj.objects.clone(),
    })
}

/// One behavior-cloning sample, conditioned on the whole trajectory's plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub frame_index: usize,
    pub language: String,
    pub plan: AffordancePlan,
    pub action: Action,
}

pub fn make_policy_records(traj: &Trajectory, cfg: &ExtractionConfig) -> Result<Vec<PolicyRecord>, ExtractionError> {
    let plan = build_affordance_plan(traj, cfg)?;
    let records: Vec<_> = traj
        .frames
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            f.action.map(|action| PolicyRecord {
                frame_index: i,
                language: traj.language.clone(),
                plan: plan.clone(),
                action,
            })
        })
        .collect();
    if records.is_empty() {
        return Err(ExtractionError::NoActions);
    }
    Ok(records)
}
