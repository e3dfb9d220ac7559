//! Waypoint-following executor for affordance plans and the language-only
//! baseline that grasps objects at their bounding-box center.

use crate::extraction::{Action, AffordancePlan, WaypointKind};
use crate::geometry::{Pose, Vec3};
use crate::simenv::{check_success, Scene, ServoGains, TaskSpec, EXPERT_LIFT};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("affordance plan is empty")]
    EmptyPlan,
    #[error("no {0} in the scene")]
    TargetMissing(String),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gains: ServoGains,
    /// Height of the pre-pose above each waypoint (m).
    pub approach_height: f64,
    pub max_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gains: ServoGains::default(),
            approach_height: 0.10,
            max_steps: 300,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let g = &self.gains;
        let ok = [g.gain, g.max_rotation, g.position_tolerance, g.rotation_tolerance, self.approach_height]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && g.gain <= 1.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(PolicyError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    #[default]
    None,
    Timeout,
    MissedGrasp,
    InsufficientLift,
    /// Grasped, but the object or articulation did not end where the task
    /// needs it.
    Misplaced,
}

impl FailureTag {
    pub const ALL: [FailureTag; 5] = [
        FailureTag::None,
        FailureTag::Timeout,
        FailureTag::MissedGrasp,
        FailureTag::InsufficientLift,
        FailureTag::Misplaced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureTag::None => "none",
            FailureTag::Timeout => "timeout",
            FailureTag::MissedGrasp => "missed_grasp",
            FailureTag::InsufficientLift => "insufficient_lift",
            FailureTag::Misplaced => "misplaced",
        }
    }
}

impl fmt::Display for FailureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A waypoint pose reached within tolerance, recorded before its gripper command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub waypoint: usize,
    pub step: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub initial: Scene,
    pub actions: Vec<Action>,
    pub final_scene: Scene,
    pub success: bool,
    pub failure: FailureTag,
    pub visits: Vec<Visit>,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Approach,
    Converge,
    Actuate,
}

/// Stateful executor for one plan. The remaining waypoints can be swapped
/// mid-episode.
#[derive(Debug, Clone)]
pub struct PlanFollower {
    plan: AffordancePlan,
    index: usize,
    phase: Phase,
    aperture: f64,
    visits: Vec<Visit>,
}

impl PlanFollower {
    pub fn new(plan: AffordancePlan, aperture: f64) -> Result<Self, PolicyError> {
        if plan.is_empty() {
            return Err(PolicyError::EmptyPlan);
        }
        Ok(PlanFollower {
            plan,
            index: 0,
            phase: Phase::Approach,
            aperture,
            visits: Vec::new(),
        })
    }

    pub fn plan(&self) -> &AffordancePlan {
        &self.plan
    }

    /// Index of the waypoint being worked on.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_done(&self) -> bool {
        self.index >= self.plan.len()
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    /// Replace the waypoints from the current index on with those of `plan`
    /// at the same positions. When `plan` is too short the old remainder is
    /// kept. Returns whether anything changed.
    pub fn swap_remaining(&mut self, plan: &AffordancePlan) -> bool {
        if self.is_done() || plan.len() <= self.index {
            return false;
        }
        let wps = self.plan.waypoints()[..self.index]
            .iter()
            .chain(&plan.waypoints()[self.index..])
            .map(|w| (w.pose, w.kind));
        match AffordancePlan::from_poses(wps) {
            Ok(p) if p != self.plan => {
                self.plan = p;
                true
            }
            _ => false,
        }
    }

    /// Next action, or `None` once every waypoint has been handled.
    pub fn next_action(&mut self, scene: &Scene, cfg: &ControllerConfig, step: usize) -> Option<Action> {
        let g = &cfg.gains;
        let max_t = scene.config.max_translation;
        loop {
            let wp = *self.plan.waypoints().get(self.index)?;
            match self.phase {
                Phase::Approach => {
                    let above = Pose::from_parts(wp.pose.position + Vec3::new(0.0, 0.0, cfg.approach_height), wp.pose.orientation);
                    if g.reached(&scene.ee_pose, &above) {
                        self.phase = Phase::Converge;
                        continue;
                    }
                    return Some(g.action_toward(&scene.ee_pose, &above, max_t, self.aperture));
                }
                Phase::Converge => {
                    if g.reached(&scene.ee_pose, &wp.pose) {
                        self.visits.push(Visit {
                            waypoint: self.index,
                            step,
                            pose: scene.ee_pose,
                        });
                        self.phase = Phase::Actuate;
                        continue;
                    }
                    return Some(g.action_toward(&scene.ee_pose, &wp.pose, max_t, self.aperture));
                }
                Phase::Actuate => {
                    match wp.kind {
                        WaypointKind::Close => self.aperture = 0.0,
                        WaypointKind::Open => self.aperture = 1.0,
                        WaypointKind::Final => {}
                    }
                    if scene.gripper == self.aperture {
                        self.index += 1;
                        self.phase = Phase::Approach;
                        continue;
                    }
                    return Some(Action::hold(self.aperture));
                }
            }
        }
    }
}

/// What a step hook asks the executor to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    /// The hook changed the follower's plan; recompute the action.
    Replanned,
    Abort,
}

/// Run `follower` from `scene`. `on_step` is called before each step that
/// has an action to take, with the step index, the current scene and the
/// follower.
pub fn execute<F>(
    scene: &Scene,
    task: &TaskSpec,
    mut follower: PlanFollower,
    cfg: &ControllerConfig,
    mut on_step: F,
) -> Rollout
where
    F: FnMut(usize, &Scene, &mut PlanFollower) -> StepControl,
{
    let mut sim = scene.clone();
    let mut actions = Vec::new();
    let target = scene.find(&task.target).map(|o| o.id);
    let mut grasped = false;
    let mut timed_out = true;
    for t in 0..cfg.max_steps {
        let mut next = follower.next_action(&sim, cfg, t);
        if next.is_some() {
            match on_step(t, &sim, &mut follower) {
                StepControl::Continue => {}
                StepControl::Replanned => next = follower.next_action(&sim, cfg, t),
                StepControl::Abort => break,
            }
        }
        let Some(action) = next else {
            timed_out = false;
            break;
        };
        sim.apply(&action);
        grasped |= target.is_some() && sim.attached == target;
        actions.push(action);
    }
    if timed_out && follower.is_done() {
        timed_out = false;
    }
    let success = check_success(&sim, task);
    let failure = if success {
        FailureTag::None
    } else if timed_out {
        FailureTag::Timeout
    } else if !grasped {
        FailureTag::MissedGrasp
    } else if task.verb == crate::simenv::Verb::Pick {
        FailureTag::InsufficientLift
    } else {
        FailureTag::Misplaced
    };
    Rollout {
        initial: scene.clone(),
        actions,
        final_scene: sim,
        success,
        failure,
        visits: follower.visits,
    }
}

pub fn follow_plan(scene: &Scene, task: &TaskSpec, plan: &AffordancePlan, cfg: &ControllerConfig) -> Result<Rollout, PolicyError> {
    cfg.validate()?;
    let follower = PlanFollower::new(plan.clone(), scene.gripper)?;
    Ok(execute(scene, task, follower, cfg, |_, _, _| StepControl::Continue))
}

/// Grasp at the top center of the target's bounding box, then lift.
pub fn baseline_plan(scene: &Scene, task: &TaskSpec) -> Result<AffordancePlan, PolicyError> {
    let target = scene
        .find(&task.target)
        .ok_or_else(|| PolicyError::TargetMissing(task.target.clone()))?;
    let top = target.pose.position + Vec3::new(0.0, 0.0, target.half_extents.z);
    let grasp = scene.config.grasp_pose(&Pose::top_down(top, target.yaw()));
    let lifted = Pose::from_parts(grasp.position + Vec3::new(0.0, 0.0, EXPERT_LIFT), grasp.orientation);
    Ok(AffordancePlan::from_poses([(grasp, WaypointKind::Close), (lifted, WaypointKind::Final)]).expect("two ordered waypoints"))
}

pub fn baseline_language_policy(scene: &Scene, task: &TaskSpec, cfg: &ControllerConfig) -> Result<Rollout, PolicyError> {
    follow_plan(scene, task, &baseline_plan(scene, task)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{build_affordance_plan, ExtractionConfig};
    use crate::simenv::{generate_demo, spawn_scene, Variation};

    fn oracle_plan(scene: &Scene, task: &TaskSpec) -> AffordancePlan {
        build_affordance_plan(&generate_demo(scene, task).unwrap(), &ExtractionConfig::default()).unwrap()
    }

    #[test]
    fn oracle_pick_succeeds_and_visits_every_waypoint() {
        let task = TaskSpec::pick("kettle");
        let scene = spawn_scene(&task, 5, Variation::InDist).unwrap();
        let plan = oracle_plan(&scene, &task);
        let r = follow_plan(&scene, &task, &plan, &ControllerConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.failure, FailureTag::None);
        assert_eq!(r.visits.iter().map(|v| v.waypoint).collect::<Vec<_>>(), vec![0, 1]);
        for v in &r.visits {
            let wp = plan.waypoints()[v.waypoint].pose;
            assert!(v.pose.distance_to(&wp) <= 0.002 && v.pose.angle_to(&wp) <= 2f64.to_radians());
        }
        assert!(r.steps() < 150);
    }

    #[test]
    fn offset_close_pose_misses() {
        let task = TaskSpec::pick("kettle");
        let scene = spawn_scene(&task, 5, Variation::InDist).unwrap();
        let plan = oracle_plan(&scene, &task);
        let moved = plan.waypoints().iter().map(|w| {
            let mut p = w.pose;
            p.position.x += 0.05;
            (p, w.kind)
        });
        let r = follow_plan(&scene, &task, &AffordancePlan::from_poses(moved).unwrap(), &ControllerConfig::default()).unwrap();
        assert!(!r.success);
        assert_eq!(r.failure, FailureTag::MissedGrasp);
    }

    #[test]
    fn one_step_budget_times_out() {
        let task = TaskSpec::pick("box");
        let scene = spawn_scene(&task, 0, Variation::InDist).unwrap();
        let cfg = ControllerConfig { max_steps: 1, ..Default::default() };
        let r = follow_plan(&scene, &task, &oracle_plan(&scene, &task), &cfg).unwrap();
        assert_eq!(r.failure, FailureTag::Timeout);
        assert_eq!(r.steps(), 1);
        assert_eq!(r.success, check_success(&r.final_scene, &task));
    }

    #[test]
    fn empty_plan_is_rejected() {
        let task = TaskSpec::pick("box");
        let scene = spawn_scene(&task, 0, Variation::InDist).unwrap();
        assert_eq!(
            follow_plan(&scene, &task, &AffordancePlan::empty(), &ControllerConfig::default()).unwrap_err(),
            PolicyError::EmptyPlan
        );
    }

    #[test]
    fn short_lift_is_insufficient() {
        let task = TaskSpec::pick("dustpan");
        let scene = spawn_scene(&task, 2, Variation::InDist).unwrap();
        let plan = oracle_plan(&scene, &task);
        let grasp = plan.waypoints()[0].pose;
        let low = Pose::from_parts(grasp.position + Vec3::new(0.0, 0.0, 0.05), grasp.orientation);
        let plan = AffordancePlan::from_poses([(grasp, WaypointKind::Close), (low, WaypointKind::Final)]).unwrap();
        let r = follow_plan(&scene, &task, &plan, &ControllerConfig::default()).unwrap();
        assert_eq!(r.failure, FailureTag::InsufficientLift);
    }

    #[test]
    fn baseline_depends_on_where_the_part_is() {
        let cfg = ControllerConfig::default();
        for seed in 0..5 {
            let task = TaskSpec::pick("box");
            let scene = spawn_scene(&task, seed, Variation::InDist).unwrap();
            assert!(baseline_language_policy(&scene, &task, &cfg).unwrap().success);

            let task = TaskSpec::pick("dustpan");
            let scene = spawn_scene(&task, seed, Variation::InDist).unwrap();
            let r = baseline_language_policy(&scene, &task, &cfg).unwrap();
            assert_eq!(r.failure, FailureTag::MissedGrasp);
        }
        let task = TaskSpec::pick("apple");
        let scene = spawn_scene(&task, 0, Variation::InDist).unwrap();
        let absent = TaskSpec::pick(
            ["kettle", "dustpan", "pot", "box", "headphones"]
                .into_iter()
                .find(|c| scene.find(c).is_none())
                .unwrap(),
        );
        assert!(matches!(
            baseline_language_policy(&scene, &absent, &cfg),
            Err(PolicyError::TargetMissing(_))
        ));
    }

    #[test]
    fn oracle_plans_for_every_verb() {
        let cfg = ControllerConfig::default();
        for task in [
            TaskSpec::place("apple", "pot"),
            TaskSpec::place("peach", "plate"),
            TaskSpec::close("cubby"),
            TaskSpec::turn("faucet"),
        ] {
            for seed in 0..10 {
                let scene = spawn_scene(&task, seed, Variation::InDist).unwrap();
                let r = follow_plan(&scene, &task, &oracle_plan(&scene, &task), &cfg).unwrap();
                assert!(r.success, "{task} seed {seed}: {}", r.failure);
                assert_eq!(r.visits.len(), 3);
            }
        }
    }

    #[test]
    fn swap_keeps_completed_prefix() {
        let task = TaskSpec::pick("kettle");
        let scene = spawn_scene(&task, 5, Variation::InDist).unwrap();
        let plan = oracle_plan(&scene, &task);
        let mut f = PlanFollower::new(plan.clone(), 1.0).unwrap();
        f.index = 1;
        let other = AffordancePlan::from_poses([
            (Pose::identity(), WaypointKind::Close),
            (Pose::translation(0.5, 0.0, 1.0), WaypointKind::Final),
        ])
        .unwrap();
        assert!(f.swap_remaining(&other));
        assert_eq!(f.plan().waypoints()[0].pose, plan.waypoints()[0].pose);
        assert_eq!(f.plan().waypoints()[1].pose, other.waypoints()[1].pose);
        let short = AffordancePlan::from_poses([(Pose::identity(), WaypointKind::Final)]).unwrap();
        assert!(!f.swap_remaining(&short));
    }
}
