//! Episode runner (plan source, optional fixed-interval replanning,
//! execution) and the benchmark harness that produces success tables.

use crate::extraction::{build_affordance_plan, AffordancePlan, ExtractionConfig};
use crate::policy::{baseline_plan, execute, ControllerConfig, FailureTag, PlanFollower, PolicyError, Rollout, StepControl};
use crate::predictor::{observe, predict, PredictError, PredictorModel};
use crate::render::{overlay, Image};
use crate::simenv::{generate_demo, snapshot, spawn_scene, Scene, SimError, TaskSpec, Variation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("predictor source selected but no model loaded")]
    PredictorUnavailable,
    #[error("no human affordance within {0:?}")]
    HumanTimeout(Duration),
    #[error("human source selected but no channel attached")]
    HumanUnavailable,
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("suite: {0}")]
    Suite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    /// Plan extracted from a scripted demonstration of the same scene.
    Oracle,
    Predictor,
    Human,
    /// Top-center grasp of the named object, no affordance plan.
    Baseline,
}

impl PlanSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanSource::Oracle => "oracle",
            PlanSource::Predictor => "predictor",
            PlanSource::Human => "human",
            PlanSource::Baseline => "baseline",
        }
    }
}

impl fmt::Display for PlanSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(PlanSource::Oracle),
            "predictor" => Ok(PlanSource::Predictor),
            "human" => Ok(PlanSource::Human),
            "baseline" => Ok(PlanSource::Baseline),
            _ => Err(format!("unknown plan source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replan {
    #[default]
    None,
    /// Query the source again every `k` steps.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task: TaskSpec,
    pub seed: u64,
    pub variation: Variation,
    pub source: PlanSource,
    pub replan: Replan,
    pub controller: ControllerConfig,
    /// Steps per second when a human is in the loop.
    pub pacing_hz: f64,
    pub human_timeout: Duration,
}

impl EpisodeConfig {
    pub fn new(task: TaskSpec, seed: u64, source: PlanSource) -> Self {
        EpisodeConfig {
            task,
            seed,
            variation: Variation::InDist,
            source,
            replan: Replan::None,
            controller: ControllerConfig::default(),
            pacing_hz: 10.0,
            human_timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        self.task.validate()?;
        self.controller.validate()?;
        if self.replan == Replan::Fixed(0) {
            return Err(OrchestratorError::InvalidConfig("replan interval must be at least 1".into()));
        }
        if !(self.pacing_hz.is_finite() && self.pacing_hz > 0.0) {
            return Err(OrchestratorError::InvalidConfig("pacing must be positive".into()));
        }
        Ok(())
    }
}

/// A person providing plans, typically through the annotation service.
pub trait HumanChannel: Send + Sync {
    /// Block until a plan arrives for this scene or `timeout` passes.
    fn request_plan(&self, scene: &Scene, step: usize, timeout: Duration) -> Option<AffordancePlan>;

    /// Called after every executed step.
    fn on_step(&self, _step: usize, _scene: &Scene, _plan: &AffordancePlan) {}
}

/// What plan sources can draw on.
#[derive(Clone, Copy, Default)]
pub struct Providers<'a> {
    pub model: Option<&'a PredictorModel>,
    pub human: Option<&'a dyn HumanChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub step: usize,
    /// The plan came from a fallback template.
    pub fallback: bool,
    /// The remaining waypoints were replaced.
    pub swapped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub config: EpisodeConfig,
    pub initial_plan: AffordancePlan,
    pub final_plan: AffordancePlan,
    pub rollout: Rollout,
    /// Initial query followed by one event per replan.
    pub provenance: Vec<PlanEvent>,
}

impl EpisodeResult {
    pub fn replans(&self) -> usize {
        self.provenance.len() - 1
    }
}

struct Planner<'a> {
    source: PlanSource,
    task: &'a TaskSpec,
    providers: Providers<'a>,
    oracle: Option<AffordancePlan>,
    timeout: Duration,
}

impl Planner<'_> {
    /// Returns the plan and whether it is a fallback.
    fn plan(&mut self, scene: &Scene, step: usize) -> Result<(AffordancePlan, bool), OrchestratorError> {
        match self.source {
            PlanSource::Oracle => {
                if self.oracle.is_none() {
                    let demo = generate_demo(scene, self.task)?;
                    let plan = build_affordance_plan(&demo, &ExtractionConfig::new(scene.config.alpha).expect("alpha"))
                        .expect("expert demos contain gripper events");
                    self.oracle = Some(plan);
                }
                Ok((self.oracle.clone().expect("set"), false))
            }
            PlanSource::Predictor => {
                let model = self.providers.model.ok_or(OrchestratorError::PredictorUnavailable)?;
                let p = predict(model, &self.task.language(), &observe(scene))?;
                Ok((p.plan, p.fallback))
            }
            PlanSource::Baseline => Ok((baseline_plan(scene, self.task)?, false)),
            PlanSource::Human => {
                let human = self.providers.human.ok_or(OrchestratorError::HumanUnavailable)?;
                human
                    .request_plan(scene, step, self.timeout)
                    .map(|p| (p, false))
                    .ok_or(OrchestratorError::HumanTimeout(self.timeout))
            }
        }
    }
}

/// Spawn the scene, query the plan source, then execute. With
/// `Replan::Fixed(k)` the source is queried again before steps `k, 2k, ...`
/// and the not-yet-reached waypoints are replaced. A failed re-query keeps
/// the current plan, except for a human timeout, which aborts.
pub fn run_episode(cfg: &EpisodeConfig, providers: Providers) -> Result<EpisodeResult, OrchestratorError> {
    cfg.validate()?;
    let scene = spawn_scene(&cfg.task, cfg.seed, cfg.variation)?;
    run_episode_in(&scene, cfg, providers)
}

/// As [`run_episode`] on an already spawned scene.
pub fn run_episode_in(scene: &Scene, cfg: &EpisodeConfig, providers: Providers) -> Result<EpisodeResult, OrchestratorError> {
    let mut planner = Planner {
        source: cfg.source,
        task: &cfg.task,
        providers,
        oracle: None,
        timeout: cfg.human_timeout,
    };
    let (initial_plan, fallback) = planner.plan(scene, 0)?;
    let mut provenance = vec![PlanEvent {
        step: 0,
        fallback,
        swapped: false,
        error: None,
    }];
    let follower = PlanFollower::new(initial_plan.clone(), scene.gripper)?;
    let paced = cfg.source == PlanSource::Human;
    let tick = Duration::from_secs_f64(1.0 / cfg.pacing_hz);
    let mut abort: Option<OrchestratorError> = None;
    let mut final_plan = initial_plan.clone();
    let rollout = execute(scene, &cfg.task, follower, &cfg.controller, |t, sim, follower| {
        if paced {
            if let Some(h) = providers.human {
                if t > 0 {
                    h.on_step(t, sim, follower.plan());
                }
            }
            std::thread::sleep(tick);
        }
        let mut control = StepControl::Continue;
        if let Replan::Fixed(k) = cfg.replan {
            if t > 0 && t % k == 0 {
                let mut event = PlanEvent {
                    step: t,
                    fallback: false,
                    swapped: false,
                    error: None,
                };
                match planner.plan(sim, t) {
                    Ok((plan, fb)) => {
                        event.fallback = fb;
                        event.swapped = follower.swap_remaining(&plan);
                        if event.swapped {
                            control = StepControl::Replanned;
                        }
                    }
                    Err(e @ OrchestratorError::HumanTimeout(_)) => {
                        abort = Some(e);
                        control = StepControl::Abort;
                    }
                    Err(e) => event.error = Some(e.to_string()),
                }
                provenance.push(event);
            }
        }
        final_plan = follower.plan().clone();
        control
    });
    if let Some(e) = abort {
        return Err(e);
    }
    if let Some(h) = providers.human {
        if paced {
            h.on_step(rollout.steps(), &rollout.final_scene, &final_plan);
        }
    }
    Ok(EpisodeResult {
        config: cfg.clone(),
        initial_plan,
        final_plan,
        rollout,
        provenance,
    })
}

/// Scene snapshot with the plan drawn over it.
pub fn render_observation(scene: &Scene, plan: &AffordancePlan) -> Image {
    let img = snapshot(scene);
    overlay(&img, &scene.camera, plan, &scene.config.gripper)
        .map(|o| o.image)
        .unwrap_or(img)
}

/// Five grasping tasks on objects with handles or off-center parts, plus a box.
pub fn grasping_suite() -> Vec<TaskSpec> {
    ["kettle", "dustpan", "pot", "box", "headphones"]
        .into_iter()
        .map(TaskSpec::pick)
        .collect()
}

/// Place and articulation tasks.
pub fn beyond_grasping_suite() -> Vec<TaskSpec> {
    vec![
        TaskSpec::place("apple", "pot"),
        TaskSpec::place("peach", "plate"),
        TaskSpec::place("bell_pepper", "basket"),
        TaskSpec::place("eggplant", "box"),
        TaskSpec::close("cubby"),
        TaskSpec::turn("faucet"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub name: String,
    /// Task language, one entry per row.
    pub tasks: Vec<String>,
    pub sources: Vec<PlanSource>,
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variation")]
    pub variation: Variation,
    #[serde(default)]
    pub replan: Option<usize>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Worker threads; defaults to the rayon pool size.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_variation() -> Variation {
    Variation::InDist
}

impl SuiteConfig {
    pub fn builtin(name: &str, sources: Vec<PlanSource>, episodes: usize) -> Option<Self> {
        let tasks = match name {
            "grasping" => grasping_suite(),
            "beyond" => beyond_grasping_suite(),
            "all" => grasping_suite().into_iter().chain(beyond_grasping_suite()).collect(),
            _ => return None,
        };
        Some(SuiteConfig {
            name: name.into(),
            tasks: tasks.iter().map(TaskSpec::language).collect(),
            sources,
            episodes,
            seed: 0,
            variation: Variation::InDist,
            replan: None,
            max_steps: None,
            workers: None,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        toml::from_str(text).map_err(|e| OrchestratorError::Suite(e.to_string()))
    }

    pub fn task_specs(&self) -> Result<Vec<TaskSpec>, OrchestratorError> {
        self.tasks.iter().map(|t| TaskSpec::parse(t).map_err(OrchestratorError::from)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub source: PlanSource,
    pub successes: usize,
    pub episodes: usize,
    /// Failure tags of the episodes that ran; episodes that could not start
    /// are counted in `errors`.
    pub failures: BTreeMap<FailureTag, usize>,
    pub errors: usize,
}

impl ReportRow {
    pub fn fraction(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    pub variation: Variation,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    task: &'a str,
    source: &'a str,
    successes: usize,
    episodes: usize,
    fraction: f64,
}

impl EvalReport {
    pub fn sources(&self) -> Vec<PlanSource> {
        let mut s: Vec<_> = self.rows.iter().map(|r| r.source).collect();
        s.dedup();
        s.sort();
        s.dedup();
        s
    }

    pub fn tasks(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.task) {
                out.push(r.task.clone());
            }
        }
        out
    }

    pub fn row(&self, task: &str, source: PlanSource) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.task == task && r.source == source)
    }

    /// Mean of per-task success fractions for a source.
    pub fn average(&self, source: PlanSource) -> f64 {
        let fr: Vec<f64> = self.rows.iter().filter(|r| r.source == source).map(ReportRow::fraction).collect();
        if fr.is_empty() {
            0.0
        } else {
            fr.iter().sum::<f64>() / fr.len() as f64
        }
    }

    pub fn failure_histogram(&self, source: PlanSource) -> BTreeMap<FailureTag, usize> {
        let mut h = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.source == source) {
            for (tag, n) in &r.failures {
                *h.entry(*tag).or_default() += n;
            }
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(CsvRow {
                task: &r.task,
                source: r.source.as_str(),
                successes: r.successes,
                episodes: r.episodes,
                fraction: r.fraction(),
            })?;
        }
        out.flush()?;
        Ok(())
    }

    /// Task rows by source columns with `successes/episodes` cells and an
    /// average row in percent.
    pub fn to_table(&self) -> String {
        let sources = self.sources();
        let mut s = format!("{:<36}", "Task");
        for src in &sources {
            s += &format!("{:>12}", src.as_str());
        }
        s.push('\n');
        for task in self.tasks() {
            s += &format!("{task:<36}");
            for src in &sources {
                let cell = self
                    .row(&task, *src)
                    .map_or("-".to_string(), |r| format!("{}/{}", r.successes, r.episodes));
                s += &format!("{cell:>12}");
            }
            s.push('\n');
        }
        s += &format!("{:<36}", "Average");
        for src in &sources {
            s += &format!("{:>11.0}%", 100.0 * self.average(*src));
        }
        s.push('\n');
        s
    }
}

fn episode_outcome(cfg: &EpisodeConfig, providers: Providers) -> Option<(bool, FailureTag)> {
    match run_episode(cfg, providers) {
        Ok(r) => Some((r.rollout.success, r.rollout.failure)),
        Err(e) => {
            log::warn!("{} seed {}: {e}", cfg.task, cfg.seed);
            None
        }
    }
}

/// Run every task × source for `episodes` seeds (`seed .. seed + episodes`,
/// shared across sources). Human sources are not supported here.
pub fn run_benchmark(suite: &SuiteConfig, model: Option<&PredictorModel>) -> Result<EvalReport, OrchestratorError> {
    let tasks = suite.task_specs()?;
    if tasks.is_empty() || suite.sources.is_empty() {
        return Err(OrchestratorError::Suite("suite has no tasks or no sources".into()));
    }
    if suite.sources.contains(&PlanSource::Human) {
        return Err(OrchestratorError::Suite("human source cannot run in a batch benchmark".into()));
    }
    if suite.sources.contains(&PlanSource::Predictor) && model.is_none() {
        return Err(OrchestratorError::PredictorUnavailable);
    }
    let mut jobs = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for source in &suite.sources {
            for i in 0..suite.episodes as u64 {
                let mut cfg = EpisodeConfig::new(task.clone(), suite.seed + i, *source);
                cfg.variation = suite.variation;
                if let Some(k) = suite.replan {
                    cfg.replan = Replan::Fixed(k);
                }
                if let Some(m) = suite.max_steps {
                    cfg.controller.max_steps = m;
                }
                jobs.push((ti, *source, cfg));
            }
        }
    }
    let providers = Providers { model, human: None };
    let run = || {
        jobs.par_iter()
            .map(|(ti, src, cfg)| (*ti, *src, episode_outcome(cfg, providers)))
            .collect::<Vec<_>>()
    };
    let outcomes = match suite.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| OrchestratorError::Suite(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut rows: Vec<ReportRow> = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for source in &suite.sources {
            let mut row = ReportRow {
                task: task.label(),
                source: *source,
                successes: 0,
                episodes: 0,
                failures: BTreeMap::new(),
                errors: 0,
            };
            for (_, _, o) in outcomes.iter().filter(|(t, s, _)| *t == ti && s == source) {
                row.episodes += 1;
                match o {
                    Some((ok, tag)) => {
                        row.successes += *ok as usize;
                        *row.failures.entry(*tag).or_default() += 1;
                    }
                    None => row.errors += 1,
                }
            }
            rows.push(row);
        }
    }
    Ok(EvalReport {
        suite: suite.name.clone(),
        variation: suite.variation,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn oracle_pick_succeeds() {
        let cfg = EpisodeConfig::new(TaskSpec::pick("headphones"), 4, PlanSource::Oracle);
        let r = run_episode(&cfg, Providers::default()).unwrap();
        assert!(r.rollout.success);
        assert_eq!(r.replans(), 0);
        assert_eq!(r.initial_plan, r.final_plan);
    }

    #[test]
    fn fixed_replan_schedule() {
        for k in [1, 3, 7, 20, 500] {
            let mut cfg = EpisodeConfig::new(TaskSpec::pick("pot"), 2, PlanSource::Oracle);
            cfg.replan = Replan::Fixed(k);
            let r = run_episode(&cfg, Providers::default()).unwrap();
            let t = r.rollout.steps();
            assert_eq!(r.replans(), (t - 1) / k, "k={k} T={t}");
            assert!(r.rollout.success);
            let steps: Vec<_> = r.provenance[1..].iter().map(|e| e.step).collect();
            assert_eq!(steps, (1..=(t - 1) / k).map(|i| i * k).collect::<Vec<_>>());
        }
        let mut bad = EpisodeConfig::new(TaskSpec::pick("pot"), 2, PlanSource::Oracle);
        bad.replan = Replan::Fixed(0);
        assert!(matches!(run_episode(&bad, Providers::default()), Err(OrchestratorError::InvalidConfig(_))));
    }

    #[test]
    fn predictor_without_model_is_unavailable() {
        let cfg = EpisodeConfig::new(TaskSpec::pick("pot"), 2, PlanSource::Predictor);
        assert_eq!(
            run_episode(&cfg, Providers::default()).unwrap_err(),
            OrchestratorError::PredictorUnavailable
        );
    }

    #[test]
    fn untrained_predictor_falls_back_and_misses_the_handle() {
        let task = TaskSpec::pick("box");
        let scene = spawn_scene(&task, 0, Variation::InDist).unwrap();
        let demo = generate_demo(&scene, &task).unwrap();
        let set = crate::datasets::TrainingSet::from_records(vec![crate::datasets::TrainingRecord::Robot(demo)]);
        let model = crate::predictor::fit(&set, &ExtractionConfig::default()).unwrap();
        let cfg = EpisodeConfig::new(TaskSpec::pick("dustpan"), 1, PlanSource::Predictor);
        let r = run_episode(&cfg, Providers { model: Some(&model), human: None }).unwrap();
        assert!(r.provenance[0].fallback);
        assert_eq!(r.rollout.failure, FailureTag::MissedGrasp);
    }

    struct Scripted {
        plan: Option<AffordancePlan>,
        asked: Mutex<Vec<usize>>,
    }

    impl HumanChannel for Scripted {
        fn request_plan(&self, _scene: &Scene, step: usize, _timeout: Duration) -> Option<AffordancePlan> {
            self.asked.lock().unwrap().push(step);
            self.plan.clone()
        }
    }

    #[test]
    fn human_source() {
        let task = TaskSpec::pick("kettle");
        let scene = spawn_scene(&task, 3, Variation::InDist).unwrap();
        let plan = build_affordance_plan(&generate_demo(&scene, &task).unwrap(), &ExtractionConfig::default()).unwrap();
        let human = Scripted {
            plan: Some(plan),
            asked: Mutex::new(vec![]),
        };
        let mut cfg = EpisodeConfig::new(task.clone(), 3, PlanSource::Human);
        cfg.pacing_hz = 10_000.0;
        cfg.replan = Replan::Fixed(25);
        let r = run_episode(&cfg, Providers { model: None, human: Some(&human) }).unwrap();
        assert!(r.rollout.success);
        let asked = human.asked.lock().unwrap().clone();
        assert_eq!(asked.len(), 1 + r.replans());
        assert!(asked[1..].iter().all(|s| s % 25 == 0));

        let silent = Scripted {
            plan: None,
            asked: Mutex::new(vec![]),
        };
        assert!(matches!(
            run_episode(&cfg, Providers { model: None, human: Some(&silent) }),
            Err(OrchestratorError::HumanTimeout(_))
        ));
        assert_eq!(
            run_episode(&cfg, Providers::default()).unwrap_err(),
            OrchestratorError::HumanUnavailable
        );
    }

    #[test]
    fn benchmark_aggregates_and_is_deterministic() {
        let suite = SuiteConfig::builtin("grasping", vec![PlanSource::Oracle, PlanSource::Baseline], 5).unwrap();
        let a = run_benchmark(&suite, None).unwrap();
        assert_eq!(a, run_benchmark(&suite, None).unwrap());
        assert_eq!(a.rows.iter().filter(|r| r.source == PlanSource::Oracle).map(|r| r.episodes).sum::<usize>(), 25);
        for src in [PlanSource::Oracle, PlanSource::Baseline] {
            let rows: Vec<_> = a.rows.iter().filter(|r| r.source == src).collect();
            let mean = rows.iter().map(|r| r.successes as f64 / r.episodes as f64).sum::<f64>() / rows.len() as f64;
            assert_eq!(a.average(src), mean);
            for r in rows {
                assert!(r.successes <= r.episodes);
                assert_eq!(r.failures.values().sum::<usize>() + r.errors, r.episodes);
            }
        }
        assert!(a.average(PlanSource::Oracle) - a.average(PlanSource::Baseline) >= 0.3);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("task,source,successes,episodes,fraction\n"));
        assert_eq!(text.lines().count(), 11);
        assert!(a.to_table().contains("Average"));
    }

    #[test]
    fn suite_file() {
        let s = SuiteConfig::from_toml(
            "name = \"mini\"\ntasks = [\"pick the kettle\", \"close the cubby\"]\nsources = [\"oracle\"]\nepisodes = 2\nreplan = 10\n",
        )
        .unwrap();
        assert_eq!(s.task_specs().unwrap(), vec![TaskSpec::pick("kettle"), TaskSpec::close("cubby")]);
        let r = run_benchmark(&s, None).unwrap();
        assert_eq!(r.average(PlanSource::Oracle), 1.0);
    }

    #[test]
    fn observation_render_shows_the_plan() {
        let task = TaskSpec::pick("kettle");
        let scene = spawn_scene(&task, 3, Variation::InDist).unwrap();
        let plan = build_affordance_plan(&generate_demo(&scene, &task).unwrap(), &ExtractionConfig::default()).unwrap();
        assert_ne!(render_observation(&scene, &plan), snapshot(&scene));
    }
}
