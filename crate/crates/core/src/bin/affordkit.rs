use affordkit::corpus::{export_dataset, ExportOptions};
use affordkit::datasets::{assemble_mixture, write_jsonl, DatasetDir, MixtureConfig};
use affordkit::extraction::{make_predictor_record, AffordancePlan, ExtractionConfig};
use affordkit::orchestrator::{
    render_observation, run_benchmark, run_episode, EpisodeConfig, PlanSource, Providers, Replan, SuiteConfig,
};
use affordkit::policy::{follow_plan, ControllerConfig};
use affordkit::predictor::{eval_offline, fit, observe, offline_suite, predict, JudgeConfig, PredictorModel};
use affordkit::render::tokenize_plan;
use affordkit::service::{serve, AnnotationService, ServiceOptions};
use affordkit::simenv::{generate_demo, snapshot, spawn_scene, TaskSpec, Variation};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "affordkit", version, about = "Affordance plans for a kinematic tabletop robot")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset directory.
    ExportDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        robot_per_task: usize,
        #[arg(long, default_value_t = affordkit::corpus::AUG_PER_TASK)]
        aug_per_task: usize,
        /// Unannotated images per aug task, left for the annotation service.
        #[arg(long, default_value_t = 0)]
        pending_per_task: usize,
        #[arg(long, default_value_t = 4)]
        web_per_category: usize,
        /// Render every robot frame instead of only the first.
        #[arg(long)]
        all_frames: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract affordance plans from a dataset's trajectories.
    Extract {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = affordkit::extraction::DEFAULT_ALPHA)]
        alpha: f64,
        /// JSONL output; stdout summary only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spawn a scene and run the scripted expert in it.
    Simulate {
        #[arg(long)]
        task: TaskSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "in_dist")]
        variation: Variation,
        /// Snapshot of the initial scene.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Write the expert trajectory as one JSONL line.
        #[arg(long)]
        demo: Option<PathBuf>,
    },
    /// Execute one episode and report the outcome.
    Rollout {
        #[arg(long)]
        task: TaskSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "in_dist")]
        variation: Variation,
        /// oracle, predictor, baseline or file
        #[arg(long, default_value = "oracle")]
        plan_source: String,
        /// Plan JSON for `--plan-source file`.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        replan: Option<usize>,
        /// Final frame with the executed plan drawn on it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the template predictor on a dataset mixture.
    TrainPredictor {
        #[arg(long)]
        data_dir: PathBuf,
        /// full, no_aug or no_web
        #[arg(long, default_value = "full")]
        mixture: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = affordkit::extraction::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a plan for one scene.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        task: TaskSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "in_dist")]
        variation: Variation,
        /// Overlay PNG.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plan JSON, usable with `rollout --plan-source file`.
        #[arg(long)]
        plan_out: Option<PathBuf>,
    },
    /// Score a predictor against ground-truth grasp parts.
    EvalOffline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "in_dist")]
        variation: Variation,
        #[arg(long, default_value_t = 50)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a closed-loop benchmark suite and write a CSV report.
    Evaluate {
        /// grasping, beyond, all, or a suite TOML file
        #[arg(long, default_value = "grasping")]
        suite: String,
        /// Comma-separated plan sources.
        #[arg(long, default_value = "oracle,baseline")]
        source: String,
        #[arg(long)]
        replan: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        variation: Option<Variation>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the annotation and live-steering HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

fn load_model(path: &Option<PathBuf>) -> Result<Option<PredictorModel>> {
    path.as_ref()
        .map(|p| PredictorModel::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::ExportDataset {
            out,
            robot_per_task,
            aug_per_task,
            pending_per_task,
            web_per_category,
            all_frames,
            seed,
        } => {
            let opts = ExportOptions {
                robot_per_task,
                aug_per_task,
                web_per_category,
                all_frames,
                pending_per_task,
                seed,
            };
            let s = export_dataset(&out, &opts)?;
            println!(
                "{}: {} trajectories, {} annotated + {} pending images, {} web records, {} PNGs",
                out.display(),
                s.trajectories,
                s.aug,
                s.pending,
                s.web,
                s.images
            );
        }
        Cmd::Extract { data_dir, alpha, out } => {
            let cfg = ExtractionConfig::new(alpha)?;
            let trajs = DatasetDir::new(&data_dir).trajectories()?;
            let mut records = Vec::new();
            let mut failed = 0;
            for t in &trajs {
                match make_predictor_record(t, &cfg) {
                    Ok(r) => records.push(r),
                    Err(e) => {
                        log::warn!("{}: {e}", t.language);
                        failed += 1;
                    }
                }
            }
            let waypoints: usize = records.iter().map(|r| r.plan.len()).sum();
            println!("{} plans, {waypoints} waypoints, {failed} failed (alpha {alpha})", records.len());
            if let Some(out) = out {
                write_jsonl(&records, BufWriter::new(File::create(&out)?))?;
            }
        }
        Cmd::Simulate {
            task,
            seed,
            variation,
            snapshot: snap,
            demo,
        } => {
            let scene = spawn_scene(&task, seed, variation)?;
            for o in &scene.objects {
                let p = o.pose.position;
                println!("{:>3} {:<12} ({:.3}, {:.3}, {:.3}) yaw {:.1}", o.id, o.category, p.x, p.y, p.z, o.yaw().to_degrees());
            }
            if let Some(path) = snap {
                snapshot(&scene).save_png(&path)?;
            }
            let traj = generate_demo(&scene, &task)?;
            println!("expert: {} frames, success", traj.frames.len());
            if let Some(path) = demo {
                write_jsonl(&[traj], BufWriter::new(File::create(&path)?))?;
            }
        }
        Cmd::Rollout {
            task,
            seed,
            variation,
            plan_source,
            plan,
            model,
            replan,
            out,
        } => {
            let (rollout, executed) = if plan_source == "file" {
                let path = plan.context("--plan-source file needs --plan")?;
                let plan: AffordancePlan = serde_json::from_reader(File::open(&path)?)?;
                let scene = spawn_scene(&task, seed, variation)?;
                (follow_plan(&scene, &task, &plan, &ControllerConfig::default())?, plan)
            } else {
                let source: PlanSource = plan_source.parse().map_err(anyhow::Error::msg)?;
                if source == PlanSource::Human {
                    bail!("human plans need the annotation service (`affordkit serve`)");
                }
                let model = load_model(&model)?;
                let mut cfg = EpisodeConfig::new(task, seed, source);
                cfg.variation = variation;
                if let Some(k) = replan {
                    cfg.replan = Replan::Fixed(k);
                }
                let r = run_episode(
                    &cfg,
                    Providers {
                        model: model.as_ref(),
                        human: None,
                    },
                )?;
                println!("replans: {}", r.replans());
                (r.rollout, r.final_plan)
            };
            println!(
                "{} in {} steps (failure: {})",
                if rollout.success { "success" } else { "failure" },
                rollout.steps(),
                rollout.failure.as_str()
            );
            if let Some(path) = out {
                render_observation(&rollout.final_scene, &executed).save_png(&path)?;
            }
        }
        Cmd::TrainPredictor {
            data_dir,
            mixture,
            seed,
            alpha,
            out,
        } => {
            let dir = DatasetDir::new(&data_dir);
            let cfg = MixtureConfig::preset(&mixture).with_context(|| format!("unknown mixture {mixture:?}"))?;
            let aug: Vec<_> = dir.annotations()?.into_iter().filter(|a| a.is_annotated()).collect();
            let set = assemble_mixture(&dir.trajectories()?, &dir.web_proxy()?, &aug, &cfg, seed)?;
            let c = set.counts();
            println!("mixture {mixture}: robot {} web {} aug {}", c.robot, c.web, c.aug);
            let model = fit(&set, &ExtractionConfig::new(alpha)?)?;
            println!("{} task templates, {} records skipped", model.templates.len(), model.skipped_records);
            model.save(&out)?;
        }
        Cmd::Predict {
            model,
            task,
            seed,
            variation,
            out,
            plan_out,
        } => {
            let model = PredictorModel::load(&model)?;
            let scene = spawn_scene(&task, seed, variation)?;
            let p = predict(&model, &task.language(), &observe(&scene))?;
            if p.fallback {
                println!("no template for {task}; grasping the top center");
            }
            println!("{}", tokenize_plan(&p.plan, &scene.camera, &scene.config.gripper).as_str());
            if let Some(path) = out {
                render_observation(&scene, &p.plan).save_png(&path)?;
            }
            if let Some(path) = plan_out {
                serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &p.plan)?;
            }
        }
        Cmd::EvalOffline {
            model,
            variation,
            episodes,
            seed,
        } => {
            let model = PredictorModel::load(&model)?;
            let mut tasks = affordkit::corpus::robot_tasks();
            tasks.extend(affordkit::corpus::aug_tasks());
            let suite = offline_suite(&tasks, variation, episodes, seed);
            let report = eval_offline(&model, &suite, &JudgeConfig::default())?;
            print!("{}", report.to_table());
            println!("score {:.1}%", 100.0 * report.score(variation));
        }
        Cmd::Evaluate {
            suite,
            source,
            replan,
            episodes,
            variation,
            model,
            workers,
            out,
        } => {
            let sources = source
                .split(',')
                .map(|s| s.trim().parse::<PlanSource>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(anyhow::Error::msg)?;
            let mut cfg = match SuiteConfig::builtin(&suite, sources.clone(), episodes.unwrap_or(50)) {
                Some(c) => c,
                None => SuiteConfig::from_toml(&std::fs::read_to_string(&suite).with_context(|| format!("reading suite {suite}"))?)?,
            };
            cfg.sources = sources;
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            if replan.is_some() {
                cfg.replan = replan;
            }
            if let Some(v) = variation {
                cfg.variation = v;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let model = load_model(&model)?;
            let report = run_benchmark(&cfg, model.as_ref())?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                report.write_csv(File::create(&path)?)?;
            }
        }
        Cmd::Serve {
            port,
            data_dir,
            model,
            workers,
        } => {
            let service = AnnotationService::open(
                &data_dir,
                ServiceOptions {
                    model: load_model(&model)?,
                    ..ServiceOptions::default()
                },
            )?;
            serve(service, &format!("0.0.0.0:{port}"), workers)?;
        }
    }
    Ok(())
}
