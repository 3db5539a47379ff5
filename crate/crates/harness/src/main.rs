use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use lfd_core::demo_pipeline::{
    augment_contact, generate_funnel_poses, generate_grasp_labels, scripted_demo,
    scripted_leg_spans, scripted_legs, segment_trajectory, synthesize_wrench, AugmentParams,
    Dataset, DemoTrajectory, FunnelPlan, ScriptedDemoParams, SegmentationParams, WrenchNoise,
};
use lfd_core::mechanism::{load_fixture, Episode, SimParams};
use lfd_core::perception::{default_camera, fit_hue_model, fit_yaw_estimator, SceneSpec};
use lfd_harness::{report_table, run_suite, HarnessError, PipelineOptions, SuiteConfig};

#[derive(Parser)]
#[command(
    name = "mechanism-lfd",
    version,
    about = "Learn to operate articulated mechanisms from one demonstration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scripted demonstration of a bundled fixture.
    Demo {
        #[arg(long)]
        fixture: String,
        #[arg(long)]
        out: PathBuf,
        /// Fill the wrench channel like a human demonstrator, with this seed.
        #[arg(long)]
        wrench_seed: Option<u64>,
    },
    /// Segment a demonstration and test contact-force hypotheses on the fixture.
    Augment {
        #[arg(long)]
        demo: PathBuf,
        /// Defaults to the fixture recorded in the demonstration file.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-hypothesis verdicts here.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Render labeled views along a funnel around the demonstrated grasp.
    Collect {
        #[arg(long)]
        demo: PathBuf,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, value_enum, default_value_t = Funnel::Default)]
        funnel: Funnel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the yaw estimator (and the target color model) on a dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment suite and write its report.
    Run {
        /// `table1` or a suite JSON file.
        #[arg(long)]
        suite: String,
        /// Overrides the suite seed (required for built-in suites).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the trial count of every scenario.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Serve the HTTP+JSON API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Funnel {
    /// Five rings, 2500 poses.
    Default,
    /// The demonstration's own approach only.
    Demo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::write(path, contents)?)
}

/// Demonstration file: the trajectory plus the fixture it was recorded on.
fn read_demo(
    path: &Path,
    fixture: Option<String>,
) -> Result<(DemoTrajectory, String), HarnessError> {
    let doc = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&doc).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let fixture = fixture
        .or_else(|| {
            value
                .get("fixture")
                .and_then(|f| f.as_str())
                .map(str::to_string)
        })
        .ok_or_else(|| config("no --fixture given and none recorded in the demonstration"))?;
    Ok((DemoTrajectory::from_json(&doc)?, fixture))
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Demo {
            fixture,
            out,
            wrench_seed,
        } => {
            let model = load_fixture(&fixture)?;
            let mut demo = scripted_demo(&model, &ScriptedDemoParams::default())?;
            if let Some(seed) = wrench_seed {
                let legs = scripted_legs(&model)?;
                let spans = scripted_leg_spans(&model, &demo, &legs);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                synthesize_wrench(&mut demo, &legs, &spans, &WrenchNoise::default(), &mut rng);
            }
            let mut value = serde_json::to_value(&demo).map_err(|e| config(e.to_string()))?;
            value["fixture"] = serde_json::Value::String(fixture);
            write(&out, &serde_json::to_string_pretty(&value).expect("json"))?;
            println!(
                "{} samples, grasp at sample {}",
                demo.samples.len(),
                demo.grasp_index().unwrap_or(0)
            );
        }
        Command::Augment {
            demo,
            fixture,
            out,
            hypotheses,
        } => {
            let (demo, fixture) = read_demo(&demo, fixture)?;
            let model = std::sync::Arc::new(load_fixture(&fixture)?);
            let segments = segment_trajectory(&demo, &SegmentationParams::default())?;
            let mut ep = Episode::new(model, SimParams::default())?;
            let end = demo.positions().last().copied().unwrap_or_default();
            let result = augment_contact(&mut ep, &segments, &end, &AugmentParams::default())?;
            write(&out, &result.plan.to_json())?;
            if let Some(h) = hypotheses {
                write(
                    &h,
                    &serde_json::to_string_pretty(&result.hypotheses).expect("json"),
                )?;
            }
            for (i, s) in result.plan.steps.iter().enumerate() {
                println!(
                    "segment {}: motion [{:.3}, {:.3}, {:.3}] force [{:.3}, {:.3}, {:.3}] from {:?}",
                    i + 1,
                    s.motion.x,
                    s.motion.y,
                    s.motion.z,
                    s.force.x,
                    s.force.y,
                    s.force.z,
                    s.provenance
                );
            }
            for w in &result.plan.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Collect {
            demo,
            fixture,
            funnel,
            out,
        } => {
            let (demo, fixture) = read_demo(&demo, fixture)?;
            let model = load_fixture(&fixture)?;
            let grasp = demo.grasp_pose();
            let cam = default_camera();
            let scene = SceneSpec::for_mechanism(&model, &model.initial_q())?;
            let poses = match funnel {
                Funnel::Default => generate_funnel_poses(&grasp, &FunnelPlan::default_funnel()),
                Funnel::Demo => demo.approach().iter().map(|s| s.ee_pose).collect(),
            };
            let ds =
                generate_grasp_labels(&poses, &grasp, &cam, model.appearance.object_width, &scene);
            ds.save(&out)?;
            println!(
                "{} views written, {} dropped out of view",
                ds.views.len(),
                ds.dropped
            );
        }
        Command::Fit { dataset, out } => {
            let ds = Dataset::load(&dataset)?;
            let cam = default_camera();
            let first = ds
                .views
                .first()
                .ok_or(lfd_core::perception::PerceptionError::EmptyDataset)?;
            let depth = first.label.relative_pose.translation.z - cam.hand_eye.translation.z;
            let hue = fit_hue_model(&first.image, &first.label.bbox, depth, &cam)?;
            let est = fit_yaw_estimator(&ds, &hue, &cam)?;
            est.save(&out)?;
            let hue_path = hue_model_path(&out);
            write(
                &hue_path,
                &serde_json::to_string_pretty(&hue).expect("json"),
            )?;
            println!(
                "{} views indexed; color model in {}",
                est.len(),
                hue_path.display()
            );
        }
        Command::Run {
            suite,
            seed,
            out,
            trials,
        } => {
            let mut cfg = if suite == "table1" {
                SuiteConfig::table1(
                    seed.ok_or_else(|| config("--seed is required for built-in suites"))?,
                )
            } else {
                let mut c = SuiteConfig::from_json(&std::fs::read_to_string(&suite)?)?;
                if let Some(s) = seed {
                    c.seed = s;
                }
                c
            };
            if let Some(n) = trials {
                for c in cfg
                    .grasp
                    .iter_mut()
                    .chain(&mut cfg.open)
                    .chain(&mut cfg.full_task)
                {
                    c.trials = n;
                }
            }
            let results = run_suite(&cfg, &PipelineOptions::default())?;
            let (report, table) = report_table(&results, Some(&cfg))?;
            std::fs::create_dir_all(&out)?;
            write(&out.join("report.json"), &report.to_json())?;
            write(&out.join("table.txt"), &table)?;
            let mut lines = String::new();
            for r in &results {
                lines.push_str(&serde_json::to_string(r).expect("json"));
                lines.push('\n');
            }
            write(&out.join("trials.jsonl"), &lines)?;
            print!("{table}");
        }
        Command::Serve { port, host } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| config(format!("bad address: {e}")))?;
            let rt = tokio::runtime::Runtime::new()?;
            println!("listening on http://{addr}");
            rt.block_on(lfd_harness::api::serve_api(addr))?;
        }
    }
    Ok(())
}

fn hue_model_path(estimator: &Path) -> PathBuf {
    let mut name = estimator
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".hue.json");
    estimator.with_file_name(name)
}
