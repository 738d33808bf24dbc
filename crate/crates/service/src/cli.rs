use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use teleassist::affordance::{
    refresh_snapshot, AffordanceSnapshot, CircleAffordance, DetectionConfig, PlaneAffordance,
};
use teleassist::cloud::{PointCloud, SegmentMask};
use teleassist::geometry::Pose;
use teleassist::menu::InterfaceMode;
use teleassist::predictor::{top_k_accuracy, train_max_margin, DemoStep, DemoTrace, ScorerWeights, TrainConfig};
use teleassist::scenesim::segment::GroundTruthSegmenter;
use teleassist::scenesim::tasks::{task_scene, SceneVariation, TaskKind};
use teleassist::scenesim::{SceneDescription, SensorFrame};
use teleassist::session::trace::{read_trace, replay, Trace, TraceWriter};
use teleassist::session::{collapse_decisions, run_scripted, ScriptedOperator, Session, SessionConfig};

#[derive(Debug, Parser)]
#[command(name = "teleassist", version, about = "Shared-control teleoperation session host and tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Host a live session for one cockpit on ws://<listen>/session.
    Serve(ServeArgs),
    /// Re-execute a recorded trace and compare its checksums.
    Replay(ReplayArgs),
    /// Detect planes and circles in a point cloud with masks.
    Detect(DetectArgs),
    /// Train scorer weights from demonstration traces.
    Train(TrainArgs),
    /// Report top-1 and top-k accuracy of weights on traces.
    Eval(EvalArgs),
    /// Write the three task scenes.
    GenScenes(GenScenesArgs),
    /// Record scripted-operator demonstration traces.
    GenDemos(GenDemosArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value = "MM")]
    pub mode: InterfaceMode,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Where to record the session trace.
    #[arg(long, default_value = "session.trace.jsonl")]
    pub trace: PathBuf,
    /// Session settings as JSON; mode and seed flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Overrides the seed recorded in the trace.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// JSON point cloud: `points`, optional `colors` and `camera` pose.
    #[arg(long)]
    pub cloud: PathBuf,
    /// JSON list of masks: `label` and `indices`.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trace files or directories of `*.jsonl` traces.
    #[arg(long, required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Placement perturbation, meters.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 4)]
    pub distractors: usize,
}

#[derive(Debug, Args)]
pub struct GenDemosArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub per_task: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.04)]
    pub jitter: f64,
    #[arg(long, default_value_t = 4)]
    pub distractors: usize,
    /// Session time limit per demonstration, seconds.
    #[arg(long, default_value_t = 120.0)]
    pub max_seconds: f64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_weights(path: Option<&Path>) -> anyhow::Result<Option<Arc<ScorerWeights>>> {
    path.map(|p| ScorerWeights::load(p).map(Arc::new).with_context(|| format!("loading weights {}", p.display())))
        .transpose()
}

pub fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let scene =
        SceneDescription::load(&args.scene).with_context(|| format!("loading scene {}", args.scene.display()))?;
    let base = match &args.config {
        Some(p) => read_json::<SessionConfig>(p)?,
        None => SessionConfig::default(),
    };
    let config = SessionConfig { mode: args.mode, seed: args.seed, ..base };
    if config.mode == InterfaceMode::Predictive && args.weights.is_none() {
        bail!("predictive mode (PM) needs --weights");
    }
    let weights = load_weights(args.weights.as_deref())?;
    let session = Session::new(scene, config, weights)?;
    let file = File::create(&args.trace).with_context(|| format!("creating trace {}", args.trace.display()))?;
    let trace = TraceWriter::new(BufWriter::new(file), &session)?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("port busy or unavailable: {}", args.listen))?;
        tracing::info!("serving {:?} session on ws://{}/session", args.mode, listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        let report = crate::host::serve(listener, session, Some(trace), shutdown).await?;
        tracing::info!("session ended after {} ticks, checksum {}", report.ticks, report.final_checksum);
        anyhow::Ok(())
    })
}

fn open_trace(path: &Path) -> anyhow::Result<Trace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_trace(BufReader::new(file)).with_context(|| format!("reading trace {}", path.display()))
}

pub fn replay_cmd(args: &ReplayArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let trace = open_trace(&args.trace)?;
    let scene =
        SceneDescription::load(&args.scene).with_context(|| format!("loading scene {}", args.scene.display()))?;
    let weights = load_weights(args.weights.as_deref())?;
    let (_, report) = replay(&trace, scene, weights, args.seed)?;
    for c in &report.checkpoints {
        writeln!(out, "checkpoint seq={} tick={} {} ok", c.seq, c.tick, c.checksum)?;
    }
    if report.truncated {
        writeln!(out, "trace is truncated")?;
    }
    let status = report.last_action.as_ref().map(|a| format!("{:?}", a.status)).unwrap_or_else(|| "none".into());
    writeln!(
        out,
        "replayed {} events to tick {}: checksum {}, last action {}, task complete {}",
        report.events, report.final_tick, report.final_checksum, status, report.task_complete
    )?;
    Ok(())
}

#[derive(Deserialize)]
struct CloudFile {
    #[serde(flatten)]
    cloud: PointCloud,
    #[serde(default = "Pose::identity")]
    camera: Pose,
}

#[derive(Serialize)]
struct Detection {
    planes: Vec<PlaneAffordance>,
    circles: Vec<CircleAffordance>,
}

pub fn detect(args: &DetectArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let cloud: CloudFile = read_json(&args.cloud)?;
    let masks: Vec<SegmentMask> = read_json(&args.masks)?;
    let config = match &args.config {
        Some(p) => read_json::<DetectionConfig>(p)?,
        None => DetectionConfig::default(),
    };
    config.validate()?;
    let n = cloud.cloud.len();
    if let Some(m) = masks.iter().find(|m| m.indices.iter().any(|&i| i as usize >= n)) {
        bail!("mask `{}` indexes past the {n} cloud points", m.label);
    }
    let masks = masks.into_iter().map(|m| SegmentMask::new(m.label, m.indices)).collect();
    let frame = SensorFrame { cloud: cloud.cloud, masks, timestamp: 0.0, camera: cloud.camera };
    let snapshot = refresh_snapshot(&AffordanceSnapshot::default(), Ok(&frame), &GroundTruthSegmenter, &config);
    let (planes, circles) = (snapshot.planes, snapshot.circles);
    print_json(out, &Detection { planes, circles })
}

/// Trace files named directly plus `*.jsonl` files in named directories,
/// in sorted order.
fn trace_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            found.retain(|f| f.extension().is_some_and(|e| e == "jsonl"));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no trace files found");
    }
    Ok(files)
}

pub fn load_demos(paths: &[PathBuf]) -> anyhow::Result<Vec<DemoTrace>> {
    trace_files(paths)?
        .iter()
        .map(|f| {
            let trace = open_trace(f)?;
            Ok(collapse_decisions(&trace.decisions(), trace.header.scene.task))
        })
        .collect()
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let demos = load_demos(&args.traces)?;
    let cfg = TrainConfig {
        margin: args.margin,
        epochs: args.epochs,
        learning_rate: args.lr,
        hidden: args.hidden,
        seed: args.seed,
    };
    let (weights, curve) = train_max_margin(&demos, &cfg)?;
    weights.save(&args.out)?;
    let steps: usize = demos.iter().map(|d| d.steps.len()).sum();
    let last = curve.epoch_loss.last().copied().unwrap_or(0.0);
    writeln!(
        out,
        "trained on {} traces ({steps} steps), final loss {last:.6}, wrote {}",
        demos.len(),
        args.out.display()
    )?;
    Ok(())
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    if args.k == 0 {
        bail!("--k must be at least 1");
    }
    let demos = load_demos(&args.traces)?;
    let weights = ScorerWeights::load(&args.weights)?;
    let steps: Vec<&DemoStep> = demos.iter().flat_map(|d| &d.steps).collect();
    writeln!(out, "steps: {}", steps.len())?;
    writeln!(out, "top-1: {:.4}", top_k_accuracy(&weights, &steps, 1)?)?;
    writeln!(out, "top-{}: {:.4}", args.k, top_k_accuracy(&weights, &steps, args.k)?)?;
    Ok(())
}

pub fn gen_scenes(args: &GenScenesArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out)?;
    let variation = SceneVariation { seed: args.seed, jitter: args.jitter, distractors: args.distractors };
    for kind in TaskKind::ALL {
        let path = args.out.join(format!("{}.json", kind.name()));
        task_scene(kind, &variation).save(&path)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

pub fn gen_demos(args: &GenDemosArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out)?;
    let mut failed = 0;
    for kind in TaskKind::ALL {
        for i in 0..args.per_task {
            let seed = args.seed + i;
            let scene = task_scene(kind, &SceneVariation { seed, jitter: args.jitter, distractors: args.distractors });
            let config = SessionConfig { mode: InterfaceMode::Manual, seed, ..SessionConfig::default() };
            let mut session = Session::new(scene, config, None)?;
            let mut operator = ScriptedOperator::new(&session).context("task scene without a task")?;
            let path = args.out.join(format!("{}-{seed:04}.jsonl", kind.name()));
            let mut writer = TraceWriter::new(BufWriter::new(File::create(&path)?), &session)?;
            let mut io_error = None;
            let outcome = run_scripted(&mut session, &mut operator, args.max_seconds, &mut |events, s| {
                if io_error.is_none() {
                    io_error = writer.record(events, s).err();
                }
            })?;
            if let Some(e) = io_error {
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            writer.finish(&session)?;
            if !outcome.success {
                failed += 1;
            }
            writeln!(
                out,
                "{} success={} seconds={:.1} menu_events={}",
                path.display(),
                outcome.success,
                outcome.seconds,
                outcome.counters.interactions()
            )?;
        }
    }
    if failed > 0 {
        writeln!(out, "{failed} demonstrations did not complete their task")?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay_cmd(a, &mut out),
        Command::Detect(a) => detect(a, &mut out),
        Command::Train(a) => train(a, &mut out),
        Command::Eval(a) => eval(a, &mut out),
        Command::GenScenes(a) => gen_scenes(a, &mut out),
        Command::GenDemos(a) => gen_demos(a, &mut out),
    }
}
