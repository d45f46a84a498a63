//! `conekit`: command-line front end over `conekit-core`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on domain or data errors.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use conekit_core::dataset::{
    compute_scale_factor, kmeans_anchors, load_manifest, read_annotations, scale_and_tile, SizeDistribution,
};
use conekit_core::evaluation::{
    flatten_detections, human_latency_comparison, iou_pdf, precision_recall_map, simulate_latency, PipelineProfile,
};
use conekit_core::geometry::{hw_tradeoff_sweep, hw_tradeoff_table, lookahead_curve, SensorOption};
use conekit_core::monocular::{landmark_position, robust_pnp_with, PnpOptions, PoseModel, DEFAULT_REPROJ_THRESHOLD};
use conekit_core::report::{Table, Value};
use conekit_core::requirements::{derive_requirements, requirements_table, RequirementParams};
use conekit_core::stereo::{depth_error, stereo_localize, StereoParams};
use conekit_core::svg::{BarChart, LinePlot, Series};
use conekit_core::timesync::{simulate_sync, sync_error_report, SyncScenario};
use conekit_core::{io, BoundingBox, CameraConfig, ColorClass, KeypointSet, LandmarkModel, DEFAULT_SEED};

use output::{Output, OutputFormat};

#[derive(Debug, Parser)]
#[command(name = "conekit", version, about = "Cone-landmark perception toolkit", arg_required_else_help = true)]
struct Cli {
    /// JSON config file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for stochastic steps [default: 20190817].
    #[arg(long, global = true, env = "CONEKIT_SEED")]
    seed: Option<u64>,
    /// Output directory (created if absent). Without it, the main table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Also write SVG plots into the output directory.
    #[arg(long, global = true, requires = "out")]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep lens and sensor options against the look-ahead pixel threshold.
    HwSweep,
    /// Derive the accuracy, latency, FOV and look-ahead requirements.
    Requirements {
        /// Vehicle and hairpin parameters (JSON); overrides --config.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Localize landmarks from keypoint detections with robust PnP.
    Mono {
        /// JSON list of `{id, keypoints: [[u, v] x 7]}`.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_enum)]
        pose_model: Option<PoseModelArg>,
    },
    /// Localize landmarks from a disparity map, an RGB image and boxes.
    Stereo {
        /// JSON job `{disparity, image, boxes}`; paths relative to the job file.
        #[arg(long)]
        job: PathBuf,
    },
    /// Simulate mono/stereo time synchronization.
    SyncSim,
    /// Scale and tile a detection source to a target size distribution.
    Prep {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON list of target landmark pixel heights.
        #[arg(long)]
        target_dist: PathBuf,
    },
    /// k-means anchor boxes from an annotation file.
    Anchors {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 9)]
        k: usize,
    },
    /// Precision/recall mAP and IoU distribution of predictions.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Simulate end-to-end latency of a pipeline profile.
    Latency {
        /// `default` or a JSON profile file.
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, default_value_t = 20)]
        landmarks: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoseModelArg {
    Full,
    Upright,
}

impl From<PoseModelArg> for PoseModel {
    fn from(m: PoseModelArg) -> Self {
        match m {
            PoseModelArg::Full => PoseModel::Full,
            PoseModelArg::Upright => PoseModel::Upright,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() || matches!(e.kind(), clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("conekit: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let out = Output::new(cli.out.clone(), cli.format).context("stage `emit_report`")?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::HwSweep => hw_sweep(cli, &out),
        Command::Requirements { params } => {
            let p: RequirementParams = load_config(params.as_deref().or(cli.config.as_deref()))?;
            let reqs = derive_requirements(&p).context("stage `derive_requirements`")?;
            out.emit("requirements", &requirements_table(&reqs))
        }
        Command::Mono { detections, pose_model } => mono(cli, &out, detections, *pose_model),
        Command::Stereo { job } => stereo(cli, &out, job, seed),
        Command::SyncSim => {
            let mut scenario: SyncScenario = load_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                scenario.seed = s;
            }
            let trace = simulate_sync(&scenario).context("stage `simulate_sync`")?;
            let report = sync_error_report(&trace).context("stage `sync_error_report`")?;
            out.emit_file("sync_trace", &trace.to_table())?;
            out.emit("sync_report", &report.to_table())
        }
        Command::Prep { manifest, target_dist } => prep(&out, manifest, target_dist),
        Command::Anchors { annotations, k } => {
            let images = read_annotations(annotations).context("stage `read_annotations`")?;
            let wh: Vec<[f64; 2]> = images.iter().flat_map(|i| i.boxes.iter().map(|b| [b.w, b.h])).collect();
            let anchors = kmeans_anchors(&wh, *k, seed).context("stage `kmeans_anchors`")?;
            out.emit_text("anchors.json", &(serde_json::to_string(&anchors)? + "\n"))
        }
        Command::Eval { pred, gt, iou, bins } => eval(cli, &out, pred, gt, *iou, *bins),
        Command::Latency { profile, landmarks } => latency(cli, &out, profile, *landmarks, seed),
    }
}

/// Reads a JSON config, or the type's defaults when no path is given.
fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => read_json(p),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("stage `load_config`: reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("stage `load_config`: parsing {}", path.display()))
}

/// Applies `f` to every item on a few worker threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct HwSweepConfig {
    lenses_m: Vec<f64>,
    sensors: Vec<SensorOption>,
    landmark: LandmarkModel,
    /// Defaults to the derived look-ahead requirement.
    lookahead_m: Option<f64>,
    px_threshold: f64,
}

impl Default for HwSweepConfig {
    fn default() -> Self {
        Self {
            lenses_m: vec![0.0035, 0.006, 0.008, 0.012, 0.016],
            sensors: vec![
                SensorOption {
                    pixel_pitch_m: 4.55e-6,
                    binning: 2,
                    resolution: (800, 320),
                },
                SensorOption {
                    pixel_pitch_m: 5.86e-6,
                    binning: 1,
                    resolution: (1600, 640),
                },
                SensorOption {
                    pixel_pitch_m: 3.45e-6,
                    binning: 1,
                    resolution: (2048, 1536),
                },
            ],
            landmark: LandmarkModel::with_color(ColorClass::Blue),
            lookahead_m: None,
            px_threshold: conekit_core::geometry::DEFAULT_PIXEL_THRESHOLD,
        }
    }
}

fn hw_sweep(cli: &Cli, out: &Output) -> anyhow::Result<()> {
    let cfg: HwSweepConfig = load_config(cli.config.as_deref())?;
    let lookahead = match cfg.lookahead_m {
        Some(d) => d,
        None => derive_requirements(&RequirementParams::default())
            .context("stage `derive_requirements`")?
            .iter()
            .find(|r| r.name == "lookahead_distance")
            .map(|r| r.value)
            .ok_or_else(|| anyhow!("stage `derive_requirements`: no look-ahead requirement"))?,
    };
    let rows = hw_tradeoff_sweep(&cfg.lenses_m, &cfg.sensors, &cfg.landmark, lookahead, cfg.px_threshold)
        .context("stage `hw_tradeoff_sweep`")?;
    if cli.plot {
        let distances: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let mut series = Vec::new();
        for r in &rows {
            series.push(Series {
                name: format!(
                    "f={} mm, pitch={} um",
                    r.camera.focal_length() * 1e3,
                    conekit_core::report::format_sig(r.camera.pixel_pitch() * 1e6, 3)
                ),
                points: lookahead_curve(&r.camera, &cfg.landmark, &distances).context("stage `lookahead_curve`")?,
            });
        }
        let plot = LinePlot {
            title: "Landmark height in pixels".into(),
            x_label: "distance [m]".into(),
            y_label: "pixels".into(),
            series,
            reference: Some((cfg.px_threshold, format!("{} px", cfg.px_threshold))),
        };
        out.emit_text("lookahead.svg", &plot.render())?;
    }
    out.emit("hw_sweep", &hw_tradeoff_table(&rows))
}

#[derive(Debug, Deserialize)]
struct MonoDetection {
    id: String,
    keypoints: KeypointSet,
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct MonoConfig {
    camera: CameraConfig,
    landmark: LandmarkModel,
    reproj_threshold: f64,
    pose_model: PoseModel,
}

impl Default for MonoConfig {
    fn default() -> Self {
        Self {
            camera: CameraConfig::short_range(),
            landmark: LandmarkModel::with_color(ColorClass::Blue),
            reproj_threshold: DEFAULT_REPROJ_THRESHOLD,
            pose_model: PoseModel::Upright,
        }
    }
}

fn landmark_table() -> Table {
    Table::new(["id", "x", "y", "z", "dist", "reproj_rms", "subset"])
}

fn mono(cli: &Cli, out: &Output, detections: &Path, model: Option<PoseModelArg>) -> anyhow::Result<()> {
    let mut cfg: MonoConfig = load_config(cli.config.as_deref())?;
    if let Some(m) = model {
        cfg.pose_model = m.into();
    }
    let dets: Vec<MonoDetection> = read_json(detections)?;
    let opts = PnpOptions {
        model: cfg.pose_model,
        ..PnpOptions::default()
    };
    let results = par_map(&dets, |d| robust_pnp_with(&d.keypoints, &cfg.landmark, &cfg.camera, cfg.reproj_threshold, &opts));
    let mut table = landmark_table();
    for (d, r) in dets.iter().zip(results) {
        let sol = r.with_context(|| format!("stage `robust_pnp`: detection `{}`", d.id))?;
        let (p, dist) = landmark_position(&sol.pose);
        let subset: Vec<String> = sol.subset.iter().map(usize::to_string).collect();
        table.push(vec![
            d.id.as_str().into(),
            p.x.into(),
            p.y.into(),
            p.z.into(),
            dist.into(),
            sol.rms.into(),
            subset.join(" ").into(),
        ]);
    }
    out.emit_landmarks(&table)
}

#[derive(Debug, Deserialize)]
struct StereoJob {
    disparity: PathBuf,
    image: PathBuf,
    boxes: Vec<StereoBox>,
}

#[derive(Debug, Deserialize)]
struct StereoBox {
    id: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    class: ColorClass,
    #[serde(default = "full_confidence")]
    confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

fn stereo(cli: &Cli, out: &Output, job_path: &Path, seed: u64) -> anyhow::Result<()> {
    let mut params: StereoParams = load_config(cli.config.as_deref())?;
    params.seed = seed;
    let job: StereoJob = read_json(job_path)?;
    let base = job_path.parent().unwrap_or(Path::new("."));
    let map = io::load_disparity(&base.join(&job.disparity)).context("stage `load_disparity`")?;
    let image = io::load_rgb(&base.join(&job.image)).context("stage `load_rgb`")?;
    let results = par_map(&job.boxes, |b| {
        let bbox = BoundingBox::new(b.x, b.y, b.w, b.h, b.class, b.confidence)?;
        stereo_localize(&map, &image, &bbox, b.class, &params)
    });
    let mut table = landmark_table();
    for (b, r) in job.boxes.iter().zip(results) {
        let loc = r.with_context(|| format!("stereo box `{}`", b.id))?;
        let [x, y, z] = loc.position;
        table.push(vec![
            b.id.as_str().into(),
            x.into(),
            y.into(),
            z.into(),
            loc.distance().into(),
            Value::Empty,
            "stereo".into(),
        ]);
    }
    if cli.plot {
        let distances: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let mut series = Vec::new();
        for de in [0.25, 0.5, 1.0] {
            let points = distances
                .iter()
                .map(|&z| depth_error(z, map.focal_px(), map.baseline(), de).map(|e| (z, e)))
                .collect::<Result<Vec<_>, _>>()
                .context("stage `depth_error`")?;
            series.push(Series {
                name: format!("disparity error {de} px"),
                points,
            });
        }
        let plot = LinePlot {
            title: "Stereo depth error".into(),
            x_label: "distance [m]".into(),
            y_label: "depth error [m]".into(),
            series,
            reference: Some((0.5, "0.5 m".into())),
        };
        out.emit_text("depth_error.svg", &plot.render())?;
    }
    out.emit_landmarks(&table)
}

fn prep(out: &Output, manifest: &Path, target_dist: &Path) -> anyhow::Result<()> {
    let set = load_manifest(manifest).context("stage `load_manifest`")?;
    let target: SizeDistribution = read_json(target_dist)?;
    let source = set.size_distribution().context("stage `size_distribution`")?;
    let factor = compute_scale_factor(&source, &target);
    let tiled = scale_and_tile(&set, factor).context("stage `scale_and_tile`")?;
    let mut stats = tiled.stats.to_table();
    stats.push(vec!["scale_factor".into(), factor.into()]);
    out.emit_text(&format!("{}_prep.txt", set.source_id), &tiled.set.to_annotation_string())?;
    out.emit("prep_stats", &stats)
}

fn eval(cli: &Cli, out: &Output, pred: &Path, gt: &Path, iou_threshold: f64, bins: usize) -> anyhow::Result<()> {
    let pred = flatten_detections(&read_annotations(pred).context("stage `read_annotations`: predictions")?);
    let gt = flatten_detections(&read_annotations(gt).context("stage `read_annotations`: ground truth")?);
    let map = precision_recall_map(&pred, &gt, iou_threshold).context("stage `precision_recall_map`")?;
    let pdf = iou_pdf(&map.matches(), bins).context("stage `iou_pdf`")?;
    if cli.plot {
        let chart = BarChart {
            title: format!("IoU of matched detections (median {})", conekit_core::report::format_sig(pdf.median, 3)),
            y_label: "probability".into(),
            bars: pdf
                .masses
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("{:.2}", (i as f64 + 0.5) / bins as f64), *m))
                .collect(),
        };
        out.emit_text("iou_pdf.svg", &chart.render())?;
    }
    out.emit_file("eval_iou_pdf", &pdf.to_table())?;
    out.emit("eval_map", &map.to_table())
}

fn latency(cli: &Cli, out: &Output, profile: &str, landmarks: usize, seed: u64) -> anyhow::Result<()> {
    let profile = if profile == "default" {
        PipelineProfile::calibrated()
    } else {
        read_json(Path::new(profile))?
    };
    let report = simulate_latency(&profile, landmarks, seed).context("stage `simulate_latency`")?;
    match human_latency_comparison(report.total_ms) {
        Ok(pct) => log::info!("total {:.1} ms, {pct:.1}% below median human reaction", report.total_ms),
        Err(e) => log::warn!("human comparison unavailable: {e}"),
    }
    if cli.plot {
        let mut bars = vec![("frame_to_frame".to_string(), report.frame_to_frame_ms)];
        bars.extend(report.stages.iter().map(|s| (format!("{}/{}", s.branch, s.stage), s.ms)));
        bars.push(("per_landmark".into(), report.per_landmark_ms));
        let chart = BarChart {
            title: format!("Latency breakdown, {landmarks} landmarks"),
            y_label: "ms".into(),
            bars,
        };
        out.emit_text("latency.svg", &chart.render())?;
    }
    out.emit("latency", &report.to_table())
}
