//! The `pointvote` command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pointvote_core::dataset::{prepare_scene, LabeledExample};
use pointvote_core::model::Symmetry;
use pointvote_core::network::{train, EpochLog, Weights};
use pointvote_core::normals::estimate_normals;
use pointvote_core::pipeline::{detect, oracle_detect, score_estimate, summarize, Clock, DetectionResult, NoClock, SceneOutcome, StageTimings};
use pointvote_core::synth::{scene_seed, synth_scene};
use pointvote_core::voting::PoseHypothesis;
use pointvote_core::model::ObjectModel;
use pointvote_core::{shapes, sub_rng, PointCloud, Vec3};
use serde::Serialize;

use crate::config::{RunConfig, SynthObject};
use crate::dataset_file::{read_dataset, write_dataset, DatasetHeader};
use crate::error::{io_at, Error, Result};
use crate::formats::{read_pose, write_json, write_pose, PoseJson};
use crate::images::{render_depth, write_depth_png, write_rgb_png};
use crate::ply::{write_ply, Encoding};
use crate::scene_io::{gt_pose_path, list_annotated, list_scenes, load_gt, load_model, load_scene, save_model, save_scene, scene_name};
use crate::weights_file::{read_weights, write_weights};

#[derive(Debug, Parser)]
#[command(name = "pointvote", version, about = "Detect a known rigid object in point clouds and estimate its 6-DoF pose")]
pub struct Cli {
    /// Run configuration (JSON). Missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; also sets train.seed and pipeline.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Work currently runs on one thread whatever the value.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// Override a config value, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Write the effective configuration here before running.
    #[arg(long, global = true, value_name = "FILE")]
    pub save_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic tabletop scenes with ground-truth poses.
    Synth(SynthArgs),
    /// Build a training dataset from annotated scenes.
    Prepare(PrepareArgs),
    /// Train the network on a dataset.
    Train(TrainArgs),
    /// Detect the object in one scene.
    Detect(DetectArgs),
    /// Detect in every annotated scene of a directory and score the results.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory: receives `model.ply`, `model.json` and `scenes/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Index of the first scene; scene `i` uses a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    pub first: u64,
    /// Also write each scene as depth and color PNGs with intrinsics.
    #[arg(long)]
    pub rgbd: bool,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory of scenes with `<name>.pose.json` ground truth.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Statistics report; defaults to `<out>.stats.json`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from these weights instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Trained weights; not needed with `--oracle`.
    #[arg(long, required_unless_present = "oracle")]
    pub weights: Option<PathBuf>,
    /// Ground-truth pose file: replace the network by exact labels.
    #[arg(long, value_name = "POSE")]
    pub oracle: Option<PathBuf>,
    /// Pose output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the stage files A_anchors.ply … F_pose.json into this directory.
    #[arg(long, value_name = "DIR")]
    pub dump_debug: Option<PathBuf>,
    /// With `--dump-debug`, also write all pose votes.
    #[arg(long, requires = "dump_debug")]
    pub dump_votes: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required_unless_present_any = ["oracle", "inject_gt"])]
    pub weights: Option<PathBuf>,
    /// Use ground-truth labels instead of the network.
    #[arg(long, conflicts_with = "inject_gt")]
    pub oracle: bool,
    /// Score the ground truth itself (checks the evaluation plumbing).
    #[arg(long)]
    pub inject_gt: bool,
    /// Per-scene metrics.
    #[arg(long)]
    pub csv: PathBuf,
    /// Summary report; defaults to `<csv>.summary.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Record zero stage times, for byte-identical reruns.
    #[arg(long)]
    pub no_timings: bool,
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1000.0
    }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Loads the configuration the flags describe.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    if let Some(path) = &cli.save_config {
        write_json(path, &cfg)?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Prepare(a) => cmd_prepare(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Detect(a) => cmd_detect(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
    }
}

/// The object synthetic scenes show, sampled at `spacing`.
pub fn synth_object(cfg: &RunConfig, spacing: f64) -> Result<ObjectModel> {
    let (cloud, symmetry) = match cfg.synth.object {
        SynthObject::Demo => (shapes::demo_object(spacing), Symmetry::None),
        SynthObject::Cylinder => (shapes::cylinder(30.0, 90.0, spacing), Symmetry::Revolution { axis: Vec3::z(), center: Vec3::zeros() }),
    };
    Ok(ObjectModel::build(cloud, cfg.model.keypoint_spacing_mm, symmetry)?)
}

fn cmd_synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let render = synth_object(cfg, cfg.synth.render_spacing_mm)?;
    let model = synth_object(cfg, cfg.synth.model_spacing_mm)?;
    save_model(&a.out.join("model.ply"), &model)?;
    let dir = a.out.join("scenes");
    for i in a.first..a.first + a.count as u64 {
        let s = synth_scene(&render, scene_seed(cfg.seed, i), &cfg.synth.scene)?;
        let name = format!("scene_{i:04}");
        save_scene(&dir.join(format!("{name}.ply")), &s.cloud)?;
        write_pose(&dir.join(format!("{name}.pose.json")), &s.gt_pose)?;
        if a.rgbd {
            let k = &cfg.synth.scene.intrinsics;
            let (depth, rgb) = render_depth(&s.cloud, k);
            write_depth_png(&dir.join(format!("{name}.depth.png")), k.width, k.height, &depth)?;
            write_rgb_png(&dir.join(format!("{name}.rgb.png")), k.width, k.height, &rgb)?;
            write_json(&dir.join(format!("{name}.intrinsics.json")), k)?;
        }
    }
    eprintln!("wrote {} scenes to {}", a.count, dir.display());
    Ok(())
}

fn with_scene_normals(cloud: PointCloud, cfg: &RunConfig) -> Result<PointCloud> {
    if cloud.normals().is_some() && cloud.curvatures().is_some() {
        return Ok(cloud);
    }
    let view = cloud.view_origin.unwrap_or(Vec3::zeros());
    Ok(estimate_normals(&cloud, cfg.pipeline.normal_radius_mm, &view)?)
}

#[derive(Debug, Serialize)]
struct SceneStats {
    scene: String,
    examples: usize,
    positives: usize,
    negatives: usize,
    missing_easy: usize,
    missing_hard: usize,
}

#[derive(Debug, Serialize)]
struct PrepareStats {
    scenes: usize,
    failed: Vec<(String, String)>,
    examples: usize,
    positives: usize,
    negatives: usize,
    color: bool,
    /// Point counts per segmentation label, background first.
    label_histogram: Vec<u64>,
    per_scene: Vec<SceneStats>,
}

fn cmd_prepare(cfg: &RunConfig, a: &PrepareArgs) -> Result<()> {
    let model = load_model(&a.model, &cfg.model)?;
    let scenes = list_annotated(&a.scenes)?;
    if scenes.is_empty() {
        return Err(Error::Usage(format!("{}: no scenes with ground-truth poses", a.scenes.display())));
    }
    let mut examples: Vec<LabeledExample> = Vec::new();
    let mut failed = Vec::new();
    let mut per_scene = Vec::new();
    for (i, path) in scenes.iter().enumerate() {
        let name = scene_name(path);
        let outcome = (|| -> Result<_> {
            let gt = load_gt(path)?;
            let cloud = with_scene_normals(load_scene(path)?, cfg)?;
            Ok(prepare_scene(&cloud, &model, &gt, &cfg.dataset, i as u32, &mut sub_rng(cfg.seed, i as u64))?)
        })();
        match outcome {
            Ok(s) => {
                let positives = s.examples.iter().filter(|e| e.class_label == 1).count();
                per_scene.push(SceneStats {
                    scene: name,
                    examples: s.examples.len(),
                    positives,
                    negatives: s.examples.len() - positives,
                    missing_easy: s.missing_easy,
                    missing_hard: s.missing_hard,
                });
                examples.extend(s.examples);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                failed.push((name, e.to_string()));
            }
        }
    }
    if per_scene.is_empty() {
        return Err(Error::Runtime("every scene failed".into()));
    }
    let color = examples.iter().all(|e| e.colors.is_some());
    if !color {
        examples.iter_mut().for_each(|e| e.colors = None);
    }
    let k = model.keypoint_count();
    let mut label_histogram = vec![0u64; k + 1];
    for e in &examples {
        for &l in &e.seg_labels {
            label_histogram[l as usize] += 1;
        }
    }
    let header = DatasetHeader {
        keypoints: k as u32,
        color,
        balanced: cfg.dataset.balanced,
        seed: cfg.seed,
        points_per_example: cfg.dataset.points_per_example as u32,
        diameter_mm: model.diameter,
    };
    write_dataset(&a.out, &header, &examples)?;
    let positives = examples.iter().filter(|e| e.class_label == 1).count();
    let stats = PrepareStats {
        scenes: scenes.len(),
        failed,
        examples: examples.len(),
        positives,
        negatives: examples.len() - positives,
        color,
        label_histogram,
        per_scene,
    };
    write_json(&a.stats.clone().unwrap_or_else(|| with_extension(&a.out, ".stats.json")), &stats)?;
    eprintln!("{} examples from {} scenes", stats.examples, stats.per_scene.len());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let (header, data) = read_dataset(&a.data)?;
    let k = header.keypoints as usize;
    let mut weights = match &a.resume {
        Some(path) => read_weights(path, Some(k))?,
        None => {
            let net = cfg.network.network_config(k, header.color && cfg.network.use_color);
            let scale = if cfg.network.normalize_positions { 1.0 / (cfg.dataset.sphere_factor * header.diameter_mm) } else { 1.0 };
            Weights::<f32>::init(&net, scale, &mut sub_rng(cfg.train.seed, u64::MAX))?
        }
    };
    if weights.config.uses_color() && !header.color {
        return Err(Error::Usage("the network expects color but the dataset has none".into()));
    }
    let log_path = a.log.clone().unwrap_or_else(|| with_extension(&a.out, ".loss.csv"));
    let mut log = csv::Writer::from_path(&log_path).map_err(|e| csv_error(&log_path, e))?;
    log.write_record(["epoch", "loss", "classification", "segmentation"]).map_err(|e| csv_error(&log_path, e))?;
    let started = Instant::now();
    let mut write_error = None;
    let entries = train(&mut weights, &data, &cfg.train, |e: &EpochLog| {
        eprintln!("epoch {} loss {:.5} ({:.0} s)", e.epoch, e.loss, started.elapsed().as_secs_f64());
        let row = [e.epoch.to_string(), e.loss.to_string(), e.classification.to_string(), e.segmentation.to_string()];
        if let Err(err) = log.write_record(&row).and_then(|_| Ok(log.flush()?)) {
            write_error.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_error {
        return Err(csv_error(&log_path, err));
    }
    if entries.last().is_some_and(|e| !e.loss.is_finite()) || !weights.is_finite() {
        return Err(Error::Runtime("training diverged".into()));
    }
    write_weights(&a.out, &weights)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_at(path)(io),
        other => Error::format(path, format!("{other:?}")),
    }
}

#[derive(Debug, Serialize)]
struct CandidateJson {
    anchor: [f64; 3],
    score: f64,
    correspondences: usize,
    voted_pose: PoseJson,
    pose: PoseJson,
    s_kde: f64,
    vote_support: usize,
    l_geometric: f64,
    l_color: f64,
    l_loc: f64,
}

#[derive(Debug, Serialize)]
struct DetectionJson {
    #[serde(flatten)]
    pose: PoseJson,
    l_loc: f64,
    l_geometric: f64,
    l_color: f64,
    s_kde: f64,
    anchors: usize,
    skipped_anchors: usize,
    segmented: usize,
    failed: usize,
    timings_ms: StageTimings,
}

fn candidate_json(r: &DetectionResult, c: &pointvote_core::pipeline::Candidate) -> CandidateJson {
    let a = r.anchors[c.anchor];
    let h = &c.hypothesis;
    CandidateJson {
        anchor: [a.x, a.y, a.z],
        score: c.score,
        correspondences: c.correspondences,
        voted_pose: PoseJson::from(&c.voted_pose),
        pose: PoseJson::from(&h.pose),
        s_kde: h.s_kde,
        vote_support: h.vote_support,
        l_geometric: h.l_geometric,
        l_color: h.l_color,
        l_loc: h.l_loc,
    }
}

fn cmd_detect(cfg: &RunConfig, a: &DetectArgs) -> Result<()> {
    let model = load_model(&a.model, &cfg.model)?;
    let scene = load_scene(&a.scene)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.collect_trace |= a.dump_debug.is_some();
    pipeline.collect_votes |= a.dump_votes;
    let clock = WallClock(Instant::now());
    let result = match (&a.oracle, &a.weights) {
        (Some(gt), _) => oracle_detect(&scene, &model, &read_pose(gt)?, &pipeline, &clock)?,
        (None, Some(w)) => detect(&scene, &model, &read_weights(w, Some(model.keypoint_count()))?, &pipeline, &clock)?,
        (None, None) => return Err(Error::Usage("detect needs --weights or --oracle".into())),
    };
    if let Some(dir) = &a.dump_debug {
        dump_debug(dir, &result, &model, a.dump_votes)?;
    }
    let best = result.best().ok_or_else(|| Error::Runtime(format!("{}: no pose hypothesis survived", a.scene.display())))?;
    let h = &best.hypothesis;
    let doc = DetectionJson {
        pose: PoseJson::from(&h.pose),
        l_loc: h.l_loc,
        l_geometric: h.l_geometric,
        l_color: h.l_color,
        s_kde: h.s_kde,
        anchors: result.anchors.len(),
        skipped_anchors: result.skipped_anchors,
        segmented: result.segmented.len(),
        failed: result.failed,
        timings_ms: result.timings,
    };
    match &a.out {
        Some(path) => write_json(path, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc).expect("detection serializes"));
            Ok(())
        }
    }
}

/// Blue (0) to red (1).
fn ramp(t: f64) -> Vec3 {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    Vec3::new(t, 0.2, 1.0 - t)
}

/// Distinct color per segmentation label, grey for background.
fn label_color(label: u16) -> Vec3 {
    if label == 0 {
        return Vec3::new(0.6, 0.6, 0.6);
    }
    let h = (label as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as u32 {
        0 => Vec3::new(1.0, x, 0.0),
        1 => Vec3::new(x, 1.0, 0.0),
        2 => Vec3::new(0.0, 1.0, x),
        3 => Vec3::new(0.0, x, 1.0),
        4 => Vec3::new(x, 0.0, 1.0),
        _ => Vec3::new(1.0, 0.0, x),
    }
}

fn colored(points: Vec<Vec3>, colors: Vec<Vec3>) -> Result<PointCloud> {
    Ok(PointCloud::from_columns(points, None, None, Some(colors))?)
}

/// Stage files: anchors, anchor scores, the segmented spheres, their
/// labels, the refined hypotheses and the chosen pose.
pub fn dump_debug(dir: &Path, r: &DetectionResult, model: &ObjectModel, votes: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let trace = r.trace.clone().unwrap_or_default();
    let ascii = Encoding::Ascii;

    write_ply(&dir.join("A_anchors.ply"), &PointCloud::from_positions(r.anchors.clone()), &[], ascii)?;

    let scores: Vec<f64> = r.scores.iter().map(|s| s.unwrap_or(-1.0)).collect();
    let scored = colored(r.anchors.clone(), scores.iter().map(|&s| ramp(s)).collect())?;
    write_ply(&dir.join("B_scores.ply"), &scored, &[("score", &scores)], ascii)?;

    let (mut pts, mut rank, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in trace.spheres.iter().enumerate() {
        pts.extend_from_slice(&s.points);
        rank.extend(std::iter::repeat_n(i as f64, s.points.len()));
        labels.extend(s.labels.iter().map(|&l| l as f64));
    }
    let n_spheres = trace.spheres.len().max(1) as f64;
    let spheres = colored(pts.clone(), rank.iter().map(|&i| ramp(i / n_spheres)).collect())?;
    write_ply(&dir.join("C_top_spheres.ply"), &spheres, &[("sphere", &rank)], ascii)?;
    let seg = colored(pts, labels.iter().map(|&l| label_color(l as u16)).collect())?;
    write_ply(&dir.join("D_segmentation.ply"), &seg, &[("sphere", &rank), ("label", &labels)], ascii)?;

    let (mut hyp_pts, mut hyp_rank) = (Vec::new(), Vec::new());
    let stride = model.cloud.len().div_ceil(2000).max(1);
    for (i, c) in r.ranked.iter().enumerate() {
        for p in model.cloud.positions().iter().step_by(stride) {
            hyp_pts.push(c.hypothesis.pose.apply(p));
            hyp_rank.push(i as f64);
        }
    }
    let n_hyp = r.ranked.len().max(1) as f64;
    let hyps = colored(hyp_pts, hyp_rank.iter().map(|&i| ramp(1.0 - i / n_hyp)).collect())?;
    write_ply(&dir.join("E_hypotheses.ply"), &hyps, &[("candidate", &hyp_rank)], ascii)?;

    #[derive(Serialize)]
    struct Final {
        best: Option<PoseJson>,
        candidates: Vec<CandidateJson>,
    }
    let fin = Final {
        best: r.best().map(|c| PoseJson::from(&c.hypothesis.pose)),
        candidates: r.ranked.iter().map(|c| candidate_json(r, c)).collect(),
    };
    write_json(&dir.join("F_pose.json"), &fin)?;

    if votes {
        let (mut vp, mut vs) = (Vec::new(), Vec::new());
        for (i, v) in trace.votes.iter().enumerate() {
            vp.extend_from_slice(v);
            vs.extend(std::iter::repeat_n(i as f64, v.len()));
        }
        write_ply(&dir.join("votes.ply"), &PointCloud::from_positions(vp), &[("sphere", &vs)], Encoding::BinaryLittleEndian)?;
        #[derive(Serialize)]
        struct Peak {
            anchor: [f64; 3],
            peak: PoseJson,
            s_kde: f64,
            vote_support: usize,
        }
        let peaks: Vec<Peak> = r
            .ranked
            .iter()
            .map(|c| {
                let a = r.anchors[c.anchor];
                Peak { anchor: [a.x, a.y, a.z], peak: PoseJson::from(&c.voted_pose), s_kde: c.hypothesis.s_kde, vote_support: c.hypothesis.vote_support }
            })
            .collect();
        write_json(&dir.join("votes.json"), &peaks)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    scenes: usize,
    successes: usize,
    accuracy: f64,
    threshold_factor: f64,
    threshold_mm: f64,
    symmetric: bool,
    /// Scenes where detection produced no pose.
    no_pose: usize,
    /// Mean ADD over scenes with a pose (mm).
    mean_add_mm: Option<f64>,
}

const CSV_HEADER: [&str; 14] = [
    "scene",
    "add",
    "adds",
    "l_loc",
    "s_kde",
    "success",
    "normals_ms",
    "anchors_ms",
    "classification_ms",
    "segmentation_ms",
    "voting_ms",
    "icp_ms",
    "verification_ms",
    "total_ms",
];

fn csv_row(o: &SceneOutcome) -> Vec<String> {
    let t = &o.timings;
    let mut row = vec![o.scene.clone()];
    row.extend([o.add, o.adds, o.l_loc, o.s_kde].map(|v| v.to_string()));
    row.push((o.success as u8).to_string());
    row.extend([t.normals, t.anchors, t.classification, t.segmentation, t.voting, t.icp, t.verification, t.total()].map(|v| format!("{v:.3}")));
    row
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model, &cfg.model)?;
    let scenes = list_scenes(&a.scenes)?;
    if scenes.is_empty() {
        return Err(Error::Usage(format!("{}: no scenes", a.scenes.display())));
    }
    if let Some(missing) = scenes.iter().find(|p| !gt_pose_path(p).exists()) {
        return Err(Error::Usage(format!("{}: no ground-truth pose", missing.display())));
    }
    let weights = match (&a.weights, a.oracle || a.inject_gt) {
        (Some(w), false) => Some(read_weights(w, Some(model.keypoint_count()))?),
        (None, false) => return Err(Error::Usage("eval needs --weights, --oracle or --inject-gt".into())),
        _ => None,
    };
    let wall;
    let clock: &dyn Clock = if a.no_timings {
        &NoClock
    } else {
        wall = WallClock(Instant::now());
        &wall
    };
    let factor = cfg.eval.threshold_factor;
    let mut outcomes = Vec::with_capacity(scenes.len());
    for path in &scenes {
        let name = scene_name(path);
        let gt = load_gt(path)?;
        let outcome = if a.inject_gt {
            let h = PoseHypothesis { l_loc: 0.0, l_geometric: 0.0, l_color: 0.0, ..PoseHypothesis::unverified(gt, 1.0, 0) };
            score_estimate(&name, Some(&h), &gt, &model, factor, StageTimings::default())
        } else {
            let cloud = load_scene(path)?;
            let detected = match &weights {
                Some(w) => detect(&cloud, &model, w, &cfg.pipeline, clock),
                None => oracle_detect(&cloud, &model, &gt, &cfg.pipeline, clock),
            };
            match detected {
                Ok(r) => score_estimate(&name, r.best().map(|c| &c.hypothesis), &gt, &model, factor, r.timings),
                Err(pointvote_core::Error::EmptyScene) => score_estimate(&name, None, &gt, &model, factor, StageTimings::default()),
                Err(e) => return Err(e.into()),
            }
        };
        eprintln!("{name}: add {:.2} mm{}", outcome.add, if outcome.success { "" } else { " (miss)" });
        outcomes.push(outcome);
    }
    let mut w = csv::Writer::from_path(&a.csv).map_err(|e| csv_error(&a.csv, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(&a.csv, e))?;
    for o in &outcomes {
        w.write_record(csv_row(o)).map_err(|e| csv_error(&a.csv, e))?;
    }
    w.flush().map_err(io_at(&a.csv))?;

    let report = summarize(outcomes, &model, factor);
    let posed: Vec<f64> = report.scenes.iter().map(|s| s.add).filter(|v| v.is_finite()).collect();
    let summary = EvalSummary {
        scenes: report.scenes.len(),
        successes: report.successes,
        accuracy: report.accuracy,
        threshold_factor: report.threshold_factor,
        threshold_mm: report.threshold_mm,
        symmetric: report.symmetric,
        no_pose: report.scenes.len() - posed.len(),
        mean_add_mm: (!posed.is_empty()).then(|| posed.iter().sum::<f64>() / posed.len() as f64),
    };
    write_json(&a.summary.clone().unwrap_or_else(|| with_extension(&a.csv, ".summary.json")), &summary)?;
    println!("{}/{} scenes within {:.1} mm ({:.1}%)", summary.successes, summary.scenes, summary.threshold_mm, 100.0 * summary.accuracy);
    Ok(())
}
