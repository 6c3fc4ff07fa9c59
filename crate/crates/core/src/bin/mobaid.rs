//! Command-line front end for the people-perception pipeline.
//!
//! `simulate` renders synthetic scenes into sequence directories; `run`
//! drives the full pipeline over one. `propose`, `detect` and `track` run
//! single stages for inspection, `evaluate` scores logs against ground
//! truth, and `estimate-hmm` fits a belief model from labeled data.
//!
//! Every command that consumes randomness takes its seed as an explicit
//! flag; configuration comes from one optional TOML file plus flag
//! overrides.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mobaid::belief::estimate_model;
use mobaid::config::PipelineConfig;
use mobaid::detection::{detect_frame, Detection};
use mobaid::evaluation::{
    evaluate_detections, group_ground_truth, pr_curve, write_pr_csv, DetectionEvalOptions,
    MetricReport,
};
use mobaid::frameio::{simulate_to_dir, Sequence};
use mobaid::logs::{read_detections, read_tracks, write_detections, write_tracks, TrackRecord};
use mobaid::pipeline::{
    build_scorer, evaluate_run, mix_seed, run, EvaluateOptions, GuidanceDecision,
};
use mobaid::proposals::{dense_proposals, frame_proposals, DenseConfig};
use mobaid::simulation::{guidance_suite, scenario_by_name, standard_scenarios, Scenario};
use mobaid::tracking::{FieldOfView, TrackObservation, Tracker};
use mobaid::ClassId;

#[derive(Parser)]
#[command(name = "mobaid", version, about = "Depth-only multi-class people perception")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scenario into a sequence directory.
    Simulate(SimulateArgs),
    /// Run the proposal front end over a sequence and report box economy.
    Propose(ProposeArgs),
    /// Detect people in every frame, writing a detections log.
    Detect(DetectArgs),
    /// Track a detections log through the Kalman tracker, writing a tracks log.
    Track(TrackArgs),
    /// Score detection and tracking logs against a sequence's ground truth.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline over a sequence and write all logs.
    Run(RunArgs),
    /// Fit a belief model from a labeled (hidden, observed) sequence file.
    EstimateHmm(EstimateHmmArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Propose(args) => propose(args),
        Command::Detect(args) => detect(args),
        Command::Track(args) => track(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Run(args) => run_pipeline(args),
        Command::EstimateHmm(args) => estimate_hmm(args),
    }
}

/// Shared `--config` flag: a pipeline configuration file, defaults when
/// omitted.
#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => PipelineConfig::from_toml_file(path)
                .with_context(|| format!("loading config {}", path.display())),
            None => Ok(PipelineConfig::default()),
        }
    }
}

fn open_sequence(dir: &Path) -> Result<Sequence> {
    Sequence::open(dir).with_context(|| format!("opening sequence {}", dir.display()))
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name (see --list).
    #[arg(long, conflicts_with = "scenario")]
    name: Option<String>,
    /// Scenario description file (TOML).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Output sequence directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the seed declared in the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// List the built-in scenarios and exit.
    #[arg(long)]
    list: bool,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if args.list {
        println!("built-in scenarios:");
        for s in standard_scenarios() {
            println!("  {:<24} {}", s.name, s.description);
        }
        println!("guidance suite:");
        for (s, expected) in guidance_suite() {
            println!("  {:<24} routes a {}", s.name, expected.name());
        }
        return Ok(());
    }
    let mut scenario = match (&args.name, &args.scenario) {
        (Some(name), None) => scenario_by_name(name)
            .with_context(|| format!("no built-in scenario named '{name}' (try --list)"))?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_toml(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        _ => bail!("exactly one of --name or --scenario is required (or --list)"),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let out = args.out.context("--out is required")?;
    let frames = simulate_to_dir(&scenario, &out)
        .with_context(|| format!("rendering '{}'", scenario.name))?;
    println!(
        "wrote {frames} frames of '{}' (seed {}) to {}",
        scenario.name,
        scenario.seed,
        out.display()
    );
    Ok(())
}

/// One line of the `propose` log.
#[derive(Serialize)]
struct ProposalRecord {
    frame: u64,
    cloud_points: usize,
    plane_inliers: Option<usize>,
    segments: usize,
    proposals: usize,
    millis: f64,
}

#[derive(Args)]
struct ProposeArgs {
    /// Input sequence directory.
    #[arg(long, value_name = "DIR")]
    seq: PathBuf,
    /// Seed for the per-frame RANSAC plane fit.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
    /// Per-frame stats log to write (JSONL).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also count the dense sliding-window baseline and print the ratio.
    #[arg(long)]
    dense: bool,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 0 { (values[mid - 1] + values[mid]) / 2.0 } else { values[mid] }
}

fn propose(args: ProposeArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let seq = open_sequence(&args.seq)?;
    let proposer = &cfg.detector.proposer;
    let mut records = Vec::with_capacity(seq.len());
    for index in 0..seq.len() {
        let frame_id = index as u64;
        let frame = seq.load_frame(index)?;
        let started = Instant::now();
        let front = frame_proposals(&frame, &seq.camera, proposer, mix_seed(args.seed, frame_id))
            .with_context(|| format!("frame {frame_id}"))?;
        records.push(ProposalRecord {
            frame: frame_id,
            cloud_points: front.stats.cloud_points,
            plane_inliers: front.stats.plane_inliers,
            segments: front.stats.segments_found,
            proposals: front.proposals.len(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let total: usize = records.iter().map(|r| r.proposals).sum();
    let mut counts: Vec<f64> = records.iter().map(|r| r.proposals as f64).collect();
    let mut times: Vec<f64> = records.iter().map(|r| r.millis).collect();
    println!("frames: {}", records.len());
    println!(
        "proposals: {total} total, {:.1} median per frame",
        median(&mut counts)
    );
    println!("front end: {:.1} ms median per frame", median(&mut times));
    if args.dense {
        // The dense baseline depends only on the camera and template set,
        // so one frame's count stands for every frame.
        let dense = dense_proposals(
            &seq.camera,
            &proposer.proposals.templates.templates,
            &DenseConfig::default(),
        )
        .len();
        let med = median(&mut counts);
        println!("dense baseline: {dense} boxes per frame");
        if med > 0.0 {
            println!("economy: {:.1}x fewer boxes than dense", dense as f64 / med);
        }
    }
    if let Some(path) = &args.out {
        write_jsonl(path, &records)?;
        println!("log: {}", path.display());
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Args)]
struct DetectArgs {
    /// Input sequence directory (needs gt.jsonl for the oracle scorer).
    #[arg(long, value_name = "DIR")]
    seq: PathBuf,
    /// Seed for the proposal front end and the scorer.
    #[arg(long)]
    seed: u64,
    /// Detections log to write (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Overrides the oracle's confusion-matrix diagonal.
    #[arg(long, value_name = "P")]
    scorer_diagonal: Option<f64>,
}

fn detect(args: DetectArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(d) = args.scorer_diagonal {
        cfg.scorer.confusion_diagonal = d;
    }
    cfg.validate()?;
    let seq = open_sequence(&args.seq)?;
    let mut scorer = build_scorer(&cfg, &seq, args.seed)?;
    let mut detections: Vec<Detection> = Vec::new();
    for index in 0..seq.len() {
        let frame_id = index as u64;
        let frame = seq.load_frame(index)?;
        let result = detect_frame(
            &frame,
            frame_id,
            &seq.camera,
            &cfg.detector,
            scorer.as_mut(),
            mix_seed(args.seed, frame_id),
        )
        .with_context(|| format!("frame {frame_id}"))?;
        detections.extend(result.detections);
    }
    write_detections(&args.out, &detections)?;
    println!(
        "{} detections over {} frames -> {}",
        detections.len(),
        seq.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory providing frame timestamps and camera poses.
    #[arg(long, value_name = "DIR")]
    seq: PathBuf,
    /// Detections log to track (JSONL).
    #[arg(long, value_name = "FILE")]
    detections: PathBuf,
    /// Tracks log to write (JSONL).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

fn track(args: TrackArgs) -> Result<()> {
    let cfg = args.config.load()?;
    cfg.validate()?;
    let seq = open_sequence(&args.seq)?;
    let detections = read_detections(&args.detections)?;
    let mut by_frame: HashMap<u64, Vec<TrackObservation>> = HashMap::new();
    for d in &detections {
        if d.frame >= seq.len() as u64 {
            bail!("detection at frame {} but the sequence has {} frames", d.frame, seq.len());
        }
        by_frame.entry(d.frame).or_default().push(TrackObservation::from(d));
    }

    let mut tracker = Tracker::new(cfg.tracker.clone(), cfg.load_hmm()?)?;
    let mut records: Vec<TrackRecord> = Vec::new();
    let mut prev_timestamp: Option<f64> = None;
    for meta in &seq.frames {
        let dt = prev_timestamp.map_or(0.0, |p| meta.timestamp - p);
        prev_timestamp = Some(meta.timestamp);
        let observations = by_frame.get(&meta.frame).map(Vec::as_slice).unwrap_or(&[]);
        let (cx, cy) = meta.pose.ground_position();
        let (fx, fy) = meta.pose.ground_forward();
        tracker.step(observations, dt, meta.frame, |p| {
            cfg.fov.contains([cx, cy], [fx, fy], p)
        })?;
        let mut frame_records: Vec<TrackRecord> =
            tracker.tracks().iter().map(|t| TrackRecord::from_track(meta.frame, t)).collect();
        frame_records.sort_by_key(|r| r.track);
        records.extend(frame_records);
    }

    let mut ids: Vec<u64> = records.iter().map(|r| r.track).collect();
    ids.sort_unstable();
    ids.dedup();
    write_tracks(&args.out, &records)?;
    println!(
        "{} tracks, {} track-frames over {} frames -> {}",
        ids.len(),
        records.len(),
        seq.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Sequence directory with ground truth (gt.jsonl).
    #[arg(long, value_name = "DIR")]
    seq: PathBuf,
    /// Detections log (JSONL).
    #[arg(long, value_name = "FILE")]
    detections: PathBuf,
    /// Tracks log; when omitted only detection metrics are reported.
    #[arg(long, value_name = "FILE")]
    tracks: Option<PathBuf>,
    /// IoU threshold for detection matching.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Treat occluded ground truth as ignore regions.
    #[arg(long)]
    exclude_occluded: bool,
    /// CLEAR-MOT association gate, meters.
    #[arg(long, default_value_t = 0.5)]
    mot_dist: f64,
    /// Drop track hypotheses outside the camera's observed area.
    #[arg(long)]
    fov: bool,
    /// Observed-area range for --fov, meters.
    #[arg(long, default_value_t = 3.0)]
    max_range_m: f64,
    /// Observed-area half-angle for --fov, degrees.
    #[arg(long, default_value_t = 20.0)]
    half_angle_deg: f64,
    /// Write a precision-recall curve as CSV (requires --pr-class).
    #[arg(long, value_name = "FILE", requires = "pr_class")]
    pr_csv: Option<PathBuf>,
    /// Class for --pr-csv, e.g. pedestrian or wheelchair.
    #[arg(long, value_name = "CLASS")]
    pr_class: Option<String>,
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let seq = open_sequence(&args.seq)?;
    let detections = read_detections(&args.detections)?;
    let detection_opts =
        DetectionEvalOptions { iou_threshold: args.iou, exclude_occluded: args.exclude_occluded };

    let report = match &args.tracks {
        Some(tracks_path) => {
            let tracks = read_tracks(tracks_path)?;
            let opts = EvaluateOptions {
                detection: detection_opts.clone(),
                mot_match_dist_m: args.mot_dist,
                fov: args.fov.then_some(FieldOfView {
                    max_range_m: args.max_range_m,
                    half_angle_deg: args.half_angle_deg,
                }),
            };
            evaluate_run(&seq, &detections, &tracks, &opts)?
        }
        None => {
            let truth = seq.ground_truth()?;
            if truth.is_empty() {
                bail!("evaluation needs ground truth (gt.jsonl) in the sequence");
            }
            let grouped = group_ground_truth(&truth)?;
            let detection = evaluate_detections(&detections, &grouped, &detection_opts)?;
            MetricReport { detection, tracking: None }
        }
    };
    print!("{report}");

    if let (Some(path), Some(name)) = (&args.pr_csv, &args.pr_class) {
        let class = ClassId::from_name(name)
            .with_context(|| format!("unknown class '{name}'"))?;
        if !class.is_foreground() {
            bail!("--pr-class must be a person class, not background");
        }
        let truth = seq.ground_truth()?;
        let grouped = group_ground_truth(&truth)?;
        let points = pr_curve(&detections, &grouped, class, &detection_opts);
        let file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        write_pr_csv(file, &points)?;
        println!("pr curve ({}, {} points): {}", class.name(), points.len(), path.display());
    }
    Ok(())
}

#[derive(Args)]
struct RunArgs {
    /// Input sequence directory.
    #[arg(long, value_name = "DIR")]
    seq: PathBuf,
    /// Output directory for detections/tracks/guidance logs and stats.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Master seed for the run (front end and scorer).
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
    /// Overrides the oracle's confusion-matrix diagonal.
    #[arg(long, value_name = "P")]
    scorer_diagonal: Option<f64>,
    /// Overrides the guidance dwell threshold, seconds.
    #[arg(long, value_name = "S")]
    dwell_s: Option<f64>,
    /// Overrides the guidance belief threshold.
    #[arg(long, value_name = "P")]
    belief_threshold: Option<f64>,
    /// Overrides the observed-area range, meters.
    #[arg(long, value_name = "M")]
    max_range_m: Option<f64>,
    /// Overrides the observed-area half-angle, degrees.
    #[arg(long, value_name = "DEG")]
    half_angle_deg: Option<f64>,
    /// Overrides the belief model file.
    #[arg(long, value_name = "FILE")]
    hmm_model: Option<PathBuf>,
    /// Also score the logs against the sequence's ground truth.
    #[arg(long)]
    evaluate: bool,
}

fn describe(decision: &GuidanceDecision) -> String {
    match decision.class {
        Some(class) => {
            let mut s = format!(
                "{} ({}, track {}, dwell {:.1} s",
                decision.action.as_str(),
                class.name(),
                decision.track.unwrap_or(0),
                decision.dwell_s
            );
            if let Some(v) = decision.speed_mps {
                s.push_str(&format!(", advisory speed {v} m/s"));
            }
            s.push(')');
            s
        }
        None => format!("wait (longest dwell {:.1} s)", decision.dwell_s),
    }
}

fn run_pipeline(args: RunArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(d) = args.scorer_diagonal {
        cfg.scorer.confusion_diagonal = d;
    }
    if let Some(s) = args.dwell_s {
        cfg.guidance.dwell_s = s;
    }
    if let Some(p) = args.belief_threshold {
        cfg.guidance.belief_threshold = p;
    }
    if let Some(m) = args.max_range_m {
        cfg.fov.max_range_m = m;
    }
    if let Some(deg) = args.half_angle_deg {
        cfg.fov.half_angle_deg = deg;
    }
    if let Some(path) = &args.hmm_model {
        cfg.hmm_model = path.to_string_lossy().into_owned();
    }
    cfg.validate()?;

    let seq = open_sequence(&args.seq)?;
    let summary = run(&seq, &cfg, args.seed, Some(&args.out))?;
    let stats = &summary.stats;
    println!(
        "processed {}/{} frames ({} skipped)",
        stats.frames_processed, stats.frames_total, stats.frames_skipped
    );
    for (frame, error) in stats.errors.iter().take(5) {
        println!("  frame {frame} skipped: {error}");
    }
    println!(
        "proposals: {} total; detections: {}; tracks: {}",
        stats.proposals_total, stats.detections_total, stats.tracks_created
    );
    let medians: Vec<String> =
        stats.stage_median_ms.iter().map(|(k, v)| format!("{k} {v:.1}")).collect();
    println!("stage medians (ms/frame): {}", medians.join(", "));
    println!("final decision: {}", describe(&summary.final_decision));
    println!("logs: {}", args.out.display());

    if args.evaluate {
        let report = evaluate_run(&seq, &summary.detections, &summary.tracks, &EvaluateOptions::default())?;
        print!("{report}");
    }
    Ok(())
}

#[derive(Args)]
struct EstimateHmmArgs {
    /// Labeled sequences: one "hidden observed" index pair per line, blank
    /// lines separate sequences, `#` starts a comment.
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Number of hidden states.
    #[arg(long, value_name = "K")]
    hidden: usize,
    /// Number of observation symbols.
    #[arg(long, value_name = "O")]
    observed: usize,
    /// Dirichlet smoothing pseudo-count.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Parses the labeled-sequence format: whitespace-separated index pairs,
/// one per line; blank lines split sequences; `#` comments.
fn parse_labels(text: &str) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut sequences: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut current: Vec<(usize, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if !current.is_empty() {
                sequences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |part: Option<&str>| -> Result<usize> {
            part.with_context(|| format!("line {}: expected 'hidden observed'", i + 1))?
                .parse::<usize>()
                .with_context(|| format!("line {}: bad index", i + 1))
        };
        let pair = (parse(parts.next())?, parse(parts.next())?);
        if parts.next().is_some() {
            bail!("line {}: expected exactly two indices", i + 1);
        }
        current.push(pair);
    }
    if !current.is_empty() {
        sequences.push(current);
    }
    Ok(sequences)
}

fn estimate_hmm(args: EstimateHmmArgs) -> Result<()> {
    let text = fs::read_to_string(&args.labels)
        .with_context(|| format!("reading {}", args.labels.display()))?;
    let sequences = parse_labels(&text)?;
    let pairs: usize = sequences.iter().map(Vec::len).sum();
    let model = estimate_model(&sequences, args.hidden, args.observed, args.alpha)?;
    fs::write(&args.out, model.to_text())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "estimated {}x{} model from {} pairs in {} sequences -> {}",
        args.hidden,
        args.observed,
        pairs,
        sequences.len(),
        args.out.display()
    );
    Ok(())
}
