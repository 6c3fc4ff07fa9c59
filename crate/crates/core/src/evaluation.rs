//! Detection and tracking metrics against ground truth: IoU, per-class
//! average precision, confusion counts, and the CLEAR-MOT pair (MOTP,
//! MOTA).
//!
//! All functions are pure over immutable logs. Detection metrics match in
//! pixel space at an IoU threshold; tracking metrics match on the ground
//! plane at a distance threshold.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::camera::{PixelBox, Pose};
use crate::classes::{ClassId, NUM_CLASSES};
use crate::detection::Detection;
use crate::hungarian::min_cost_assignment;
use crate::tracking::FieldOfView;
use crate::{Error, Result};

/// Number of foreground (person) classes.
const FG: usize = NUM_CLASSES - 1;

/// Intersection over union of two pixel boxes, in [0, 1].
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    a.iou(b)
}

/// One labeled person in one frame, as stored in ground-truth logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame: u64,
    /// Person identity, stable across the sequence.
    pub person: u64,
    pub class: ClassId,
    #[serde(rename = "box")]
    pub box_px: PixelBox,
    /// Ground-plane position (meters).
    pub pos_world: [f64; 2],
    /// True when more than half of the person's pixels are covered.
    pub occluded: bool,
}

/// All ground truth for one frame. Person ids are unique within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame: u64,
    pub entries: Vec<GroundTruthRecord>,
}

/// Groups flat records into frames sorted by frame id, validating that
/// person ids are unique within each frame.
pub fn group_ground_truth(records: &[GroundTruthRecord]) -> Result<Vec<GroundTruthFrame>> {
    let mut by_frame: HashMap<u64, Vec<GroundTruthRecord>> = HashMap::new();
    for r in records {
        by_frame.entry(r.frame).or_default().push(r.clone());
    }
    let mut frames: Vec<GroundTruthFrame> = by_frame
        .into_iter()
        .map(|(frame, entries)| GroundTruthFrame { frame, entries })
        .collect();
    frames.sort_by_key(|f| f.frame);
    for f in &frames {
        let mut seen = std::collections::HashSet::new();
        for e in &f.entries {
            if !seen.insert(e.person) {
                return Err(Error::Config(format!(
                    "person {} appears twice in ground truth frame {}",
                    e.person, f.frame
                )));
            }
        }
    }
    Ok(frames)
}

/// Options for detection-metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionEvalOptions {
    pub iou_threshold: f64,
    /// When set, occluded ground truth becomes an ignore region: it is not
    /// required to be detected, and detections overlapping it count
    /// neither as hits nor as false positives. By default occluded people
    /// are mandatory to detect.
    pub exclude_occluded: bool,
}

impl Default for DetectionEvalOptions {
    fn default() -> DetectionEvalOptions {
        DetectionEvalOptions { iou_threshold: 0.5, exclude_occluded: false }
    }
}

/// Detection metrics at a fixed IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    /// AP per foreground class, in class order; `None` when the class has
    /// no ground truth (undefined, excluded from the mean).
    pub per_class_ap: [Option<f64>; FG],
    /// Unweighted mean over the defined per-class APs.
    pub map: f64,
    /// Matched ground truth over total ground truth, all classes pooled.
    pub recall: f64,
    /// Rows: true class. Columns: predicted class, then a final "missed"
    /// column. Matching is positional, ignoring class.
    pub confusion: [[usize; FG + 1]; FG],
    pub true_positives: usize,
    pub false_positives: usize,
    pub total_ground_truth: usize,
}

/// A point on a precision-recall curve, in descending-score order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

struct GtBox {
    frame: u64,
    class: ClassId,
    box_px: PixelBox,
    ignored: bool,
}

fn collect_gt(ground_truth: &[GroundTruthFrame], exclude_occluded: bool) -> Vec<GtBox> {
    ground_truth
        .iter()
        .flat_map(|f| f.entries.iter())
        .map(|e| GtBox {
            frame: e.frame,
            class: e.class,
            box_px: e.box_px,
            ignored: exclude_occluded && e.occluded,
        })
        .collect()
}

/// Sorts detection indices by descending score, ties broken by log order.
fn score_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score()
            .partial_cmp(&detections[a].score())
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Outcome per detection, in descending-score order: `Some(true)` hit,
/// `Some(false)` false positive, `None` dropped (matched an ignore region).
fn greedy_match(
    detections: &[Detection],
    order: &[usize],
    gt: &[GtBox],
    iou_threshold: f64,
    same_class_only: bool,
) -> (Vec<Option<bool>>, Vec<Option<usize>>) {
    let mut claimed = vec![false; gt.len()];
    let mut outcomes = Vec::with_capacity(order.len());
    let mut matched_gt = Vec::with_capacity(order.len());
    for &di in order {
        let d = &detections[di];
        let candidate = |g: &GtBox| {
            g.frame == d.frame && (!same_class_only || g.class == d.class)
        };
        let mut best_active: Option<(usize, f64)> = None;
        let mut best_ignored = 0.0f64;
        for (gi, g) in gt.iter().enumerate() {
            if !candidate(g) {
                continue;
            }
            let overlap = iou(&g.box_px, &d.box_px);
            if g.ignored {
                best_ignored = best_ignored.max(overlap);
            } else if !claimed[gi]
                && best_active.map_or(true, |(_, b)| overlap > b)
            {
                best_active = Some((gi, overlap));
            }
        }
        match best_active {
            Some((gi, overlap)) if overlap >= iou_threshold => {
                claimed[gi] = true;
                outcomes.push(Some(true));
                matched_gt.push(Some(gi));
            }
            _ if best_ignored >= iou_threshold => {
                outcomes.push(None);
                matched_gt.push(None);
            }
            _ => {
                outcomes.push(Some(false));
                matched_gt.push(None);
            }
        }
    }
    (outcomes, matched_gt)
}

/// Area under the all-points interpolated precision-recall curve:
/// precision is replaced by its monotone envelope (the running maximum
/// from high recall down) before integrating over recall.
fn area_under_envelope(outcomes: &[Option<bool>], n_gt: usize) -> f64 {
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for outcome in outcomes {
        match outcome {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    // Monotone envelope: interpolated precision at recall r is the best
    // precision achieved at any recall ≥ r.
    let n = points.len();
    let mut env = vec![0.0f64; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = running.max(points[i].1);
        env[i] = running;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            area += (recall - prev_recall) * env[i];
            prev_recall = recall;
        }
    }
    area
}

/// Average precision for one class; `None` when the class has no ground
/// truth to score against.
pub fn average_precision(
    detections: &[Detection],
    ground_truth: &[GroundTruthFrame],
    class: ClassId,
    opts: &DetectionEvalOptions,
) -> Option<f64> {
    let gt = collect_gt(ground_truth, opts.exclude_occluded);
    let class_dets: Vec<Detection> =
        detections.iter().filter(|d| d.class == class).cloned().collect();
    let class_gt: Vec<GtBox> = gt.into_iter().filter(|g| g.class == class).collect();
    let n_gt = class_gt.iter().filter(|g| !g.ignored).count();
    if n_gt == 0 {
        return None;
    }
    let order = score_order(&class_dets);
    let (outcomes, _) = greedy_match(&class_dets, &order, &class_gt, opts.iou_threshold, true);
    Some(area_under_envelope(&outcomes, n_gt))
}

/// Precision-recall points for one class, one per scoring detection, for
/// CSV export. Empty when the class has no ground truth.
pub fn pr_curve(
    detections: &[Detection],
    ground_truth: &[GroundTruthFrame],
    class: ClassId,
    opts: &DetectionEvalOptions,
) -> Vec<PrPoint> {
    let gt = collect_gt(ground_truth, opts.exclude_occluded);
    let class_dets: Vec<Detection> =
        detections.iter().filter(|d| d.class == class).cloned().collect();
    let class_gt: Vec<GtBox> = gt.into_iter().filter(|g| g.class == class).collect();
    let n_gt = class_gt.iter().filter(|g| !g.ignored).count();
    if n_gt == 0 {
        return Vec::new();
    }
    let order = score_order(&class_dets);
    let (outcomes, _) = greedy_match(&class_dets, &order, &class_gt, opts.iou_threshold, true);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (rank, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        points.push(PrPoint {
            score: class_dets[order[rank]].score(),
            recall: tp as f64 / n_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points
}

/// Writes a PR curve as CSV with a `score,recall,precision` header.
pub fn write_pr_csv<W: std::io::Write>(writer: W, points: &[PrPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Full detection-metric sweep: per-class AP, MAP over defined classes,
/// pooled recall, and the position-matched confusion matrix.
pub fn evaluate_detections(
    detections: &[Detection],
    ground_truth: &[GroundTruthFrame],
    opts: &DetectionEvalOptions,
) -> Result<DetectionMetrics> {
    let gt = collect_gt(ground_truth, opts.exclude_occluded);
    let total_ground_truth = gt.iter().filter(|g| !g.ignored).count();
    if total_ground_truth == 0 {
        return Err(Error::InsufficientData(
            "no ground truth objects to evaluate against".into(),
        ));
    }

    let mut per_class_ap: [Option<f64>; FG] = [None; FG];
    for (i, ap) in per_class_ap.iter_mut().enumerate() {
        let class = ClassId::from_index(i).expect("foreground index");
        *ap = average_precision(detections, ground_truth, class, opts);
    }
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    let map = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };

    // Pooled hit counting (same-class matching) for recall and FP totals.
    let order = score_order(detections);
    let (outcomes, _) = greedy_match(detections, &order, &gt, opts.iou_threshold, true);
    let true_positives = outcomes.iter().filter(|o| **o == Some(true)).count();
    let false_positives = outcomes.iter().filter(|o| **o == Some(false)).count();
    let recall = true_positives as f64 / total_ground_truth as f64;

    // Confusion counts use class-agnostic positional matching.
    let (_, matched_gt) = greedy_match(detections, &order, &gt, opts.iou_threshold, false);
    let mut confusion = [[0usize; FG + 1]; FG];
    let mut gt_hit = vec![false; gt.len()];
    for (rank, gi) in matched_gt.iter().enumerate() {
        if let Some(gi) = *gi {
            let d = &detections[order[rank]];
            confusion[gt[gi].class.index()][d.class.index()] += 1;
            gt_hit[gi] = true;
        }
    }
    for (gi, g) in gt.iter().enumerate() {
        if !g.ignored && !gt_hit[gi] {
            confusion[g.class.index()][FG] += 1;
        }
    }

    Ok(DetectionMetrics {
        per_class_ap,
        map,
        recall,
        confusion,
        true_positives,
        false_positives,
        total_ground_truth,
    })
}

/// One frame of CLEAR-MOT input: ground-truth people and track hypotheses
/// as (id, ground position) pairs. Frames must be supplied in time order.
#[derive(Debug, Clone, Default)]
pub struct MotFrame {
    pub ground_truth: Vec<(u64, [f64; 2])>,
    pub hypotheses: Vec<(u64, [f64; 2])>,
}

/// CLEAR-MOT scores and their event counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotScore {
    /// Mean ground-plane distance over all matches (meters); 0 when there
    /// are no matches.
    pub motp: f64,
    /// 1 − (misses + false positives + mismatches) / total ground truth.
    /// At most 1; negative when errors outnumber objects.
    pub mota: f64,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub matches: usize,
    pub total_ground_truth: usize,
}

fn dist2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// CLEAR-MOT evaluation: per frame, correspondences from the previous
/// frame are kept while both parties remain within `match_dist_m`, the
/// rest are matched by Hungarian assignment on distance, and a mismatch is
/// counted whenever a ground-truth person's hypothesis differs from the
/// last one it was ever matched to.
pub fn clear_mot(frames: &[MotFrame], match_dist_m: f64) -> Result<MotScore> {
    const GATED: f64 = 1e12;
    let total_ground_truth: usize = frames.iter().map(|f| f.ground_truth.len()).sum();
    if total_ground_truth == 0 {
        return Err(Error::InsufficientData("no ground truth objects in any frame".into()));
    }
    let mut last_hyp: HashMap<u64, u64> = HashMap::new();
    let mut prev_pairs: Vec<(u64, u64)> = Vec::new();
    let (mut misses, mut false_positives, mut mismatches, mut matches) = (0, 0, 0, 0);
    let mut dist_sum = 0.0;
    fn check_unique(kind: &str, entries: &[(u64, [f64; 2])]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &(id, _) in entries {
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate {kind} id {id} in frame")));
            }
        }
        Ok(())
    }
    for frame in frames {
        check_unique("ground truth", &frame.ground_truth)?;
        check_unique("hypothesis", &frame.hypotheses)?;
        let gt_pos: HashMap<u64, [f64; 2]> = frame.ground_truth.iter().copied().collect();
        let hyp_pos: HashMap<u64, [f64; 2]> = frame.hypotheses.iter().copied().collect();
        let mut pairs: Vec<(u64, u64)> = Vec::new();
        let mut gt_used: std::collections::HashSet<u64> = std::collections::HashSet::new();
        let mut hyp_used: std::collections::HashSet<u64> = std::collections::HashSet::new();
        for &(person, hyp) in &prev_pairs {
            if let (Some(&gp), Some(&hp)) = (gt_pos.get(&person), hyp_pos.get(&hyp)) {
                if dist2d(gp, hp) <= match_dist_m {
                    pairs.push((person, hyp));
                    gt_used.insert(person);
                    hyp_used.insert(hyp);
                }
            }
        }
        let free_gt: Vec<(u64, [f64; 2])> = frame
            .ground_truth
            .iter()
            .filter(|(p, _)| !gt_used.contains(p))
            .copied()
            .collect();
        let free_hyp: Vec<(u64, [f64; 2])> = frame
            .hypotheses
            .iter()
            .filter(|(h, _)| !hyp_used.contains(h))
            .copied()
            .collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let cost: Vec<Vec<f64>> = free_gt
                .iter()
                .map(|&(_, gp)| {
                    free_hyp
                        .iter()
                        .map(|&(_, hp)| {
                            let d = dist2d(gp, hp);
                            if d <= match_dist_m {
                                d
                            } else {
                                GATED
                            }
                        })
                        .collect()
                })
                .collect();
            for (gi, assigned) in min_cost_assignment(&cost).into_iter().enumerate() {
                if let Some(hi) = assigned {
                    if cost[gi][hi] < GATED {
                        pairs.push((free_gt[gi].0, free_hyp[hi].0));
                    }
                }
            }
        }
        pairs.sort_unstable();
        for &(person, hyp) in &pairs {
            if let Some(&previous) = last_hyp.get(&person) {
                if previous != hyp {
                    mismatches += 1;
                }
            }
            last_hyp.insert(person, hyp);
            dist_sum += dist2d(gt_pos[&person], hyp_pos[&hyp]);
        }
        matches += pairs.len();
        misses += frame.ground_truth.len() - pairs.len();
        false_positives += frame.hypotheses.len() - pairs.len();
        prev_pairs = pairs;
    }
    let motp = if matches > 0 { dist_sum / matches as f64 } else { 0.0 };
    let mota = 1.0 - (misses + false_positives + mismatches) as f64 / total_ground_truth as f64;
    Ok(MotScore {
        motp,
        mota,
        misses,
        false_positives,
        mismatches,
        matches,
        total_ground_truth,
    })
}

/// Drops hypotheses outside the camera's field of view, one pose per
/// frame. Ground truth is untouched: occluded or out-of-view people stay
/// mandatory unless excluded by their own options.
pub fn filter_hypotheses_by_fov(
    frames: &mut [MotFrame],
    poses: &[Pose],
    fov: &FieldOfView,
) -> Result<()> {
    if frames.len() != poses.len() {
        return Err(Error::Config(format!(
            "{} evaluation frames but {} camera poses",
            frames.len(),
            poses.len()
        )));
    }
    for (frame, pose) in frames.iter_mut().zip(poses) {
        let (cx, cy) = pose.ground_position();
        let (fx, fy) = pose.ground_forward();
        frame.hypotheses.retain(|&(_, p)| fov.contains([cx, cy], [fx, fy], p));
    }
    Ok(())
}

/// Combined report over a run: detection metrics plus tracking metrics
/// when a track log was supplied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub detection: DetectionMetrics,
    pub tracking: Option<MotScore>,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.detection;
        writeln!(f, "detection metrics")?;
        for (i, ap) in d.per_class_ap.iter().enumerate() {
            let class = ClassId::from_index(i).expect("foreground index");
            match ap {
                Some(v) => writeln!(f, "  ap[{}] = {:.4}", class.name(), v)?,
                None => writeln!(f, "  ap[{}] = undefined (no ground truth)", class.name())?,
            }
        }
        writeln!(f, "  map = {:.4}", d.map)?;
        writeln!(f, "  recall = {:.4}  ({} of {} ground truth)", d.recall, d.true_positives, d.total_ground_truth)?;
        writeln!(f, "  false positives = {}", d.false_positives)?;
        writeln!(f, "  confusion (rows true class, last column missed):")?;
        for (i, row) in d.confusion.iter().enumerate() {
            let class = ClassId::from_index(i).expect("foreground index");
            writeln!(f, "    {:>16} {:?}", class.name(), row)?;
        }
        if let Some(t) = &self.tracking {
            writeln!(f, "tracking metrics")?;
            writeln!(f, "  motp = {:.4} m", t.motp)?;
            writeln!(f, "  mota = {:.4}", t.mota)?;
            writeln!(
                f,
                "  misses = {}, false positives = {}, mismatches = {}, matches = {}, ground truth = {}",
                t.misses, t.false_positives, t.mismatches, t.matches, t.total_ground_truth
            )?;
        }
        Ok(())
    }
}
