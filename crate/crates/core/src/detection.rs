//! Per-segment class voting, non-maximum suppression, and 3D localization.
//!
//! Each segment's proposals are scored by a [`Scorer`]; every proposal votes
//! for its highest-scoring category, the segment takes the majority class,
//! and surviving segments become [`Detection`]s positioned at the segment's
//! median depth.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, DepthFrame, PixelBox, Pose};
use crate::classes::{ClassId, ScoreVector};
use crate::proposals::{frame_proposals, FrameProposals, FrameStats, Proposal, ProposerConfig};
use crate::scorers::Scorer;
use crate::segmentation::Segment;
use crate::{Error, Result};

/// One detected person in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    #[serde(rename = "box")]
    pub box_px: PixelBox,
    /// Voted class; never background.
    pub class: ClassId,
    /// Mean score vector of the proposals that voted for the winning class.
    pub scores: ScoreVector,
    /// Camera-frame position (x_c, y_c, z_c), meters.
    pub pos_cam: [f64; 3],
    /// Ground-plane position (x, y), world frame, meters.
    pub pos_world: [f64; 2],
}

impl Detection {
    /// NMS and evaluation rank detections by the winning-class score.
    pub fn score(&self) -> f64 {
        self.scores.get(self.class)
    }
}

/// Votes a class for one segment from its proposals' score vectors.
///
/// Every proposal votes for its argmax category. The segment class is the
/// most frequent *foreground* vote; background wins only when no proposal
/// votes for any foreground class, so a single confident person proposal is
/// not outvoted by the off-center proposals that correctly see background.
/// Ties on the count are broken by the higher mean winning-class score, then
/// by the fixed class order. The returned vector is the mean over the
/// proposals that voted for the winner.
pub fn vote_segment_class(scores: &[ScoreVector]) -> Result<(ClassId, ScoreVector)> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("vote over zero proposals".into()));
    }
    let votes: Vec<ClassId> = scores.iter().map(ScoreVector::argmax).collect();
    let mut winner = ClassId::Background;
    let mut winner_count = 0usize;
    let mut winner_mean = f64::NEG_INFINITY;
    for class in crate::classes::FOREGROUND_CLASSES {
        let voters: Vec<f64> = votes
            .iter()
            .zip(scores)
            .filter(|(v, _)| **v == class)
            .map(|(_, s)| s.get(class))
            .collect();
        if voters.is_empty() {
            continue;
        }
        let mean = voters.iter().sum::<f64>() / voters.len() as f64;
        if voters.len() > winner_count
            || (voters.len() == winner_count && mean > winner_mean)
        {
            winner = class;
            winner_count = voters.len();
            winner_mean = mean;
        }
    }
    let chosen: Vec<ScoreVector> = votes
        .iter()
        .zip(scores)
        .filter(|(v, _)| **v == winner)
        .map(|(_, s)| *s)
        .collect();
    Ok((winner, ScoreVector::mean(&chosen)?))
}

/// Greedy class-agnostic non-maximum suppression.
///
/// Repeatedly keeps the highest-scoring remaining detection and discards the
/// rest with IoU above `iou_threshold` against it. Input order does not
/// matter: candidates are pre-sorted by score, then box coordinates, then
/// class, so ties resolve identically for any permutation.
pub fn nms(mut detections: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    detections.sort_by(|a, b| {
        b.score()
            .partial_cmp(&a.score())
            .expect("scores are finite")
            .then_with(|| {
                a.box_px
                    .as_array()
                    .map(f64::to_bits)
                    .cmp(&b.box_px.as_array().map(f64::to_bits))
            })
            .then_with(|| a.class.index().cmp(&b.class.index()))
    });
    let mut kept: Vec<Detection> = Vec::with_capacity(detections.len());
    for d in detections {
        if kept.iter().all(|k| k.box_px.iou(&d.box_px) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Positions a segment in 3D: depth is the median over member points, the
/// lateral position back-projects the box center at that depth, and the
/// world position is the posed point dropped onto the ground plane (x, z).
pub fn locate_segment(
    segment: &Segment,
    points: &[Point3<f64>],
    box_px: &PixelBox,
    cam: &CameraModel,
    pose: &Pose,
) -> Result<(Point3<f64>, [f64; 2])> {
    if segment.is_empty() {
        return Err(Error::InsufficientData("locate over empty segment".into()));
    }
    let mut depths: Vec<f64> = segment.indices.iter().map(|&i| points[i].z).collect();
    depths.sort_by(|a, b| a.partial_cmp(b).expect("depths are finite"));
    let n = depths.len();
    let z = if n % 2 == 1 { depths[n / 2] } else { (depths[n / 2 - 1] + depths[n / 2]) / 2.0 };
    let (u, v) = box_px.center();
    let pos_cam = cam.backproject(u, v, z);
    let world = pose.transform_point(&pos_cam);
    Ok((pos_cam, [world.x, world.z]))
}

/// Detector configuration: the proposal front end plus the NMS threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub proposer: ProposerConfig,
    pub nms_iou: f64,
}

impl Default for DetectorConfig {
    fn default() -> DetectorConfig {
        DetectorConfig { proposer: ProposerConfig::default(), nms_iou: 0.3 }
    }
}

/// Detections for one frame plus front-end bookkeeping.
#[derive(Debug, Clone)]
pub struct FrameDetections {
    pub detections: Vec<Detection>,
    pub stats: FrameStats,
}

/// Full single-frame detection: proposals, scoring, per-segment vote,
/// localization, NMS.
///
/// Background-voted segments emit nothing. Scorer failures propagate as the
/// frame's error; callers skip the frame.
pub fn detect_frame(
    frame: &DepthFrame,
    frame_id: u64,
    cam: &CameraModel,
    cfg: &DetectorConfig,
    scorer: &mut dyn Scorer,
    seed: u64,
) -> Result<FrameDetections> {
    let front = frame_proposals(frame, cam, &cfg.proposer, seed)?;
    let detections = detect_from_proposals(&front, frame, frame_id, cam, cfg, scorer)?;
    Ok(FrameDetections { detections, stats: front.stats })
}

/// The classification back half of [`detect_frame`]: scoring, per-segment
/// vote, localization and NMS over already-built proposals. Split out so
/// callers can time the proposal front end separately.
pub fn detect_from_proposals(
    front: &FrameProposals,
    frame: &DepthFrame,
    frame_id: u64,
    cam: &CameraModel,
    cfg: &DetectorConfig,
    scorer: &mut dyn Scorer,
) -> Result<Vec<Detection>> {
    if front.proposals.is_empty() {
        return Ok(Vec::new());
    }
    let boxes: Vec<PixelBox> = front.proposals.iter().map(|p| p.box_px).collect();
    let scores = scorer.scores(frame_id, frame, &boxes)?;
    if scores.len() != boxes.len() {
        return Err(Error::Scorer(format!(
            "scorer returned {} vectors for {} boxes",
            scores.len(),
            boxes.len()
        )));
    }
    for s in &scores {
        s.validate().map_err(|e| Error::Scorer(format!("invalid score vector: {e}")))?;
    }

    let mut detections = Vec::new();
    for (seg_id, segment) in front.segments.iter().enumerate() {
        let member: Vec<(&Proposal, &ScoreVector)> = front
            .proposals
            .iter()
            .zip(&scores)
            .filter(|(p, _)| p.segment == seg_id)
            .collect();
        if member.is_empty() {
            continue; // all of this segment's boxes clamped away
        }
        let seg_scores: Vec<ScoreVector> = member.iter().map(|(_, s)| **s).collect();
        let (class, mean_scores) = vote_segment_class(&seg_scores)?;
        if class == ClassId::Background {
            continue;
        }
        // Representative box: the winner-voting proposal with the highest
        // winning-class score; generation order breaks ties.
        let best = member
            .iter()
            .filter(|(_, s)| s.argmax() == class)
            .max_by(|(_, a), (_, b)| {
                a.get(class).partial_cmp(&b.get(class)).expect("scores are finite")
            })
            .expect("winner has at least one voter");
        let box_px = best.0.box_px;
        let (pos_cam, pos_world) =
            locate_segment(segment, &front.points, &box_px, cam, &frame.camera_pose)?;
        detections.push(Detection {
            frame: frame_id,
            box_px,
            class,
            scores: mean_scores,
            pos_cam: [pos_cam.x, pos_cam.y, pos_cam.z],
            pos_world,
        });
    }
    Ok(nms(detections, cfg.nms_iou))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{FrameTruth, OracleScorer};
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn peaked(class: ClassId, peak: f64) -> ScoreVector {
        ScoreVector::peaked(class, peak)
    }

    #[test]
    fn single_vote_wins() {
        let (class, scores) = vote_segment_class(&[peaked(ClassId::Wheelchair, 0.9)]).unwrap();
        assert_eq!(class, ClassId::Wheelchair);
        assert_eq!(scores.get(ClassId::Wheelchair), 0.9);
    }

    #[test]
    fn majority_wins() {
        let votes = [
            peaked(ClassId::Pedestrian, 0.7),
            peaked(ClassId::Pedestrian, 0.6),
            peaked(ClassId::Walker, 0.95),
        ];
        let (class, scores) = vote_segment_class(&votes).unwrap();
        assert_eq!(class, ClassId::Pedestrian);
        assert_relative_eq!(scores.get(ClassId::Pedestrian), 0.65, epsilon = 1e-12);
    }

    #[test]
    fn count_tie_broken_by_mean_score_under_any_permutation() {
        let base = vec![
            peaked(ClassId::Crutches, 0.8),
            peaked(ClassId::Crutches, 0.8),
            peaked(ClassId::Walker, 0.6),
            peaked(ClassId::Walker, 0.6),
        ];
        // All 24 orderings agree.
        let mut order = [0usize, 1, 2, 3];
        let mut permutations = Vec::new();
        heap_permutations(&mut order, 4, &mut permutations);
        assert_eq!(permutations.len(), 24);
        for perm in permutations {
            let arranged: Vec<ScoreVector> = perm.iter().map(|&i| base[i]).collect();
            let (class, _) = vote_segment_class(&arranged).unwrap();
            assert_eq!(class, ClassId::Crutches, "order {perm:?}");
        }
    }

    fn heap_permutations(a: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
        if k == 1 {
            out.push(*a);
            return;
        }
        for i in 0..k {
            heap_permutations(a, k - 1, out);
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }

    #[test]
    fn full_tie_falls_back_to_class_order() {
        let votes = [peaked(ClassId::Walker, 0.7), peaked(ClassId::Wheelchair, 0.7)];
        let (class, _) = vote_segment_class(&votes).unwrap();
        assert_eq!(class, ClassId::Wheelchair); // earlier in the fixed order
    }

    #[test]
    fn background_majority_does_not_outvote_foreground() {
        let mut votes = vec![peaked(ClassId::Background, 0.9); 20];
        votes.push(peaked(ClassId::PushWheelchair, 0.8));
        let (class, scores) = vote_segment_class(&votes).unwrap();
        assert_eq!(class, ClassId::PushWheelchair);
        assert_eq!(scores.get(ClassId::PushWheelchair), 0.8);
    }

    #[test]
    fn all_background_votes_background() {
        let votes = vec![peaked(ClassId::Background, 0.9); 4];
        let (class, _) = vote_segment_class(&votes).unwrap();
        assert_eq!(class, ClassId::Background);
    }

    #[test]
    fn argmax_vote_invariant_under_monotone_rescale() {
        // Scaling one proposal's raw scores by any positive factor before
        // normalization leaves its vote unchanged.
        let raw = [0.1, 0.3, 0.05, 0.25, 0.2, 0.1];
        let v1 = ScoreVector::new(raw).unwrap();
        let squared = raw.map(|x| x * x);
        let v2 = ScoreVector::normalized(squared).unwrap();
        assert_eq!(v1.argmax(), v2.argmax());
    }

    fn det(u0: f64, v0: f64, u1: f64, v1: f64, class: ClassId, score: f64) -> Detection {
        Detection {
            frame: 0,
            box_px: PixelBox::new(u0, v0, u1, v1).unwrap(),
            class,
            scores: peaked(class, score),
            pos_cam: [0.0, 0.0, 2.0],
            pos_world: [0.0, 2.0],
        }
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let input = vec![
            det(0.0, 0.0, 10.0, 10.0, ClassId::Pedestrian, 0.9),
            det(100.0, 100.0, 110.0, 110.0, ClassId::Walker, 0.8),
        ];
        assert_eq!(nms(input, 0.5).len(), 2);
    }

    #[test]
    fn nms_suppresses_dominated_overlap() {
        // Boxes with IoU 2/3 > 0.5: [0,0,30,10] vs [5,0,35,10] -> overlap 25,
        // union 35... use IoU 0.8 pair per the shift formula (300-dx)/(300+dx).
        let a = det(0.0, 0.0, 300.0, 10.0, ClassId::Pedestrian, 0.9);
        let b = det(33.0, 0.0, 333.0, 10.0, ClassId::Walker, 0.7); // IoU 0.802
        let out = nms(vec![b.clone(), a.clone()], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class, ClassId::Pedestrian);
    }

    /// O(n²) reference NMS used by the equivalence tests.
    fn nms_brute(mut input: Vec<Detection>, threshold: f64) -> Vec<Detection> {
        let mut kept = Vec::new();
        while !input.is_empty() {
            let best = input
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    a.score().partial_cmp(&b.score()).unwrap().then_with(|| {
                        b.box_px
                            .as_array()
                            .map(f64::to_bits)
                            .cmp(&a.box_px.as_array().map(f64::to_bits))
                            .then_with(|| b.class.index().cmp(&a.class.index()))
                    })
                })
                .map(|(i, _)| i)
                .unwrap();
            let pick = input.remove(best);
            input.retain(|d| d.box_px.iou(&pick.box_px) <= threshold);
            kept.push(pick);
        }
        kept
    }

    #[test]
    fn nms_matches_brute_force_and_ignores_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let classes = ClassId::all();
        for trial in 0..50 {
            let n = rng.gen_range(1..=8);
            let boxes: Vec<Detection> = (0..n)
                .map(|_| {
                    let u0 = rng.gen_range(0.0..200.0);
                    let v0 = rng.gen_range(0.0..200.0);
                    det(
                        u0,
                        v0,
                        u0 + rng.gen_range(20.0..120.0),
                        v0 + rng.gen_range(20.0..120.0),
                        classes[rng.gen_range(0..5)],
                        rng.gen_range(0.3..0.99),
                    )
                })
                .collect();
            let fast = nms(boxes.clone(), 0.4);
            let brute = nms_brute(boxes.clone(), 0.4);
            assert_eq!(fast, brute, "trial {trial}");
            let mut shuffled = boxes;
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            assert_eq!(nms(shuffled, 0.4), fast, "permuted trial {trial}");
        }
    }

    #[test]
    fn locate_on_axis_segment() {
        let cam = CameraModel::simulator_default();
        let points =
            vec![Point3::new(0.0, 0.0, 1.9), Point3::new(0.0, 0.0, 2.0), Point3::new(0.0, 0.0, 2.4)];
        let seg = Segment { indices: vec![0, 1, 2], centroid: Point3::new(0.0, 0.0, 2.1) };
        let box_px = PixelBox::new(460.0, 250.0, 500.0, 290.0).unwrap(); // centered on (480, 270)
        let (pos, world) =
            locate_segment(&seg, &points, &box_px, &cam, &Pose::identity()).unwrap();
        assert_relative_eq!(pos.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pos.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pos.z, 2.0, epsilon = 1e-12); // median, not mean
        // Identity pose: world (x, y) = camera (x, z).
        assert_eq!(world, [0.0, 2.0]);
    }

    #[test]
    fn locate_even_count_averages_middle_depths() {
        let cam = CameraModel::simulator_default();
        let points = vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 2.0),
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(0.0, 0.0, 9.0),
        ];
        let seg = Segment { indices: vec![0, 1, 2, 3], centroid: Point3::new(0.0, 0.0, 3.75) };
        let box_px = PixelBox::new(470.0, 260.0, 490.0, 280.0).unwrap();
        let (pos, _) = locate_segment(&seg, &points, &box_px, &cam, &Pose::identity()).unwrap();
        assert_relative_eq!(pos.z, 2.5, epsilon = 1e-12);
    }

    // Analytic scene shared with the proposals tests: floor plus slabs.
    fn slab_frame(cam: &CameraModel, slab_x: &[f64], slab_z: f64) -> DepthFrame {
        let mut depth = vec![0u16; (cam.width * cam.height) as usize];
        for v in 0..cam.height {
            for u in 0..cam.width {
                let (uc, vc) = (u as f64 + 0.5, v as f64 + 0.5);
                let dir_y = (vc - cam.cy) / cam.fy;
                let mut z = f64::INFINITY;
                if dir_y > 1e-9 {
                    let zf = 1.0 / dir_y;
                    if zf <= cam.max_depth {
                        z = zf;
                    }
                }
                let x_at = (uc - cam.cx) / cam.fx * slab_z;
                let y_at = dir_y * slab_z;
                for &sx in slab_x {
                    if (x_at - sx).abs() <= 0.2 && (-0.75..=1.0).contains(&y_at) && slab_z < z {
                        z = slab_z;
                    }
                }
                if z.is_finite() {
                    depth[(v * cam.width + u) as usize] = (z * 1000.0).round() as u16;
                }
            }
        }
        DepthFrame::new(cam.width, cam.height, depth, 0.0, Pose::identity()).unwrap()
    }

    fn slab_truth(cam: &CameraModel, class: ClassId, sx: f64, z: f64) -> (ClassId, PixelBox) {
        let u0 = cam.cx + (sx - 0.2) * cam.fx / z;
        let u1 = cam.cx + (sx + 0.2) * cam.fx / z;
        let v0 = cam.cy - 0.75 * cam.fy / z;
        let v1 = (cam.cy + 1.0 * cam.fy / z).min(cam.height as f64);
        (class, PixelBox::new(u0, v0, u1, v1).unwrap())
    }

    #[test]
    fn empty_frame_detects_nothing() {
        let cam = CameraModel::simulator_default();
        let frame = DepthFrame::new(
            cam.width,
            cam.height,
            vec![0; (cam.width * cam.height) as usize],
            0.0,
            Pose::identity(),
        )
        .unwrap();
        let mut scorer = OracleScorer::identity(HashMap::new());
        let out =
            detect_frame(&frame, 0, &cam, &DetectorConfig::default(), &mut scorer, 1).unwrap();
        assert!(out.detections.is_empty());
    }

    #[test]
    fn one_person_one_detection() {
        let cam = CameraModel::simulator_default();
        let frame = slab_frame(&cam, &[0.0], 2.0);
        let truth: HashMap<u64, FrameTruth> =
            [(0u64, vec![slab_truth(&cam, ClassId::Pedestrian, 0.0, 2.0)])].into_iter().collect();
        let mut scorer = OracleScorer::identity(truth);
        let out =
            detect_frame(&frame, 0, &cam, &DetectorConfig::default(), &mut scorer, 1).unwrap();
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert_eq!(d.class, ClassId::Pedestrian);
        assert_eq!(d.frame, 0);
        // Localized within 0.15 m of the slab at world (0, 2).
        assert!((d.pos_world[0]).abs() < 0.15, "x = {}", d.pos_world[0]);
        assert!((d.pos_world[1] - 2.0).abs() < 0.15, "y = {}", d.pos_world[1]);
        assert!(cam.min_depth <= d.pos_cam[2] && d.pos_cam[2] <= cam.max_depth);
    }

    #[test]
    fn overlapping_people_never_exceed_two_detections() {
        let cam = CameraModel::simulator_default();
        let frame = slab_frame(&cam, &[-0.35, 0.35], 2.5);
        let truth: HashMap<u64, FrameTruth> = [(
            0u64,
            vec![
                slab_truth(&cam, ClassId::Pedestrian, -0.35, 2.5),
                slab_truth(&cam, ClassId::Walker, 0.35, 2.5),
            ],
        )]
        .into_iter()
        .collect();
        let mut scorer = OracleScorer::identity(truth);
        let out =
            detect_frame(&frame, 0, &cam, &DetectorConfig::default(), &mut scorer, 1).unwrap();
        assert!(!out.detections.is_empty());
        assert!(out.detections.len() <= 2, "got {}", out.detections.len());
        for d in &out.detections {
            assert_ne!(d.class, ClassId::Background);
        }
    }

    #[test]
    fn detect_frame_is_deterministic() {
        let cam = CameraModel::simulator_default();
        let frame = slab_frame(&cam, &[0.3], 2.2);
        let truth: HashMap<u64, FrameTruth> =
            [(5u64, vec![slab_truth(&cam, ClassId::Crutches, 0.3, 2.2)])].into_iter().collect();
        let confusion = crate::scorers::ConfusionMatrix::uniform_diagonal(0.7).unwrap();
        let mut s1 = OracleScorer::new(truth.clone(), confusion, 0.8, 3).unwrap();
        let mut s2 = OracleScorer::new(truth, confusion, 0.8, 3).unwrap();
        let cfg = DetectorConfig::default();
        let a = detect_frame(&frame, 5, &cam, &cfg, &mut s1, 9).unwrap();
        let b = detect_frame(&frame, 5, &cam, &cfg, &mut s2, 9).unwrap();
        assert_eq!(a.detections, b.detections);
    }

    #[test]
    fn scorer_length_mismatch_is_an_error() {
        struct Short;
        impl Scorer for Short {
            fn scores(
                &mut self,
                _: u64,
                _: &DepthFrame,
                _: &[PixelBox],
            ) -> Result<Vec<ScoreVector>> {
                Ok(vec![])
            }
        }
        let cam = CameraModel::simulator_default();
        let frame = slab_frame(&cam, &[0.0], 2.0);
        let r = detect_frame(&frame, 0, &cam, &DetectorConfig::default(), &mut Short, 1);
        assert!(matches!(r, Err(Error::Scorer(_))));
    }
}
