//! Pluggable per-ROI classifiers.
//!
//! The pipeline treats classification as a black box behind [`Scorer`]. Two
//! deterministic implementations are provided: [`MockScorer`] replays scores
//! from a lookup table for golden tests, and [`OracleScorer`] labels ROIs
//! against simulator ground truth and corrupts the label through a
//! configurable confusion matrix, standing in for a trained network.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{DepthFrame, PixelBox};
use crate::classes::{ClassId, ScoreVector, NUM_CLASSES};
use crate::{Error, Result};

/// ROI labeling thresholds: IoU above `POSITIVE_IOU` against a ground-truth
/// box takes its class; below `BACKGROUND_IOU` is background; the band in
/// between is ambiguous and also maps to background.
pub const POSITIVE_IOU: f64 = 0.6;
pub const BACKGROUND_IOU: f64 = 0.4;

/// A per-ROI classifier: one score vector per input box.
///
/// Implementations must return exactly one valid score vector per box and
/// are called from one thread at a time per instance.
pub trait Scorer {
    fn scores(
        &mut self,
        frame_id: u64,
        frame: &DepthFrame,
        boxes: &[PixelBox],
    ) -> Result<Vec<ScoreVector>>;
}

/// Row-stochastic class-confusion model: `rows[t][o]` is the probability of
/// observing class `o` when the true class is `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub rows: [[f64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new(rows: [[f64; NUM_CLASSES]; NUM_CLASSES]) -> Result<ConfusionMatrix> {
        let m = ConfusionMatrix { rows };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Config(format!("confusion row {i} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("confusion row {i} sums to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    /// Perfect classifier: the label is always observed as itself.
    pub fn identity() -> ConfusionMatrix {
        let mut rows = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        ConfusionMatrix { rows }
    }

    /// `diagonal` mass on the true class, the rest spread uniformly over the
    /// other five categories.
    pub fn uniform_diagonal(diagonal: f64) -> Result<ConfusionMatrix> {
        if !(0.0..=1.0).contains(&diagonal) {
            return Err(Error::Config(format!("diagonal {diagonal} outside [0,1]")));
        }
        let off = (1.0 - diagonal) / (NUM_CLASSES - 1) as f64;
        let mut rows = [[off; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = diagonal;
        }
        Ok(ConfusionMatrix { rows })
    }

    pub fn row(&self, true_class: ClassId) -> &[f64; NUM_CLASSES] {
        &self.rows[true_class.index()]
    }

    /// Draws an observed class for a true class.
    pub fn sample(&self, true_class: ClassId, rng: &mut impl Rng) -> ClassId {
        let row = self.row(true_class);
        let mut x: f64 = rng.gen();
        for (i, &p) in row.iter().enumerate() {
            if x < p {
                return ClassId::from_index(i).expect("index < NUM_CLASSES");
            }
            x -= p;
        }
        // Rounding slack lands on the last nonzero entry.
        let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(NUM_CLASSES - 1);
        ClassId::from_index(last).expect("index < NUM_CLASSES")
    }
}

/// Ground-truth boxes for one frame.
pub type FrameTruth = Vec<(ClassId, PixelBox)>;

/// Labels each ROI by IoU against ground truth, then passes the label
/// through a confusion matrix and emits a score vector peaked on the
/// observed class.
///
/// Sampling is seeded per frame, so scores for a frame do not depend on
/// which other frames were scored or in what order.
pub struct OracleScorer {
    truth: HashMap<u64, FrameTruth>,
    confusion: ConfusionMatrix,
    /// Score mass on the observed class; the rest is spread uniformly.
    peak: f64,
    seed: u64,
}

impl OracleScorer {
    pub fn new(
        truth: HashMap<u64, FrameTruth>,
        confusion: ConfusionMatrix,
        peak: f64,
        seed: u64,
    ) -> Result<OracleScorer> {
        confusion.validate()?;
        if !(peak > 1.0 / NUM_CLASSES as f64 && peak <= 1.0) {
            return Err(Error::Config(format!(
                "peak {peak} must exceed uniform mass and not exceed 1"
            )));
        }
        Ok(OracleScorer { truth, confusion, peak, seed })
    }

    /// Perfect classifier over the given ground truth.
    pub fn identity(truth: HashMap<u64, FrameTruth>) -> OracleScorer {
        OracleScorer::new(truth, ConfusionMatrix::identity(), 0.8, 0).expect("valid constants")
    }

    /// The IoU-threshold label for one box: the class of the best-matching
    /// ground-truth box when IoU exceeds the positive threshold, otherwise
    /// background (the ambiguous band included).
    pub fn label(&self, frame_id: u64, box_px: &PixelBox) -> ClassId {
        let Some(truth) = self.truth.get(&frame_id) else {
            return ClassId::Background;
        };
        let mut best = (0.0, ClassId::Background);
        for (class, gt) in truth {
            let iou = box_px.iou(gt);
            if iou > best.0 {
                best = (iou, *class);
            }
        }
        if best.0 > POSITIVE_IOU {
            best.1
        } else {
            ClassId::Background
        }
    }

    fn frame_rng(&self, frame_id: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ frame_id.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

impl Scorer for OracleScorer {
    fn scores(
        &mut self,
        frame_id: u64,
        _frame: &DepthFrame,
        boxes: &[PixelBox],
    ) -> Result<Vec<ScoreVector>> {
        let mut rng = self.frame_rng(frame_id);
        Ok(boxes
            .iter()
            .map(|b| {
                let observed = self.confusion.sample(self.label(frame_id, b), &mut rng);
                ScoreVector::peaked(observed, self.peak)
            })
            .collect())
    }
}

/// Replays stored score vectors keyed by frame id and box coordinates
/// (rounded to 1e-3 px). Unknown boxes are an error, which exercises the
/// callers' frame-skip path.
#[derive(Debug, Default)]
pub struct MockScorer {
    map: HashMap<(u64, [i64; 4]), ScoreVector>,
}

fn box_key(b: &PixelBox) -> [i64; 4] {
    b.as_array().map(|c| (c * 1000.0).round() as i64)
}

impl MockScorer {
    pub fn new() -> MockScorer {
        MockScorer::default()
    }

    pub fn insert(&mut self, frame_id: u64, box_px: PixelBox, scores: ScoreVector) {
        self.map.insert((frame_id, box_key(&box_px)), scores);
    }
}

impl Scorer for MockScorer {
    fn scores(
        &mut self,
        frame_id: u64,
        _frame: &DepthFrame,
        boxes: &[PixelBox],
    ) -> Result<Vec<ScoreVector>> {
        boxes
            .iter()
            .map(|b| {
                self.map.get(&(frame_id, box_key(b))).copied().ok_or_else(|| {
                    Error::Scorer(format!(
                        "no stored scores for frame {frame_id}, box {:?}",
                        b.as_array()
                    ))
                })
            })
            .collect()
    }
}
