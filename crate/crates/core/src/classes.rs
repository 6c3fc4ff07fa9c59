//! The person categories and per-ROI score vectors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of score/observation categories (five person classes plus
/// background).
pub const NUM_CLASSES: usize = 6;

/// The five foreground categories, in the fixed class order.
pub const FOREGROUND_CLASSES: [ClassId; 5] = [
    ClassId::Pedestrian,
    ClassId::Wheelchair,
    ClassId::PushWheelchair,
    ClassId::Crutches,
    ClassId::Walker,
];

/// Person category. `Background` is only ever an observation or score
/// outcome (a misdetection, or clutter); it is never the class of an
/// emitted detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    Pedestrian,
    Wheelchair,
    PushWheelchair,
    Crutches,
    Walker,
    Background,
}

impl ClassId {
    /// Index in the fixed class order (background last).
    pub fn index(self) -> usize {
        match self {
            ClassId::Pedestrian => 0,
            ClassId::Wheelchair => 1,
            ClassId::PushWheelchair => 2,
            ClassId::Crutches => 3,
            ClassId::Walker => 4,
            ClassId::Background => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassId> {
        match i {
            0 => Some(ClassId::Pedestrian),
            1 => Some(ClassId::Wheelchair),
            2 => Some(ClassId::PushWheelchair),
            3 => Some(ClassId::Crutches),
            4 => Some(ClassId::Walker),
            5 => Some(ClassId::Background),
            _ => None,
        }
    }

    pub fn is_foreground(self) -> bool {
        self != ClassId::Background
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Pedestrian => "pedestrian",
            ClassId::Wheelchair => "wheelchair",
            ClassId::PushWheelchair => "push_wheelchair",
            ClassId::Crutches => "crutches",
            ClassId::Walker => "walker",
            ClassId::Background => "background",
        }
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        match name {
            "pedestrian" => Some(ClassId::Pedestrian),
            "wheelchair" => Some(ClassId::Wheelchair),
            "push_wheelchair" => Some(ClassId::PushWheelchair),
            "crutches" => Some(ClassId::Crutches),
            "walker" => Some(ClassId::Walker),
            "background" => Some(ClassId::Background),
            _ => None,
        }
    }

    /// All six categories in the fixed order.
    pub fn all() -> [ClassId; NUM_CLASSES] {
        [
            ClassId::Pedestrian,
            ClassId::Wheelchair,
            ClassId::PushWheelchair,
            ClassId::Crutches,
            ClassId::Walker,
            ClassId::Background,
        ]
    }
}

/// Per-ROI classification scores over the six categories.
///
/// Entries are in `[0, 1]` and sum to one within `1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector([f64; NUM_CLASSES]);

impl ScoreVector {
    pub fn new(scores: [f64; NUM_CLASSES]) -> Result<ScoreVector> {
        let sum: f64 = scores.iter().sum();
        if scores.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::Config(format!("score outside [0,1]: {scores:?}")));
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("scores sum to {sum}, expected 1")));
        }
        Ok(ScoreVector(scores))
    }

    /// Re-checks the invariants; needed for vectors that arrived through
    /// deserialization, which bypasses [`ScoreVector::new`].
    pub fn validate(&self) -> Result<()> {
        ScoreVector::new(self.0).map(|_| ())
    }

    /// Normalizes a nonnegative raw vector into a valid score vector.
    pub fn normalized(raw: [f64; NUM_CLASSES]) -> Result<ScoreVector> {
        if raw.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::Config(format!("invalid raw scores: {raw:?}")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("all-zero raw scores".into()));
        }
        Ok(ScoreVector(raw.map(|s| s / sum)))
    }

    /// A vector peaked on `class` with the remaining mass spread uniformly
    /// over the other categories.
    pub fn peaked(class: ClassId, peak: f64) -> ScoreVector {
        let rest = (1.0 - peak) / (NUM_CLASSES - 1) as f64;
        let mut s = [rest; NUM_CLASSES];
        s[class.index()] = peak;
        ScoreVector(s)
    }

    pub fn uniform() -> ScoreVector {
        ScoreVector([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn get(&self, class: ClassId) -> f64 {
        self.0[class.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    /// The category with the highest score; ties go to the earlier class in
    /// the fixed order.
    pub fn argmax(&self) -> ClassId {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        ClassId::from_index(best).unwrap()
    }

    /// Element-wise mean of several score vectors.
    pub fn mean(vectors: &[ScoreVector]) -> Result<ScoreVector> {
        if vectors.is_empty() {
            return Err(Error::InsufficientData("mean of zero score vectors".into()));
        }
        let mut acc = [0.0; NUM_CLASSES];
        for v in vectors {
            for (a, s) in acc.iter_mut().zip(v.0.iter()) {
                *a += s;
            }
        }
        let n = vectors.len() as f64;
        Ok(ScoreVector(acc.map(|a| a / n)))
    }
}
