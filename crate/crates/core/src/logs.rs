//! Run outputs: JSONL detection/track/guidance logs and run statistics.
//!
//! The three log files are deterministic for a fixed input and seed, byte
//! for byte: records are written in frame order, sorted by track id within
//! a frame, and floats use serde_json's shortest round-trip encoding.
//! `stats.json` is the one exception, since it carries wall-clock timings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::ClassId;
use crate::detection::Detection;
use crate::frameio::{read_jsonl, write_jsonl};
use crate::tracking::Track;
use crate::Result;

/// One `tracks.jsonl` line: a track's state after one frame's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u64,
    pub track: u64,
    /// Ground-plane position, world frame, meters.
    pub x: f64,
    pub y: f64,
    /// Ground-plane velocity, meters per second.
    pub vx: f64,
    pub vy: f64,
    /// Largest positional standard deviation, meters.
    pub sigma_pos: f64,
    /// Belief argmax (clutter reported as background).
    pub class: ClassId,
    /// Full class belief in the fixed class order, clutter last.
    pub belief: Vec<f64>,
}

impl TrackRecord {
    pub fn from_track(frame: u64, track: &Track) -> TrackRecord {
        let p = track.state.position();
        let v = track.state.velocity();
        TrackRecord {
            frame,
            track: track.id,
            x: p[0],
            y: p[1],
            vx: v[0],
            vy: v[1],
            sigma_pos: track.state.sigma_pos(),
            class: track.class(),
            belief: track.belief.probs().to_vec(),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// One `guidance.jsonl` line: the decision after one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRecord {
    pub frame: u64,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<ClassId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub track: Option<u64>,
    /// Continuous in-area time of the attended track, seconds.
    pub dwell_s: f64,
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    write_jsonl(path, detections)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_jsonl(path)
}

pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    read_jsonl(path)
}

pub fn write_guidance(path: &Path, records: &[GuidanceRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_guidance(path: &Path) -> Result<Vec<GuidanceRecord>> {
    read_jsonl(path)
}

/// Per-stage wall-clock samples, one per processed frame.
#[derive(Debug, Default)]
pub struct StageTimings {
    samples: BTreeMap<&'static str, Vec<f64>>,
}

impl StageTimings {
    pub fn new() -> StageTimings {
        StageTimings::default()
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.record(stage, start.elapsed().as_secs_f64() * 1000.0);
        out
    }

    pub fn record(&mut self, stage: &'static str, ms: f64) {
        self.samples.entry(stage).or_default().push(ms);
    }

    pub fn total_ms(&self) -> BTreeMap<String, f64> {
        self.samples
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().sum()))
            .collect()
    }

    pub fn median_ms(&self) -> BTreeMap<String, f64> {
        self.samples
            .iter()
            .map(|(k, v)| (k.to_string(), median(v)))
            .collect()
    }
}

fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Counters and timings for one pipeline run; serialized to `stats.json`.
/// Timings vary between runs, so this file is excluded from the byte-level
/// determinism the logs promise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub frames_total: usize,
    pub frames_processed: usize,
    pub frames_skipped: usize,
    /// Per-frame errors that led to skips: `(frame, message)`.
    pub errors: Vec<(u64, String)>,
    /// Sum of per-segment proposal counts over all processed frames.
    pub proposals_total: usize,
    pub segments_total: usize,
    pub detections_total: usize,
    pub tracks_created: usize,
    /// Wall-clock milliseconds per stage, summed over frames.
    pub stage_total_ms: BTreeMap<String, f64>,
    /// Median wall-clock milliseconds per frame, per stage.
    pub stage_median_ms: BTreeMap<String, f64>,
}

impl RunStats {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| crate::Error::Parse(format!("stats: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{Belief, HmmModel};
    use crate::camera::PixelBox;
    use crate::classes::ScoreVector;
    use crate::tracking::KalmanState;

    fn sample_track() -> Track {
        let model = HmmModel::people_default();
        Track {
            id: 3,
            state: KalmanState::new([1.5, 2.5], 0.25, 1.0),
            belief: Belief::from_prior(&model),
            frames_since_observation: 0,
            created_at: 7,
        }
    }

    #[test]
    fn track_record_captures_state() {
        let r = TrackRecord::from_track(9, &sample_track());
        assert_eq!((r.frame, r.track), (9, 3));
        assert_eq!(r.position(), [1.5, 2.5]);
        assert_eq!((r.vx, r.vy), (0.0, 0.0));
        assert_eq!(r.belief.len(), 6);
        assert!((r.sigma_pos - 0.5).abs() < 1e-12);
    }

    #[test]
    fn logs_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let detections = vec![Detection {
            frame: 0,
            box_px: PixelBox::new(10.0, 20.0, 110.0, 220.0).unwrap(),
            class: ClassId::Walker,
            scores: ScoreVector::peaked(ClassId::Walker, 0.8),
            pos_cam: [0.1, 0.2, 3.0],
            pos_world: [0.1, 3.0],
        }];
        let tracks = vec![TrackRecord::from_track(0, &sample_track())];
        let guidance = vec![GuidanceRecord {
            frame: 0,
            action: "wait".into(),
            class: None,
            track: None,
            dwell_s: 0.0,
        }];

        let d = dir.path().join("detections.jsonl");
        let t = dir.path().join("tracks.jsonl");
        let g = dir.path().join("guidance.jsonl");
        write_detections(&d, &detections).unwrap();
        write_tracks(&t, &tracks).unwrap();
        write_guidance(&g, &guidance).unwrap();
        assert_eq!(read_detections(&d).unwrap(), detections);
        assert_eq!(read_tracks(&t).unwrap(), tracks);
        assert_eq!(read_guidance(&g).unwrap(), guidance);
        // Optional fields stay off the wire when empty.
        let text = std::fs::read_to_string(&g).unwrap();
        assert!(!text.contains("class"));
    }

    #[test]
    fn stage_timings_aggregate() {
        let mut t = StageTimings::new();
        for ms in [3.0, 1.0, 2.0] {
            t.record("detect", ms);
        }
        t.record("track", 5.0);
        let out = t.time("track", || 42);
        assert_eq!(out, 42);
        assert_eq!(t.median_ms()["detect"], 2.0);
        assert_eq!(t.total_ms()["detect"], 6.0);
        assert_eq!(t.total_ms().len(), 2);
        assert!(t.total_ms()["track"] >= 5.0);
    }

    #[test]
    fn median_of_even_sample_count_averages() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }

    #[test]
    fn stats_serialize_to_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut stats = RunStats { frames_total: 10, frames_processed: 9, ..Default::default() };
        stats.frames_skipped = 1;
        stats.errors.push((4, "scorer error: missing".into()));
        stats.stage_total_ms.insert("proposals".into(), 12.5);
        let path = dir.path().join("stats.json");
        stats.write_json(&path).unwrap();
        let back: RunStats =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, stats);
    }
}
