//! On-disk depth sequence format.
//!
//! A sequence is a directory:
//!
//! ```text
//! <dir>/
//!   camera.json        pinhole model and depth range
//!   frames.jsonl       one metadata line per frame, in frame order
//!   gt.jsonl           optional ground truth, one record per line
//!   depth/000000.png   16-bit grayscale PNG, one millimeter per unit
//! ```
//!
//! Depth PNGs keep the raw sensor convention: 0 marks an invalid sample.
//! Poses ride along in the frame metadata so consumers never need the
//! scenario that produced the sequence.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, DepthFrame, Pose};
use crate::evaluation::GroundTruthRecord;
use crate::simulation::{render_frame, Scenario};
use crate::{Error, Result};

/// One line of `frames.jsonl`: everything needed to reload a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame: u64,
    /// Depth image path relative to the sequence directory.
    pub depth: String,
    /// Seconds.
    pub timestamp: f64,
    /// Camera → world transform at capture time.
    pub pose: Pose,
}

fn depth_name(frame: u64) -> String {
    format!("depth/{frame:06}.png")
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

/// Streams frames into a sequence directory. Depth images are written as
/// frames arrive; the index files are written by [`SequenceWriter::finish`].
pub struct SequenceWriter {
    dir: PathBuf,
    camera: CameraModel,
    frames: Vec<FrameMeta>,
    truth: Vec<GroundTruthRecord>,
}

impl SequenceWriter {
    pub fn create(dir: &Path, camera: CameraModel) -> Result<SequenceWriter> {
        camera.validate()?;
        fs::create_dir_all(dir.join("depth"))?;
        Ok(SequenceWriter { dir: dir.to_path_buf(), camera, frames: Vec::new(), truth: Vec::new() })
    }

    /// Appends one frame and its ground truth (possibly empty). Frames are
    /// numbered consecutively from 0 in push order; the ground-truth records
    /// are restamped to that frame number.
    pub fn push(&mut self, frame: &DepthFrame, truth: &[GroundTruthRecord]) -> Result<()> {
        if frame.width != self.camera.width || frame.height != self.camera.height {
            return Err(Error::Config(format!(
                "frame is {}x{} but sequence camera is {}x{}",
                frame.width, frame.height, self.camera.width, self.camera.height
            )));
        }
        let index = self.frames.len() as u64;
        let name = depth_name(index);
        write_depth_png(&self.dir.join(&name), frame)?;
        self.frames.push(FrameMeta {
            frame: index,
            depth: name,
            timestamp: frame.timestamp,
            pose: frame.camera_pose,
        });
        for record in truth {
            let mut record = record.clone();
            record.frame = index;
            self.truth.push(record);
        }
        Ok(())
    }

    /// Writes `camera.json`, `frames.jsonl` and `gt.jsonl`, completing the
    /// sequence. `gt.jsonl` is omitted when no ground truth was pushed.
    pub fn finish(self) -> Result<usize> {
        let camera_text = serde_json::to_string_pretty(&self.camera)
            .map_err(|e| Error::Parse(format!("camera.json: {e}")))?;
        fs::write(self.dir.join("camera.json"), camera_text)?;
        write_jsonl(&self.dir.join("frames.jsonl"), &self.frames)?;
        if !self.truth.is_empty() {
            write_jsonl(&self.dir.join("gt.jsonl"), &self.truth)?;
        }
        Ok(self.frames.len())
    }
}

/// An opened sequence directory: camera model plus the frame index.
/// Depth images are loaded lazily, one frame at a time.
pub struct Sequence {
    dir: PathBuf,
    pub camera: CameraModel,
    pub frames: Vec<FrameMeta>,
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Sequence> {
        let camera_path = dir.join("camera.json");
        let camera_text = fs::read_to_string(&camera_path)?;
        let camera: CameraModel = serde_json::from_str(&camera_text)
            .map_err(|e| Error::Parse(format!("{}: {e}", camera_path.display())))?;
        camera.validate()?;
        let frames: Vec<FrameMeta> = read_jsonl(&dir.join("frames.jsonl"))?;
        for (i, meta) in frames.iter().enumerate() {
            if meta.frame != i as u64 {
                return Err(Error::Parse(format!(
                    "frames.jsonl line {} has frame {}, expected consecutive numbering",
                    i + 1,
                    meta.frame
                )));
            }
        }
        Ok(Sequence { dir: dir.to_path_buf(), camera, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_frame(&self, index: usize) -> Result<DepthFrame> {
        let meta = self.frames.get(index).ok_or_else(|| {
            Error::Config(format!("frame {index} out of range; sequence has {}", self.len()))
        })?;
        let depth_mm = read_depth_png(&self.dir.join(&meta.depth), self.camera.width, self.camera.height)?;
        DepthFrame::new(self.camera.width, self.camera.height, depth_mm, meta.timestamp, meta.pose)
    }

    pub fn has_ground_truth(&self) -> bool {
        self.dir.join("gt.jsonl").exists()
    }

    /// All ground-truth records, or an empty list when the sequence has
    /// no `gt.jsonl`.
    pub fn ground_truth(&self) -> Result<Vec<GroundTruthRecord>> {
        let path = self.dir.join("gt.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_jsonl(&path)
    }
}

fn write_depth_png(path: &Path, frame: &DepthFrame) -> Result<()> {
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        frame.width,
        frame.height,
        frame.depth_mm.clone(),
    )
    .ok_or_else(|| Error::Config("depth buffer does not match its dimensions".into()))?;
    img.save(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_depth_png(path: &Path, width: u32, height: u32) -> Result<Vec<u16>> {
    let img = image::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let img = img.into_luma16();
    if img.width() != width || img.height() != height {
        return Err(Error::Parse(format!(
            "{}: image is {}x{}, sequence camera says {}x{}",
            path.display(),
            img.width(),
            img.height(),
            width,
            height
        )));
    }
    Ok(img.into_raw())
}

/// Renders a whole scenario into a sequence directory. Returns the number
/// of frames written. The scenario itself is saved alongside as
/// `scenario.toml` for reference.
pub fn simulate_to_dir(scenario: &Scenario, dir: &Path) -> Result<usize> {
    scenario.validate()?;
    let mut writer = SequenceWriter::create(dir, scenario.camera_model)?;
    for i in 0..scenario.frame_count() {
        let (frame, truth) = render_frame(scenario, i)?;
        writer.push(&frame, &truth)?;
    }
    let count = writer.finish()?;
    fs::write(dir.join("scenario.toml"), scenario.to_toml()?)?;
    Ok(count)
}
