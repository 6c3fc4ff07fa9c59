//! Depth-only multi-class people perception.
//!
//! The pipeline takes a stream of depth images and produces, per frame, the
//! position, velocity and mobility-aid category of every person in view:
//!
//! 1. [`camera`] — pinhole model, depth image ↔ point cloud, metric box
//!    projection.
//! 2. [`segmentation`] — RANSAC ground-plane removal and Euclidean clustering.
//! 3. [`proposals`] — local sliding templates over each cluster (plus the
//!    dense sliding-window baseline for comparison).
//! 4. [`detection`] — pluggable per-ROI scoring, per-segment class voting,
//!    non-maximum suppression and 3D localization.
//! 5. [`tracking`] — constant-velocity Kalman filters with Mahalanobis
//!    gating and Hungarian data association.
//! 6. [`belief`] — per-track hidden Markov model over the person categories,
//!    with background/misdetection handling.
//! 7. [`evaluation`] — detection metrics (AP/MAP, confusion matrix) and
//!    CLEAR-MOT tracking metrics.
//! 8. [`simulation`] — synthetic depth scenes with full ground truth, used
//!    to verify the whole stack at desk scale.
//! 9. [`pipeline`] — end-to-end orchestration, the guidance decision rule
//!    and configuration.
//!
//! # Coordinate conventions
//!
//! Camera frame: x right, y down, z forward (optical axis), meters. Depth
//! images store z-depth in millimeters; `0` marks an invalid sample.
//!
//! World frame: same axis convention as a camera at the identity pose, i.e.
//! y points down and the floor is the plane `y = floor_y` (default `1.0`,
//! one meter below the sensor). Ground-plane coordinates are `(x, z)` of the
//! world point; tracker state, world positions in logs and guidance geometry
//! all live in these two coordinates.

pub mod belief;
pub mod camera;
pub mod classes;
pub mod config;
pub mod detection;
mod error;
pub mod evaluation;
pub mod frameio;
pub mod hungarian;
pub mod logs;
pub mod pipeline;
pub mod proposals;
pub mod scorers;
pub mod segmentation;
pub mod simulation;
pub mod tracking;

pub use classes::{ClassId, ScoreVector, FOREGROUND_CLASSES, NUM_CLASSES};
pub use error::{Error, Result};
