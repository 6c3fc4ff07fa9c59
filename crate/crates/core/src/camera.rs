//! Pinhole camera model: depth image ↔ 3D points, and projection of metric
//! templates into pixel rectangles.
//!
//! Depth is stored in millimeters (`u16`, `0` = invalid) and converted to
//! meters for all computation. Pixel boxes use continuous coordinates with
//! half-open extents: pixel `(u, v)` covers `[u, u+1) × [v, v+1)`, so a full
//! image spans `[0, width] × [0, height]`.

use nalgebra::{Isometry3, Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rigid transform from camera to world coordinates.
///
/// Serialized as a translation `t = [x, y, z]` plus a unit quaternion
/// `q = [w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub Isometry3<f64>);

impl Pose {
    pub fn identity() -> Pose {
        Pose(Isometry3::identity())
    }

    /// Camera on the ground plane at ground coordinates `(gx, gy)`, `height`
    /// meters above the floor plane `y = floor_y`, rotated by `yaw` radians
    /// about the vertical axis (positive yaw turns the optical axis toward
    /// +x).
    pub fn ground(gx: f64, gy: f64, yaw: f64, height: f64, floor_y: f64) -> Pose {
        let translation = Vector3::new(gx, floor_y - height, gy);
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw);
        Pose(Isometry3::from_parts(translation.into(), rotation))
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.0.transform_point(p)
    }

    pub fn inverse_transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.0.inverse_transform_point(p)
    }

    /// Ground-plane coordinates (x, z) of the camera center.
    pub fn ground_position(&self) -> (f64, f64) {
        let t = self.0.translation.vector;
        (t.x, t.z)
    }

    /// Unit vector on the ground plane along the optical axis.
    pub fn ground_forward(&self) -> (f64, f64) {
        let f = self.0.rotation * Vector3::z();
        let norm = (f.x * f.x + f.z * f.z).sqrt();
        if norm < 1e-12 {
            (0.0, 1.0)
        } else {
            (f.x / norm, f.z / norm)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    t: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = self.0.translation.vector;
        let q = self.0.rotation.quaternion();
        PoseRepr { t: [t.x, t.y, t.z], q: [q.w, q.i, q.j, q.k] }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Pose, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let rotation = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            r.q[0], r.q[1], r.q[2], r.q[3],
        ));
        Ok(Pose(Isometry3::from_parts(
            Vector3::new(r.t[0], r.t[1], r.t[2]).into(),
            rotation,
        )))
    }
}

/// Pinhole intrinsics plus the valid depth range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal lengths in pixels.
    pub fx: f64,
    pub fy: f64,
    /// Principal point in pixels.
    pub cx: f64,
    pub cy: f64,
    /// Image size in pixels.
    pub width: u32,
    pub height: u32,
    /// Valid depth range in meters; samples outside are treated as invalid.
    pub min_depth: f64,
    pub max_depth: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        min_depth: f64,
        max_depth: f64,
    ) -> Result<CameraModel> {
        let cam = CameraModel { fx, fy, cx, cy, width, height, min_depth, max_depth };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive: fx={}, fy={}", self.fx, self.fy)));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::Config(format!("principal point ({}, {}) outside image {}x{}", self.cx, self.cy, self.width, self.height)));
        }
        if !(0.0 < self.min_depth && self.min_depth < self.max_depth) {
            return Err(Error::Config(format!("invalid depth range [{}, {}]", self.min_depth, self.max_depth)));
        }
        Ok(())
    }

    /// Default simulator intrinsics: a 960×540 sensor with fx=fy=540,
    /// principal point at (480, 270), depth valid in [0.5, 10] m.
    pub fn simulator_default() -> CameraModel {
        CameraModel {
            fx: 540.0,
            fy: 540.0,
            cx: 480.0,
            cy: 270.0,
            width: 960,
            height: 540,
            min_depth: 0.5,
            max_depth: 10.0,
        }
    }

    /// Back-projects pixel `(u, v)` at depth `z` (meters) into the camera
    /// frame.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Projects a camera-frame point to pixel coordinates; `None` when the
    /// point is at or behind the camera plane.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z))
    }

    fn depth_valid_m(&self, z: f64) -> bool {
        z >= self.min_depth && z <= self.max_depth
    }
}

/// A rectangular grid of millimeter depth samples with a timestamp and the
/// camera pose at capture time.
#[derive(Debug, Clone)]
pub struct DepthFrame {
    /// Row-major `width × height` millimeter samples; `0` = invalid.
    pub depth_mm: Vec<u16>,
    pub width: u32,
    pub height: u32,
    /// Seconds.
    pub timestamp: f64,
    /// Camera → world transform (from odometry).
    pub camera_pose: Pose,
}

impl DepthFrame {
    pub fn new(
        width: u32,
        height: u32,
        depth_mm: Vec<u16>,
        timestamp: f64,
        camera_pose: Pose,
    ) -> Result<DepthFrame> {
        if depth_mm.len() != (width as usize) * (height as usize) {
            return Err(Error::Config(format!(
                "depth buffer has {} samples, expected {}x{}",
                depth_mm.len(),
                width,
                height
            )));
        }
        Ok(DepthFrame { depth_mm, width, height, timestamp, camera_pose })
    }

    pub fn get_mm(&self, u: u32, v: u32) -> u16 {
        self.depth_mm[(v as usize) * (self.width as usize) + u as usize]
    }

    fn matches(&self, cam: &CameraModel) -> Result<()> {
        if self.width != cam.width || self.height != cam.height {
            return Err(Error::Config(format!(
                "frame is {}x{} but camera model is {}x{}",
                self.width, self.height, cam.width, cam.height
            )));
        }
        Ok(())
    }
}

/// Pixel-space rectangle with half-open extents `[u_min, u_max) × [v_min, v_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl PixelBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<PixelBox> {
        if !(u_min < u_max && v_min < v_max) {
            return Err(Error::Config(format!(
                "degenerate box [{u_min}, {u_max}) x [{v_min}, {v_max})"
            )));
        }
        Ok(PixelBox { u_min, v_min, u_max, v_max })
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0)
    }

    /// Shifts the box horizontally by `du` pixels.
    pub fn shifted(&self, du: f64) -> PixelBox {
        PixelBox { u_min: self.u_min + du, u_max: self.u_max + du, ..*self }
    }

    /// Clamps to the image bounds; `None` when nothing remains visible.
    pub fn clamped(&self, cam: &CameraModel) -> Option<PixelBox> {
        let u_min = self.u_min.max(0.0);
        let v_min = self.v_min.max(0.0);
        let u_max = self.u_max.min(cam.width as f64);
        let v_max = self.v_max.min(cam.height as f64);
        if u_min < u_max && v_min < v_max {
            Some(PixelBox { u_min, v_min, u_max, v_max })
        } else {
            None
        }
    }

    /// Intersection over union; 0 when disjoint.
    pub fn iou(&self, other: &PixelBox) -> f64 {
        let iw = (self.u_max.min(other.u_max) - self.u_min.max(other.u_min)).max(0.0);
        let ih = (self.v_max.min(other.v_max) - self.v_min.max(other.v_min)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }

    pub fn from_array(a: [f64; 4]) -> Result<PixelBox> {
        PixelBox::new(a[0], a[1], a[2], a[3])
    }
}

/// Converts a depth frame into a camera-frame point cloud, one point per
/// valid pixel, in row-major pixel order.
///
/// A pixel is valid when its millimeter sample is nonzero and, converted to
/// meters, falls inside the camera's depth range. Rays pass through pixel
/// centers, so `(u, v)` back-projects at `(u + 0.5, v + 0.5)`.
pub fn depth_to_cloud(frame: &DepthFrame, cam: &CameraModel) -> Result<Vec<Point3<f64>>> {
    frame.matches(cam)?;
    let mut points = Vec::with_capacity(frame.depth_mm.len() / 2);
    let inv_fx = 1.0 / cam.fx;
    let inv_fy = 1.0 / cam.fy;
    for v in 0..frame.height {
        let row = (v as usize) * (frame.width as usize);
        let y_factor = (v as f64 + 0.5 - cam.cy) * inv_fy;
        for u in 0..frame.width {
            let mm = frame.depth_mm[row + u as usize];
            if mm == 0 {
                continue;
            }
            let z = mm as f64 / 1000.0;
            if !cam.depth_valid_m(z) {
                continue;
            }
            let x = (u as f64 + 0.5 - cam.cx) * inv_fx * z;
            let y = y_factor * z;
            points.push(Point3::new(x, y, z));
        }
    }
    Ok(points)
}

/// Unclamped projection of a `width_m × height_m` rectangle centered on the
/// projection of `center`.
pub(crate) fn project_metric_box_raw(
    center: &Point3<f64>,
    width_m: f64,
    height_m: f64,
    cam: &CameraModel,
) -> Result<PixelBox> {
    if center.z < cam.min_depth {
        return Err(Error::DegenerateProjection { z: center.z, min_depth: cam.min_depth });
    }
    let (u, v) = cam.project(center).expect("z >= min_depth > 0");
    let half_w = 0.5 * width_m * cam.fx / center.z;
    let half_h = 0.5 * height_m * cam.fy / center.z;
    Ok(PixelBox { u_min: u - half_w, v_min: v - half_h, u_max: u + half_w, v_max: v + half_h })
}

/// Projects a metric rectangle centered on `center` into a pixel box clamped
/// to the image bounds.
///
/// The pixel footprint scales with similar triangles: `width_m · fx / z` by
/// `height_m · fy / z`.
pub fn project_metric_box(
    center: &Point3<f64>,
    width_m: f64,
    height_m: f64,
    cam: &CameraModel,
) -> Result<PixelBox> {
    let raw = project_metric_box_raw(center, width_m, height_m, cam)?;
    raw.clamped(cam).ok_or(Error::NothingVisible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> CameraModel {
        CameraModel::simulator_default()
    }

    #[test]
    fn model_invariants_are_enforced() {
        assert!(CameraModel::new(-1.0, 540.0, 480.0, 270.0, 960, 540, 0.5, 10.0).is_err());
        assert!(CameraModel::new(540.0, 540.0, 960.0, 270.0, 960, 540, 0.5, 10.0).is_err());
        assert!(CameraModel::new(540.0, 540.0, 480.0, 270.0, 960, 540, 5.0, 0.5).is_err());
        assert!(cam().validate().is_ok());
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        // Pixel centered on the principal point with depth 2000 mm.
        let c = cam();
        let mut depth = vec![0u16; 960 * 540];
        // Pixel (479, 269) has center (479.5, 269.5); use a camera whose
        // principal point sits exactly on a pixel center instead.
        let c2 = CameraModel { cx: 479.5, cy: 269.5, ..c };
        depth[269 * 960 + 479] = 2000;
        let frame = DepthFrame::new(960, 540, depth, 0.0, Pose::identity()).unwrap();
        let pts = depth_to_cloud(&frame, &c2).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pts[0].y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pts[0].z, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pixel_one_focal_length_off_axis() {
        // Independent per-pixel hand computation: pixel center at
        // (cx + fx, cy) with depth 1000 mm must give (1.0, 0, 1.0).
        let c = CameraModel { cx: 479.5, cy: 269.5, fx: 400.0, fy: 400.0, ..cam() };
        let u = 479 + 400; // center 879.5 = cx + fx
        let mut depth = vec![0u16; 960 * 540];
        depth[269 * 960 + u] = 1000;
        let frame = DepthFrame::new(960, 540, depth, 0.0, Pose::identity()).unwrap();
        let pts = depth_to_cloud(&frame, &c).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(pts[0].y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pts[0].z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_depths_emit_nothing() {
        let c = cam();
        let mut depth = vec![0u16; 960 * 540];
        depth[100] = 0; // invalid marker
        depth[101] = 200; // 0.2 m, below min_depth
        depth[102] = 60_000; // 60 m, above max_depth
        let frame = DepthFrame::new(960, 540, depth, 0.0, Pose::identity()).unwrap();
        assert!(depth_to_cloud(&frame, &c).unwrap().is_empty());
    }

    #[test]
    fn cloud_count_equals_valid_pixels() {
        let c = cam();
        let mut depth = vec![0u16; 960 * 540];
        let mut valid = 0usize;
        for i in 0..depth.len() {
            // Deterministic mixed pattern of valid, invalid and out-of-range.
            match i % 7 {
                0 => depth[i] = 0,
                1 => depth[i] = 100,
                2 => depth[i] = 2500,
                3 => depth[i] = 45_000,
                _ => depth[i] = 1000 + (i % 3000) as u16,
            }
            let z = depth[i] as f64 / 1000.0;
            if depth[i] != 0 && z >= c.min_depth && z <= c.max_depth {
                valid += 1;
            }
        }
        let frame = DepthFrame::new(960, 540, depth, 0.0, Pose::identity()).unwrap();
        assert_eq!(depth_to_cloud(&frame, &c).unwrap().len(), valid);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let c = cam();
        let frame = DepthFrame::new(100, 100, vec![0; 100 * 100], 0.0, Pose::identity()).unwrap();
        assert!(matches!(depth_to_cloud(&frame, &c), Err(Error::Config(_))));
    }

    #[test]
    fn cloud_projects_back_onto_source_pixels() {
        // Round trip: back-projecting each cloud point must recover the pixel
        // center within 0.5 px and the depth within 1 mm.
        let c = cam();
        let mut depth = vec![0u16; 960 * 540];
        for i in (0..depth.len()).step_by(613) {
            depth[i] = 600 + (i % 9000) as u16;
        }
        let frame = DepthFrame::new(960, 540, depth.clone(), 0.0, Pose::identity()).unwrap();
        let pts = depth_to_cloud(&frame, &c).unwrap();
        let mut k = 0usize;
        for i in (0..depth.len()).step_by(613) {
            let z = depth[i] as f64 / 1000.0;
            if !(z >= c.min_depth && z <= c.max_depth) {
                continue;
            }
            let (u, v) = c.project(&pts[k]).unwrap();
            let (pu, pv) = ((i % 960) as f64, (i / 960) as f64);
            assert!((u - (pu + 0.5)).abs() < 0.5, "u={u} pixel={pu}");
            assert!((v - (pv + 0.5)).abs() < 0.5);
            assert!((pts[k].z * 1000.0 - depth[i] as f64).abs() < 1.0);
            k += 1;
        }
        assert_eq!(k, pts.len());
    }

    #[test]
    fn metric_box_similar_triangles() {
        // width_m = 0.4 at z = 2 with fx = 500 -> 100 px wide.
        let c = CameraModel { fx: 500.0, ..cam() };
        let b = project_metric_box(&Point3::new(0.0, 0.0, 2.0), 0.4, 0.4, &c).unwrap();
        assert_relative_eq!(b.width(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn on_axis_square_box_is_centered() {
        let c = cam();
        let b = project_metric_box(&Point3::new(0.0, 0.0, 3.0), 0.5, 0.5, &c).unwrap();
        let (u, v) = b.center();
        assert_relative_eq!(u, c.cx, epsilon = 1e-9);
        assert_relative_eq!(v, c.cy, epsilon = 1e-9);
        assert_relative_eq!(b.width(), b.height(), epsilon = 1e-9);
    }

    #[test]
    fn box_outside_frustum_is_nothing_visible() {
        let c = cam();
        let r = project_metric_box(&Point3::new(-50.0, 0.0, 2.0), 0.4, 1.75, &c);
        assert!(matches!(r, Err(Error::NothingVisible)));
    }

    #[test]
    fn box_too_close_is_degenerate() {
        let c = cam();
        let r = project_metric_box(&Point3::new(0.0, 0.0, 0.1), 0.4, 1.75, &c);
        assert!(matches!(r, Err(Error::DegenerateProjection { .. })));
    }

    #[test]
    fn box_width_strictly_decreases_with_depth() {
        let c = cam();
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let z = 0.6 + 0.2 * i as f64;
            let b = project_metric_box_raw(&Point3::new(0.0, 0.0, z), 0.4, 1.75, &c).unwrap();
            assert!(b.width() < last, "width must strictly decrease in z");
            last = b.width();
        }
    }

    #[test]
    fn standing_person_box_at_two_meters() {
        // Template 0.4 x 1.75 m at z = 2 projected at a standing person's
        // centroid (0, 0.125, 2): width 108 px, v-range [67.5, 540] after
        // clamping at the image bottom.
        let c = cam();
        let b = project_metric_box(&Point3::new(0.0, 0.125, 2.0), 0.4, 1.75, &c).unwrap();
        assert_relative_eq!(b.width(), 108.0, epsilon = 1e-9);
        assert_relative_eq!(b.v_min, 67.5, epsilon = 1e-9);
        assert_relative_eq!(b.v_max, 540.0, epsilon = 1e-9);
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = Pose::ground(1.5, -2.0, 0.7, 1.0, 1.0);
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        let probe = Point3::new(0.3, -0.2, 2.5);
        let a = p.transform_point(&probe);
        let b = back.transform_point(&probe);
        assert_relative_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ground_pose_geometry() {
        // Camera 1 m above the floor (floor at y = +1), yaw 0: identity.
        let p = Pose::ground(0.0, 0.0, 0.0, 1.0, 1.0);
        let w = p.transform_point(&Point3::new(0.5, 0.2, 3.0));
        assert_relative_eq!(w.x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.y, 0.2, epsilon = 1e-12);
        assert_relative_eq!(w.z, 3.0, epsilon = 1e-12);
        // Positive yaw turns the optical axis toward +x.
        let p = Pose::ground(0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0, 1.0);
        let (fx, fz) = p.ground_forward();
        assert_relative_eq!(fx, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fz, 0.0, epsilon = 1e-9);
    }
}
