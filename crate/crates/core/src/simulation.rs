//! Synthetic depth scenes: people of all five categories moving on a
//! ground plane, rendered to depth frames with complete ground truth.
//!
//! Actors are composites of solid primitives (spheres, vertical capsules,
//! axis-aligned boxes) shaped per class. Rendering casts one ray per pixel
//! center; the depth buffer stores camera-space z. Ground-truth boxes are
//! the actor's own rendered pixel extents ignoring other geometry, so
//! occluded people keep their full boxes; the occluded flag is set when
//! more than half of those pixels are covered by nearer surfaces.
//!
//! Everything is deterministic for a fixed scenario: the only randomness
//! is the optional depth noise, seeded per frame from the scenario seed.

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, DepthFrame, PixelBox, Pose};
use crate::classes::ClassId;
use crate::evaluation::GroundTruthRecord;
use crate::proposals::{Template, TemplateSet};
use crate::{Error, Result};

/// Default body extent (width, height in meters) for each person class,
/// taken from the metric template set: upright narrow for pedestrians,
/// wider for crutches, widest for a pushed wheelchair with its pusher,
/// narrow-low for walker users, wide-low for wheelchair users.
pub fn class_extent(class: ClassId) -> Template {
    let t = TemplateSet::default().templates;
    match class {
        ClassId::Pedestrian => t[0],
        ClassId::Crutches => t[1],
        ClassId::PushWheelchair => t[2],
        ClassId::Walker => t[3],
        ClassId::Wheelchair => t[4],
        ClassId::Background => t[0],
    }
}

/// A point on an actor's path: ground position `(x, y)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// A camera pose sample: ground position plus yaw (radians) at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraWaypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// One simulated person following a piecewise-linear path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    /// Ground-truth identity, stable across the sequence.
    pub person: u64,
    pub class: ClassId,
    /// Path waypoints with strictly increasing timestamps; the position is
    /// clamped to the ends outside the covered time range.
    pub path: Vec<Waypoint>,
    /// Body extent override; defaults to [`class_extent`].
    #[serde(default)]
    pub extent: Option<Template>,
    /// Half-open existence window `[start, end)` in seconds; `None` means
    /// the whole scenario. Two actors may share a person id only when
    /// their windows are disjoint (used for class-transition scenes).
    #[serde(default)]
    pub active: Option<[f64; 2]>,
}

impl Actor {
    fn validate(&self) -> Result<()> {
        if self.class == ClassId::Background {
            return Err(Error::Config(format!(
                "actor {} has class background; actors must be people",
                self.person
            )));
        }
        if self.path.is_empty() {
            return Err(Error::Config(format!("actor {} has an empty path", self.person)));
        }
        for pair in self.path.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::Config(format!(
                    "actor {} path timestamps must strictly increase",
                    self.person
                )));
            }
        }
        if let Some(t) = self.extent {
            if t.width_m <= 0.0 || t.height_m <= 0.0 {
                return Err(Error::Config(format!("actor {} extent must be positive", self.person)));
            }
        }
        if let Some([a, b]) = self.active {
            if b <= a {
                return Err(Error::Config(format!(
                    "actor {} active window [{a}, {b}) is empty",
                    self.person
                )));
            }
        }
        Ok(())
    }

    fn is_active(&self, t: f64) -> bool {
        self.active.map_or(true, |[a, b]| t >= a && t < b)
    }

    /// Ground position at `t`, clamped to the path's ends.
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let path = &self.path;
        if t <= path[0].t {
            return (path[0].x, path[0].y);
        }
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.t {
                let f = (t - a.t) / (b.t - a.t);
                return (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
            }
        }
        let last = path[path.len() - 1];
        (last.x, last.y)
    }

    /// Unit facing direction at `t`: the direction of the path segment
    /// containing `t`, falling back to the nearest segment with nonzero
    /// length, then to facing the -y ground direction (toward a camera at
    /// the origin).
    pub fn heading_at(&self, t: f64) -> (f64, f64) {
        let dirs: Vec<Option<(f64, f64)>> = self
            .path
            .windows(2)
            .map(|pair| {
                let (dx, dy) = (pair[1].x - pair[0].x, pair[1].y - pair[0].y);
                let n = (dx * dx + dy * dy).sqrt();
                (n > 1e-9).then(|| (dx / n, dy / n))
            })
            .collect();
        if dirs.is_empty() {
            return (0.0, -1.0);
        }
        let mut active = dirs.len() - 1;
        for (i, pair) in self.path.windows(2).enumerate() {
            if t <= pair[1].t {
                active = i;
                break;
            }
        }
        // Nearest nonzero segment by index distance, earlier on ties.
        let mut best: Option<(usize, (f64, f64))> = None;
        for (i, dir) in dirs.iter().enumerate() {
            if let Some(d) = dir {
                let dist = i.abs_diff(active);
                if best.map_or(true, |(bd, _)| dist < bd) {
                    best = Some((dist, *d));
                }
            }
        }
        best.map_or((0.0, -1.0), |(_, d)| d)
    }

    fn body(&self) -> Template {
        self.extent.unwrap_or_else(|| class_extent(self.class))
    }
}

/// A static world-axis-aligned box obstacle, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Obstacle {
    fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.max[i] <= self.min[i] {
                return Err(Error::Config(format!(
                    "obstacle must have positive size, got {:?}..{:?}",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }
}

fn default_frame_rate() -> f64 {
    15.0
}

fn default_floor_y() -> f64 {
    1.0
}

fn default_camera_height() -> f64 {
    1.0
}

fn default_noise_sigma() -> f64 {
    5.0
}

fn default_camera_path() -> Vec<CameraWaypoint> {
    vec![CameraWaypoint { t: 0.0, x: 0.0, y: 0.0, yaw: 0.0 }]
}

fn default_camera_model() -> CameraModel {
    CameraModel::simulator_default()
}

/// A complete synthetic scene: actors, camera trajectory, timing, floor,
/// and obstacles. Serializes to a declarative TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Expected outcome, for humans listing scenarios.
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
    /// World y of the floor plane (y points down; the camera is above).
    #[serde(default = "default_floor_y")]
    pub floor_y: f64,
    /// Camera height above the floor, meters.
    #[serde(default = "default_camera_height")]
    pub camera_height_m: f64,
    /// Depth noise standard deviation in millimeters; 0 disables noise.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma_mm: f64,
    #[serde(default = "default_camera_model")]
    pub camera_model: CameraModel,
    /// Camera pose samples, linearly interpolated; defaults to a static
    /// camera at the ground origin looking along +y.
    #[serde(default = "default_camera_path")]
    pub camera_path: Vec<CameraWaypoint>,
    #[serde(default)]
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("scenario duration must be positive".into()));
        }
        if !(self.frame_rate_hz > 0.0) {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        if !(self.camera_height_m > 0.0) {
            return Err(Error::Config("camera height must be positive".into()));
        }
        if self.noise_sigma_mm < 0.0 {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        self.camera_model.validate()?;
        if self.camera_path.is_empty() {
            return Err(Error::Config("camera path needs at least one waypoint".into()));
        }
        for pair in self.camera_path.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::Config("camera path timestamps must strictly increase".into()));
            }
        }
        for actor in &self.actors {
            actor.validate()?;
        }
        for obstacle in &self.obstacles {
            obstacle.validate()?;
        }
        // Shared person ids are only allowed with disjoint active windows.
        for (i, a) in self.actors.iter().enumerate() {
            for b in &self.actors[i + 1..] {
                if a.person != b.person {
                    continue;
                }
                let (a0, a1) = a.active.map_or((f64::MIN, f64::MAX), |[s, e]| (s, e));
                let (b0, b1) = b.active.map_or((f64::MIN, f64::MAX), |[s, e]| (s, e));
                if a0 < b1 && b0 < a1 {
                    return Err(Error::Config(format!(
                        "actors sharing person id {} have overlapping active windows",
                        a.person
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of frames: duration times rate, rounded.
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate_hz).round() as usize
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate_hz
    }

    /// Camera pose at time `t`: waypoints interpolated linearly (yaw
    /// included, no wraparound handling), clamped at the ends.
    pub fn camera_pose_at(&self, t: f64) -> Pose {
        let path = &self.camera_path;
        let sample = |w: &CameraWaypoint| {
            Pose::ground(w.x, w.y, w.yaw, self.camera_height_m, self.floor_y)
        };
        if t <= path[0].t {
            return sample(&path[0]);
        }
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.t {
                let f = (t - a.t) / (b.t - a.t);
                let w = CameraWaypoint {
                    t,
                    x: a.x + f * (b.x - a.x),
                    y: a.y + f * (b.y - a.y),
                    yaw: a.yaw + f * (b.yaw - a.yaw),
                };
                return sample(&w);
            }
        }
        sample(&path[path.len() - 1])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("scenario encode: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// Solid render primitive in world coordinates. Capsules are vertical
/// (people stand upright); boxes are world-axis-aligned.
#[derive(Debug, Clone, Copy)]
enum Primitive {
    /// Vertical capsule: cap centers at `(x, y0, z)` and `(x, y1, z)`,
    /// `y0 < y1` (y points down, so `y0` is the top).
    CapsuleY { x: f64, z: f64, y0: f64, y1: f64, radius: f64 },
    Aabb { min: Point3<f64>, max: Point3<f64> },
}

impl Primitive {
    fn world_bounds(&self) -> (Point3<f64>, Point3<f64>) {
        match *self {
            Primitive::CapsuleY { x, z, y0, y1, radius } => (
                Point3::new(x - radius, y0 - radius, z - radius),
                Point3::new(x + radius, y1 + radius, z + radius),
            ),
            Primitive::Aabb { min, max } => (min, max),
        }
    }

    /// Smallest ray parameter `s > 0` where `origin + s·dir` enters the
    /// solid, or `None`. Rays starting inside return `None` (interior
    /// faces are not rendered).
    fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Primitive::CapsuleY { x, z, y0, y1, radius } => {
                let mut best: Option<f64> = None;
                let mut consider = |s: Option<f64>| {
                    if let Some(s) = s {
                        if best.map_or(true, |b| s < b) {
                            best = Some(s);
                        }
                    }
                };
                // Cylinder body, valid only between the cap centers.
                let a = dir.x * dir.x + dir.z * dir.z;
                if a > 1e-12 {
                    let ox = origin.x - x;
                    let oz = origin.z - z;
                    let b = 2.0 * (ox * dir.x + oz * dir.z);
                    let c = ox * ox + oz * oz - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let s = (-b - disc.sqrt()) / (2.0 * a);
                        if s > 1e-9 {
                            let y = origin.y + s * dir.y;
                            if (y0..=y1).contains(&y) {
                                consider(Some(s));
                            }
                        }
                    }
                }
                consider(ray_sphere(origin, dir, &Point3::new(x, y0, z), radius));
                consider(ray_sphere(origin, dir, &Point3::new(x, y1, z), radius));
                best
            }
            Primitive::Aabb { min, max } => {
                let mut t0 = 0.0f64;
                let mut t1 = f64::INFINITY;
                for i in 0..3 {
                    if dir[i].abs() < 1e-12 {
                        if origin[i] < min[i] || origin[i] > max[i] {
                            return None;
                        }
                    } else {
                        let inv = 1.0 / dir[i];
                        let mut a = (min[i] - origin[i]) * inv;
                        let mut b = (max[i] - origin[i]) * inv;
                        if a > b {
                            std::mem::swap(&mut a, &mut b);
                        }
                        t0 = t0.max(a);
                        t1 = t1.min(b);
                        if t0 > t1 {
                            return None;
                        }
                    }
                }
                (t0 > 1e-9).then_some(t0)
            }
        }
    }
}

fn ray_sphere(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    center: &Point3<f64>,
    radius: f64,
) -> Option<f64> {
    let oc = origin - center;
    let a = dir.dot(dir);
    let b = 2.0 * oc.dot(dir);
    let c = oc.dot(&oc) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = (-b - disc.sqrt()) / (2.0 * a);
    (s > 1e-9).then_some(s)
}

/// Class-shaped primitive composite for an actor at ground position `pos`
/// facing `heading`, standing on the floor plane `y = floor_y`.
///
/// Composites are kept centered on `pos` so that the rendered pixel
/// extent back-projects to the actor's ground position within 0.1 m.
fn actor_primitives(
    class: ClassId,
    body: Template,
    pos: (f64, f64),
    heading: (f64, f64),
    floor_y: f64,
) -> Vec<Primitive> {
    let (w, h) = (body.width_m, body.height_m);
    let (gx, gz) = pos;
    let (hx, hz) = heading;
    let (px, pz) = (-hz, hx); // lateral (perpendicular) direction
    let fy = floor_y;
    let capsule = |x: f64, z: f64, height: f64, r: f64| Primitive::CapsuleY {
        x,
        z,
        y0: fy - height + r,
        y1: fy - r,
        radius: r,
    };
    let aabb = |cx: f64, cz: f64, half_x: f64, half_z: f64, y_top: f64| Primitive::Aabb {
        min: Point3::new(cx - half_x, y_top, cz - half_z),
        max: Point3::new(cx + half_x, fy, cz + half_z),
    };
    let torso_r = (0.45 * w).min(0.18);
    match class {
        ClassId::Pedestrian | ClassId::Background => {
            vec![capsule(gx, gz, h, 0.5 * w)]
        }
        ClassId::Wheelchair => {
            // Seat box with the seated torso rising from it.
            vec![
                aabb(gx, gz, 0.5 * w, 0.5 * w, fy - 0.55 * h),
                Primitive::CapsuleY {
                    x: gx,
                    z: gz,
                    y0: fy - h + torso_r,
                    y1: fy - 0.55 * h,
                    radius: torso_r,
                },
            ]
        }
        ClassId::PushWheelchair => {
            // Occupied wheelchair ahead of a standing pusher. The split of
            // the offsets around `pos` is asymmetric because the wider
            // chair also projects wider; this keeps the rendered pixel
            // extent centered over the ground position.
            let seat = class_extent(ClassId::Wheelchair);
            let (sw, sh) = (seat.width_m, seat.height_m);
            let (cx, cz) = (gx + 0.14 * hx, gz + 0.14 * hz);
            let (qx, qz) = (gx - 0.21 * hx, gz - 0.21 * hz);
            vec![
                aabb(cx, cz, 0.5 * sw, 0.5 * sw, fy - 0.55 * sh),
                Primitive::CapsuleY {
                    x: cx,
                    z: cz,
                    y0: fy - sh + torso_r,
                    y1: fy - 0.55 * sh,
                    radius: torso_r,
                },
                capsule(qx, qz, h, 0.2),
            ]
        }
        ClassId::Crutches => {
            // Upright body with a crutch stick planted at each side.
            let off = (0.5 * w - 0.055).max(torso_r);
            vec![
                capsule(gx, gz, h, torso_r),
                aabb(gx + off * px, gz + off * pz, 0.03, 0.03, fy - 0.69 * h),
                aabb(gx - off * px, gz - off * pz, 0.03, 0.03, fy - 0.69 * h),
            ]
        }
        ClassId::Walker => {
            // Slightly hunched body behind a four-legged frame.
            vec![
                capsule(gx - 0.12 * hx, gz - 0.12 * hz, h, torso_r),
                aabb(gx + 0.20 * hx, gz + 0.20 * hz, 0.225, 0.225, fy - 0.65 * h),
            ]
        }
    }
}

/// Inclusive pixel-index bounds `(u0, v0, u1, v1)` that conservatively
/// cover the projection of a world box; `None` when surely invisible.
fn pixel_bounds(
    cam: &CameraModel,
    pose: &Pose,
    min: &Point3<f64>,
    max: &Point3<f64>,
) -> Option<(u32, u32, u32, u32)> {
    let mut unsafe_corner = false;
    let mut max_z = f64::NEG_INFINITY;
    let (mut u0, mut v0) = (f64::INFINITY, f64::INFINITY);
    let (mut u1, mut v1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..8 {
        let corner = Point3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        );
        let p = pose.inverse_transform_point(&corner);
        max_z = max_z.max(p.z);
        if p.z < 0.05 {
            unsafe_corner = true;
            continue;
        }
        let u = cam.cx + cam.fx * p.x / p.z;
        let v = cam.cy + cam.fy * p.y / p.z;
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    if max_z < cam.min_depth {
        return None;
    }
    if unsafe_corner {
        // Part of the box is beside or behind the camera; the projected
        // extent is unbounded, so scan the whole image.
        return Some((0, 0, cam.width - 1, cam.height - 1));
    }
    let u_lo = (u0.floor() - 1.0).max(0.0) as u32;
    let v_lo = (v0.floor() - 1.0).max(0.0) as u32;
    if u1 < -1.0 || v1 < -1.0 || u0 > cam.width as f64 || v0 > cam.height as f64 {
        return None;
    }
    let u_hi = (u1.ceil() + 1.0).min((cam.width - 1) as f64) as u32;
    let v_hi = (v1.ceil() + 1.0).min((cam.height - 1) as f64) as u32;
    if u_lo > u_hi || v_lo > v_hi {
        return None;
    }
    Some((u_lo, v_lo, u_hi, v_hi))
}

struct RaycastFrame {
    origin: Point3<f64>,
    // World-space direction per pixel is col_x·dx + col_y·dy + col_z with
    // dx, dy the camera-plane offsets; depth along a ray equals camera z.
    col_x: Vector3<f64>,
    col_y: Vector3<f64>,
    col_z: Vector3<f64>,
}

impl RaycastFrame {
    fn new(pose: &Pose) -> RaycastFrame {
        let r = pose.0.rotation;
        RaycastFrame {
            origin: Point3::from(pose.0.translation.vector),
            col_x: r * Vector3::x(),
            col_y: r * Vector3::y(),
            col_z: r * Vector3::z(),
        }
    }

    fn dir(&self, cam: &CameraModel, u: u32, v: u32) -> Vector3<f64> {
        let dx = (u as f64 + 0.5 - cam.cx) / cam.fx;
        let dy = (v as f64 + 0.5 - cam.cy) / cam.fy;
        self.col_x * dx + self.col_y * dy + self.col_z
    }
}

/// Renders one frame: composite depth plus per-actor ground truth.
///
/// Bit-deterministic for a fixed scenario: actor order, pixel order, and
/// the per-frame noise stream are all fixed.
pub fn render_frame(
    scenario: &Scenario,
    frame: usize,
) -> Result<(DepthFrame, Vec<GroundTruthRecord>)> {
    if frame >= scenario.frame_count() {
        return Err(Error::Config(format!(
            "frame {frame} out of range; scenario has {} frames",
            scenario.frame_count()
        )));
    }
    let cam = &scenario.camera_model;
    let t = scenario.frame_time(frame);
    let pose = scenario.camera_pose_at(t);
    let rays = RaycastFrame::new(&pose);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];

    // Floor: analytic ray/plane intersection. Depth along a ray is its
    // camera-space z, which equals the ray parameter by construction.
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d = rays.dir(cam, u, v);
            if d.y > 1e-12 {
                let s = (scenario.floor_y - rays.origin.y) / d.y;
                if s > 0.0 {
                    depth[v as usize * w + u as usize] = s;
                }
            }
        }
    }
    for obstacle in &scenario.obstacles {
        let min = Point3::from(obstacle.min);
        let max = Point3::from(obstacle.max);
        let prim = Primitive::Aabb { min, max };
        if let Some((u0, v0, u1, v1)) = pixel_bounds(cam, &pose, &min, &max) {
            for v in v0..=v1 {
                for u in u0..=u1 {
                    if let Some(s) = prim.intersect(&rays.origin, &rays.dir(cam, u, v)) {
                        let cell = &mut depth[v as usize * w + u as usize];
                        *cell = cell.min(s);
                    }
                }
            }
        }
    }

    // Per-actor solo hits: pixels the actor covers ignoring all other
    // geometry. These drive both the composite and the ground truth.
    struct ActorHits<'a> {
        actor: &'a Actor,
        position: (f64, f64),
        hits: Vec<(usize, f64)>,
        extent: (u32, u32, u32, u32),
    }
    let mut all_hits: Vec<ActorHits> = Vec::new();
    for actor in &scenario.actors {
        if !actor.is_active(t) {
            continue;
        }
        let position = actor.position_at(t);
        let heading = actor.heading_at(t);
        let prims =
            actor_primitives(actor.class, actor.body(), position, heading, scenario.floor_y);
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for p in &prims {
            let (bmin, bmax) = p.world_bounds();
            if let Some(b) = pixel_bounds(cam, &pose, &bmin, &bmax) {
                bounds = Some(match bounds {
                    None => b,
                    Some(acc) => {
                        (acc.0.min(b.0), acc.1.min(b.1), acc.2.max(b.2), acc.3.max(b.3))
                    }
                });
            }
        }
        let Some((u0, v0, u1, v1)) = bounds else { continue };
        let mut hits = Vec::new();
        let mut extent: Option<(u32, u32, u32, u32)> = None;
        for v in v0..=v1 {
            for u in u0..=u1 {
                let d = rays.dir(cam, u, v);
                let mut best = f64::INFINITY;
                for p in &prims {
                    if let Some(s) = p.intersect(&rays.origin, &d) {
                        best = best.min(s);
                    }
                }
                if best.is_finite() {
                    hits.push((v as usize * w + u as usize, best));
                    extent = Some(match extent {
                        None => (u, v, u, v),
                        Some(e) => (e.0.min(u), e.1.min(v), e.2.max(u), e.3.max(v)),
                    });
                }
            }
        }
        if let Some(extent) = extent {
            all_hits.push(ActorHits { actor, position, hits, extent });
        }
    }

    // Composite all actors into the depth buffer, then measure per-actor
    // visibility against the finished buffer.
    for ah in &all_hits {
        for &(idx, s) in &ah.hits {
            depth[idx] = depth[idx].min(s);
        }
    }
    let mut truth = Vec::new();
    for ah in &all_hits {
        let visible = ah.hits.iter().filter(|&&(idx, s)| s <= depth[idx] + 1e-9).count();
        let occluded = 2 * visible < ah.hits.len();
        let (u0, v0, u1, v1) = ah.extent;
        truth.push(GroundTruthRecord {
            frame: frame as u64,
            person: ah.actor.person,
            class: ah.actor.class,
            box_px: PixelBox::new(
                u0 as f64,
                v0 as f64,
                (u1 + 1) as f64,
                (v1 + 1) as f64,
            )?,
            pos_world: [ah.position.0, ah.position.1],
            occluded,
        });
    }

    // Quantize to millimeters with optional Gaussian noise; out-of-range
    // and noiseless-sky pixels become 0 (invalid).
    let mut rng =
        ChaCha8Rng::seed_from_u64(scenario.seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let sigma_m = scenario.noise_sigma_mm / 1000.0;
    let normal = if sigma_m > 0.0 {
        Some(Normal::new(0.0, sigma_m).map_err(|e| Error::Numeric(e.to_string()))?)
    } else {
        None
    };
    let mut depth_mm = vec![0u16; w * h];
    for (cell, s) in depth_mm.iter_mut().zip(&depth) {
        if !s.is_finite() || *s < cam.min_depth || *s > cam.max_depth {
            continue;
        }
        let noisy = match &normal {
            Some(n) => s + n.sample(&mut rng),
            None => *s,
        };
        *cell = (noisy * 1000.0).round().clamp(1.0, f64::from(u16::MAX)) as u16;
    }
    let frame_out = DepthFrame::new(cam.width, cam.height, depth_mm, t, pose)?;
    Ok((frame_out, truth))
}

fn walk(person: u64, class: ClassId, points: &[(f64, f64, f64)]) -> Actor {
    Actor {
        person,
        class,
        path: points.iter().map(|&(t, x, y)| Waypoint { t, x, y }).collect(),
        extent: None,
        active: None,
    }
}

fn base_scenario(name: &str, description: &str, seed: u64, duration_s: f64) -> Scenario {
    Scenario {
        name: name.to_string(),
        description: description.to_string(),
        seed,
        duration_s,
        frame_rate_hz: default_frame_rate(),
        floor_y: default_floor_y(),
        camera_height_m: default_camera_height(),
        noise_sigma_mm: default_noise_sigma(),
        camera_model: default_camera_model(),
        camera_path: default_camera_path(),
        actors: Vec::new(),
        obstacles: Vec::new(),
    }
}

/// The built-in scenario set. Each scenario's `description` states its
/// expected outcome.
pub fn standard_scenarios() -> Vec<Scenario> {
    let mut single_walker = base_scenario(
        "single-walker",
        "One walker user crosses the view at 2.5 m; expect one stable track whose \
         final belief argmax is walker.",
        7,
        6.0,
    );
    single_walker.actors =
        vec![walk(1, ClassId::Walker, &[(0.0, -1.2, 2.5), (6.0, 1.2, 2.5)])];

    let mut lineup = base_scenario(
        "five-class-lineup",
        "All five classes stand in a row at 3.4 m; expect five separate clusters, \
         five detections with the right classes, and proposal counts far below the \
         dense baseline.",
        11,
        1.0,
    );
    lineup.actors = vec![
        walk(1, ClassId::Pedestrian, &[(0.0, -2.2, 3.4)]),
        walk(2, ClassId::Wheelchair, &[(0.0, -1.1, 3.4)]),
        walk(3, ClassId::PushWheelchair, &[(0.0, 0.0, 3.4)]),
        walk(4, ClassId::Crutches, &[(0.0, 1.1, 3.4)]),
        walk(5, ClassId::Walker, &[(0.0, 2.2, 3.4)]),
    ];

    let mut crossing = base_scenario(
        "crossing-with-occlusion",
        "A pushed wheelchair at 2.6 m and a wheelchair user at 3.4 m cross in \
         opposite directions; the nearer actor fully occludes the farther one for \
         over ten consecutive frames mid-sequence. Expect both tracks to keep their \
         identities through the occlusion.",
        23,
        10.0,
    );
    crossing.actors = vec![
        walk(1, ClassId::PushWheelchair, &[(0.0, -1.75, 2.6), (10.0, 1.75, 2.6)]),
        walk(2, ClassId::Wheelchair, &[(0.0, 1.75, 3.4), (10.0, -1.75, 3.4)]),
    ];

    let mut transition = base_scenario(
        "class-transition",
        "One person id changes appearance twice while crossing slowly: crutches, \
         then pedestrian, then wheelchair. Expect the track's belief argmax to \
         follow each change after a short lag.",
        31,
        9.0,
    );
    let path = [(0.0, -1.0, 2.6), (9.0, 1.0, 2.6)];
    transition.actors = vec![
        Actor { active: Some([0.0, 3.0]), ..walk(1, ClassId::Crutches, &path) },
        Actor { active: Some([3.0, 6.0]), ..walk(1, ClassId::Pedestrian, &path) },
        Actor { active: Some([6.0, 9.5]), ..walk(1, ClassId::Wheelchair, &path) },
    ];

    let mut reentry = base_scenario(
        "out-of-fov-reentry",
        "A pedestrian walks out of the right image edge and returns about eight \
         frames later, inside the track survival window. Expect the track to keep \
         its identity across the gap.",
        43,
        5.5,
    );
    reentry.actors = vec![walk(
        1,
        ClassId::Pedestrian,
        &[(0.0, -1.0, 2.0), (2.75, 2.3, 2.0), (5.5, -1.0, 2.0)],
    )];

    vec![single_walker, lineup, crossing, transition, reentry]
}

/// Thirteen guidance runs mirroring a two-per-aid-class plus five-pedestrian
/// routing suite: one actor approaches on axis, stops 2.2 m out, and dwells
/// well past the decision thresholds. Returns each scenario with its
/// actor's class (pedestrians should be routed to stairs, aid users to the
/// elevator).
pub fn guidance_suite() -> Vec<(Scenario, ClassId)> {
    let classes = [
        ClassId::Wheelchair,
        ClassId::Wheelchair,
        ClassId::PushWheelchair,
        ClassId::PushWheelchair,
        ClassId::Crutches,
        ClassId::Crutches,
        ClassId::Walker,
        ClassId::Walker,
        ClassId::Pedestrian,
        ClassId::Pedestrian,
        ClassId::Pedestrian,
        ClassId::Pedestrian,
        ClassId::Pedestrian,
    ];
    classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let mut s = base_scenario(
                &format!("guidance-{}-{}", class.name(), i + 1),
                "One person approaches the camera on axis and waits 2.2 m out; \
                 expect a guidance decision once dwell reaches 4 s with belief \
                 at or above 0.90: stairs for a pedestrian, elevator otherwise.",
                100 + i as u64,
                8.0,
            );
            s.actors = vec![walk(1, class, &[(0.0, 0.0, 4.0), (2.25, 0.0, 2.2)])];
            (s, class)
        })
        .collect()
}

/// Looks up a scenario by name among the standard set and guidance suite.
pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    standard_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .or_else(|| guidance_suite().into_iter().map(|(s, _)| s).find(|s| s.name == name))
}
