//! Ground-plane removal and Euclidean clustering.
//!
//! The pipeline first estimates the dominant floor plane with RANSAC, strips
//! every point near it, and then splits what remains into connected
//! components under a metric link distance. Each surviving component is a
//! candidate person segment.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Candidate planes are scored on an evenly strided subsample of at most
/// this many points; the winner's inlier count is then recomputed on the
/// full cloud. Keeps RANSAC cost independent of cloud size.
const SCORE_SUBSAMPLE: usize = 4096;

/// Plane `n · p + d = 0` with `‖n‖ = 1`.
///
/// The normal is oriented so the camera origin has positive signed distance
/// (`d > 0`); when the plane passes through the origin, the first nonzero
/// normal component is made positive instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub d: f64,
    /// Points within the fitting distance of the plane, counted on the full
    /// input cloud.
    pub inlier_count: usize,
}

impl PlaneModel {
    /// Builds a plane from an arbitrary normal (normalized here) and offset.
    pub fn new(normal: Vector3<f64>, d: f64, inlier_count: usize) -> Result<PlaneModel> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(Error::Numeric("plane normal must be nonzero".into()));
        }
        let mut plane = PlaneModel { normal: normal / norm, d: d / norm, inlier_count };
        plane.orient();
        Ok(plane)
    }

    fn orient(&mut self) {
        let flip = if self.d.abs() > 1e-12 {
            self.d < 0.0
        } else {
            let lead = self
                .normal
                .iter()
                .copied()
                .find(|c| c.abs() > 1e-12)
                .unwrap_or(1.0);
            lead < 0.0
        };
        if flip {
            self.normal = -self.normal;
            self.d = -self.d;
        }
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.d
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }
}

/// Estimates the dominant plane by RANSAC over `iterations` minimal samples.
///
/// Deterministic for a fixed seed. The returned plane maximizes the inlier
/// count (points within `inlier_dist_m`); its `inlier_count` is evaluated on
/// the full cloud.
///
/// Errors: fewer than 3 points, or a best inlier ratio below 10 % (no
/// dominant plane in view).
pub fn fit_ground_plane(
    points: &[Point3<f64>],
    iterations: usize,
    inlier_dist_m: f64,
    seed: u64,
) -> Result<PlaneModel> {
    const MIN_INLIER_RATIO: f64 = 0.10;
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "plane fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = points.len().div_ceil(SCORE_SUBSAMPLE).max(1);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..iterations {
        let idx = rand::seq::index::sample(&mut rng, points.len(), 3);
        let (a, b, c) = (&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)]);
        let normal = (b - a).cross(&(c - a));
        let norm = normal.norm();
        if norm < 1e-12 {
            continue; // collinear sample
        }
        let n = normal / norm;
        let d = -n.dot(&a.coords);
        let count = points
            .iter()
            .step_by(stride)
            .filter(|p| (n.dot(&p.coords) + d).abs() <= inlier_dist_m)
            .count();
        if best.map_or(true, |(c0, _, _)| count > c0) {
            best = Some((count, n, d));
        }
    }
    let (_, n, d) = best.ok_or_else(|| Error::NoPlaneFound { best_ratio: 0.0, min_ratio: MIN_INLIER_RATIO })?;
    let full_count = points.iter().filter(|p| (n.dot(&p.coords) + d).abs() <= inlier_dist_m).count();
    let ratio = full_count as f64 / points.len() as f64;
    if ratio < MIN_INLIER_RATIO {
        return Err(Error::NoPlaneFound { best_ratio: ratio, min_ratio: MIN_INLIER_RATIO });
    }
    PlaneModel::new(n, d, full_count)
}

/// Retains exactly the points with unsigned plane distance greater than
/// `dist_m`.
pub fn remove_plane(points: &[Point3<f64>], plane: &PlaneModel, dist_m: f64) -> Vec<Point3<f64>> {
    points.iter().filter(|p| plane.distance(p) > dist_m).copied().collect()
}

/// A connected component of the filtered cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Member indices into the clustered cloud, ascending.
    pub indices: Vec<usize>,
    /// Arithmetic mean of the member points, camera frame.
    pub centroid: Point3<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Splits `points` into the connected components of the graph linking pairs
/// within `link_dist_m`, discarding components outside `[min_size, max_size]`.
///
/// Exact connected components, computed over a voxel grid: the cell edge is
/// `link_dist_m / √3`, so the cell diagonal equals the link distance and all
/// points sharing a cell are mutually linked; cross-cell links can only occur
/// between cells at most two apart per axis. Segments are ordered by
/// descending size, ties by smallest member index.
pub fn euclidean_cluster(
    points: &[Point3<f64>],
    link_dist_m: f64,
    min_size: usize,
    max_size: usize,
) -> Vec<Segment> {
    assert!(link_dist_m > 0.0, "link distance must be positive");
    if points.is_empty() {
        return Vec::new();
    }
    let cell = link_dist_m / 3f64.sqrt();
    let key = |p: &Point3<f64>| -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i as u32);
    }

    let mut uf = UnionFind::new(points.len());
    for members in grid.values() {
        for &m in &members[1..] {
            uf.union(members[0], m);
        }
    }

    // Half of the ±2 neighborhood, so each unordered cell pair is visited
    // once. Every offset is reachable: the farthest, (2,2,2), has a minimum
    // cell gap of exactly √3 · cell = link_dist.
    let mut offsets = Vec::with_capacity(62);
    for dx in -2i64..=2 {
        for dy in -2i64..=2 {
            for dz in -2i64..=2 {
                if (dx, dy, dz) > (0, 0, 0) {
                    offsets.push((dx, dy, dz));
                }
            }
        }
    }

    let link_sq = link_dist_m * link_dist_m;
    for (&(cx, cy, cz), members) in &grid {
        for &(dx, dy, dz) in &offsets {
            let Some(other) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                continue;
            };
            // One link merges both cells wholesale (same-cell points are
            // already unioned), so stop at the first pair within range.
            if uf.find(members[0]) == uf.find(other[0]) {
                continue;
            }
            'pairs: for &a in members {
                for &b in other {
                    if (points[a as usize] - points[b as usize]).norm_squared() <= link_sq {
                        uf.union(a, b);
                        break 'pairs;
                    }
                }
            }
        }
    }

    let mut components: HashMap<u32, Vec<usize>> = HashMap::new();
    for i in 0..points.len() {
        components.entry(uf.find(i as u32)).or_default().push(i);
    }
    let mut segments: Vec<Segment> = components
        .into_values()
        .filter(|members| (min_size..=max_size).contains(&members.len()))
        .map(|indices| {
            let sum = indices.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i].coords);
            let centroid = Point3::from(sum / indices.len() as f64);
            Segment { indices, centroid }
        })
        .collect();
    segments.sort_by(|a, b| b.len().cmp(&a.len()).then(a.indices[0].cmp(&b.indices[0])));
    segments
}
