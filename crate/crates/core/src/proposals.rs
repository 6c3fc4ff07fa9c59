//! Region proposals: five metric templates projected at each segment
//! centroid and slid horizontally, plus the dense sliding-window baseline
//! they replace.
//!
//! The template trick is what makes the pipeline cheap: proposal count grows
//! with the number of segments (people), not with image area.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::camera::{depth_to_cloud, project_metric_box_raw, CameraModel, DepthFrame, PixelBox};
use crate::segmentation::{
    euclidean_cluster, fit_ground_plane, remove_plane, PlaneModel, Segment,
};
use crate::{Error, Result};

/// A metric bounding-box template, upright in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub width_m: f64,
    pub height_m: f64,
}

/// The five person templates.
///
/// T1 is the standing-person box. T2 and T3 stretch T1 horizontally by one
/// and two thirds to each side (widths ·5/3 and ·7/3) for people pushing or
/// flanked by mobility aids; T4 and T5 shorten T1 and T2 by a quarter for
/// seated people.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub templates: [Template; 5],
}

impl TemplateSet {
    /// Derives all five templates from a person width and height.
    pub fn from_person(width_m: f64, height_m: f64) -> Result<TemplateSet> {
        if !(width_m > 0.0 && height_m > 0.0) {
            return Err(Error::Config(format!(
                "person template must be positive, got {width_m} x {height_m}"
            )));
        }
        let t = |w: f64, h: f64| Template { width_m: w, height_m: h };
        Ok(TemplateSet {
            templates: [
                t(width_m, height_m),
                t(width_m * 5.0 / 3.0, height_m),
                t(width_m * 7.0 / 3.0, height_m),
                t(width_m, height_m * 3.0 / 4.0),
                t(width_m * 5.0 / 3.0, height_m * 3.0 / 4.0),
            ],
        })
    }
}

impl Default for TemplateSet {
    /// Standing person 0.4 m wide, 1.75 m tall.
    fn default() -> TemplateSet {
        TemplateSet::from_person(0.4, 1.75).expect("constants are positive")
    }
}

/// Sliding parameters for per-segment proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    /// Number of horizontal sliding positions per template; odd so the
    /// centered position is always included.
    pub slide_positions: usize,
    /// Horizontal stride between sliding positions, pixels.
    pub slide_stride_px: u32,
    pub templates: TemplateSet,
}

impl Default for ProposalConfig {
    fn default() -> ProposalConfig {
        ProposalConfig { slide_positions: 5, slide_stride_px: 20, templates: TemplateSet::default() }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slide_positions == 0 || self.slide_positions % 2 == 0 {
            return Err(Error::Config(format!(
                "slide_positions must be odd and >= 1, got {}",
                self.slide_positions
            )));
        }
        if self.slide_stride_px == 0 {
            return Err(Error::Config("slide_stride_px must be >= 1".into()));
        }
        Ok(())
    }
}

/// One region of interest: a pixel box tagged with the segment it came from
/// and the template that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub box_px: PixelBox,
    pub segment: usize,
    pub template: usize,
}

/// Projects each template at the segment centroid and replicates it at
/// `slide_positions` horizontal offsets `{-(l-1)/2 .. +(l-1)/2} · stride`.
///
/// Yields exactly `5·l` boxes unless clamping drops fully-out-of-image ones.
/// Order: template-major, offsets left to right.
///
/// Errors when the centroid is closer than the camera's minimum depth; the
/// caller skips such segments and reports them in its stats.
pub fn segment_proposals(
    segment: &Segment,
    segment_id: usize,
    cam: &CameraModel,
    cfg: &ProposalConfig,
) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let half = (cfg.slide_positions as i64 - 1) / 2;
    let mut out = Vec::with_capacity(5 * cfg.slide_positions);
    for (template, t) in cfg.templates.templates.iter().enumerate() {
        let raw = project_metric_box_raw(&segment.centroid, t.width_m, t.height_m, cam)?;
        for k in -half..=half {
            let shifted = raw.shifted((k * cfg.slide_stride_px as i64) as f64);
            if let Some(box_px) = shifted.clamped(cam) {
                out.push(Proposal { box_px, segment: segment_id, template });
            }
        }
    }
    Ok(out)
}

/// Dense sliding-window baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenseConfig {
    /// Multipliers on the template footprint at the reference depth.
    pub scales: Vec<f64>,
    pub stride_px: u32,
    /// Depth at which a template's base pixel footprint is computed.
    pub reference_depth_m: f64,
}

impl Default for DenseConfig {
    /// Tuned so a 960×540 frame under default intrinsics yields about 27,000
    /// boxes, the same order as the dense baseline the template proposals
    /// are compared against.
    fn default() -> DenseConfig {
        DenseConfig { scales: vec![0.6, 0.8, 1.0, 1.3, 1.7], stride_px: 10, reference_depth_m: 2.0 }
    }
}

/// Slides every template at every scale over the full image.
///
/// The footprint of template `t` at scale `s` is `t · fx/z_ref · s` pixels;
/// windows start at multiples of the stride and must fit inside the image.
/// Order: scale-major, then template, then row-major window positions.
pub fn dense_proposals(
    cam: &CameraModel,
    templates: &[Template],
    cfg: &DenseConfig,
) -> Vec<PixelBox> {
    assert!(!cfg.scales.is_empty(), "dense baseline needs at least one scale");
    assert!(cfg.stride_px >= 1, "stride must be >= 1");
    let (img_w, img_h) = (cam.width as f64, cam.height as f64);
    let stride = cfg.stride_px as f64;
    let mut out = Vec::new();
    for &scale in &cfg.scales {
        for t in templates {
            let w = t.width_m * cam.fx / cfg.reference_depth_m * scale;
            let h = t.height_m * cam.fy / cfg.reference_depth_m * scale;
            let mut j = 0u32;
            while (j as f64) * stride + h <= img_h {
                let v = j as f64 * stride;
                let mut i = 0u32;
                while (i as f64) * stride + w <= img_w {
                    let u = i as f64 * stride;
                    out.push(PixelBox { u_min: u, v_min: v, u_max: u + w, v_max: v + h });
                    i += 1;
                }
                j += 1;
            }
        }
    }
    out
}

/// Ground-removal and clustering parameters for the proposal front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub ransac_iterations: usize,
    pub ransac_inlier_dist_m: f64,
    /// Points within this distance of the fitted plane are discarded.
    pub plane_removal_dist_m: f64,
    pub cluster_link_dist_m: f64,
    pub min_cluster_size: usize,
    /// `None` puts no upper bound on cluster size.
    pub max_cluster_size: Option<usize>,
}

impl Default for SegmentationConfig {
    fn default() -> SegmentationConfig {
        SegmentationConfig {
            ransac_iterations: 200,
            ransac_inlier_dist_m: 0.03,
            plane_removal_dist_m: 0.03,
            cluster_link_dist_m: 0.15,
            min_cluster_size: 200,
            max_cluster_size: None,
        }
    }
}

/// Front-end configuration: segmentation plus per-segment sliding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposerConfig {
    pub segmentation: SegmentationConfig,
    pub proposals: ProposalConfig,
}

/// Bookkeeping from one frame of proposal generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameStats {
    /// Valid points back-projected from the depth image.
    pub cloud_points: usize,
    /// `None` when no dominant plane was found and removal was skipped.
    pub plane_inliers: Option<usize>,
    pub segments_found: usize,
    /// Segments skipped because their centroid projection was degenerate.
    pub segments_skipped: usize,
}

/// Proposals for one frame plus the intermediate cloud and segments the
/// downstream stages need (median segment depth, localization).
#[derive(Debug, Clone)]
pub struct FrameProposals {
    pub proposals: Vec<Proposal>,
    pub segments: Vec<Segment>,
    /// The clustered cloud (after plane removal); segment indices point here.
    pub points: Vec<Point3<f64>>,
    pub plane: Option<PlaneModel>,
    pub stats: FrameStats,
}

/// Full proposal front end for one frame: back-project, strip the ground
/// plane, cluster, and slide templates over every segment.
///
/// When no dominant plane is found (or the cloud is too small to fit one)
/// the frame proceeds without plane removal and the stats flag it.
pub fn frame_proposals(
    frame: &DepthFrame,
    cam: &CameraModel,
    cfg: &ProposerConfig,
    seed: u64,
) -> Result<FrameProposals> {
    cfg.proposals.validate()?;
    let cloud = depth_to_cloud(frame, cam)?;
    let cloud_points = cloud.len();
    let sc = &cfg.segmentation;
    let plane = match fit_ground_plane(&cloud, sc.ransac_iterations, sc.ransac_inlier_dist_m, seed)
    {
        Ok(p) => Some(p),
        Err(Error::NoPlaneFound { .. }) | Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    let points = match &plane {
        Some(p) => remove_plane(&cloud, p, sc.plane_removal_dist_m),
        None => cloud,
    };
    let segments = euclidean_cluster(
        &points,
        sc.cluster_link_dist_m,
        sc.min_cluster_size,
        sc.max_cluster_size.unwrap_or(usize::MAX),
    );

    let mut proposals = Vec::new();
    let mut segments_skipped = 0;
    for (id, seg) in segments.iter().enumerate() {
        match segment_proposals(seg, id, cam, &cfg.proposals) {
            Ok(mut boxes) => proposals.append(&mut boxes),
            Err(Error::DegenerateProjection { .. }) => segments_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let stats = FrameStats {
        cloud_points,
        plane_inliers: plane.as_ref().map(|p| p.inlier_count),
        segments_found: segments.len(),
        segments_skipped,
    };
    Ok(FrameProposals { proposals, segments, points, plane, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pose;
    use approx::assert_relative_eq;

    fn cam() -> CameraModel {
        CameraModel::simulator_default()
    }

    #[test]
    fn template_factors() {
        let t = TemplateSet::default().templates;
        assert_eq!(t[0].width_m, 0.4);
        assert_eq!(t[0].height_m, 1.75);
        assert_relative_eq!(t[1].width_m, 0.4 * 5.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t[2].width_m, 0.4 * 7.0 / 3.0, epsilon = 1e-15);
        assert_eq!(t[1].height_m, 1.75);
        assert_eq!(t[2].height_m, 1.75);
        assert_eq!(t[3].width_m, 0.4);
        assert_relative_eq!(t[3].height_m, 1.75 * 0.75, epsilon = 1e-15);
        assert_relative_eq!(t[4].width_m, 0.4 * 5.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(t[4].height_m, 1.75 * 0.75, epsilon = 1e-15);
        // Width ordering and the shortened pair.
        assert!(t[1].width_m > t[0].width_m && t[2].width_m > t[1].width_m);
        assert!(t[3].height_m < t[0].height_m && t[4].height_m < t[1].height_m);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(TemplateSet::from_person(0.0, 1.75).is_err());
        assert!(ProposalConfig { slide_positions: 4, ..Default::default() }.validate().is_err());
        assert!(ProposalConfig { slide_positions: 0, ..Default::default() }.validate().is_err());
        assert!(ProposalConfig { slide_stride_px: 0, ..Default::default() }.validate().is_err());
        assert!(ProposalConfig::default().validate().is_ok());
    }

    fn seg_at(x: f64, y: f64, z: f64) -> Segment {
        Segment { indices: vec![0], centroid: Point3::new(x, y, z) }
    }

    #[test]
    fn single_position_yields_five_centered_boxes() {
        let cfg = ProposalConfig { slide_positions: 1, ..Default::default() };
        let seg = seg_at(0.0, 0.0, 3.0);
        let boxes = segment_proposals(&seg, 0, &cam(), &cfg).unwrap();
        assert_eq!(boxes.len(), 5);
        for b in &boxes {
            let (u, _) = b.box_px.center();
            assert_relative_eq!(u, 480.0, epsilon = 1e-9);
            assert_eq!(b.segment, 0);
        }
        let templates: Vec<usize> = boxes.iter().map(|b| b.template).collect();
        assert_eq!(templates, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn three_positions_slide_by_stride() {
        let cfg = ProposalConfig { slide_positions: 3, slide_stride_px: 10, ..Default::default() };
        let seg = seg_at(0.0, 0.0, 3.0);
        let boxes = segment_proposals(&seg, 7, &cam(), &cfg).unwrap();
        assert_eq!(boxes.len(), 15);
        let t1_centers: Vec<f64> = boxes
            .iter()
            .filter(|b| b.template == 0)
            .map(|b| b.box_px.center().0)
            .collect();
        assert_eq!(t1_centers.len(), 3);
        assert_relative_eq!(t1_centers[0], 470.0, epsilon = 1e-9);
        assert_relative_eq!(t1_centers[1], 480.0, epsilon = 1e-9);
        assert_relative_eq!(t1_centers[2], 490.0, epsilon = 1e-9);
        assert!(boxes.iter().all(|b| b.segment == 7));
    }

    #[test]
    fn t1_footprint_at_two_meters() {
        let cfg = ProposalConfig { slide_positions: 1, ..Default::default() };
        let seg = seg_at(0.0, 0.125, 2.0); // standing person centroid
        let boxes = segment_proposals(&seg, 0, &cam(), &cfg).unwrap();
        let t1 = boxes[0].box_px;
        assert_relative_eq!(t1.width(), 108.0, epsilon = 1e-9);
        assert_relative_eq!(t1.v_min, 67.5, epsilon = 1e-9);
        assert_relative_eq!(t1.v_max, 540.0, epsilon = 1e-9); // clamped at the image bottom
    }

    #[test]
    fn clamping_drops_fully_outside_boxes_only() {
        let cfg = ProposalConfig { slide_positions: 5, slide_stride_px: 200, ..Default::default() };
        // Centroid near the left edge: leftmost offsets fall fully outside.
        let seg = seg_at(-1.7, 0.0, 2.0);
        let boxes = segment_proposals(&seg, 0, &cam(), &cfg).unwrap();
        assert!(boxes.len() < 25);
        assert!(!boxes.is_empty());
        for b in &boxes {
            assert!(b.box_px.area() > 0.0);
            assert!(b.box_px.u_max > 0.0 && b.box_px.u_min < 960.0);
        }
        // Centered segment: all 5l survive.
        let seg = seg_at(0.0, 0.0, 3.0);
        let cfg = ProposalConfig::default();
        assert_eq!(segment_proposals(&seg, 0, &cam(), &cfg).unwrap().len(), 25);
    }

    #[test]
    fn near_centroid_is_degenerate() {
        let seg = seg_at(0.0, 0.0, 0.1);
        let r = segment_proposals(&seg, 0, &cam(), &ProposalConfig::default());
        assert!(matches!(r, Err(Error::DegenerateProjection { .. })));
    }

    fn closed_form_count(cam: &CameraModel, templates: &[Template], cfg: &DenseConfig) -> usize {
        let mut n = 0usize;
        for &s in &cfg.scales {
            for t in templates {
                let w = t.width_m * cam.fx / cfg.reference_depth_m * s;
                let h = t.height_m * cam.fy / cfg.reference_depth_m * s;
                if w > cam.width as f64 || h > cam.height as f64 {
                    continue;
                }
                let nx = ((cam.width as f64 - w) / cfg.stride_px as f64).floor() as usize + 1;
                let ny = ((cam.height as f64 - h) / cfg.stride_px as f64).floor() as usize + 1;
                n += nx * ny;
            }
        }
        n
    }

    #[test]
    fn image_sized_template_gives_one_box() {
        let c = cam();
        // Footprint w·fx/z·s = 960 and h·fy/z·s = 540 at z=2, s=1.
        let t = [Template { width_m: 960.0 * 2.0 / 540.0, height_m: 2.0 }];
        let cfg = DenseConfig { scales: vec![1.0], stride_px: 16, reference_depth_m: 2.0 };
        let boxes = dense_proposals(&c, &t, &cfg);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0], PixelBox { u_min: 0.0, v_min: 0.0, u_max: 960.0, v_max: 540.0 });
    }

    #[test]
    fn dense_count_matches_closed_form() {
        let c = cam();
        let t = TemplateSet::default().templates;
        for stride in [7u32, 10, 16, 33] {
            let cfg = DenseConfig { stride_px: stride, ..Default::default() };
            let boxes = dense_proposals(&c, &t, &cfg);
            assert_eq!(boxes.len(), closed_form_count(&c, &t, &cfg), "stride {stride}");
        }
    }

    #[test]
    fn default_dense_config_box_count() {
        let c = cam();
        let t = TemplateSet::default().templates;
        let boxes = dense_proposals(&c, &t, &DenseConfig::default());
        assert!(
            (25_000..=35_000).contains(&boxes.len()),
            "dense default yields {} boxes",
            boxes.len()
        );
        for b in &boxes {
            assert!(b.u_min >= 0.0 && b.v_min >= 0.0 && b.u_max <= 960.0 && b.v_max <= 540.0);
        }
    }

    // Synthetic frame: analytic floor at y = +1 plus vertical person slabs
    // at depth z, 0.4 m wide, spanning y in [-0.75, 1.0].
    fn slab_frame(cam: &CameraModel, slab_x: &[f64], slab_z: f64) -> DepthFrame {
        let mut depth = vec![0u16; (cam.width * cam.height) as usize];
        for v in 0..cam.height {
            for u in 0..cam.width {
                let (uc, vc) = (u as f64 + 0.5, v as f64 + 0.5);
                let dir_y = (vc - cam.cy) / cam.fy;
                let mut z = f64::INFINITY;
                // Floor: y = dir_y * z = 1.
                if dir_y > 1e-9 {
                    let zf = 1.0 / dir_y;
                    if zf <= cam.max_depth {
                        z = zf;
                    }
                }
                // Slabs at fixed depth, in front of any floor beyond them.
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

    fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
        let iw = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
        let ih = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
        let inter = iw * ih;
        inter / (a.area() + b.area() - inter)
    }

    #[test]
    fn empty_frame_yields_no_proposals() {
        let c = cam();
        let frame =
            DepthFrame::new(c.width, c.height, vec![0; (c.width * c.height) as usize], 0.0, Pose::identity())
                .unwrap();
        let out = frame_proposals(&frame, &c, &ProposerConfig::default(), 1).unwrap();
        assert!(out.proposals.is_empty());
        assert_eq!(out.stats.cloud_points, 0);
        assert!(out.stats.plane_inliers.is_none());
    }

    #[test]
    fn one_person_frame_proposes_over_truth() {
        let c = cam();
        let frame = slab_frame(&c, &[0.0], 2.0);
        let cfg = ProposerConfig::default();
        let out = frame_proposals(&frame, &c, &cfg, 1).unwrap();
        assert_eq!(out.stats.segments_found, 1);
        assert!(out.stats.plane_inliers.is_some(), "floor plane must be found");
        assert!(out.proposals.len() >= 25);
        // Slab extent projected at z=2: u in 480±54, v from y=-0.75 to the
        // image bottom.
        let truth = PixelBox { u_min: 426.0, v_min: 67.5, u_max: 534.0, v_max: 540.0 };
        let best = out
            .proposals
            .iter()
            .map(|p| iou(&p.box_px, &truth))
            .fold(0.0, f64::max);
        assert!(best >= 0.9, "best IoU {best}");
    }

    #[test]
    fn proposal_count_scales_with_people_not_pixels() {
        let c = cam();
        let frame = slab_frame(&c, &[-1.3, 0.0, 1.3], 2.5);
        let out = frame_proposals(&frame, &c, &ProposerConfig::default(), 1).unwrap();
        assert_eq!(out.stats.segments_found, 3);
        let mut seg_ids: Vec<usize> = out.proposals.iter().map(|p| p.segment).collect();
        seg_ids.sort();
        seg_ids.dedup();
        assert_eq!(seg_ids, vec![0, 1, 2]);
        // Nothing clamps away at these positions: exactly 5l per segment.
        assert_eq!(out.proposals.len(), 3 * 25);
    }
}
