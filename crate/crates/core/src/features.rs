//! Feature segments and lines: ingestion, lifting through the 3D mesh,
//! segment merging, line fitting, and feature-line projection.
//!
//! Segments arrive as pixel polylines with a class tag. Lifting builds a
//! viewing ray per pixel and intersects it with the 3D mesh; the resulting
//! barycentric anchor names the same material point on both meshes, so the
//! planar image of each feature point comes for free.

use crate::camera::{intersect_ray_mesh, CameraIntrinsics, ViewingRay};
use crate::energy::FeaturePoint;
use crate::error::{Error, Result};
use crate::geom::{obb_of_points, BarycentricAnchor, FaceIndex, Mesh2, MeshPair, Vec2};
use std::path::Path;

/// Maximum feature points per segment after arc-length resampling.
pub const MAX_POINTS_PER_SEGMENT: usize = 50;
/// Straightness ceiling h/w used when merging segments.
pub const STRAIGHTNESS_TOL: f64 = 0.1;
/// Angular cutoff (radians) for keeping a non-boundary line as
/// horizontal or vertical.
pub const AXIS_ALIGN_CUTOFF: f64 = 20.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum SegmentClass {
    Boundary,
    Text,
    Edge,
}

impl SegmentClass {
    pub fn name(&self) -> &'static str {
        match self {
            SegmentClass::Boundary => "boundary",
            SegmentClass::Text => "text",
            SegmentClass::Edge => "edge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "boundary" => Some(SegmentClass::Boundary),
            "text" => Some(SegmentClass::Text),
            "edge" => Some(SegmentClass::Edge),
            _ => None,
        }
    }
}

/// A detected polyline in the reference image.
#[derive(Clone, Debug)]
pub struct FeatureSegment {
    pub class: SegmentClass,
    pub pixels: Vec<Vec2>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Orientation {
    Horizontal,
    Vertical,
    Boundary,
}

/// A lifted (and possibly merged) feature line living on the mesh pair.
#[derive(Clone, Debug)]
pub struct FeatureLine {
    pub class: SegmentClass,
    /// Shared anchors: the same (face, triangle, weights) on M and M'.
    pub anchors: Vec<BarycentricAnchor>,
    pub rays: Vec<ViewingRay>,
    /// Fitted plane line as (theta, c): normal (cos theta, sin theta),
    /// equation n.p = c.
    pub fitted: (f64, f64),
    pub orientation: Orientation,
}

impl FeatureLine {
    pub fn plane_points(&self, plane: &Mesh2) -> Result<Vec<Vec2>> {
        self.anchors.iter().map(|a| plane.eval(a)).collect()
    }
}

/// Parse an annotation file: one segment per line, `class u1 v1 u2 v2 ...`.
pub fn parse_segments(path: &Path) -> Result<Vec<FeatureSegment>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let class = it
            .next()
            .and_then(SegmentClass::parse)
            .ok_or_else(|| Error::Parse {
                file: path.to_path_buf(),
                msg: format!("line {}: unknown segment class", ln + 1),
            })?;
        let coords: Vec<f64> = it
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                file: path.to_path_buf(),
                msg: format!("line {}: {e}", ln + 1),
            })?;
        if coords.len() < 4 || !coords.len().is_multiple_of(2) || coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                msg: format!("line {}: need an even number (>= 4) of finite pixel coordinates", ln + 1),
            });
        }
        let pixels = coords.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
        out.push(FeatureSegment { class, pixels });
    }
    Ok(out)
}

pub fn write_segments(segments: &[FeatureSegment], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in segments {
        write!(out, "{}", s.class.name())?;
        for p in &s.pixels {
            write!(out, " {} {}", p.x, p.y)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Resample a polyline uniformly by arc length to at most `max_pts`
/// points; endpoints are always kept.
pub fn resample_polyline(pixels: &[Vec2], max_pts: usize) -> Vec<Vec2> {
    if pixels.len() <= max_pts {
        return pixels.to_vec();
    }
    let mut cum = Vec::with_capacity(pixels.len());
    let mut total = 0.0;
    cum.push(0.0);
    for w in pixels.windows(2) {
        total += (w[1] - w[0]).norm();
        cum.push(total);
    }
    if total <= 0.0 {
        return vec![pixels[0], pixels[pixels.len() - 1]];
    }
    let mut out = Vec::with_capacity(max_pts);
    let mut seg = 0;
    for k in 0..max_pts {
        let target = total * k as f64 / (max_pts - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        out.push(pixels[seg] + (pixels[seg + 1] - pixels[seg]) * t.clamp(0.0, 1.0));
    }
    out
}

/// Lift each segment through the current 3D mesh. Pixels whose viewing
/// rays miss the mesh are dropped; a segment survives if at least two
/// points remain. Returns the lifted lines and the count of dropped
/// segments.
pub fn lift_segments(
    segments: &[FeatureSegment],
    cam: &CameraIntrinsics,
    pair: &MeshPair,
) -> (Vec<FeatureLine>, usize) {
    let mut out = Vec::new();
    let mut dropped = 0;
    for seg in segments {
        let pixels = resample_polyline(&seg.pixels, MAX_POINTS_PER_SEGMENT);
        let mut anchors = Vec::new();
        let mut rays = Vec::new();
        for px in pixels {
            let ray = cam.viewing_ray(px);
            if let Some(anchor) = intersect_ray_mesh(&ray, &pair.space) {
                anchors.push(anchor);
                rays.push(ray);
            }
        }
        if anchors.len() < 2 {
            dropped += 1;
            continue;
        }
        out.push(FeatureLine {
            class: seg.class,
            anchors,
            rays,
            fitted: (0.0, 0.0),
            orientation: match seg.class {
                SegmentClass::Boundary => Orientation::Boundary,
                _ => Orientation::Horizontal, // reassigned after fitting
            },
        });
    }
    (out, dropped)
}

/// Total-least-squares line through 2D points as (theta, c) with the
/// normal canonicalized to theta in [0, pi).
pub fn fit_line(points: &[Vec2]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints { need: 2, got: points.len() });
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |s, p| s + p) / n;
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        cxx += d.x * d.x;
        cxy += d.x * d.y;
        cyy += d.y * d.y;
    }
    if cxx + cyy < 1e-300 {
        return Err(Error::Degenerate("all points coincident".into()));
    }
    // Line direction = principal covariance eigenvector; computed from
    // the largest eigenvalue, which is numerically well conditioned even
    // for exactly collinear points. The normal is its perpendicular.
    let tr = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    let l0 = 0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt();
    let va = Vec2::new(l0 - cyy, cxy);
    let vb = Vec2::new(cxy, l0 - cxx);
    let dir = if va.norm() >= vb.norm() { va } else { vb };
    let nvec = if dir.norm() > 1e-300 {
        let d = dir.normalize();
        Vec2::new(-d.y, d.x)
    } else if cxx <= cyy {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    let mut theta = nvec.y.atan2(nvec.x);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    if theta >= std::f64::consts::PI {
        theta -= std::f64::consts::PI;
    }
    let nvec = Vec2::new(theta.cos(), theta.sin());
    Ok((theta, nvec.dot(&mean)))
}

/// Residual sum of squares of points against a (theta, c) line.
pub fn line_residual(points: &[Vec2], (theta, c): (f64, f64)) -> f64 {
    let nvec = Vec2::new(theta.cos(), theta.sin());
    points.iter().map(|p| (nvec.dot(p) - c).powi(2)).sum()
}

// Working record during merging: the line plus its cached planar points.
struct MergeItem {
    line: FeatureLine,
    points: Vec<Vec2>,
}

impl MergeItem {
    fn key(&self) -> (SegmentClass, f64, f64) {
        let lead = self
            .points
            .iter()
            .cloned()
            .reduce(|a, b| if (b.x, b.y) < (a.x, a.y) { b } else { a })
            .unwrap();
        (self.line.class, lead.x, lead.y)
    }
}

fn endpoint_gap(a: &MergeItem, b: &MergeItem) -> (f64, bool, bool) {
    // Returns (min gap, reverse a?, reverse b?) so that after the optional
    // reversals a's last point meets b's first point.
    let (a0, a1) = (a.points[0], *a.points.last().unwrap());
    let (b0, b1) = (b.points[0], *b.points.last().unwrap());
    let cands = [
        ((a1 - b0).norm(), false, false),
        ((a1 - b1).norm(), false, true),
        ((a0 - b0).norm(), true, false),
        ((a0 - b1).norm(), true, true),
    ];
    cands
        .into_iter()
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .unwrap()
}

/// Merge lifted lines within the same class whenever their closest
/// endpoints lie within `endpoint_tol` and the merged point set stays
/// straight (OBB h/w <= `straightness_tol`). Processing order is
/// canonicalized so the result does not depend on input order. After
/// merging, non-boundary lines not close to horizontal or vertical are
/// discarded, and every surviving line gets a fitted line and an
/// orientation tag.
pub fn merge_feature_lines(
    lines: Vec<FeatureLine>,
    plane: &Mesh2,
    endpoint_tol: f64,
    straightness_tol: f64,
) -> Result<Vec<FeatureLine>> {
    let mut items: Vec<MergeItem> = Vec::with_capacity(lines.len());
    for line in lines {
        let points = line.plane_points(plane)?;
        items.push(MergeItem { line, points });
    }
    items.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());

    let mut merged_any = true;
    while merged_any {
        merged_any = false;
        'outer: for i in 0..items.len() {
            for j in i + 1..items.len() {
                if items[i].line.class != items[j].line.class {
                    continue;
                }
                let (gap, rev_a, rev_b) = endpoint_gap(&items[i], &items[j]);
                if gap > endpoint_tol {
                    continue;
                }
                let union: Vec<Vec2> = items[i]
                    .points
                    .iter()
                    .chain(items[j].points.iter())
                    .cloned()
                    .collect();
                if obb_of_points(&union)?.straightness() > straightness_tol {
                    continue;
                }
                let mut b = items.remove(j);
                let a = &mut items[i];
                if rev_a {
                    a.points.reverse();
                    a.line.anchors.reverse();
                    a.line.rays.reverse();
                }
                if rev_b {
                    b.points.reverse();
                    b.line.anchors.reverse();
                    b.line.rays.reverse();
                }
                a.points.extend(b.points);
                a.line.anchors.extend(b.line.anchors);
                a.line.rays.extend(b.line.rays);
                items.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());
                merged_any = true;
                break 'outer;
            }
        }
    }

    let mut out = Vec::with_capacity(items.len());
    for mut item in items {
        let fitted = match fit_line(&item.points) {
            Ok(f) => f,
            Err(_) => continue, // coincident points carry no direction
        };
        item.line.fitted = fitted;
        if item.line.class == SegmentClass::Boundary {
            item.line.orientation = Orientation::Boundary;
        } else {
            // Direction angle folded into [0, pi/2]: 0 = horizontal.
            let dir_angle = {
                let a = (fitted.0 + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
                a.min(std::f64::consts::PI - a)
            };
            if dir_angle <= AXIS_ALIGN_CUTOFF {
                item.line.orientation = Orientation::Horizontal;
            } else if dir_angle >= std::f64::consts::FRAC_PI_2 - AXIS_ALIGN_CUTOFF {
                item.line.orientation = Orientation::Vertical;
            } else {
                continue; // oblique non-boundary lines are dropped
            }
        }
        out.push(item.line);
    }
    Ok(out)
}

/// Move each planar feature point to its orthogonal projection on the
/// line fitted to its feature line, re-anchoring through point location.
/// Points whose projection exits the mesh keep their previous anchor;
/// the count of such points is returned. Rays never change.
pub fn project_feature_lines(pair: &MeshPair, lines: &mut [FeatureLine]) -> Result<usize> {
    let index = FaceIndex::build(&pair.plane);
    let mut kept_old = 0;
    for line in lines.iter_mut() {
        let (theta, c) = line.fitted;
        let nvec = Vec2::new(theta.cos(), theta.sin());
        for anchor in line.anchors.iter_mut() {
            let p = pair.plane.eval(anchor)?;
            let q = p - nvec * (nvec.dot(&p) - c);
            match index.locate(&pair.plane, q) {
                Some(a) => *anchor = a,
                None => kept_old += 1,
            }
        }
    }
    Ok(kept_old)
}

/// Flatten lines into the per-point records consumed by the energy terms,
/// alongside the packed (theta, c) parameters.
pub fn collect_feature_points(lines: &[FeatureLine]) -> (Vec<FeaturePoint>, Vec<(f64, f64)>) {
    let mut points = Vec::new();
    let mut params = Vec::with_capacity(lines.len());
    for (li, line) in lines.iter().enumerate() {
        params.push(line.fitted);
        for (anchor, ray) in line.anchors.iter().zip(line.rays.iter()) {
            points.push(FeaturePoint { line: li, anchor: *anchor, ray: *ray });
        }
    }
    (points, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{GridDims, Mesh2, Mesh3, Vec3};
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn flat_pair() -> MeshPair {
        let dims = GridDims::new(6, 8);
        let plane = Mesh2::from_fn(dims, |i, j| Vec2::new(j as f64 * 0.1, i as f64 * 0.1));
        let space = Mesh3::from_fn(dims, |i, j| {
            Vec3::new(j as f64 * 0.1 - 0.35, i as f64 * 0.1 - 0.25, 2.0)
        });
        MeshPair::new(space, plane).unwrap()
    }

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1000.0, 1000.0, 500.0, 400.0)
    }

    #[test]
    fn parse_and_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.txt");
        std::fs::write(&path, "text 1 2 3 4 5 6\nboundary 0 0 10 0\n").unwrap();
        let segs = parse_segments(&path).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].class, SegmentClass::Text);
        assert_eq!(segs[0].pixels.len(), 3);
        assert_eq!(segs[1].class, SegmentClass::Boundary);
        let path2 = dir.path().join("seg2.txt");
        write_segments(&segs, &path2).unwrap();
        let segs2 = parse_segments(&path2).unwrap();
        assert_eq!(segs2[0].pixels, segs[0].pixels);
    }

    #[test]
    fn parse_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.txt");
        std::fs::write(&path, "wiggle 1 2 3 4\n").unwrap();
        assert!(parse_segments(&path).is_err());
        std::fs::write(&path, "text 1 2 3\n").unwrap();
        assert!(parse_segments(&path).is_err());
        std::fs::write(&path, "text 1 2\n").unwrap();
        assert!(parse_segments(&path).is_err());
    }

    #[test]
    fn resample_caps_count_and_keeps_endpoints() {
        let pts: Vec<Vec2> = (0..200).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let r = resample_polyline(&pts, 50);
        assert_eq!(r.len(), 50);
        assert_eq!(r[0], pts[0]);
        assert_relative_eq!((r[49] - pts[199]).norm(), 0.0, epsilon = 1e-9);
        // Uniform spacing along the straight line.
        for w in r.windows(2) {
            assert_relative_eq!((w[1] - w[0]).norm(), 199.0 / 49.0, epsilon = 1e-9);
        }
        let short: Vec<Vec2> = (0..5).map(|i| Vec2::new(i as f64, 1.0)).collect();
        assert_eq!(resample_polyline(&short, 50).len(), 5);
    }

    #[test]
    fn lift_flat_mesh_is_similarity_of_pixels() {
        // A fronto-parallel plane: the pinhole map restricted to it is a
        // similarity, so lifted plane points must preserve pixel distance
        // ratios exactly.
        let pair = flat_pair();
        let c = cam();
        let seg = FeatureSegment {
            class: SegmentClass::Text,
            pixels: vec![
                Vec2::new(400.0, 350.0),
                Vec2::new(450.0, 360.0),
                Vec2::new(520.0, 374.0),
            ],
        };
        let (lines, dropped) = lift_segments(std::slice::from_ref(&seg), &c, &pair);
        assert_eq!(dropped, 0);
        let pts = lines[0].plane_points(&pair.plane).unwrap();
        assert_eq!(pts.len(), 3);
        let scale = 2.0 / (c.f * c.ku); // depth / (f ku)
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            let dpix = (seg.pixels[i] - seg.pixels[j]).norm();
            let dpl = (pts[i] - pts[j]).norm();
            assert_relative_eq!(dpl, dpix * scale, epsilon = 1e-9);
        }
    }

    #[test]
    fn lift_known_surface_points_round_trip() {
        let pair = flat_pair();
        let c = cam();
        // Project known anchors, lift the pixels back, compare plane points.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut pixels = Vec::new();
        let mut expect = Vec::new();
        for _ in 0..10 {
            let p2 = Vec2::new(rng.gen_range(0.05..0.65), rng.gen_range(0.05..0.45));
            let a = crate::geom::locate_point(&pair.plane, p2).unwrap();
            pixels.push(c.project(pair.space.eval(&a).unwrap()).unwrap());
            expect.push(p2);
        }
        let seg = FeatureSegment { class: SegmentClass::Edge, pixels };
        let (lines, _) = lift_segments(&[seg], &c, &pair);
        let pts = lines[0].plane_points(&pair.plane).unwrap();
        for (got, want) in pts.iter().zip(expect.iter()) {
            assert!((got - want).norm() < 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn lift_drops_offscreen_segment() {
        let pair = flat_pair();
        let seg = FeatureSegment {
            class: SegmentClass::Text,
            pixels: vec![Vec2::new(5000.0, 400.0), Vec2::new(5100.0, 400.0)],
        };
        let (lines, dropped) = lift_segments(&[seg], &cam(), &pair);
        assert!(lines.is_empty());
        assert_eq!(dropped, 1);
    }

    fn line_from_plane_points(class: SegmentClass, pts: &[Vec2], plane: &Mesh2) -> FeatureLine {
        let ray = ViewingRay::from_direction(Vec3::z());
        let anchors: Vec<_> = pts
            .iter()
            .map(|p| crate::geom::locate_point(plane, *p).unwrap())
            .collect();
        FeatureLine {
            class,
            rays: vec![ray; anchors.len()],
            anchors,
            fitted: (0.0, 0.0),
            orientation: Orientation::Horizontal,
        }
    }

    #[test]
    fn collinear_touching_segments_merge() {
        let pair = flat_pair();
        let a = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.05, 0.2), Vec2::new(0.2, 0.2)],
            &pair.plane,
        );
        let b = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.22, 0.2), Vec2::new(0.4, 0.2)],
            &pair.plane,
        );
        let out = merge_feature_lines(vec![a, b], &pair.plane, 0.05, STRAIGHTNESS_TOL).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].anchors.len(), 4);
        assert_eq!(out[0].orientation, Orientation::Horizontal);
        // Points ordered end to end after the join.
        let pts = out[0].plane_points(&pair.plane).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].x > w[0].x - 1e-12);
        }
    }

    #[test]
    fn perpendicular_segments_do_not_merge() {
        let pair = flat_pair();
        let a = line_from_plane_points(
            SegmentClass::Edge,
            &[Vec2::new(0.1, 0.2), Vec2::new(0.4, 0.2)],
            &pair.plane,
        );
        let b = line_from_plane_points(
            SegmentClass::Edge,
            &[Vec2::new(0.4, 0.21), Vec2::new(0.4, 0.45)],
            &pair.plane,
        );
        let out = merge_feature_lines(vec![a, b], &pair.plane, 0.05, STRAIGHTNESS_TOL).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn cross_class_never_merges() {
        let pair = flat_pair();
        let a = line_from_plane_points(
            SegmentClass::Boundary,
            &[Vec2::new(0.05, 0.2), Vec2::new(0.2, 0.2)],
            &pair.plane,
        );
        let b = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.22, 0.2), Vec2::new(0.4, 0.2)],
            &pair.plane,
        );
        let out = merge_feature_lines(vec![a, b], &pair.plane, 0.05, STRAIGHTNESS_TOL).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn shuffled_pieces_merge_order_independently() {
        let pair = flat_pair();
        // A straight line chopped into 7 pieces with small gaps.
        let mut pieces = Vec::new();
        for k in 0..7 {
            let x0 = 0.05 + k as f64 * 0.09;
            pieces.push(line_from_plane_points(
                SegmentClass::Text,
                &[Vec2::new(x0, 0.3), Vec2::new(x0 + 0.07, 0.3)],
                &pair.plane,
            ));
        }
        let merge = |lines: Vec<FeatureLine>| {
            merge_feature_lines(lines, &pair.plane, 0.05, STRAIGHTNESS_TOL).unwrap()
        };
        let base = merge(pieces.clone());
        assert_eq!(base.len(), 1);
        assert_eq!(base[0].anchors.len(), 14);
        let base_pts = base[0].plane_points(&pair.plane).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let mut shuffled = pieces.clone();
            shuffled.shuffle(&mut rng);
            let out = merge(shuffled);
            assert_eq!(out.len(), 1);
            let pts = out[0].plane_points(&pair.plane).unwrap();
            for (p, q) in pts.iter().zip(base_pts.iter()) {
                assert!((p - q).norm() < 1e-12, "merge depends on input order");
            }
        }
    }

    #[test]
    fn oblique_non_boundary_lines_removed() {
        let pair = flat_pair();
        // 45 degrees: beyond the 20-degree cutoff from either axis.
        let tilted = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.1, 0.1), Vec2::new(0.4, 0.4)],
            &pair.plane,
        );
        let tilted_b = line_from_plane_points(
            SegmentClass::Boundary,
            &[Vec2::new(0.1, 0.12), Vec2::new(0.4, 0.42)],
            &pair.plane,
        );
        let out = merge_feature_lines(vec![tilted, tilted_b], &pair.plane, 0.01, STRAIGHTNESS_TOL).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].orientation, Orientation::Boundary);
    }

    #[test]
    fn fit_collinear_zero_residual() {
        let pts: Vec<Vec2> = (0..9).map(|i| Vec2::new(i as f64 * 0.3, 1.7)).collect();
        let f = fit_line(&pts).unwrap();
        assert!(line_residual(&pts, f) < 1e-20);
        // Line y = 1.7: theta = pi/2, c = 1.7.
        assert_relative_eq!(f.0, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        assert_relative_eq!(f.1, 1.7, epsilon = 1e-12);
    }

    #[test]
    fn fit_symmetric_offsets_give_axis() {
        let d = 0.05;
        let pts = vec![
            Vec2::new(0.0, d),
            Vec2::new(0.0, -d),
            Vec2::new(1.0, d),
            Vec2::new(1.0, -d),
            Vec2::new(2.0, d),
            Vec2::new(2.0, -d),
        ];
        let f = fit_line(&pts).unwrap();
        assert_relative_eq!(f.1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.0, std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn fit_coincident_is_error() {
        let pts = vec![Vec2::new(1.0, 2.0); 4];
        assert!(fit_line(&pts).is_err());
    }

    #[test]
    fn fit_matches_angle_grid_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10 {
            let theta0: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let dir = Vec2::new(-theta0.sin(), theta0.cos());
            let origin = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let pts: Vec<Vec2> = (0..40)
                .map(|_| {
                    let t = rng.gen_range(-1.0..1.0);
                    let n = rng.gen_range(-0.02..0.02);
                    origin + dir * t + Vec2::new(dir.y, -dir.x) * n
                })
                .collect();
            let f = fit_line(&pts).unwrap();
            let ours = line_residual(&pts, f);
            // Brute search over 1e4 angles, optimal c per angle.
            let mut grid_best = f64::INFINITY;
            for k in 0..10_000 {
                let th = std::f64::consts::PI * k as f64 / 10_000.0;
                let n = Vec2::new(th.cos(), th.sin());
                let c = pts.iter().map(|p| n.dot(p)).sum::<f64>() / pts.len() as f64;
                grid_best = grid_best.min(line_residual(&pts, (th, c)));
            }
            assert!(ours <= grid_best + 1e-8, "{ours} vs grid {grid_best}");
        }
    }

    #[test]
    fn projection_leaves_on_line_points_fixed() {
        let pair = flat_pair();
        let mut line = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.1, 0.3), Vec2::new(0.3, 0.3), Vec2::new(0.5, 0.3)],
            &pair.plane,
        );
        line.fitted = (std::f64::consts::FRAC_PI_2, 0.3);
        let before = line.plane_points(&pair.plane).unwrap();
        let mut lines = vec![line];
        let kept = project_feature_lines(&pair, &mut lines).unwrap();
        assert_eq!(kept, 0);
        let after = lines[0].plane_points(&pair.plane).unwrap();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!((b - a).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_moves_off_line_point_by_its_distance() {
        let pair = flat_pair();
        let d = 0.04;
        let mut line = line_from_plane_points(
            SegmentClass::Text,
            &[
                Vec2::new(0.1, 0.3),
                Vec2::new(0.3, 0.3 + d),
                Vec2::new(0.5, 0.3),
            ],
            &pair.plane,
        );
        line.fitted = (std::f64::consts::FRAC_PI_2, 0.3);
        let before = line.plane_points(&pair.plane).unwrap();
        let mut lines = vec![line];
        project_feature_lines(&pair, &mut lines).unwrap();
        let after = lines[0].plane_points(&pair.plane).unwrap();
        assert_relative_eq!((after[1] - before[1]).norm(), d, epsilon = 1e-9);
        // Relocated points now sit exactly on the line: E_line residual 0.
        let (pts, params) = collect_feature_points(&lines);
        let layout = crate::energy::StateLayout {
            n_verts: pair.dims().vertex_count(),
            n_lines: 1,
        };
        let e = crate::energy::e_line(&pair.plane, &pts, &params, &layout, None, 1.0).unwrap();
        assert!(e < 1e-20, "post-projection straightness residual {e}");
    }

    #[test]
    fn projection_outside_mesh_keeps_anchor() {
        let pair = flat_pair();
        let mut line = line_from_plane_points(
            SegmentClass::Text,
            &[Vec2::new(0.05, 0.02), Vec2::new(0.5, 0.02)],
            &pair.plane,
        );
        // A fitted line below the mesh: projections land outside.
        line.fitted = (std::f64::consts::FRAC_PI_2, -0.5);
        let before = line.anchors.clone();
        let mut lines = vec![line];
        let kept = project_feature_lines(&pair, &mut lines).unwrap();
        assert_eq!(kept, 2);
        assert_eq!(lines[0].anchors[0], before[0]);
    }
}
