//! Rectified-image generation from the converged mesh pair, plus the
//! synthetic-ground-truth quality metrics.

use crate::camera::{intersect_ray_mesh, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::features::{FeatureLine, SegmentClass};
use crate::geom::{obb_of_points, FaceIndex, Mesh2, MeshPair, Vec2};
use image::RgbImage;

/// How the output rectangle in plane coordinates is chosen.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RegionMode {
    /// Boundary lines if available, else line AABB, else mesh AABB.
    Auto,
    Boundary,
    LineAabb,
    MeshAabb,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RegionSource {
    BoundaryLines,
    LineAabb,
    MeshAabb,
}

#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub lo: Vec2,
    pub hi: Vec2,
    pub source: RegionSource,
}

impl Region {
    pub fn span(&self) -> Vec2 {
        self.hi - self.lo
    }
}

fn aabb(points: impl Iterator<Item = Vec2>) -> Option<(Vec2, Vec2)> {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
        any = true;
    }
    (any && hi.x > lo.x && hi.y > lo.y).then_some((lo, hi))
}

fn intersect_lines((t1, c1): (f64, f64), (t2, c2): (f64, f64)) -> Option<Vec2> {
    let n1 = Vec2::new(t1.cos(), t1.sin());
    let n2 = Vec2::new(t2.cos(), t2.sin());
    let det = n1.x * n2.y - n1.y * n2.x;
    if det.abs() < 1e-9 {
        return None;
    }
    Some(Vec2::new((c1 * n2.y - c2 * n1.y) / det, (n1.x * c2 - n2.x * c1) / det))
}

fn boundary_region(lines: &[FeatureLine]) -> Option<(Vec2, Vec2)> {
    let bounds: Vec<&FeatureLine> = lines
        .iter()
        .filter(|l| l.class == SegmentClass::Boundary)
        .collect();
    if bounds.len() != 4 {
        return None;
    }
    // Group by fitted normal: mostly-x normals are the left/right sides.
    let (mut vert, mut horiz) = (Vec::new(), Vec::new());
    for l in &bounds {
        let n = Vec2::new(l.fitted.0.cos(), l.fitted.0.sin());
        if n.x.abs() >= n.y.abs() {
            vert.push(l.fitted);
        } else {
            horiz.push(l.fitted);
        }
    }
    if vert.len() != 2 || horiz.len() != 2 {
        return None;
    }
    let mut corners = Vec::with_capacity(4);
    for v in &vert {
        for h in &horiz {
            corners.push(intersect_lines(*v, *h)?);
        }
    }
    aabb(corners.into_iter())
}

/// Choose the output rectangle: the region bounded by the four fitted
/// boundary lines when present, else the AABB of all feature-line points,
/// else the AABB of the planar mesh.
pub fn output_region(lines: &[FeatureLine], plane: &Mesh2, mode: RegionMode) -> Result<Region> {
    if matches!(mode, RegionMode::Auto | RegionMode::Boundary) {
        if let Some((lo, hi)) = boundary_region(lines) {
            return Ok(Region { lo, hi, source: RegionSource::BoundaryLines });
        }
        if mode == RegionMode::Boundary {
            return Err(Error::Degenerate(
                "boundary region requested but four usable boundary lines are missing".into(),
            ));
        }
    }
    if matches!(mode, RegionMode::Auto | RegionMode::LineAabb) && !lines.is_empty() {
        let mut pts = Vec::new();
        for l in lines {
            pts.extend(l.plane_points(plane)?);
        }
        if let Some((lo, hi)) = aabb(pts.into_iter()) {
            return Ok(Region { lo, hi, source: RegionSource::LineAabb });
        }
    }
    let (lo, hi) = aabb(plane.vertices.iter().cloned())
        .ok_or_else(|| Error::Degenerate("degenerate planar mesh extent".into()))?;
    Ok(Region { lo, hi, source: RegionSource::MeshAabb })
}

#[derive(Clone, Copy, Debug)]
pub struct RenderOptions {
    /// Output resolution of the longer region side; the other side keeps
    /// the region aspect.
    pub long_side: u32,
    pub background: [u8; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { long_side: 1000, background: [0, 0, 0] }
    }
}

/// Bilinear sample at continuous pixel coordinates (pixel centers at
/// integer + 0.5), clamped at the border.
pub fn sample_bilinear(img: &RgbImage, p: Vec2) -> [f64; 3] {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = (p.x - 0.5).clamp(0.0, w - 1.0);
    let y = (p.y - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let mut out = [0.0; 3];
    for (px, py, wgt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        let c = img.get_pixel(px, py).0;
        for k in 0..3 {
            out[k] += wgt * c[k] as f64;
        }
    }
    out
}

/// Resample the reference image through the recovered mapping: output
/// pixel -> plane point -> shared anchor -> 3D point -> reference pixel.
/// Pixels that fall outside the planar mesh, behind the camera, or
/// outside the reference image get the background color.
pub fn render(
    pair: &MeshPair,
    cam: &CameraIntrinsics,
    reference: &RgbImage,
    region: &Region,
    opts: &RenderOptions,
) -> Result<RgbImage> {
    let span = region.span();
    if span.x <= 0.0 || span.y <= 0.0 {
        return Err(Error::Degenerate("empty output region".into()));
    }
    let (out_w, out_h) = if span.x >= span.y {
        let w = opts.long_side.max(1);
        (w, ((w as f64 * span.y / span.x).round() as u32).max(1))
    } else {
        let h = opts.long_side.max(1);
        (((h as f64 * span.x / span.y).round() as u32).max(1), h)
    };
    let index = FaceIndex::build(&pair.plane);
    let (rw, rh) = (reference.width() as f64, reference.height() as f64);
    let mut out = RgbImage::new(out_w, out_h);
    for py in 0..out_h {
        for px in 0..out_w {
            let plane_pt = Vec2::new(
                region.lo.x + (px as f64 + 0.5) / out_w as f64 * span.x,
                region.lo.y + (py as f64 + 0.5) / out_h as f64 * span.y,
            );
            let mut color = opts.background;
            if let Some(anchor) = index.locate(&pair.plane, plane_pt) {
                let p3 = pair.space.eval(&anchor)?;
                if let Ok(pix) = cam.project(p3) {
                    if pix.x >= 0.0 && pix.x < rw && pix.y >= 0.0 && pix.y < rh {
                        let c = sample_bilinear(reference, pix);
                        color = [
                            c[0].round().clamp(0.0, 255.0) as u8,
                            c[1].round().clamp(0.0, 255.0) as u8,
                            c[2].round().clamp(0.0, 255.0) as u8,
                        ];
                    }
                }
            }
            out.put_pixel(px, py, image::Rgb(color));
        }
    }
    Ok(out)
}

/// Mean per-vertex distance between the recovered planar mesh and the
/// ground-truth flat layout after the best similarity alignment
/// (scale + rotation + translation, reflections excluded), relative to
/// the ground-truth bounding-box diagonal.
pub fn displacement_error(recovered: &Mesh2, truth: &Mesh2) -> Result<f64> {
    if recovered.dims != truth.dims {
        return Err(Error::DimMismatch(format!(
            "{}x{} vs {}x{}",
            recovered.dims.n1, recovered.dims.n2, truth.dims.n1, truth.dims.n2
        )));
    }
    let n = recovered.vertices.len() as f64;
    let mx = recovered.vertices.iter().fold(Vec2::zeros(), |s, p| s + p) / n;
    let my = truth.vertices.iter().fold(Vec2::zeros(), |s, p| s + p) / n;
    let (mut a, mut b, mut xx) = (0.0, 0.0, 0.0);
    for (x, y) in recovered.vertices.iter().zip(truth.vertices.iter()) {
        let xc = x - mx;
        let yc = y - my;
        a += xc.dot(&yc);
        b += xc.x * yc.y - xc.y * yc.x;
        xx += xc.norm_squared();
    }
    if xx < 1e-300 {
        return Err(Error::Degenerate("recovered mesh collapsed to a point".into()));
    }
    // Optimal rotation angle atan2(b, a); optimal positive scale follows.
    let norm = (a * a + b * b).sqrt();
    let (cos, sin, scale) = if norm < 1e-300 {
        (1.0, 0.0, 1.0)
    } else {
        (a / norm, b / norm, norm / xx)
    };
    let mut sum = 0.0;
    for (x, y) in recovered.vertices.iter().zip(truth.vertices.iter()) {
        let xc = x - mx;
        let mapped = Vec2::new(cos * xc.x - sin * xc.y, sin * xc.x + cos * xc.y) * scale;
        sum += (mapped - (y - my)).norm();
    }
    let (lo, hi) = aabb(truth.vertices.iter().cloned())
        .ok_or_else(|| Error::Degenerate("degenerate ground-truth extent".into()))?;
    Ok(sum / n / (hi - lo).norm())
}

/// Straightness (OBB h/w) of a reference-image polyline after lifting it
/// through the recovered pair into the plane. `None` when fewer than two
/// pixels hit the 3D mesh.
pub fn lifted_line_straightness(
    pair: &MeshPair,
    cam: &CameraIntrinsics,
    pixels: &[Vec2],
) -> Result<Option<f64>> {
    let mut pts = Vec::with_capacity(pixels.len());
    for px in pixels {
        let ray = cam.viewing_ray(*px);
        if let Some(anchor) = intersect_ray_mesh(&ray, &pair.space) {
            pts.push(pair.plane.eval(&anchor)?);
        }
    }
    if pts.len() < 2 {
        return Ok(None);
    }
    Ok(Some(obb_of_points(&pts)?.straightness()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::ViewingRay;
    use crate::geom::{GridDims, Mesh3, Vec3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn hline(c: f64, class: SegmentClass) -> FeatureLine {
        // Fitted line y = c (normal pointing along y).
        fake_line((std::f64::consts::FRAC_PI_2, c), class)
    }

    fn vline(c: f64, class: SegmentClass) -> FeatureLine {
        fake_line((0.0, c), class)
    }

    fn fake_line(fitted: (f64, f64), class: SegmentClass) -> FeatureLine {
        FeatureLine {
            class,
            anchors: Vec::new(),
            rays: Vec::new(),
            fitted,
            orientation: crate::features::Orientation::Boundary,
        }
    }

    fn flat_pair(scale: f64) -> MeshPair {
        let dims = GridDims::new(7, 9);
        let plane = Mesh2::from_fn(dims, |i, j| {
            Vec2::new(j as f64 * 0.1 * scale, i as f64 * 0.1 * scale)
        });
        let space = Mesh3::from_fn(dims, |i, j| {
            Vec3::new(j as f64 * 0.1 - 0.4, i as f64 * 0.1 - 0.3, 2.0)
        });
        MeshPair::new(space, plane).unwrap()
    }

    #[test]
    fn region_from_axis_aligned_boundary_lines() {
        let pair = flat_pair(1.0);
        let lines = vec![
            vline(0.0, SegmentClass::Boundary),
            vline(1.0, SegmentClass::Boundary),
            hline(0.0, SegmentClass::Boundary),
            hline(2.0, SegmentClass::Boundary),
        ];
        let r = output_region(&lines, &pair.plane, RegionMode::Auto).unwrap();
        assert_eq!(r.source, RegionSource::BoundaryLines);
        assert_relative_eq!(r.lo.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.hi.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.hi.y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn region_from_tilted_boundary_lines_is_corner_aabb() {
        // Rotate the rectangle [0,1]x[0,2] by a small angle; the region is
        // the AABB of the four rotated corners.
        let th: f64 = 0.05;
        let lines = vec![
            fake_line((th, 0.0), SegmentClass::Boundary),
            fake_line((th, 1.0), SegmentClass::Boundary),
            fake_line((th + std::f64::consts::FRAC_PI_2, 0.0), SegmentClass::Boundary),
            fake_line((th + std::f64::consts::FRAC_PI_2, 2.0), SegmentClass::Boundary),
        ];
        let pair = flat_pair(1.0);
        let r = output_region(&lines, &pair.plane, RegionMode::Auto).unwrap();
        assert_eq!(r.source, RegionSource::BoundaryLines);
        let rot = |p: Vec2| Vec2::new(th.cos() * p.x - th.sin() * p.y, th.sin() * p.x + th.cos() * p.y);
        let corners = [
            rot(Vec2::new(0.0, 0.0)),
            rot(Vec2::new(1.0, 0.0)),
            rot(Vec2::new(0.0, 2.0)),
            rot(Vec2::new(1.0, 2.0)),
        ];
        let lo = corners.iter().fold(Vec2::repeat(f64::INFINITY), |a, c| a.inf(c));
        let hi = corners.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, c| a.sup(c));
        assert_relative_eq!((r.lo - lo).norm(), 0.0, epsilon = 1e-9);
        assert_relative_eq!((r.hi - hi).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn region_falls_back_to_line_aabb_then_mesh() {
        let pair = flat_pair(1.0);
        // Two non-boundary lines with real anchors.
        let ray = ViewingRay::from_direction(Vec3::z());
        let mk = |pts: &[Vec2]| FeatureLine {
            class: SegmentClass::Text,
            anchors: pts
                .iter()
                .map(|p| crate::geom::locate_point(&pair.plane, *p).unwrap())
                .collect(),
            rays: vec![ray; pts.len()],
            fitted: (0.0, 0.0),
            orientation: crate::features::Orientation::Horizontal,
        };
        let lines = vec![
            mk(&[Vec2::new(0.1, 0.2), Vec2::new(0.5, 0.2)]),
            mk(&[Vec2::new(0.1, 0.4), Vec2::new(0.5, 0.4)]),
        ];
        let r = output_region(&lines, &pair.plane, RegionMode::Auto).unwrap();
        assert_eq!(r.source, RegionSource::LineAabb);
        assert_relative_eq!(r.lo.x, 0.1, epsilon = 1e-9);
        assert_relative_eq!(r.hi.y, 0.4, epsilon = 1e-9);
        let r2 = output_region(&[], &pair.plane, RegionMode::Auto).unwrap();
        assert_eq!(r2.source, RegionSource::MeshAabb);
        assert_relative_eq!(r2.hi.x, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn boundary_mode_without_lines_is_error() {
        let pair = flat_pair(1.0);
        assert!(output_region(&[], &pair.plane, RegionMode::Boundary).is_err());
    }

    fn gradient_reference(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([
                (x as f64 / w as f64 * 255.0) as u8,
                (y as f64 / h as f64 * 255.0) as u8,
                128,
            ])
        })
    }

    #[test]
    fn identity_scene_render_matches_reference_resampling() {
        // Fronto-parallel document: the recovered mapping is a similarity,
        // so rendering must reproduce a rescaled crop of the reference.
        let cam = CameraIntrinsics::new(1.0, 1000.0, 1000.0, 450.0, 350.0);
        let dims = GridDims::new(7, 9);
        let space = Mesh3::from_fn(dims, |i, j| {
            Vec3::new(j as f64 * 0.1 - 0.4, i as f64 * 0.1 - 0.3, 2.0)
        });
        let plane = Mesh2::from_fn(dims, |i, j| Vec2::new(j as f64 * 0.1, i as f64 * 0.1));
        let pair = MeshPair::new(space, plane).unwrap();
        let reference = gradient_reference(900, 700);
        let region = output_region(&[], &pair.plane, RegionMode::Auto).unwrap();
        let opts = RenderOptions { long_side: 400, ..Default::default() };
        let out = render(&pair, &cam, &reference, &region, &opts).unwrap();
        // Expected: plane point maps affinely to reference pixels.
        let mut err = 0.0;
        let mut count = 0.0;
        for py in 0..out.height() {
            for px in 0..out.width() {
                let plane_pt = Vec2::new(
                    region.lo.x + (px as f64 + 0.5) / out.width() as f64 * region.span().x,
                    region.lo.y + (py as f64 + 0.5) / out.height() as f64 * region.span().y,
                );
                // plane (x,y) -> 3D (x-0.4, y-0.3, 2) -> pixel
                let p3 = Vec3::new(plane_pt.x - 0.4, plane_pt.y - 0.3, 2.0);
                let pix = cam.project(p3).unwrap();
                let want = sample_bilinear(&reference, pix);
                let got = out.get_pixel(px, py).0;
                for k in 0..3 {
                    err += (got[k] as f64 - want[k]).abs();
                    count += 1.0;
                }
            }
        }
        assert!(err / count <= 1.0, "mean abs error {} > 1/255 scale", err / count);
    }

    #[test]
    fn out_of_mesh_pixels_get_background() {
        let cam = CameraIntrinsics::new(1.0, 1000.0, 1000.0, 450.0, 350.0);
        let pair = flat_pair(1.0);
        let reference = gradient_reference(100, 100);
        // A region larger than the mesh extent on every side.
        let region = Region {
            lo: Vec2::new(-0.5, -0.5),
            hi: Vec2::new(1.3, 1.1),
            source: RegionSource::MeshAabb,
        };
        let opts = RenderOptions { long_side: 64, background: [7, 8, 9] };
        let out = render(&pair, &cam, &reference, &region, &opts).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [7, 8, 9]);
        assert_eq!(out.get_pixel(out.width() - 1, out.height() - 1).0, [7, 8, 9]);
    }

    #[test]
    fn render_is_deterministic() {
        let cam = CameraIntrinsics::new(1.0, 1000.0, 1000.0, 450.0, 350.0);
        let pair = flat_pair(1.0);
        let reference = gradient_reference(300, 200);
        let region = output_region(&[], &pair.plane, RegionMode::Auto).unwrap();
        let opts = RenderOptions { long_side: 128, ..Default::default() };
        let a = render(&pair, &cam, &reference, &region, &opts).unwrap();
        let b = render(&pair, &cam, &reference, &region, &opts).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn displacement_zero_for_identical_and_similar() {
        let truth = Mesh2::from_fn(GridDims::new(5, 6), |i, j| {
            Vec2::new(j as f64 * 0.2, i as f64 * 0.2)
        });
        assert!(displacement_error(&truth, &truth).unwrap() < 1e-15);
        let th: f64 = 0.6;
        let s = 2.3;
        let moved = Mesh2::from_fn(truth.dims, |i, j| {
            let p = truth.vertex(i, j);
            Vec2::new(
                s * (th.cos() * p.x - th.sin() * p.y) + 4.0,
                s * (th.sin() * p.x + th.cos() * p.y) - 1.0,
            )
        });
        assert!(displacement_error(&moved, &truth).unwrap() < 1e-12);
    }

    #[test]
    fn displacement_dim_mismatch() {
        let a = Mesh2::from_fn(GridDims::new(3, 3), |i, j| Vec2::new(j as f64, i as f64));
        let b = Mesh2::from_fn(GridDims::new(3, 4), |i, j| Vec2::new(j as f64, i as f64));
        assert!(displacement_error(&a, &b).is_err());
    }

    #[test]
    fn displacement_matches_noise_expectation() {
        // Per-vertex isotropic Gaussian noise sigma: E||n|| = sigma*sqrt(pi/2).
        let truth = Mesh2::from_fn(GridDims::new(20, 30), |i, j| {
            Vec2::new(j as f64 * 0.05, i as f64 * 0.05)
        });
        let (lo, hi) = aabb(truth.vertices.iter().cloned()).unwrap();
        let diag = (hi - lo).norm();
        let sigma = 0.002;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut acc = 0.0;
        let trials = 100;
        for _ in 0..trials {
            let noisy = Mesh2::new(
                truth.dims,
                truth
                    .vertices
                    .iter()
                    .map(|v| {
                        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                        // Box-Muller
                        let r = (-2.0 * a.max(1e-300).ln()).sqrt() * sigma;
                        let th = 2.0 * std::f64::consts::PI * b;
                        v + Vec2::new(r * th.cos(), r * th.sin())
                    })
                    .collect(),
            );
            acc += displacement_error(&noisy, &truth).unwrap() * diag;
        }
        let mean = acc / trials as f64;
        let expect = sigma * (std::f64::consts::PI / 2.0).sqrt();
        assert!(
            (mean - expect).abs() / expect < 0.1,
            "mean displacement {mean} vs expected {expect}"
        );
    }

    #[test]
    fn lifted_straightness_zero_on_flat_scene() {
        let cam = CameraIntrinsics::new(1.0, 1000.0, 1000.0, 450.0, 350.0);
        let pair = flat_pair(1.0);
        // A straight pixel row maps to a straight plane line.
        let pixels: Vec<Vec2> = (0..20)
            .map(|k| Vec2::new(300.0 + k as f64 * 10.0, 300.0))
            .collect();
        let s = lifted_line_straightness(&pair, &cam, &pixels).unwrap().unwrap();
        assert!(s < 1e-9);
        // All-miss polyline reports None.
        let off: Vec<Vec2> = (0..5).map(|k| Vec2::new(5000.0 + k as f64, 0.0)).collect();
        assert!(lifted_line_straightness(&pair, &cam, &off).unwrap().is_none());
    }
}
